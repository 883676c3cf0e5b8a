"""Error types shared across the package.

Exit-code mapping used by the CLI: configuration errors exit with 2,
numerical blow-up with 3, criterion failures with 1.
"""


class ConfigurationError(ValueError):
    """Invalid configuration detected before any compute starts."""


class BlowUpError(RuntimeError):
    """Numerical divergence detected during time stepping."""

    def __init__(self, step_index, time, max_abs_u):
        self.step_index = step_index
        self.time = time
        self.max_abs_u = max_abs_u
        super().__init__(
            f"solution blew up at step {step_index} (t={time:.6g}): max|u|={max_abs_u:.3g}"
        )
