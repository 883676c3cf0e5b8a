"""Scalar functionals and inequality monitors along a trajectory.

A run is summarized by a ``DiagnosticsSeries``: one record per sampled
time holding the energy, varifold mass, accumulated dissipation integrals
(midpoint rule on the step lattice), discrepancy norms, phase volume and
the derived inequality slacks.  Phase indicators are kept as packed bit
masks so symmetric differences over arbitrary sample pairs stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allen_cahn import DiffuseState, discrepancy_density, total_energy
from .errors import ConfigurationError
from .grid import GridSpec, ScalarField


def energy(state: DiffuseState) -> float:
    """Quadrature of (eps/2)|grad u|^2 + W(u)/eps."""
    return total_energy(state)


def discrepancy(state: DiffuseState):
    """Discrepancy density, its L1 norm and its max."""
    d = discrepancy_density(state)
    vol = state.spec.cell_volume
    return ScalarField(state.spec, d), float(vol * np.sum(np.abs(d))), float(d.max())


@dataclass
class DiagnosticsRecord:
    t: float
    E_eps: float
    mass: float
    dissip_V: float
    dissip_V_ac: float
    dissip_H: float
    discrepancy_L1: float
    discrepancy_max: float
    volume: float
    volume_sigma: float
    de_giorgi_slack: float = float("nan")
    edi_residual: float = float("nan")


@dataclass
class DiagnosticsSeries:
    spec: GridSpec
    eps: float
    records: list = field(default_factory=list)
    chi_bits: list = field(default_factory=list)

    def append(self, record: DiagnosticsRecord, chi_mask: np.ndarray | None = None):
        self.records.append(record)
        self.chi_bits.append(None if chi_mask is None else np.packbits(chi_mask.ravel()))

    def chi_mask(self, i: int) -> np.ndarray:
        bits = self.chi_bits[i]
        if bits is None:
            raise ConfigurationError(f"no phase snapshot stored at sample {i}")
        flat = np.unpackbits(bits, count=int(np.prod(self.spec.shape)))
        return flat.reshape(self.spec.shape).astype(bool)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class IntervalCheckResult:
    worst: float
    adjacent: np.ndarray
    passed: bool
    tol: float


def edi_check(series: DiagnosticsSeries, tol: float = 0.05) -> IntervalCheckResult:
    """Residual of the exact energy-dissipation identity on every interval.

    For samples s < t:  |E(t) + D_ac(s,t) + D_H(s,t) - E(s)| / E(s), where
    D_ac and D_H are the two accumulated half-dissipations.  The residual
    is pure time-discretization error and must shrink linearly in dt.
    """
    if len(series.records) < 2:
        raise ConfigurationError("need at least 2 samples")
    E = series.column("E_eps")
    cum = series.column("dissip_V_ac") + series.column("dissip_H")
    floor = 1e-9 * max(E[0], 1e-300)  # relative residuals are vacuous once E ~ 0
    worst = 0.0
    for i in range(len(E) - 1):
        for j in range(i + 1, len(E)):
            if E[i] <= floor:
                continue
            res = abs(E[j] + (cum[j] - cum[i]) - E[i]) / E[i]
            worst = max(worst, res)
    adjacent = np.array(
        [
            abs(E[i + 1] + (cum[i + 1] - cum[i]) - E[i]) / E[i] if E[i] > floor else 0.0
            for i in range(len(E) - 1)
        ]
    )
    return IntervalCheckResult(worst, adjacent, worst < tol, tol)


@dataclass
class DissipationSlackResult:
    worst_normalized: float
    slack_from_start: np.ndarray
    passed: bool
    tol: float


def de_giorgi_check(series: DiagnosticsSeries, tol_dg: float = 0.05) -> DissipationSlackResult:
    """Sharp-dissipation slack mass(s) - mass(t) - D_V(s,t) - D_H(s,t) over all pairs.

    The optimal energy-dissipation principle asks slack >= 0; discretely we
    accept slack >= -tol_dg * mass(0).  At unit multiplicity the slack is a
    near-equality; hidden layers make it strictly positive.
    """
    if len(series.records) < 2:
        raise ConfigurationError("need at least 2 samples")
    m = series.column("mass")
    cum = series.column("dissip_V") + series.column("dissip_H")
    mass0 = m[0] if m[0] > 0 else 1.0
    worst = np.inf
    for i in range(len(m) - 1):
        for j in range(i + 1, len(m)):
            slack = (m[i] - m[j]) - (cum[j] - cum[i])
            worst = min(worst, slack / mass0)
    slack0 = (m[0] - m) - cum
    return DissipationSlackResult(float(worst), slack0, worst >= -tol_dg, tol_dg)


def interval_slack_additivity(series: DiagnosticsSeries) -> float:
    """Max defect of slack(s,u) = slack(s,t) + slack(t,u) + mass cancellation.

    Pure bookkeeping identity on the cumulative sums; returns the worst
    absolute defect (should be machine precision).
    """
    m = series.column("mass")
    cum = series.column("dissip_V") + series.column("dissip_H")

    def slack(i, j):
        return (m[i] - m[j]) - (cum[j] - cum[i])

    worst = 0.0
    k = len(m)
    for i in range(k - 2):
        for j in range(i + 1, k - 1):
            for l in range(j + 1, k):
                worst = max(worst, abs(slack(i, l) - slack(i, j) - slack(j, l)))
    return worst


@dataclass
class VolumeContinuityResult:
    worst_ratio: float
    passed: bool
    tol: float
    pairs_checked: int


def volume_continuity_check(
    series: DiagnosticsSeries, sigma: float, tol_h: float = 0.1
) -> VolumeContinuityResult:
    """Hoelder continuity of phase volumes.

    Checks sigma * vol(A(t) sym-diff A(s)) <= sqrt(2) * mass(0) * sqrt(t-s)
    over all sampled pairs with stored phase snapshots; returns the worst
    ratio (pass iff <= 1 + tol_h).
    """
    t = series.times
    m0 = series.records[0].mass
    if m0 <= 0:
        return VolumeContinuityResult(0.0, True, tol_h, 0)
    vol_cell = series.spec.cell_volume
    idx = [i for i, b in enumerate(series.chi_bits) if b is not None]
    worst = 0.0
    npairs = 0
    total_cells = int(np.prod(series.spec.shape))
    for a_pos, i in enumerate(idx[:-1]):
        bits_i = series.chi_bits[i]
        for j in idx[a_pos + 1 :]:
            dt = t[j] - t[i]
            if dt <= 0:
                continue
            diff_bits = np.bitwise_xor(bits_i, series.chi_bits[j])
            # popcount via unpackbits on the packed diff
            sym = int(np.unpackbits(diff_bits, count=total_cells).sum()) * vol_cell
            ratio = sigma * sym / (np.sqrt(2.0) * m0 * np.sqrt(dt))
            worst = max(worst, ratio)
            npairs += 1
    return VolumeContinuityResult(worst, worst <= 1.0 + tol_h, tol_h, npairs)
