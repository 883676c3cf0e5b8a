"""Flat key=value run configuration.

Format: one ``key = value`` per line, ``#`` comments, section headers in
square brackets.  Unknown keys are errors (fail fast).  ``auto`` resolves
dt to a quarter of the reaction stability bound and t_end to 80% of the
truncated comparison-flow horizon (scenario-specific otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigurationError

_AUTO = "auto"

# (section, key) -> (attribute, converter, default); converters run on the raw string
_SCHEMA = {}


def _register(section, key, attr, conv, default):
    _SCHEMA[(section, key)] = (attr, conv, default)


def _as_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {s!r}")


def _auto_or_float(s: str):
    return _AUTO if s.strip().lower() == _AUTO else float(s)


def _rungs(s: str):
    """Ladder rungs: whitespace-separated eps:n pairs, e.g. '0.02:256 0.01:512'."""
    out = []
    for tok in s.split():
        try:
            e, n = tok.split(":")
            out.append((float(e), int(n)))
        except ValueError as exc:
            raise ConfigurationError(f"bad ladder rung {tok!r} (want eps:n)") from exc
    return out


_register("run", "scenario", "scenario", str, None)
_register("run", "dim", "dim", int, 0)  # 0 = scenario default
_register("run", "extent", "extent", float, 1.0)
_register("run", "n", "n", int, 512)
_register("run", "eps", "eps", float, 0.01)
_register("run", "scheme", "scheme", str, "semi-implicit")
_register("run", "dt", "dt", _auto_or_float, _AUTO)
_register("run", "t_end", "t_end", _auto_or_float, _AUTO)
_register("run", "r0", "r0", float, 0.25)
_register("run", "r_c", "r_c", float, 0.125)
_register("run", "gap_eps", "gap_eps", float, 8.0)
_register("run", "bump_eps", "bump_eps", float, 2.0)
_register("run", "seed", "seed", int, 0)
_register("run", "stride", "stride", int, 25)
_register("run", "entropy", "entropy", str, "auto")
_register("output", "out_dir", "out_dir", str, "out")
_register("output", "checkpoint_every", "checkpoint_every", int, 0)
_register("output", "quiet", "quiet", _as_bool, False)
_register("ladder", "rungs", "ladder_rungs", _rungs, ())
_register("ladder", "t_end", "ladder_t_end", _auto_or_float, _AUTO)


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    dim: int = 0
    extent: float = 1.0
    n: int = 512
    eps: float = 0.01
    scheme: str = "semi-implicit"
    dt: object = _AUTO
    t_end: object = _AUTO
    r0: float = 0.25
    r_c: float = 0.125
    gap_eps: float = 8.0
    bump_eps: float = 2.0
    seed: int = 0
    stride: int = 25
    entropy: str = "auto"
    out_dir: str = "out"
    checkpoint_every: int = 0
    quiet: bool = False
    ladder_rungs: tuple = ()
    ladder_t_end: object = _AUTO

    def __post_init__(self):
        if self.scenario is None:
            raise ConfigurationError("config must set scenario")
        if self.scheme not in ("semi-implicit", "explicit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.entropy not in ("auto", "on", "off"):
            raise ConfigurationError(f"entropy must be auto/on/off, got {self.entropy!r}")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def canonical_text(self) -> str:
        """Deterministic rendering of the full config (summary echo)."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "ladder_rungs":
                v = " ".join(f"{e}:{n}" for e, n in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    _OUTPUT_ONLY = ("out_dir", "checkpoint_every", "quiet")

    def physics_text(self) -> str:
        """Canonical rendering of result-relevant fields only (content hash)."""
        return "\n".join(
            line
            for line in self.canonical_text().splitlines()
            if line.split(" = ")[0] not in self._OUTPUT_ONLY
        ) + "\n"


def parse_config_text(text: str) -> RunConfig:
    values = {}
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        entry = _SCHEMA.get((section, key))
        if entry is None:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        attr, conv, _ = entry
        try:
            values[attr] = conv(val)
        except ConfigurationError:
            raise
        except Exception as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    if "scenario" not in values:
        raise ConfigurationError("config must set scenario")
    return RunConfig(**values)


def parse_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
