"""Scenario library: initial data plus the comparison flow and test fields.

Geometries implement ``signed_distance(spec)`` (positive inside the phase)
and ``seam_clearance(spec)``; composites use the pointwise min of signed
distances so the profile equality q' = sqrt(2W(q)) survives along each
branch and the data stays well-prepared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..allen_cahn import DiffuseState, auto_dt, well_prepared_init
from ..calibration import ClassicalSphere, cutoff_kappa
from ..errors import ConfigurationError
from ..grid import GridSpec, VectorField
from ..varifold import SpaceTimeTestFunction


@dataclass(frozen=True)
class PlanarSlab:
    """1D slab [lo, hi] along axis 0; two flat interfaces."""

    lo: float
    hi: float

    def signed_distance(self, spec: GridSpec) -> np.ndarray:
        x = spec.meshgrid()[0]
        return np.minimum(x - self.lo, self.hi - x)

    def seam_clearance(self, spec: GridSpec) -> float:
        return min(self.lo, spec.extent - self.hi)


@dataclass(frozen=True)
class NestedAnnulus:
    """Phase between two concentric spheres; transiently a double layer when it collapses."""

    center: tuple
    r_in: float
    r_out: float

    def signed_distance(self, spec: GridSpec) -> np.ndarray:
        coords = spec.meshgrid()
        rho = np.sqrt(sum((coords[a] - self.center[a]) ** 2 for a in range(len(self.center))))
        return np.minimum(self.r_out - rho, rho - self.r_in)

    def seam_clearance(self, spec: GridSpec) -> float:
        return min(
            min(c, spec.extent - c) - self.r_out for c in self.center
        )


@dataclass(frozen=True)
class BumpedCircle:
    """Star-shaped perturbation r(angle) = r0 + delta cos(mode * angle), d=2.

    The signed distance is the exact distance to a densely sampled curve
    (16384 points; polyline error ~ arc^2, far below h), signed by the
    radial inside test.  The naive radial formula has |grad s| != 1 and
    would violate the nonpositive-discrepancy preparation.
    """

    center: tuple
    r0: float
    delta: float
    mode: int

    def signed_distance(self, spec: GridSpec) -> np.ndarray:
        from scipy.spatial import cKDTree

        ang = np.linspace(0.0, 2.0 * math.pi, 16384, endpoint=False)
        rad = self.r0 + self.delta * np.cos(self.mode * ang)
        curve = np.stack(
            [self.center[0] + rad * np.cos(ang), self.center[1] + rad * np.sin(ang)], axis=1
        )
        x, y = spec.meshgrid()
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        dist, _ = cKDTree(curve).query(pts, k=1)
        dx, dy = x - self.center[0], y - self.center[1]
        rho = np.hypot(dx, dy)
        theta = np.arctan2(dy, dx)
        inside = rho < self.r0 + self.delta * np.cos(self.mode * theta)
        return np.where(inside, 1.0, -1.0) * dist.reshape(spec.shape)

    def seam_clearance(self, spec: GridSpec) -> float:
        return min(min(c, spec.extent - c) for c in self.center) - (self.r0 + abs(self.delta))


def radial_plateau_bump(center, radius_out):
    """Smooth bump equal to 1 for |x-c| <= radius_out/sqrt2, 0 beyond radius_out."""

    def f(coords, t):
        rho2 = sum((coords[a] - center[a]) ** 2 for a in range(len(center)))
        return cutoff_kappa(rho2 / radius_out**2)

    return f


def transport_test_functions(center, radius_out, t_end):
    """Fixed family for the transport check: a static plateau and two
    genuinely space-time dependent C^1 functions."""
    bump = radial_plateau_bump(center, radius_out)
    zero = lambda coords, t: np.zeros_like(coords[0])

    def zeta2(coords, t):
        return bump(coords, t) * (0.5 + 0.5 * math.cos(math.pi * t / t_end))

    def zeta2_dt(coords, t):
        return bump(coords, t) * (-0.5 * math.pi / t_end * math.sin(math.pi * t / t_end))

    def zeta3(coords, t):
        mod = 1.0 + 0.5 * np.sin(2.0 * math.pi * coords[0])
        return bump(coords, t) * mod * (1.0 - 0.5 * t / t_end)

    def zeta3_dt(coords, t):
        mod = 1.0 + 0.5 * np.sin(2.0 * math.pi * coords[0])
        return bump(coords, t) * mod * (-0.5 / t_end)

    return [
        SpaceTimeTestFunction(bump, zero, name="plateau"),
        SpaceTimeTestFunction(zeta2, zeta2_dt, name="cos-ramp"),
        SpaceTimeTestFunction(zeta3, zeta3_dt, name="wave-decay"),
    ]


def random_bump_vector_fields(spec: GridSpec, center, radius_out, count, seed):
    """Seeded polynomial-times-bump vector test fields (degree <= 2)."""
    rng = np.random.default_rng(seed)
    coords = spec.meshgrid()
    d = spec.dim
    rho2 = sum((coords[a] - center[a]) ** 2 for a in range(d))
    bump = cutoff_kappa(rho2 / radius_out**2)
    fields = []
    for _ in range(count):
        comps = []
        for _j in range(d):
            poly = rng.uniform(-1.0, 1.0)
            for a in range(d):
                xa = coords[a] - center[a]
                poly = poly + rng.uniform(-1.0, 1.0) * xa
                for b in range(a, d):
                    poly = poly + rng.uniform(-1.0, 1.0) * xa * (coords[b] - center[b])
            comps.append(bump * poly)
        fields.append(VectorField(spec, np.stack(comps, axis=-1)))
    return fields


@dataclass
class Scenario:
    name: str
    state0: DiffuseState
    sphere: ClassicalSphere | None
    test_functions: list
    t_end_auto: float
    expects_merge: bool = False
    radius_tol: float | None = None


_KNOWN = ("standing-wave-1d", "shrinking-circle", "shrinking-sphere", "multiplicity-two", "perturbed-circle")


def make_scenario(cfg) -> Scenario:
    """Instantiate initial data + comparison flow for a config."""
    if cfg.scenario not in _KNOWN:
        raise ConfigurationError(f"unknown scenario {cfg.scenario!r}; known: {', '.join(_KNOWN)}")
    L = cfg.extent
    name = cfg.scenario
    dim = cfg.dim
    if dim == 0:
        dim = {"standing-wave-1d": 1, "shrinking-sphere": 3}.get(name, 2)
    spec = GridSpec(dim, L, cfg.n)
    center = (L / 2.0,) * dim
    dt = cfg.dt if cfg.dt != "auto" else auto_dt(cfg.eps)

    if name == "standing-wave-1d":
        if dim != 1:
            raise ConfigurationError("standing-wave-1d needs dim=1")
        slab = PlanarSlab(L / 4.0, 3.0 * L / 4.0)
        state0 = well_prepared_init(slab, cfg.eps, spec)
        tf = transport_test_functions(center, 0.45 * L, max(2000.0 * dt, 1e-9))
        return Scenario(name, state0, None, tf, t_end_auto=2000.0 * dt)

    if name in ("shrinking-circle", "shrinking-sphere"):
        want = 2 if name == "shrinking-circle" else 3
        if dim != want:
            raise ConfigurationError(f"{name} needs dim={want}")
        sphere = ClassicalSphere(dim, center, cfg.r0, cfg.r_c, cfg.eps)
        state0 = well_prepared_init(sphere, cfg.eps, spec)
        t_auto = 0.8 * sphere.t_strong
        tf = transport_test_functions(center, 0.45 * L, t_auto)
        return Scenario(name, state0, sphere, tf, t_end_auto=t_auto,
                        radius_tol=0.02 if dim == 2 else 0.04)

    if name == "multiplicity-two":
        if dim != 2:
            raise ConfigurationError("multiplicity-two is a d=2 scenario")
        half_gap = 0.5 * cfg.gap_eps * cfg.eps
        ann = NestedAnnulus(center, cfg.r0 - half_gap, cfg.r0 + half_gap)
        if ann.r_in <= 8.0 * cfg.eps:
            raise ConfigurationError("inner circle too small for the annulus construction")
        state0 = well_prepared_init(ann, cfg.eps, spec)
        tf = transport_test_functions(center, 0.45 * L, 0.012)
        return Scenario(name, state0, None, tf, t_end_auto=0.012, expects_merge=True)

    # perturbed-circle: radius bump seeds the stability estimate
    if dim != 2:
        raise ConfigurationError("perturbed-circle is a d=2 scenario")
    rng = np.random.default_rng(cfg.seed)
    mode = int(rng.integers(2, 6))
    delta = cfg.bump_eps * cfg.eps
    bumped = BumpedCircle(center, cfg.r0, delta, mode)
    state0 = well_prepared_init(bumped, cfg.eps, spec)
    sphere = ClassicalSphere(dim, center, cfg.r0, cfg.r_c, cfg.eps)
    t_auto = 0.8 * sphere.t_strong
    tf = transport_test_functions(center, 0.45 * L, t_auto)
    return Scenario(name, state0, sphere, tf, t_end_auto=t_auto)
