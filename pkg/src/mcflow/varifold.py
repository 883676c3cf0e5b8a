"""Discrete oriented-varifold data extracted from a diffuse state.

The mass weight is |grad psi| with psi = phi(u) (its integral is bounded by
the energy and saturates it under equipartition), the normal is the unit
direction of grad psi with an e1 fallback on the degenerate set, the normal
speed is -eps du/dt / sqrt(2W(u)) evaluated at half steps, and the mean
curvature vector is -(eps lap u - W'(u)/eps) times the unit normal.

Conventions: u ~ 1 inside the enclosed phase A, so grad psi points into A
and the normal is the measure-theoretic inward normal; the normal speed is
positive for shrinking A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .allen_cahn import SIGMA, DiffuseState, DoubleWell
from .errors import ConfigurationError
from .grid import (
    GridSpec,
    ScalarField,
    VectorField,
    grad_axis,
    grad_components,
    integrate_array,
    jacobian,
    laplacian_array,
)

#: weight floor relative to the max weight below which the e1 fallback applies
W_FLOOR_REL = 1e-14
#: absolute floor for sqrt(2W) below which the normal speed is set to 0
V_FLOOR = 1e-12
#: absolute floor for eps|grad u| below which the scalar curvature is set to 0
H_FLOOR = 1e-10
#: mollifier width for the phase-indicator perimeter density, in cells
MOLLIFIER_CELLS = 2.0


@dataclass
class DiscreteVarifold:
    """Per-cell mass weight and unit normal, with optional speed/curvature."""

    spec: GridSpec
    time: float
    weight: ScalarField
    normal: VectorField
    vel: ScalarField | None = None
    curv: VectorField | None = None
    sigma: float = SIGMA

    def mass(self) -> float:
        return integrate_array(self.weight.data, self.spec)


@dataclass
class PhaseIndicator:
    """Binary phase field chi plus its mollified boundary density."""

    chi: ScalarField
    perimeter_density: ScalarField

    @classmethod
    def from_mask(cls, spec: GridSpec, mask: np.ndarray) -> "PhaseIndicator":
        chi = np.asarray(mask, dtype=np.float64)
        smooth = ndi.gaussian_filter(chi, sigma=MOLLIFIER_CELLS, mode="wrap")
        h = spec.h
        pd = np.zeros(spec.shape)
        for ax in range(spec.dim):
            g = grad_axis(smooth, h, ax)
            pd += g * g
        return cls(ScalarField(spec, chi), ScalarField(spec, np.sqrt(pd)))

    @classmethod
    def from_state(cls, state: DiffuseState) -> "PhaseIndicator":
        # threshold at the symmetry point of the double well
        return cls.from_mask(state.spec, state.u.data > 0.5)

    def volume(self) -> float:
        return integrate_array(self.chi.data, self.chi.spec)

    def perimeter(self) -> float:
        return integrate_array(self.perimeter_density.data, self.chi.spec)

    def smoothed_gradient(self) -> VectorField:
        smooth = ndi.gaussian_filter(self.chi.data, sigma=MOLLIFIER_CELLS, mode="wrap")
        comps = grad_components(smooth, self.chi.spec.h)
        return VectorField(self.chi.spec, np.stack(comps, axis=-1))


def psi_field(state: DiffuseState) -> ScalarField:
    """phi composed with u; |grad psi| <= energy density up to stencil error."""
    return ScalarField(state.spec, DoubleWell.phi(state.u.data))


def _weight_and_normal(state: DiffuseState):
    psi = DoubleWell.phi(state.u.data)
    comps = grad_components(psi, state.spec.h)
    w = np.sqrt(sum(g * g for g in comps))
    wmax = float(w.max())
    live = w > W_FLOOR_REL * wmax if wmax > 0 else np.zeros_like(w, dtype=bool)
    denom = np.where(live, w, 1.0)
    normal = np.stack([np.where(live, g / denom, 0.0) for g in comps], axis=-1)
    normal[..., 0] = np.where(live, normal[..., 0], 1.0)  # e1 fallback
    return w, normal


def build_varifold(state: DiffuseState) -> DiscreteVarifold:
    """Mass weight |grad psi| and unit normals at one time slice."""
    w, normal = _weight_and_normal(state)
    return DiscreteVarifold(
        spec=state.spec,
        time=state.time,
        weight=ScalarField(state.spec, w),
        normal=VectorField(state.spec, normal),
    )


def normal_speed(state: DiffuseState, state_next: DiffuseState, dt: float | None = None) -> ScalarField:
    """-eps du/dt / sqrt(2W(u)) at the half step; 0 on the degenerate set."""
    if dt is None:
        dt = state_next.time - state.time
    if not (dt > 0):
        raise ConfigurationError("states must be consecutive in time")
    um = 0.5 * (state.u.data + state_next.u.data)
    dtu = (state_next.u.data - state.u.data) / dt
    s2w = DoubleWell.sqrt_2w(um)
    v = np.where(s2w > V_FLOOR, -state.eps * dtu / np.where(s2w > V_FLOOR, s2w, 1.0), 0.0)
    return ScalarField(state.spec, v)


def _chemical_potential(state: DiffuseState) -> np.ndarray:
    u = state.u.data
    return state.eps * laplacian_array(u, state.spec.h) - DoubleWell.w_prime(u) / state.eps


def mean_curvature_vec(state: DiffuseState) -> VectorField:
    """Raw curvature vector -(eps lap u - W'(u)/eps) * normal.

    Carries profile-density units; the dissipation functional uses
    (1/eps)|.|^2 of this raw field.  For a unit-normalized curvature use
    ``scalar_curvature_estimate`` times the normal.
    """
    _, normal = _weight_and_normal(state)
    chem = _chemical_potential(state)
    return VectorField(state.spec, -chem[..., None] * normal)


def scalar_curvature_estimate(state: DiffuseState) -> ScalarField:
    """Pointwise curvature -(eps lap u - W'(u)/eps)/(eps |grad u|).

    Sign fixed by the inward-normal convention: positive on a shrinking
    sphere, approaching (d-1)/r on the layer.
    """
    chem = _chemical_potential(state)
    gn = np.sqrt(sum(g * g for g in grad_components(state.u.data, state.spec.h)))
    denom = state.eps * gn
    return ScalarField(
        state.spec,
        np.where(denom > H_FLOOR, -chem / np.where(denom > H_FLOOR, denom, 1.0), 0.0),
    )


def varifold_with_kinematics(state: DiffuseState, state_next: DiffuseState) -> DiscreteVarifold:
    """Varifold at the half step with vel and unit-normalized curv populated."""
    dt = state_next.time - state.time
    um = 0.5 * (state.u.data + state_next.u.data)
    mid = DiffuseState(ScalarField(state.spec, um), state.eps, state.time + 0.5 * dt)
    v = build_varifold(mid)
    v.vel = normal_speed(state, state_next)
    h_est = scalar_curvature_estimate(mid)
    v.curv = VectorField(state.spec, h_est.data[..., None] * v.normal.data)
    return v


def energy_stress_tensor(state: DiffuseState) -> np.ndarray:
    """Energy density times identity minus eps grad u (x) grad u, shape (*grid, d, d)."""
    d = state.spec.dim
    comps = grad_components(state.u.data, state.spec.h)
    gn2 = sum(g * g for g in comps)
    edens = 0.5 * state.eps * gn2 + DoubleWell.w(state.u.data) / state.eps
    out = np.zeros(state.spec.shape + (d, d))
    for i in range(d):
        out[..., i, i] = edens
        for j in range(d):
            out[..., i, j] -= state.eps * comps[i] * comps[j]
    return out


def first_variation_residual(v: DiscreteVarifold, B: VectorField) -> float:
    """Normalized defect of int H . B dw = -int (I - p (x) p) : grad B dmu.

    Requires ``v.curv`` (unit-normalized curvature).  Returns
    |lhs - rhs| / (|lhs| + |rhs| + mass * ||grad B||_inf); 0 for a
    zero-mass varifold.
    """
    if v.curv is None:
        raise ConfigurationError("varifold has no curvature field")
    w = v.weight.data
    vol = v.spec.cell_volume
    lhs = vol * float(np.sum(np.sum(v.curv.data * B.data, axis=-1) * w))
    gradB = jacobian(B)  # [..., i, j] = d_i B_j
    p = v.normal.data
    trace = np.trace(gradB, axis1=-2, axis2=-1)
    pgp = np.einsum("...i,...ij,...j->...", p, gradB, p)
    rhs = -vol * float(np.sum((trace - pgp) * w))
    grad_b_inf = float(np.max(np.sqrt(np.sum(gradB**2, axis=(-2, -1)))))
    b_inf = float(np.max(np.sqrt(np.sum(B.data**2, axis=-1))))
    # the |B|/extent floor keeps the normalization meaningful for constant
    # fields, where ||grad B|| and both sides vanish
    denom = abs(lhs) + abs(rhs) + v.mass() * (grad_b_inf + b_inf / v.spec.extent)
    if denom == 0.0:
        return 0.0
    return abs(lhs - rhs) / denom


class SpaceTimeTestFunction:
    """C^1 test function zeta(x, t) sampled on the grid/time lattice.

    ``func(coords, t)`` and ``dt_func(coords, t)`` take the meshgrid tuple
    and a scalar time and return per-cell arrays.
    """

    def __init__(self, func, dt_func, name="zeta"):
        self.func = func
        self.dt_func = dt_func
        self.name = name

    def __call__(self, coords, t):
        return np.asarray(self.func(coords, t), dtype=np.float64)

    def time_deriv(self, coords, t):
        return np.asarray(self.dt_func(coords, t), dtype=np.float64)

    def c1_norm(self, spec: GridSpec, times) -> float:
        coords = spec.meshgrid()
        best = 0.0
        for t in times:
            z = self(coords, t)
            zt = self.time_deriv(coords, t)
            gn = np.sqrt(sum(g * g for g in grad_components(z, spec.h)))
            best = max(best, float(np.max(np.abs(z)) + np.max(np.abs(zt)) + np.max(gn)))
        return best


@dataclass
class TransportResult:
    sharp_residual: float
    diffuse_residual: float
    norm: float
    boundary_term: float
    bulk_term: float
    flux_term: float


def transport_residual(traj, zeta: SpaceTimeTestFunction) -> TransportResult:
    """Residual of the transport identity along a uniformly sampled trajectory.

    Checks sigma int chi(T) zeta(T) - sigma int chi0 zeta(0)
    = sigma int int chi dzeta/dt - int int V zeta dw dt, normalized by
    mass(0) * ||zeta||_C1 (the mass already carries the sigma weight).
    Also evaluates the diffuse variant with sigma*chi replaced by psi,
    which holds up to the equipartition defect.
    """
    states = list(traj)
    if len(states) < 2:
        raise ConfigurationError("transport residual needs at least 2 samples")
    spec = states[0].spec
    coords = spec.meshgrid()
    vol = spec.cell_volume

    def chi(state):
        return (state.u.data > 0.5).astype(np.float64)

    t0, tT = states[0].time, states[-1].time
    bnd_sharp = SIGMA * vol * float(
        np.sum(chi(states[-1]) * zeta(coords, tT)) - np.sum(chi(states[0]) * zeta(coords, t0))
    )
    bnd_diff = vol * float(
        np.sum(DoubleWell.phi(states[-1].u.data) * zeta(coords, tT))
        - np.sum(DoubleWell.phi(states[0].u.data) * zeta(coords, t0))
    )
    bulk_sharp = bulk_diff = flux = 0.0
    for cur, nxt in zip(states[:-1], states[1:]):
        dt = nxt.time - cur.time
        tm = cur.time + 0.5 * dt
        um = 0.5 * (cur.u.data + nxt.u.data)
        zt = zeta.time_deriv(coords, tm)
        z = zeta(coords, tm)
        bulk_sharp += SIGMA * vol * dt * float(np.sum((um > 0.5) * zt))
        bulk_diff += vol * dt * float(np.sum(DoubleWell.phi(um) * zt))
        vmid = normal_speed(cur, nxt).data
        wmid = np.sqrt(sum(g * g for g in grad_components(DoubleWell.phi(um), spec.h)))
        flux += vol * dt * float(np.sum(vmid * z * wmid))
    mass0 = integrate_array(
        np.sqrt(sum(g * g for g in grad_components(DoubleWell.phi(states[0].u.data), spec.h))), spec
    )
    norm = mass0 * zeta.c1_norm(spec, [t0, 0.5 * (t0 + tT), tT]) + 1e-300
    return TransportResult(
        sharp_residual=abs(bnd_sharp - bulk_sharp + flux) / norm,
        diffuse_residual=abs(bnd_diff - bulk_diff + flux) / norm,
        norm=norm,
        boundary_term=bnd_sharp,
        bulk_term=bulk_sharp,
        flux_term=flux,
    )


@dataclass
class MultiplicityField:
    """Per-box ratio sigma * perimeter / mass on a coarse grid; raw values unclamped."""

    box_cells: int
    delta: float
    rho_raw: np.ndarray
    box_mass: np.ndarray
    box_perimeter: np.ndarray
    empty: np.ndarray

    @property
    def rho_clamped(self) -> np.ndarray:
        return np.clip(self.rho_raw, 0.0, 1.0)

    def defect(self) -> float:
        """Mass-weighted multiplicity defect sum (1 - rho) dw over active boxes."""
        miss = np.where(self.empty, 0.0, np.maximum(0.0, 1.0 - self.rho_clamped))
        return float(np.sum(miss * self.box_mass))

    def interface_boxes(self, sigma: float, frac: float = 0.5) -> np.ndarray:
        """Boxes carrying at least ``frac`` of one interface crossing worth of mass;
        the meaningful support for per-box multiplicity statements (corner-grazing
        boxes split the two measures differently and carry little mass)."""
        d = self.rho_raw.ndim
        return self.box_mass >= frac * sigma * self.delta ** (d - 1)


def _box_reduce(a: np.ndarray, m: int) -> np.ndarray:
    d = a.ndim
    nb = a.shape[0] // m
    shape = sum(((nb, m),) * d, ())
    axes = tuple(2 * k + 1 for k in range(d))
    return a.reshape(shape).sum(axis=axes)


def multiplicity_field(
    v: DiscreteVarifold,
    chi: PhaseIndicator,
    delta: float,
    eps: float | None = None,
    mass_floor: float | None = None,
) -> MultiplicityField:
    """Coarse-grained multiplicity ratio rho = sigma |grad chi| mass / weight mass.

    ``delta`` must be an integer multiple of h (and >= 8 eps when eps is
    given).  The partition is offset by half a box so its faces avoid the
    domain-symmetry lines where centered interfaces would graze corners.
    Boxes whose weight mass falls below ``mass_floor`` (default:
    1e-3 * sigma * delta^(d-1), a thousandth of one interface crossing)
    are flagged empty.
    """
    spec = v.spec
    h = spec.h
    m = int(round(delta / h))
    if abs(m * h - delta) > 1e-9 * h or m < 1:
        raise ConfigurationError(f"delta={delta} is not an integer multiple of h={h}")
    if spec.n % m != 0:
        raise ConfigurationError(f"box size {m} cells does not divide n={spec.n}")
    if eps is not None and delta < 8.0 * eps - 1e-12:
        raise ConfigurationError(f"delta={delta} must be >= 8 eps = {8 * eps}")
    vol = spec.cell_volume
    axes = tuple(range(spec.dim))
    shift = (m // 2,) * spec.dim
    wb = _box_reduce(np.roll(v.weight.data, shift, axis=axes), m) * vol
    pb = _box_reduce(np.roll(chi.perimeter_density.data, shift, axis=axes), m) * vol
    if mass_floor is None:
        mass_floor = 1e-3 * v.sigma * delta ** (spec.dim - 1)
    empty = wb < mass_floor
    rho = np.where(empty, np.nan, v.sigma * pb / np.where(empty, 1.0, wb))
    return MultiplicityField(m, delta, rho, wb, pb, empty)


def compatibility_residual(v: DiscreteVarifold, chi: PhaseIndicator, xi_test: VectorField) -> float:
    """|sigma int xi . grad chi_smoothed - int xi . p dw| for one test field."""
    vol = v.spec.cell_volume
    gchi = chi.smoothed_gradient().data
    lhs = v.sigma * vol * float(np.sum(np.sum(xi_test.data * gchi, axis=-1)))
    rhs = vol * float(np.sum(np.sum(xi_test.data * v.normal.data, axis=-1) * v.weight.data))
    return abs(lhs - rhs)
