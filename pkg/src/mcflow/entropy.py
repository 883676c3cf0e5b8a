"""Relative entropy and bulk error against a classical solution, their
coercivity consequences, and the Gronwall stability monitor.

The relative entropy int (1 - p . xi) dmu controls the tilt excess and the
distance moment of the varifold; the bulk error sigma int |chi - chi_ball|
|theta| dx is a weighted symmetric-difference volume.  Along a run the
stability estimates bound E(T) by E(0) + C int E dt; we fit the smallest
admissible C by a direct scan (least squares would understate violations)
and require the fit to be stable under refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allen_cahn import SIGMA
from .calibration import CalibrationFields, ClassicalSphere, _inward_normal
from .errors import ConfigurationError
from .grid import ScalarField, VectorField, divergence, integrate_array
from .varifold import DiscreteVarifold, MultiplicityField, PhaseIndicator


@dataclass
class EntropyRecord:
    t: float
    E_rel: float
    E_bulk: float
    tilt_excess: float
    dist_moment: float
    perimeter_tilt: float
    multiplicity_defect: float
    gronwall_C_fit: float | None = None


def relative_entropy(v: DiscreteVarifold, cal: CalibrationFields) -> float:
    """Form-1 relative entropy: sum (1 - p . xi) weight h^d."""
    if v.spec != cal.spec:
        raise ConfigurationError("varifold and calibration live on different grids")
    align = np.sum(v.normal.data * cal.xi.data, axis=-1)
    return integrate_array((1.0 - align) * v.weight.data, v.spec)


def relative_entropy_forms(v: DiscreteVarifold, chi: PhaseIndicator, cal: CalibrationFields):
    """(form1, form2): the defining integral and its integration-by-parts twin.

    form2 = mass + sigma * sum chi (div xi) h^d agrees with form1 up to the
    compatibility defect between sigma grad chi and the varifold normals.
    """
    form1 = relative_entropy(v, cal)
    div_xi = divergence(cal.xi).data
    form2 = v.mass() + v.sigma * integrate_array(chi.chi.data * div_xi, v.spec)
    return form1, form2


def bulk_error(chi: PhaseIndicator, sphere: ClassicalSphere, cal: CalibrationFields) -> float:
    """sigma * sum |chi - chi_ball(t)| |theta| h^d with the exact cell-center indicator."""
    ball = sphere.indicator(cal.spec, cal.time)
    dens = np.abs(chi.chi.data - ball) * np.abs(cal.theta.data)
    return SIGMA * integrate_array(dens, cal.spec)


@dataclass
class CoercivityChecks:
    """LHS and admissible bound of each coercivity inequality."""

    entries: dict

    def worst_excess(self) -> float:
        """Largest LHS - bound (negative when everything holds)."""
        return max(lhs - bound for lhs, bound in self.entries.values())

    def all_hold(self) -> bool:
        return self.worst_excess() <= 0.0


def coercivity_report(
    v: DiscreteVarifold,
    chi: PhaseIndicator,
    cal: CalibrationFields,
    rho: MultiplicityField | None = None,
    slack: float | None = None,
):
    """EntropyRecord plus the seven coercivity inequalities with discretization slack.

    ``slack`` defaults to h/extent * mass, the measured O(h) quadrature
    allowance; each inequality is reported as (LHS, const * E_rel + slack).
    """
    spec = v.spec
    sphere = cal.sphere
    mass = v.mass()
    if slack is None:
        slack = (spec.h / spec.extent) * max(mass, 1e-300)
    e_rel = relative_entropy(v, cal)
    e_bulk = bulk_error(chi, sphere, cal)

    diff = v.normal.data - cal.xi.data
    tilt = integrate_array(np.sum(diff * diff, axis=-1) * v.weight.data, spec)

    dist = np.abs(sphere.signed_distance(spec, cal.time))
    m2 = np.minimum(1.0, dist**2 / sphere.r_c**2)
    dist_moment = integrate_array(m2 * v.weight.data, spec)

    # sharp-interface (perimeter) versions from the mollified phase boundary
    pd = chi.perimeter_density.data
    gchi = chi.smoothed_gradient().data
    norm = np.sqrt(np.sum(gchi**2, axis=-1))
    live = norm > 1e-12 * max(float(norm.max()), 1e-300)
    nhat = np.where(live[..., None], gchi / np.where(live, norm, 1.0)[..., None], 0.0)
    ndiff = nhat - cal.xi.data
    per_tilt = SIGMA * integrate_array(np.sum(ndiff * ndiff, axis=-1) * pd, spec)
    per_dist = SIGMA * integrate_array(m2 * pd, spec)

    ball = sphere.indicator(spec, cal.time)
    signed_bulk = SIGMA * integrate_array((chi.chi.data - ball) * cal.theta.data, spec)
    m1 = np.minimum(1.0, dist / sphere.r_c)
    bulk_dist = SIGMA * integrate_array(np.abs(chi.chi.data - ball) * m1, spec)

    rho_defect = rho.defect() if rho is not None else float("nan")

    entries = {
        "tilt_excess<=2E": (tilt, 2.0 * e_rel + slack),
        "dist_moment<=E": (dist_moment, e_rel + slack),
        "signed_bulk==Ebulk": (abs(signed_bulk - e_bulk), slack),
        "bulk_dist<=Ebulk": (bulk_dist, e_bulk + slack),
        "rho_defect<=E": (rho_defect if rho is not None else 0.0, e_rel + slack),
        "perimeter_tilt<=2E": (per_tilt, 2.0 * e_rel + slack),
        "perimeter_dist<=E": (per_dist, e_rel + slack),
    }
    record = EntropyRecord(
        t=cal.time,
        E_rel=e_rel,
        E_bulk=e_bulk,
        tilt_excess=tilt,
        dist_moment=dist_moment,
        perimeter_tilt=per_tilt,
        multiplicity_defect=rho_defect,
    )
    return record, CoercivityChecks(entries)


def analytic_sphere_varifold(
    sphere: ClassicalSphere, t: float, spec, width_cells: float = 2.0
) -> DiscreteVarifold:
    """Sharp-interface comparison varifold: sigma-weighted Gaussian shell on
    the sphere with exact inward normals, speed and curvature (d-1)/r."""
    s = sphere.signed_distance(spec, t)
    w = width_cells * spec.h
    shell = SIGMA * np.exp(-0.5 * (s / w) ** 2) / (w * math.sqrt(2.0 * math.pi))
    n, _ = _inward_normal(sphere, spec)
    speed = (sphere.dim - 1) / sphere.radius(t)
    return DiscreteVarifold(
        spec=spec,
        time=t,
        weight=ScalarField(spec, shell),
        normal=VectorField(spec, n),
        vel=ScalarField(spec, np.full(spec.shape, speed)),
        curv=VectorField(spec, speed * n),
    )


@dataclass
class GronwallFit:
    C_fit_rel: float
    C_fit_bulk: float
    fit_slack: float
    samples: int


def gronwall_monitor(records: list, fit_slack: float) -> GronwallFit:
    """Smallest C >= 0 with E(T_i) <= E(0) + C int_0^Ti E dt + fit_slack for all i,
    and the bulk analogue with the combined right side; direct scan.

    ``fit_slack`` should be 3x the discretization floor of E measured on the
    aligned analytic varifold at t=0, separating scheme error from growth.
    """
    if len(records) < 10:
        raise ConfigurationError(f"gronwall monitor needs >= 10 samples, got {len(records)}")
    t = np.array([r.t for r in records])
    if np.any(np.diff(t) <= 0):
        raise ConfigurationError("samples must be strictly increasing in time")
    e = np.array([r.E_rel for r in records])
    eb = np.array([r.E_bulk for r in records])

    def cumint(y):
        out = np.zeros_like(y)
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
        return out

    cum_e = cumint(e)
    cum_both = cumint(e + eb)
    c_rel = 0.0
    c_bulk = 0.0
    for i in range(1, len(t)):
        if cum_e[i] > 0:
            c_rel = max(c_rel, (e[i] - e[0] - fit_slack) / cum_e[i])
        if cum_both[i] > 0:
            c_bulk = max(c_bulk, (eb[i] - eb[0] - e[0] - fit_slack) / cum_both[i])
    return GronwallFit(max(c_rel, 0.0), max(c_bulk, 0.0), fit_slack, len(records))


def fits_stable(fits: list, floor_rate: float, lo: float = 0.5, hi: float = 2.0):
    """Refinement stability of fitted Gronwall constants across two or more runs.

    Constants below ``floor_rate`` (a rate whose integrated effect over the
    run is negligible) count as stable zeros; otherwise all pairwise ratios
    must lie in [lo, hi].  Returns (stable_rel, stable_bulk).
    """

    def stable(vals):
        vals = [float(v) for v in vals]
        if all(v <= floor_rate for v in vals):
            return True
        if any(v <= floor_rate for v in vals):
            return False
        return all(
            lo <= vals[i] / vals[j] <= hi for i in range(len(vals)) for j in range(len(vals)) if i != j
        )

    return stable([f.C_fit_rel for f in fits]), stable([f.C_fit_bulk for f in fits])
