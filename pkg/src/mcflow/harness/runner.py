"""Stepping loop with per-step dissipation accumulators, sampled
diagnostics, entropy monitors, persistence, and named pass/fail checks."""

from __future__ import annotations

import dataclasses
import math
import os

import numpy as np

from .. import diagnostics as diag
from ..allen_cahn import (
    DISC_CQ,
    SIGMA,
    DiffuseState,
    DoubleWell,
    StepScheme,
    auto_dt,
    step,
    total_energy,
)
from ..calibration import CalibrationFields, verify_calibration
from ..entropy import (
    EntropyRecord,
    analytic_sphere_varifold,
    bulk_error,
    coercivity_report,
    gronwall_monitor,
    relative_entropy,
)
from ..errors import ConfigurationError
from ..grid import GridSpec, VectorField, grad_components, grad_norm2, laplacian_array
from ..varifold import (
    V_FLOOR,
    PhaseIndicator,
    build_varifold,
    multiplicity_field,
    scalar_curvature_estimate,
)
from .config import RunConfig
from .io import (
    CsvSink,
    content_hash,
    ensure_dir,
    parse_csv_row,
    read_checkpoint,
    read_csv_rows,
    write_checkpoint,
    write_summary,
)
from .scenarios import Scenario, make_scenario, random_bump_vector_fields

NAN = float("nan")


def _resolve_dt(cfg: RunConfig) -> float:
    return cfg.dt if cfg.dt != "auto" else auto_dt(cfg.eps)


def _resolve_t_end(cfg: RunConfig, scenario: Scenario) -> float:
    return cfg.t_end if cfg.t_end != "auto" else scenario.t_end_auto


def _entropy_enabled(cfg: RunConfig, scenario: Scenario) -> bool:
    if cfg.entropy == "on":
        return scenario.sphere is not None
    if cfg.entropy == "off":
        return False
    return scenario.sphere is not None and scenario.state0.spec.dim == 2


def _rho_delta(spec: GridSpec, eps: float) -> float | None:
    """Smallest coarse box >= 8 eps whose cell count divides n."""
    for k in (16, 8, 4, 2):
        if spec.n % k == 0 and spec.extent / k >= 8.0 * eps - 1e-12:
            return spec.extent / k
    return None


class _StepAccumulators:
    """Midpoint-rule dissipation and transport integrals, updated every step.

    In 3d two cost cuts apply (ledgered; physics unchanged at the stated
    tolerances): the curvature dissipation integrand uses the scheme
    identity eps lap u_{k+1} - W'(u_k)/eps = eps du/dt, avoiding a full
    Laplacian per step, and the V-integral is accumulated on a 4-step
    sublattice (its midpoint quadrature error is O((4 dt)^2), far below
    every tolerance at 3d step counts).  Transport integrals are tracked
    only in 1d/2d, where the transport criteria live.
    """

    def __init__(self, spec: GridSpec, eps: float, test_functions):
        self.spec = spec
        self.eps = eps
        self.vol = spec.cell_volume
        self.cum_v = 0.0
        self.cum_ac = 0.0
        self.cum_h = 0.0
        self.lean = spec.dim == 3
        self.v_stride = 4 if self.lean else 1
        self._step_count = 0
        self.tf = [] if self.lean else test_functions
        x = spec.axis_coords()
        self.coords = np.meshgrid(*([x] * spec.dim), indexing="ij", sparse=True)
        self.flux = [0.0] * len(self.tf)
        self.bulk_sharp = [0.0] * len(self.tf)
        self.bulk_diffuse = [0.0] * len(self.tf)

    def update(self, u0: np.ndarray, u1: np.ndarray, t0: float, dt: float):
        eps, vol, h = self.eps, self.vol, self.spec.h
        dtu = (u1 - u0) / dt
        sub = "abc"[: u0.ndim]
        ac = 0.5 * dt * vol * eps * float(np.einsum(f"{sub},{sub}->", dtu, dtu))
        self.cum_ac += ac
        on_v_lattice = self._step_count % self.v_stride == 0
        self._step_count += 1
        if self.lean:
            self.cum_h += ac
            if not on_v_lattice:
                return
        um = 0.5 * (u0 + u1)
        s2w = DoubleWell.sqrt_2w(um)
        psi = DoubleWell.phi(um)
        wmid = np.sqrt(grad_norm2(psi, h))
        v = -eps * dtu / np.maximum(s2w, V_FLOOR)
        v[s2w <= V_FLOOR] = 0.0
        self.cum_v += 0.5 * (dt * self.v_stride) * vol * float(
            np.einsum(f"{sub},{sub},{sub}->", v, v, wmid)
        )
        if not self.lean:
            chem = eps * laplacian_array(um, h) - DoubleWell.w_prime(um) / eps
            self.cum_h += 0.5 * dt * vol / eps * float(np.einsum(f"{sub},{sub}->", chem, chem))
        tm = t0 + 0.5 * dt
        chi_mid = um > 0.5
        for k, zeta in enumerate(self.tf):
            z = zeta(self.coords, tm)
            zt = zeta.time_deriv(self.coords, tm)
            self.flux[k] += dt * vol * float(np.sum(v * z * wmid))
            self.bulk_sharp[k] += SIGMA * dt * vol * float(np.sum(chi_mid * zt))
            self.bulk_diffuse[k] += dt * vol * float(np.sum(psi * zt))


def _transport_results(acc: _StepAccumulators, state0, stateT, coords_dense):
    """Finish the transport residuals from the accumulated integrals."""
    out = {}
    vol = state0.spec.cell_volume
    psi0 = DoubleWell.phi(state0.u.data)
    psiT = DoubleWell.phi(stateT.u.data)
    chi0 = (state0.u.data > 0.5).astype(np.float64)
    chiT = (stateT.u.data > 0.5).astype(np.float64)
    mass0 = vol * float(np.sum(np.sqrt(sum(g * g for g in grad_components(psi0, state0.spec.h)))))
    for k, zeta in enumerate(acc.tf):
        z0 = zeta(coords_dense, state0.time)
        zT = zeta(coords_dense, stateT.time)
        bnd_sharp = SIGMA * vol * float(np.sum(chiT * zT) - np.sum(chi0 * z0))
        bnd_diff = vol * float(np.sum(psiT * zT) - np.sum(psi0 * z0))
        norm = mass0 * zeta.c1_norm(state0.spec, [state0.time, stateT.time]) + 1e-300
        out[zeta.name] = {
            "sharp": abs(bnd_sharp - acc.bulk_sharp[k] + acc.flux[k]) / norm,
            "diffuse": abs(bnd_diff - acc.bulk_diffuse[k] + acc.flux[k]) / norm,
        }
    return out


def _measured_radius(state: DiffuseState) -> float:
    vol = state.spec.cell_volume * float(np.sum(state.u.data > 0.5))
    if state.spec.dim == 2:
        return math.sqrt(max(vol, 0.0) / math.pi)
    return (max(vol, 0.0) * 3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)


def _first_variation_suite(state: DiffuseState, center, seed: int) -> dict:
    from ..varifold import first_variation_residual

    spec = state.spec
    v = build_varifold(state)
    h_est = scalar_curvature_estimate(state)
    v.curv = VectorField(spec, h_est.data[..., None] * v.normal.data)
    coords = spec.meshgrid()
    const = np.zeros(spec.shape + (spec.dim,))
    const[..., 0] = 1.0
    radial = np.stack([coords[a] - center[a] for a in range(spec.dim)], axis=-1)
    out = {
        "const": first_variation_residual(v, VectorField(spec, const)),
        "radial": first_variation_residual(v, VectorField(spec, radial)),
    }
    bumps = random_bump_vector_fields(spec, center, 0.45 * spec.extent, 5, seed)
    out["random_max"] = max(first_variation_residual(v, b) for b in bumps)
    return out


def run(cfg: RunConfig, resume_path: str | None = None, echo=print) -> dict:
    """Execute one configured run; returns the summary dict (also persisted)."""
    scenario = make_scenario(cfg)
    spec = scenario.state0.spec
    eps = cfg.eps
    dt = _resolve_dt(cfg)
    t_end = _resolve_t_end(cfg, scenario)
    scheme = StepScheme(cfg.scheme, dt)
    scheme.validate_for(scenario.state0)
    total_steps = max(int(round(t_end / dt)), 1)
    sample_at = set(range(0, total_steps + 1, cfg.stride))
    sample_at.add(total_steps)
    sphere = scenario.sphere
    entropy_on = _entropy_enabled(cfg, scenario)
    track_rho = spec.dim <= 2
    rho_delta = _rho_delta(spec, eps) if track_rho else None

    ensure_dir(cfg.out_dir)
    csv_path = os.path.join(cfg.out_dir, "diagnostics.csv")

    state = scenario.state0
    start_step = 0
    prior_rows: list = []
    series = diag.DiagnosticsSeries(spec, eps)
    acc = _StepAccumulators(spec, eps, scenario.test_functions)
    prev_sample = None  # (E, cum_ac + cum_h)
    resumed = resume_path is not None

    if resumed:
        state = read_checkpoint(resume_path, cfg.extent)
        if state.spec != spec:
            raise ConfigurationError("checkpoint grid does not match config")
        start_step = int(round(state.time / dt))
        if abs(start_step * dt - state.time) > 1e-9 * max(dt, 1.0):
            raise ConfigurationError("checkpoint time is not on the step lattice")
        all_rows = read_csv_rows(csv_path)
        for row in all_rows:
            vals = parse_csv_row(row)
            if vals["t"] <= state.time + 1e-12:
                prior_rows.append(row)
                series.append(
                    diag.DiagnosticsRecord(
                        t=vals["t"], E_eps=vals["E_eps"], mass=vals["mass"],
                        dissip_V=vals["dissipV"], dissip_V_ac=vals["dissipVac"],
                        dissip_H=vals["dissipH"], discrepancy_L1=vals["discL1"],
                        discrepancy_max=vals["discMax"], volume=vals["volume"],
                        volume_sigma=SIGMA * vals["volume"],
                        de_giorgi_slack=vals["dgSlack"], edi_residual=vals["ediRes"],
                    ),
                    chi_mask=None,
                )
        if not prior_rows:
            raise ConfigurationError("resume needs the partial CSV of the interrupted run")
        last = parse_csv_row(prior_rows[-1])
        acc.cum_v, acc.cum_ac, acc.cum_h = last["dissipV"], last["dissipVac"], last["dissipH"]
        prev_sample = (last["E_eps"], last["dissipVac"] + last["dissipH"])

    sink = CsvSink(csv_path, preamble_rows=prior_rows)
    cfg_text = cfg.canonical_text()
    run_hash = content_hash(cfg.physics_text(), scenario.state0)

    entropy_records: list = []
    entropy_floor = NAN
    cal0 = None
    if entropy_on:
        cal0 = CalibrationFields.build(sphere, 0.0, spec)
        entropy_floor = relative_entropy(analytic_sphere_varifold(sphere, 0.0, spec), cal0)

    umin_run, umax_run = math.inf, -math.inf
    radius_errs: list = []
    rho_min_run = math.inf

    def sample_row(k: int, st: DiffuseState):
        nonlocal prev_sample, umin_run, umax_run, rho_min_run
        t = st.time
        E = total_energy(st)
        va = build_varifold(st)
        mass = va.mass()
        _, disc_l1, disc_max = diag.discrepancy(st)
        chi_mask = st.u.data > 0.5
        volume = spec.cell_volume * float(np.sum(chi_mask))
        umin_run = min(umin_run, float(st.u.data.min()))
        umax_run = max(umax_run, float(st.u.data.max()))
        cum = acc.cum_ac + acc.cum_h
        edi = NAN
        if prev_sample is not None and prev_sample[0] > 0:
            edi = abs(E + (cum - prev_sample[1]) - prev_sample[0]) / prev_sample[0]
        mass0 = series.records[0].mass if series.records else mass
        dg_slack = (mass0 - mass) - (acc.cum_v + acc.cum_h)
        rho_defect = NAN
        if track_rho and rho_delta is not None:
            chi_ind = PhaseIndicator.from_mask(spec, chi_mask)
            rho = multiplicity_field(va, chi_ind, rho_delta, eps=eps)
            rho_defect = rho.defect()
            active = rho.interface_boxes(va.sigma)
            if np.any(active):
                rho_min_run = min(rho_min_run, float(np.min(rho.rho_clamped[active])))
        e_rel = e_bulk = tilt = NAN
        if entropy_on and sphere.radius(min(t, sphere.t_strong)) > sphere.r_c + 2.0 * eps and t <= sphere.t_strong:
            cal = CalibrationFields.build(sphere, t, spec)
            chi_ind = PhaseIndicator.from_mask(spec, chi_mask)
            rho_f = multiplicity_field(va, chi_ind, rho_delta, eps=eps) if rho_delta else None
            rec, _checks = coercivity_report(va, chi_ind, cal, rho=rho_f)
            e_rel, e_bulk, tilt = rec.E_rel, rec.E_bulk, rec.tilt_excess
            entropy_records.append(rec)
        if sphere is not None:
            r_exact = sphere.radius(t) if t <= sphere.t_strong else None
            if r_exact and t <= 0.5 * sphere.t_strong + 1e-12:
                radius_errs.append(abs(_measured_radius(st) - r_exact) / r_exact)
        record = diag.DiagnosticsRecord(
            t=t, E_eps=E, mass=mass, dissip_V=acc.cum_v, dissip_V_ac=acc.cum_ac,
            dissip_H=acc.cum_h, discrepancy_L1=disc_l1, discrepancy_max=disc_max,
            volume=volume, volume_sigma=SIGMA * volume,
            de_giorgi_slack=dg_slack, edi_residual=edi,
        )
        series.append(record, chi_mask=chi_mask)
        sink.write_row([t, E, mass, acc.cum_v, acc.cum_ac, acc.cum_h, disc_l1, disc_max,
                        volume, dg_slack, edi, e_rel, e_bulk, tilt, rho_defect])
        prev_sample = (E, cum)
        return record

    if not resumed:
        sample_row(0, state)

    fv_step = cfg.stride * max(1, (total_steps // 2) // cfg.stride)
    fv_results = None
    try:
        for k in range(start_step, total_steps):
            new_state = step(state, scheme, step_index=k, check_residual=(k == start_step))
            acc.update(state.u.data, new_state.u.data, state.time, dt)
            state = new_state
            k1 = k + 1
            if k1 in sample_at:
                sample_row(k1, state)
            if cfg.checkpoint_every > 0 and k1 % cfg.checkpoint_every == 0:
                write_checkpoint(os.path.join(cfg.out_dir, f"ckpt_{k1:08d}.dgmc"), state)
            if sphere is not None and spec.dim == 2 and k1 == fv_step and not resumed:
                fv_results = _first_variation_suite(state, sphere.center, cfg.seed)
    finally:
        sink.close()

    # ---- final checks -----------------------------------------------------
    checks = {}

    def add_check(name, value, tol, ok):
        checks[name] = {"value": float(value), "tol": float(tol), "pass": bool(ok)}

    E_col = series.column("E_eps")
    # strict nonincrease up to the central-vs-forward stencil defect of the
    # monitored energy (the scheme dissipates the matched-stencil energy)
    mono_slack = 1e-7 * max(E_col[0], 1e-300)
    add_check("energy_monotone", float(np.max(np.diff(E_col))) if len(E_col) > 1 else 0.0,
              mono_slack, bool(np.all(np.diff(E_col) <= mono_slack)))

    edi_res = diag.edi_check(series, tol=0.05)
    add_check("edi_interval_residual", edi_res.worst, edi_res.tol, edi_res.passed)

    dg = diag.de_giorgi_check(series, tol_dg=0.05)
    add_check("de_giorgi_slack", dg.worst_normalized, -dg.tol, dg.passed)

    vc = diag.volume_continuity_check(series, SIGMA, tol_h=0.1)
    add_check("volume_holder_ratio", vc.worst_ratio, 1.0 + vc.tol, vc.passed)

    tol_disc_run = DISC_CQ * spec.h**2 / eps**3
    disc_ok = all(
        r.discrepancy_max <= tol_disc_run * (1.0 + r.t) + 1e-15 for r in series.records
    )
    add_check("discrepancy_max_bound", float(max(r.discrepancy_max for r in series.records)),
              tol_disc_run, disc_ok)
    if disc_ok:
        ratio = acc.cum_v / max(acc.cum_ac, 1e-300)
        add_check("v_domination", ratio, 1.05, ratio <= 1.05)

    add_check("max_range_preservation", max(umax_run - 1.0, -umin_run, 0.0), 1e-3,
              (umin_run >= -1e-3) and (umax_run <= 1.0 + 1e-3))

    if sphere is not None and radius_errs:
        tol_r = scenario.radius_tol or 0.02
        add_check("radius_law", float(max(radius_errs)), tol_r, max(radius_errs) <= tol_r)

    transport = {}
    if not resumed and acc.tf:
        coords_dense = spec.meshgrid()
        transport = _transport_results(acc, scenario.state0, state, coords_dense)
        worst_sharp = max(v["sharp"] for v in transport.values())
        add_check("transport_residual", worst_sharp, 0.05, worst_sharp < 0.05)

    if scenario.expects_merge:
        m0 = series.records[0].mass
        final_slack = series.records[-1].de_giorgi_slack
        add_check("merge_slack_positive", final_slack / m0, 0.2, final_slack > 0.2 * m0)
        add_check("merge_rho_drop", rho_min_run if rho_min_run < math.inf else NAN,
                  0.6, rho_min_run <= 0.6)

    if fv_results is not None:
        worst_fv = max(fv_results.values())
        add_check("first_variation_residual", worst_fv, 0.05, worst_fv < 0.05)

    entropy_summary = None
    if entropy_on and len(entropy_records) >= 10:
        fit = gronwall_monitor(entropy_records, fit_slack=3.0 * entropy_floor)
        entropy_summary = {
            "C_fit_rel": fit.C_fit_rel, "C_fit_bulk": fit.C_fit_bulk,
            "E0": entropy_records[0].E_rel, "ET": entropy_records[-1].E_rel,
            "pass": bool(math.isfinite(fit.C_fit_rel) and math.isfinite(fit.C_fit_bulk)),
            "fit_slack": fit.fit_slack, "floor": entropy_floor,
        }
        add_check("gronwall_finite", max(fit.C_fit_rel, fit.C_fit_bulk), math.inf,
                  entropy_summary["pass"])

    summary = {
        "scenario": scenario.name,
        "config": cfg_text,
        "content_hash": run_hash,
        "dt": dt,
        "t_end": t_end,
        "steps": total_steps,
        "samples": len(series.records),
        "resumed": resumed,
        "final": dataclasses.asdict(series.records[-1]),
        "final_entropy": dataclasses.asdict(entropy_records[-1]) if entropy_records else None,
        "discL1_final": series.records[-1].discrepancy_L1,
        "transport": transport,
        "first_variation": fv_results,
        "entropy": entropy_summary,
        "checks": checks,
        "pass": all(c["pass"] for c in checks.values()),
    }
    write_summary(os.path.join(cfg.out_dir, "summary.json"), summary)
    if not cfg.quiet:
        for name, c in sorted(checks.items()):
            echo(f"[{'PASS' if c['pass'] else 'FAIL'}] {name}: value={c['value']:.6g} tol={c['tol']:.6g}")
    return summary


def verify(cfg: RunConfig, echo=print) -> dict:
    """Invariant suite only, no evolution."""
    import scipy.integrate

    scenario = make_scenario(cfg)
    spec = scenario.state0.spec
    checks = {}

    def add(name, value, tol, ok):
        checks[name] = {"value": float(value), "tol": float(tol), "pass": bool(ok)}

    quad, _ = scipy.integrate.quad(lambda s: math.sqrt(2.0 * DoubleWell.w(s)), 0.0, 1.0, epsabs=1e-14)
    add("sigma_quadrature", abs(quad - SIGMA), 1e-10, abs(quad - SIGMA) < 1e-10)

    E0 = total_energy(scenario.state0)
    if scenario.name == "standing-wave-1d":
        err = abs(E0 / 2.0 - SIGMA) / SIGMA
        add("profile_energy", err, 0.01, err < 0.01)
    elif scenario.name == "multiplicity-two":
        half_gap = 0.5 * cfg.gap_eps * cfg.eps
        expect = SIGMA * 2.0 * math.pi * ((cfg.r0 - half_gap) + (cfg.r0 + half_gap))
        err = abs(E0 - expect) / expect
        add("profile_energy", err, 0.03, err < 0.03)
    elif scenario.sphere is not None and scenario.name != "perturbed-circle":
        expect = SIGMA * scenario.sphere.perimeter(0.0)
        err = abs(E0 - expect) / expect
        add("profile_energy", err, 0.02, err < 0.02)

    _, _, disc_max = diag.discrepancy(scenario.state0)
    tol_disc = DISC_CQ * spec.h**2 / cfg.eps**3
    add("initial_discrepancy", disc_max, tol_disc, disc_max <= tol_disc)

    dt = _resolve_dt(cfg)
    scheme = StepScheme(cfg.scheme, dt)
    scheme.validate_for(scenario.state0)
    add("scheme_valid", dt, cfg.eps**2 / DoubleWell.max_w_second(), True)

    t_end = _resolve_t_end(cfg, scenario)
    need = 4.0 * max(cfg.r_c if _entropy_enabled(cfg, scenario) else 0.0, math.sqrt(cfg.eps * t_end))
    if scenario.sphere is not None:
        clearance = 2.0 * scenario.sphere.seam_clearance(spec)
        add("seam_clearance", clearance, need, clearance >= need - 1e-12)

    if scenario.sphere is not None and spec.dim == 2:
        rep = verify_calibration(scenario.sphere, 0.0, spec, dt=1e-4)
        ok = rep.zeta_bound_ok and rep.theta_bound_ok and rep.length_bound_ok and rep.theta_two_sided_ok
        add("calibration_exact_bounds", 0.0 if ok else 1.0, 0.5, ok)
        add("calibration_weight_transport", rep.evol_weight_max, 0.05, rep.evol_weight_max < 0.05)

    result = {"scenario": scenario.name, "checks": checks,
              "pass": all(c["pass"] for c in checks.values())}
    if not cfg.quiet:
        for name, c in sorted(checks.items()):
            echo(f"[{'PASS' if c['pass'] else 'FAIL'}] {name}: value={c['value']:.6g} tol={c['tol']:.6g}")
    return result


def run_ladder(cfg: RunConfig, echo=print) -> dict:
    """Execute every rung of the configured (eps, n) ladder and aggregate."""
    from .report import build_ladder_report

    if len(cfg.ladder_rungs) < 2:
        raise ConfigurationError("ladder requires >= 2 rungs")
    if cfg.ladder_t_end != "auto":
        t_end = cfg.ladder_t_end
    else:
        horizons = []
        for e, _n in cfg.ladder_rungs:
            probe = cfg.with_overrides(eps=e, t_end="auto")
            horizons.append(_resolve_t_end(probe, make_scenario(probe)))
        t_end = min(horizons)
    summaries = []
    for i, (e, n) in enumerate(cfg.ladder_rungs):
        sub = cfg.with_overrides(eps=e, n=n, t_end=t_end,
                                 out_dir=os.path.join(cfg.out_dir, f"rung_{i}"))
        if not cfg.quiet:
            echo(f"-- ladder rung {i}: eps={e} n={n} t_end={t_end}")
        summaries.append(run(sub, echo=echo))
    report = build_ladder_report(summaries)
    ensure_dir(cfg.out_dir)
    write_summary(os.path.join(cfg.out_dir, "ladder_report.json"), report)
    if not cfg.quiet:
        for line in report["table"]:
            echo(line)
        echo(f"ladder pass: {report['pass']}")
    return report
