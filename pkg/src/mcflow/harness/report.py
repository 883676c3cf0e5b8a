"""Ladder / trend aggregation across refinement runs."""

from __future__ import annotations

import math

from ..errors import ConfigurationError


def _strictly_decreasing(vals) -> bool:
    return all(b < a for a, b in zip(vals[:-1], vals[1:]))


def build_ladder_report(summaries: list) -> dict:
    """Monotone-trend table plus fitted-constant stability verdict.

    Requires >= 2 summaries of the same scenario; flags identical rungs as
    'no refinement'.  Trends asserted: equipartition L1 at the shared final
    time strictly decreases; initial relative entropy decreases when
    present; the dissipation slack fraction shrinks toward zero; fitted
    Gronwall constants stay within a factor 2 band (or below floor).
    """
    if len(summaries) < 2:
        raise ConfigurationError("ladder requires >= 2 summaries")
    names = {s["scenario"] for s in summaries}
    if len(names) != 1:
        raise ConfigurationError(f"mismatched scenarios in ladder: {sorted(names)}")

    rungs = []
    for s in summaries:
        cfg_lines = dict(
            line.split(" = ", 1) for line in s["config"].strip().splitlines() if " = " in line
        )
        rungs.append((float(cfg_lines["eps"]), int(cfg_lines["n"])))
    no_refinement = len(set(rungs)) == 1

    disc = [s["discL1_final"] for s in summaries]
    disc_trend = _strictly_decreasing(disc)

    mass0 = [s["final"]["mass"] + s["final"]["de_giorgi_slack"] for s in summaries]
    slack_frac = [
        s["final"]["de_giorgi_slack"] / m if m > 0 else 0.0 for s, m in zip(summaries, mass0)
    ]

    erel0 = [s["entropy"]["E0"] if s.get("entropy") else None for s in summaries]
    have_entropy = all(v is not None for v in erel0)
    erel_trend = _strictly_decreasing(erel0) if have_entropy else None

    diffuse_transport = []
    for s in summaries:
        tr = s.get("transport") or {}
        diffuse_transport.append(max((v["diffuse"] for v in tr.values()), default=None))
    have_tr = all(v is not None for v in diffuse_transport)
    transport_trend = _strictly_decreasing(diffuse_transport) if have_tr else None

    stable_rel = stable_bulk = None
    if have_entropy:
        from ..entropy import GronwallFit, fits_stable

        fits = [
            GronwallFit(s["entropy"]["C_fit_rel"], s["entropy"]["C_fit_bulk"],
                        s["entropy"]["fit_slack"], 0)
            for s in summaries
        ]
        t_end = summaries[0]["t_end"]
        floor_rate = 0.01 / max(t_end, 1e-12)
        stable_rel, stable_bulk = fits_stable(fits, floor_rate)

    table = ["rung  eps      n     discL1_final    slackFrac     Erel0        C_rel      C_bulk"]
    for i, s in enumerate(summaries):
        e, n = rungs[i]
        ent = s.get("entropy") or {}
        table.append(
            f"{i:>4}  {e:<8g} {n:<5d} {disc[i]:<15.6g} {slack_frac[i]:<12.4g} "
            f"{ent.get('E0', math.nan):<12.6g} {ent.get('C_fit_rel', math.nan):<10.4g} "
            f"{ent.get('C_fit_bulk', math.nan):<10.4g}"
        )

    trends = {
        "equipartition_L1_decreasing": disc_trend,
        "slack_fraction": slack_frac,
        "E_rel0_decreasing": erel_trend,
        "diffuse_transport_decreasing": transport_trend,
        "gronwall_stable_rel": stable_rel,
        "gronwall_stable_bulk": stable_bulk,
        "no_refinement": no_refinement,
    }
    required = [disc_trend]
    if erel_trend is not None:
        required.append(erel_trend)
    if stable_rel is not None:
        required += [stable_rel, stable_bulk]
    overall = all(required) and not no_refinement and all(s["pass"] for s in summaries)
    return {
        "scenario": summaries[0]["scenario"],
        "rungs": [{"eps": e, "n": n} for e, n in rungs],
        "trends": trends,
        "table": table,
        "per_rung_pass": [s["pass"] for s in summaries],
        "pass": overall,
    }
