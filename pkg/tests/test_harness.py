import json
import os

import numpy as np
import pytest

from mcflow.allen_cahn import DiffuseState, well_prepared_init
from mcflow.calibration import ClassicalSphere
from mcflow.errors import ConfigurationError
from mcflow.grid import GridSpec, ScalarField
from mcflow.harness.cli import main as cli_main
from mcflow.harness.config import parse_config, parse_config_text
from mcflow.harness.io import (
    CSV_HEADER,
    fmt,
    read_checkpoint,
    read_csv_rows,
    write_checkpoint,
)
from mcflow.harness.report import build_ladder_report
from mcflow.harness.runner import run, verify
from mcflow.harness.scenarios import make_scenario

SMALL_CIRCLE = """
scenario = shrinking-circle
n = 128
eps = 0.02
stride = 20
"""


class TestConfig:
    def test_parse_defaults_and_sections(self):
        cfg = parse_config_text(
            """
# comment
scenario = shrinking-circle
n = 256
[output]
out_dir = /tmp/x
[ladder]
rungs = 0.02:256 0.01:512
"""
        )
        assert cfg.scenario == "shrinking-circle"
        assert cfg.n == 256
        assert cfg.out_dir == "/tmp/x"
        assert cfg.ladder_rungs == [(0.02, 256), (0.01, 512)]

    def test_unknown_key_fails_fast(self):
        with pytest.raises(ConfigurationError):
            parse_config_text("scenario = shrinking-circle\nnn = 3")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigurationError):
            parse_config_text("scenario = shrinking-circle\nn = twelve")

    def test_missing_scenario(self):
        with pytest.raises(ConfigurationError):
            parse_config_text("n = 128")

    def test_bad_rung_format(self):
        with pytest.raises(ConfigurationError):
            parse_config_text("scenario = shrinking-circle\n[ladder]\nrungs = 0.02x256")

    def test_physics_text_excludes_output_keys(self):
        a = parse_config_text(SMALL_CIRCLE).with_overrides(out_dir="/tmp/a")
        b = parse_config_text(SMALL_CIRCLE).with_overrides(out_dir="/tmp/b")
        assert a.physics_text() == b.physics_text()
        assert a.canonical_text() != b.canonical_text()


class TestScenarios:
    def test_unknown_id(self):
        with pytest.raises(ConfigurationError) as err:
            make_scenario(parse_config_text("scenario = warp-drive"))
        assert "warp-drive" in str(err.value)

    def test_standing_wave_has_no_comparison_flow(self):
        cfg = parse_config_text("scenario = standing-wave-1d\nn = 512\neps = 0.03125")
        sc = make_scenario(cfg)
        assert sc.sphere is None
        assert sc.state0.spec.dim == 1

    def test_multiplicity_two_annulus(self):
        cfg = parse_config_text("scenario = multiplicity-two\nn = 256\neps = 0.01")
        sc = make_scenario(cfg)
        assert sc.expects_merge
        chi = sc.state0.u.data > 0.5
        assert chi.any()  # annulus phase present

    def test_perturbed_circle_seeded(self):
        base = "scenario = perturbed-circle\nn = 128\neps = 0.02\nseed = {}"
        a = make_scenario(parse_config_text(base.format(0)))
        b = make_scenario(parse_config_text(base.format(1)))
        assert not np.array_equal(a.state0.u.data, b.state0.u.data)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            make_scenario(parse_config_text("scenario = shrinking-sphere\ndim = 2"))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        spec = GridSpec(2, 1.0, 64)
        sphere = ClassicalSphere(2, (0.5, 0.5), 0.22, 0.125, 0.032)
        state = well_prepared_init(sphere, 0.032, spec)
        state = DiffuseState(state.u, state.eps, 0.125)
        path = str(tmp_path / "x.dgmc")
        write_checkpoint(path, state)
        back = read_checkpoint(path, extent=1.0)
        assert back.time == state.time
        assert back.eps == state.eps
        assert np.array_equal(back.u.data, state.u.data)

    def test_layout_magic_and_sizes(self, tmp_path):
        spec = GridSpec(1, 1.0, 16)
        state = DiffuseState(ScalarField.full(spec, 0.25), 0.25, 1.5)
        path = str(tmp_path / "x.dgmc")
        write_checkpoint(path, state)
        blob = open(path, "rb").read()
        assert blob[:4] == b"DGMC"
        assert len(blob) == 4 + 4 + 4 + 4 + 8 + 8 + 16 * 8
        import struct

        magic, version, dim, n, eps, t = struct.unpack("<4sIIIdd", blob[:32])
        assert (version, dim, n) == (1, 1, 16)
        assert (eps, t) == (0.25, 1.5)

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "bad.dgmc")
        open(path, "wb").write(b"NOPE" + b"\0" * 60)
        with pytest.raises(ConfigurationError):
            read_checkpoint(path, extent=1.0)


class TestCsv:
    def test_header_contract(self):
        assert CSV_HEADER == (
            "t,E_eps,mass,dissipV,dissipVac,dissipH,discL1,discMax,volume,"
            "dgSlack,ediRes,Erel,Ebulk,tilt,rhoDefect"
        )

    def test_seventeen_digit_round_trip(self):
        vals = [1 / 3, 2.0 ** -52, 6.02e-5, 0.1 + 0.2]
        for v in vals:
            assert float(fmt(v)) == v


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run"))
    cfg = parse_config_text(SMALL_CIRCLE).with_overrides(out_dir=out, quiet=True)
    summary = run(cfg)
    return cfg, out, summary


class TestRunner:
    def test_artifacts_written(self, small_run):
        _, out, summary = small_run
        assert os.path.exists(os.path.join(out, "diagnostics.csv"))
        assert os.path.exists(os.path.join(out, "summary.json"))
        assert summary["pass"]

    def test_csv_rows_parse(self, small_run):
        _, out, _ = small_run
        rows = read_csv_rows(os.path.join(out, "diagnostics.csv"))
        assert len(rows) > 5
        assert all(len(r.split(",")) == 15 for r in rows)

    def test_summary_checks_have_named_tolerances(self, small_run):
        _, _, summary = small_run
        for name, c in summary["checks"].items():
            assert set(c) == {"value", "tol", "pass"}, name

    def test_rerun_is_byte_identical(self, small_run, tmp_path):
        cfg, out, _ = small_run
        again = cfg.with_overrides(out_dir=str(tmp_path / "again"))
        run(again)
        a = open(os.path.join(out, "diagnostics.csv"), "rb").read()
        b = open(os.path.join(str(tmp_path / "again"), "diagnostics.csv"), "rb").read()
        assert a == b

    def test_verify_suite_no_evolution(self, small_run, capsys):
        cfg, _, _ = small_run
        res = verify(cfg.with_overrides(quiet=True))
        assert res["pass"], res["checks"]
        assert "sigma_quadrature" in res["checks"]

    def test_resume_reproduces_csv(self, small_run, tmp_path):
        cfg, out, _ = small_run
        ck_dir = str(tmp_path / "ck")
        cfg_ck = cfg.with_overrides(out_dir=ck_dir, checkpoint_every=60)
        run(cfg_ck)
        cks = sorted(f for f in os.listdir(ck_dir) if f.endswith(".dgmc"))
        assert cks
        resume_dir = str(tmp_path / "resumed")
        os.makedirs(resume_dir)
        import shutil

        shutil.copy(os.path.join(ck_dir, "diagnostics.csv"),
                    os.path.join(resume_dir, "diagnostics.csv"))
        cfg_res = cfg.with_overrides(out_dir=resume_dir)
        run(cfg_res, resume_path=os.path.join(ck_dir, cks[0]))
        a = open(os.path.join(out, "diagnostics.csv"), "rb").read()
        b = open(os.path.join(resume_dir, "diagnostics.csv"), "rb").read()
        assert a == b

    def test_resume_requires_partial_csv(self, small_run, tmp_path):
        cfg, out, _ = small_run
        ck_dir = str(tmp_path / "ck2")
        run(cfg.with_overrides(out_dir=ck_dir, checkpoint_every=60))
        cks = sorted(f for f in os.listdir(ck_dir) if f.endswith(".dgmc"))
        empty = str(tmp_path / "empty")
        with pytest.raises((ConfigurationError, FileNotFoundError)):
            run(cfg.with_overrides(out_dir=empty),
                resume_path=os.path.join(ck_dir, cks[0]))


class TestReport:
    def _summary(self, eps, n, disc, e0=None, pass_=True):
        cfg = parse_config_text(SMALL_CIRCLE).with_overrides(eps=eps, n=n)
        ent = None
        if e0 is not None:
            ent = {"C_fit_rel": 0.5, "C_fit_bulk": 0.4, "E0": e0, "ET": e0, "pass": True,
                   "fit_slack": 1e-5, "floor": 1e-5}
        return {
            "scenario": "shrinking-circle",
            "config": cfg.canonical_text(),
            "discL1_final": disc,
            "final": {"mass": 0.18, "de_giorgi_slack": 0.001},
            "entropy": ent,
            "transport": {"z": {"sharp": 1e-4, "diffuse": disc / 10}},
            "t_end": 0.01,
            "pass": pass_,
        }

    def test_requires_two_summaries(self):
        with pytest.raises(ConfigurationError):
            build_ladder_report([self._summary(0.02, 128, 1e-3)])

    def test_mismatched_scenarios_rejected(self):
        a = self._summary(0.02, 128, 1e-3)
        b = self._summary(0.01, 256, 5e-4)
        b["scenario"] = "standing-wave-1d"
        with pytest.raises(ConfigurationError):
            build_ladder_report([a, b])

    def test_identical_rungs_flagged(self):
        a = self._summary(0.02, 128, 1e-3)
        b = self._summary(0.02, 128, 1e-3)
        rep = build_ladder_report([a, b])
        assert rep["trends"]["no_refinement"]
        assert not rep["pass"]

    def test_monotone_trends_pass(self):
        a = self._summary(0.02, 128, 1e-3, e0=3e-3)
        b = self._summary(0.01, 256, 4e-4, e0=1e-3)
        rep = build_ladder_report([a, b])
        assert rep["trends"]["equipartition_L1_decreasing"]
        assert rep["trends"]["E_rel0_decreasing"]
        assert rep["pass"]

    def test_nonmonotone_fails(self):
        a = self._summary(0.02, 128, 1e-3)
        b = self._summary(0.01, 256, 2e-3)
        rep = build_ladder_report([a, b])
        assert not rep["pass"]


class TestCli:
    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("scenario = no-such-thing\n")
        assert cli_main(["run", str(bad)]) == 2

    def test_verify_exit_zero(self, tmp_path):
        cfg = tmp_path / "ok.cfg"
        cfg.write_text(SMALL_CIRCLE)
        assert cli_main(["verify", str(cfg), "--quiet"]) == 0

    def test_run_and_report_round_trip(self, tmp_path):
        cfg = tmp_path / "ok.cfg"
        out = tmp_path / "out"
        cfg.write_text(
            SMALL_CIRCLE
            + f"\n[ladder]\nrungs = 0.025:128 0.0125:256\nt_end = 0.002\n"
        )
        code = cli_main(["ladder", str(cfg), "--out", str(out), "--quiet", "--stride", "10"])
        assert code in (0, 1)
        assert (out / "ladder_report.json").exists()
        code2 = cli_main(["report", str(out), "--quiet"])
        assert code2 == code

    def test_report_empty_dir(self, tmp_path):
        assert cli_main(["report", str(tmp_path), "--quiet"]) == 2


class TestZeroPhasePipeline:
    def test_vacuum_state_vacuous_checks(self):
        # u == 0 carries no interface: zero mass, all monitors vacuous
        from mcflow.diagnostics import (
            DiagnosticsRecord,
            DiagnosticsSeries,
            de_giorgi_check,
            volume_continuity_check,
        )
        from mcflow.varifold import build_varifold

        spec = GridSpec(2, 1.0, 64)
        state = DiffuseState(ScalarField.full(spec, 0.0), 0.05)
        v = build_varifold(state)
        assert v.mass() == 0.0
        series = DiagnosticsSeries(spec, 0.05)
        for t in (0.0, 0.01):
            series.append(
                DiagnosticsRecord(t, 0.0, 0.0, 0, 0, 0, 0, 0, 0, 0),
                chi_mask=np.zeros(spec.shape, dtype=bool),
            )
        from mcflow.allen_cahn import SIGMA

        assert de_giorgi_check(series).passed
        assert volume_continuity_check(series, SIGMA).passed
