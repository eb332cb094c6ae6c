"""Experiment runner: config parsing, runs, exit codes, determinism."""

import json

import pytest

from qlcontrol.cli import ConfigError, ExperimentConfig, list_builtin, main, run


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


VERIFY_INI = """\
[experiment]
kind = verify-hypotheses
seed = 0

[coefficients]
flux = identity
"""

GAP_INI = """\
[experiment]
kind = gap-demo
seed = 0
js = 2, 4, 8

[instance]
name = gap-family-1d

[mesh]
dimension = 1
cells_per_axis = 32
"""


class TestConfigParsing:
    def test_round_trip(self):
        cfg = ExperimentConfig.parse(GAP_INI)
        again = ExperimentConfig.parse(cfg.to_text())
        assert again == cfg

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.parse("[experiment]\nkind = state\n\n[bogus]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.parse("[experiment]\nkind = state\nbogus = 1\n")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.parse("[experiment]\nkind = fly\n")


class TestRuns:
    def test_verify_hypotheses_identity(self, tmp_path):
        cfg = write(tmp_path, VERIFY_INI)
        assert run(cfg, out=str(tmp_path / "out")) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert all(h["passed"] for h in report["results"]["hypotheses"])

    def test_gap_demo_contains_margin_entry(self, tmp_path):
        cfg = write(tmp_path, GAP_INI)
        assert run(cfg, out=str(tmp_path / "out")) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        relax = report["results"]["relaxation"]
        assert relax["gap_exceeds_margin"] is True
        assert relax["relaxed"] <= relax["best_classical"] - relax["delta_star"] + 1e-3
        trace = report["results"]["demo_trace"]["costs"]
        assert trace == sorted(trace, reverse=True)
        for name in ("report.json", "summary.txt", "state_measure.csv",
                     "control_measure.csv", "relaxed_state.csv"):
            assert (tmp_path / "out" / name).exists()

    def test_below_threshold_exit_1_names_threshold(self, tmp_path, capsys):
        cfg = write(tmp_path, GAP_INI)
        code = run(cfg, out=str(tmp_path / "out"), overrides=["instance.b=0.5"])
        assert code == 1
        err = capsys.readouterr().err
        assert "L^2/4" in err and "1.0" in err

    @pytest.mark.parametrize(
        "instance",
        ["sin-gradient-1d", "monotone-perturbed-1d", "variational-quartic-1d"],
    )
    def test_state_experiment(self, tmp_path, instance):
        text = f"""\
[experiment]
kind = state
control = one

[instance]
name = {instance}
"""
        cfg = write(tmp_path, text)
        assert run(cfg, out=str(tmp_path / "out")) == 0
        assert (tmp_path / "out" / "state.csv").exists()
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["results"]["state"]["converged"] is True

    def test_relax_experiment(self, tmp_path):
        text = """\
[experiment]
kind = relax
seed = 0

[instance]
name = linear-quasilinear-1d

[mesh]
dimension = 1
cells_per_axis = 16

[solver]
samples = 2
"""
        cfg = write(tmp_path, text)
        assert run(cfg, out=str(tmp_path / "out")) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        relax = report["results"]["relaxation"]
        assert relax["failed"] is False
        assert relax["relaxed"] <= relax["best_classical"] + 1e-8
        assert "demo_trace" not in report["results"]

    def test_missing_config_exit_1(self, tmp_path):
        assert run(tmp_path / "missing.ini") == 1

    def test_failed_hypothesis_exit_2(self, tmp_path):
        text = """\
[experiment]
kind = verify-hypotheses

[coefficients]
flux = identity
a = cosine-wells
kappa = 5.0
omega = 5.0
"""
        # |a| <= C|y| fails with the identity flux constants (C near 1)
        cfg = write(tmp_path, text)
        assert run(cfg, out=str(tmp_path / "out")) == 2


class TestDeterminism:
    def test_reports_byte_identical_modulo_timings(self, tmp_path):
        cfg = write(tmp_path, GAP_INI)
        for tag in ("a", "b"):
            assert run(cfg, out=str(tmp_path / tag)) == 0
        ra = json.loads((tmp_path / "a" / "report.json").read_text())
        rb = json.loads((tmp_path / "b" / "report.json").read_text())
        ra.pop("timings")
        rb.pop("timings")
        assert json.dumps(ra, sort_keys=True) == json.dumps(rb, sort_keys=True)
        for name in ("summary.txt", "state_measure.csv", "control_measure.csv",
                     "relaxed_state.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()


class TestListCommand:
    def test_catalog_includes_gap_margin(self):
        table = list_builtin()
        assert "gap-family-1d" in table
        assert "delta_star" in table

    def test_filter_and_empty(self):
        assert "gap-family-1d" in list_builtin("gap")
        filtered = list_builtin("no-such-instance")
        assert "gap-family-1d" not in filtered

    def test_main_list(self, capsys):
        assert main(["list"]) == 0
        assert "gap-family-1d" in capsys.readouterr().out


class TestShippedConfigs:
    @pytest.mark.parametrize(
        "name", ["verify-hypotheses.ini", "state-sin-gradient.ini", "relax-linear.ini"]
    )
    def test_configs_run_clean(self, tmp_path, name):
        from pathlib import Path

        config = Path(__file__).resolve().parent.parent / "configs" / name
        assert main(["run", str(config), "--out", str(tmp_path / "out")]) == 0
