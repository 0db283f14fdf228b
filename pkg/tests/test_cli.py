"""Tests for the command-line entry point, manifests, and plot emission."""

import json
import os

import pytest

from wavefront_lab import cli, manifest, plots
from wavefront_lab.errors import ConfigurationError


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _scheme_cfg(**kw):
    base = dict(dx=0.2, dt=0.01, window_cells=200, shift_trigger_margin=20, seed=0)
    base.update(kw)
    return base


class TestManifest:
    def test_digest_round_trip(self, tmp_path):
        m = manifest.RunManifest(experiment="simulate", config={"a": 1}, master_seed=7)
        path = tmp_path / "m.json"
        m.write(path)
        again = manifest.RunManifest.load(path)
        assert again.config_digest == m.config_digest
        assert again.experiment == "simulate"

    def test_digest_mismatch_detected(self, tmp_path):
        m = manifest.RunManifest(experiment="simulate", config={"a": 1}, master_seed=7)
        path = tmp_path / "m.json"
        m.write(path)
        data = json.loads(path.read_text())
        data["config"]["a"] = 2
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigurationError):
            manifest.RunManifest.load(path)

    def test_canonical_json_key_order(self):
        assert manifest.canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'

    def test_digest_stable(self):
        d1 = manifest.config_digest({"x": 1, "y": [1, 2]})
        d2 = manifest.config_digest({"y": [1, 2], "x": 1})
        assert d1 == d2


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        code = cli.main(["simulate", "--config", str(tmp_path / "nope.json"),
                         "--out", str(tmp_path / "o")])
        assert code == 2

    def test_invalid_json(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        code = cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_bad_scheme_dt_names_field(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "simulate",
            "drift": {"kind": "kpp"},
            "horizon": 1.0,
            "scheme": _scheme_cfg(dt=-0.01),
        })
        code = cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2
        assert "scheme.dt" in capsys.readouterr().err

    def test_experiment_mismatch(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "speed",
            "drift": {"kind": "kpp"},
            "horizon": 1.0,
            "scheme": _scheme_cfg(),
        })
        code = cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2

    def test_unknown_drift_kind(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "simulate",
            "drift": {"kind": "mystery"},
            "horizon": 1.0,
            "scheme": _scheme_cfg(),
        })
        code = cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2
        assert "kind" in capsys.readouterr().err


class TestSimulate:
    def test_outputs_and_manifest(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "simulate",
            "drift": {"kind": "kpp"},
            "epsilon": 0.0,
            "horizon": 1.0,
            "record_dt": 0.25,
            "scheme": _scheme_cfg(),
        })
        out = tmp_path / "out"
        assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "front_series.csv").exists()
        assert (out / "final_snapshot.csv").exists()
        m = manifest.RunManifest.load(out / "manifest.json")
        assert m.experiment == "simulate"

    def test_reproducible_outputs(self, tmp_path):
        cfg_obj = {
            "experiment": "simulate",
            "drift": {"kind": "kpp"},
            "epsilon": 0.3,
            "horizon": 1.0,
            "record_dt": 0.25,
            "scheme": _scheme_cfg(zero_snap=0.01, seed=9),
        }
        cfg = _write(tmp_path / "c.json", cfg_obj)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
        assert cli.main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "front_series.csv").read_bytes() == (out2 / "front_series.csv").read_bytes()
        assert (out1 / "final_snapshot.csv").read_bytes() == (out2 / "final_snapshot.csv").read_bytes()


class TestConstants:
    def test_ledger_written(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "constants", "p": 0.5, "theta": 0.75, "epsilon": 0.01,
        })
        out = tmp_path / "out"
        assert cli.main(["constants", "--config", cfg, "--out", str(out)]) == 0
        data = json.loads((out / "ledger.json").read_text())
        assert data["kappa"] == pytest.approx(16.0 / 3.0)
        assert data["exponent"] == pytest.approx(2.0 / 3.0)


class TestSpeed:
    def test_speed_json(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "speed",
            "drift": {"kind": "kpp"},
            "epsilon": 0.5,
            "horizon": 4.0,
            "n_realizations": 3,
            "record_dt": 0.25,
            "burn_in_fraction": 0.2,
            "scheme": _scheme_cfg(window_cells=300, shift_trigger_margin=30, seed=4),
        })
        out = tmp_path / "out"
        assert cli.main(["speed", "--config", cfg, "--out", str(out)]) == 0
        data = json.loads((out / "speed.json").read_text())
        assert data["n_realizations"] == 3
        assert data["ci_low"] <= data["slope"] <= data["ci_high"]


class TestScaling:
    def test_scaling_outputs(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "scaling",
            "drift": {"kind": "power_clipped", "p": 0.5},
            "epsilon_grid": [1.0, 0.7, 0.5],
            "realizations_per_point": 2,
            "horizon": 2.0,
            "seed": 2,
            "scheme": _scheme_cfg(window_cells=300, shift_trigger_margin=30),
        })
        out = tmp_path / "out"
        assert cli.main(["scaling", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "scaling.csv").exists()
        assert (out / "scaling.svg").exists()
        fit = json.loads((out / "exponent.json").read_text())
        assert fit["reference"] == pytest.approx(-2.0 / 3.0)


class TestKernels:
    def test_all_hold_exit_zero(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {
            "experiment": "kernels", "v_list": [1.0], "n_pairs": 4,
            "quad_nodes": 120, "seed": 0,
        })
        out = tmp_path / "out"
        assert cli.main(["kernels", "--config", cfg, "--out", str(out)]) == 0
        data = json.loads((out / "kernels.json").read_text())
        assert data["moving"][0]["all_hold"]
        assert data["static"][0]["all_hold"]


class TestPlot:
    def test_deterministic_svg(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("epsilon,V,ci_low,ci_high,n\n1.0,1.5,1.4,1.6,4\n0.5,2.5,2.4,2.6,4\n")
        o1, o2 = tmp_path / "a.svg", tmp_path / "b.svg"
        assert cli.main(["plot", "--table", str(table), "--kind", "loglog_scaling",
                         "--out", str(o1)]) == 0
        assert cli.main(["plot", "--table", str(table), "--kind", "loglog_scaling",
                         "--out", str(o2)]) == 0
        assert o1.read_bytes() == o2.read_bytes()

    def test_empty_table_valid_svg(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("time,front_abs\n")
        out = tmp_path / "o.svg"
        assert cli.main(["plot", "--table", str(table), "--kind", "front_trajectory",
                         "--out", str(out)]) == 0
        assert out.read_text().lstrip().startswith("<?xml")

    def test_missing_column_exit_two(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("a,b\n1,2\n")
        code = cli.main(["plot", "--table", str(table), "--kind", "profile_snapshot",
                        "--out", str(tmp_path / "o.svg")])
        assert code == 2

    def test_front_trajectory_kind(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("time,front_abs,front_cells,frame_offset\n0,0,5,0\n1,2,15,0\n")
        out = tmp_path / "o.svg"
        assert cli.main(["plot", "--table", str(table), "--kind", "front_trajectory",
                         "--out", str(out)]) == 0
        assert out.exists()


class TestThreadsEnv:
    def test_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("WAVEFRONT_LAB_THREADS", "2")
        cfg = _write(tmp_path / "c.json", {
            "experiment": "simulate",
            "drift": {"kind": "kpp"},
            "epsilon": 0.0,
            "horizon": 0.5,
            "scheme": _scheme_cfg(),
        })
        assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
