"""Tests for the command-line front end."""

from __future__ import annotations

import csv
import hashlib
import io
import json

import pytest
from numpy.testing import assert_allclose
from scipy.stats import poisson

from ppowerloss import cli
from ppowerloss.errors import InvariantViolation, QuadratureError

HOMOGENEOUS = {"family": "homogeneous", "theta0": 1.0, "n": 100}
AMPLITUDE = {"family": "amplitude", "theta0": 1.0, "n": 100, "dark_current": 0.5}


def _config(tmp_path, model, **extra):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model": model, **extra}))
    return str(path)


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def _run(args):
    return cli.main([str(a) for a in args])


class TestExitCodes:
    def test_help(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "power-loss" in capsys.readouterr().out

    def test_command_help_text(self, capsys):
        assert cli.main(["size", "--help"]) == 0
        assert "--reps" in capsys.readouterr().out

    def test_unknown_command(self):
        assert cli.main(["frobnicate"]) == 2

    def test_bad_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert _run(["size", "--config", bad, "--out", tmp_path / "o"]) == 2
        assert not (tmp_path / "o").exists()

    def test_bad_flag_value(self, tmp_path):
        assert _run(["size", "--alpha", "2", "--out", tmp_path / "o"]) == 2
        assert _run(["size", "--u", "1,x", "--out", tmp_path / "o"]) == 2

    def test_too_few_reps(self, tmp_path):
        assert _run(["size", "--reps", 10, "--out", tmp_path / "o"]) == 2
        assert not (tmp_path / "o").exists()

    @pytest.mark.parametrize("exc, code", [(QuadratureError("no convergence"), 3), (InvariantViolation("x"), 4),
                                           (ZeroDivisionError("x"), 3)])
    def test_failure_codes(self, tmp_path, monkeypatch, exc, code):
        def boom(cfg):
            raise exc

        monkeypatch.setitem(cli.COMMANDS, "quantities", boom)
        assert _run(["quantities", "--out", tmp_path / "o"]) == code
        assert not (tmp_path / "o" / "manifest.json").exists()


class TestCommands:
    def test_quantities_homogeneous(self, tmp_path):
        assert _run(["quantities", "--config", _config(tmp_path, HOMOGENEOUS), "--out", tmp_path / "o"]) == 0
        out = json.loads((tmp_path / "o" / "quantities.json").read_text())
        assert abs(out["j_n"]) < 1e-15
        assert_allclose(out["gamma3"], 0.1, rtol=1e-12)
        assert_allclose(out["fisher_information"], 100.0, rtol=1e-12)
        assert out["B2"]["ok"] is False

    def test_sample(self, tmp_path):
        cfg = _config(tmp_path, AMPLITUDE)
        assert _run(["sample", "--config", cfg, "--reps", 3, "--seed", 5, "--out", tmp_path / "a"]) == 0
        assert _run(["sample", "--config", cfg, "--reps", 3, "--seed", 5, "--out", tmp_path / "b"]) == 0
        for i in range(3):
            name = f"realization_{i}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "realization_0.csv").read_text().startswith("x\n")

    def test_sample_zero_intensity(self, tmp_path):
        cfg = _config(tmp_path, {"family": "amplitude", "theta0": 0.0, "n": 10, "dark_current": 0.0})
        assert _run(["sample", "--config", cfg, "--reps", 1, "--out", tmp_path / "o"]) == 0
        assert (tmp_path / "o" / "realization_0.csv").read_text() == "x\n"

    def test_size_homogeneous_median(self, tmp_path):
        cfg = _config(tmp_path, HOMOGENEOUS, options={"thresholds": ["score3"]})
        assert _run(["size", "--config", cfg, "--alpha", 0.5, "--reps", 20_000, "--seed", 3,
                     "--out", tmp_path / "o"]) == 0
        (row,) = _rows(tmp_path / "o" / "size.csv")
        exact = poisson.sf(99, 100)  # Delta > -1/60 iff N >= 100
        assert abs(float(row["beta_hat"]) - exact) <= 4 * (0.25 / 20_000) ** 0.5

    def test_power_loss_homogeneous(self, tmp_path):
        cfg = _config(tmp_path, HOMOGENEOUS)
        assert _run(["power-loss", "--config", cfg, "--reps", 100_000, "--u", "1,2",
                     "--out", tmp_path / "o"]) == 0
        rows = _rows(tmp_path / "o" / "power_loss.csv")
        assert len(rows) == 2
        assert all(float(r["loss_hat"]) == 0.0 and int(r["np_only"]) == 0 for r in rows)

    def test_power_rows(self, tmp_path):
        cfg = _config(tmp_path, AMPLITUDE)
        assert _run(["power", "--config", cfg, "--reps", 10_000, "--u", "0,1", "--out", tmp_path / "o"]) == 0
        rows = _rows(tmp_path / "o" / "power.csv")
        assert [(r["u"], r["test_name"]) for r in rows] == [
            ("0", "score2"), ("0", "score3"), ("1", "score2"), ("1", "score3"), ("1", "np_analytic"), ("1", "np_mc")]

    def test_edgeworth_check(self, tmp_path):
        cfg = _config(tmp_path, AMPLITUDE, options={"statistics": ["score_null"]})
        assert _run(["edgeworth-check", "--config", cfg, "--reps", 100_000, "--out", tmp_path / "o"]) == 0
        (row,) = _rows(tmp_path / "o" / "edgeworth.csv")
        assert float(row["sup_distance"]) <= float(row["mc_bound"]) + float(row["eps3_bound"])

    def test_edgeworth_check_homogeneous_exact(self, tmp_path):
        cfg = _config(tmp_path, HOMOGENEOUS, options={"statistics": ["score_null"]})
        assert _run(["edgeworth-check", "--config", cfg, "--reps", 100_000, "--out", tmp_path / "o"]) == 0
        exact = json.loads((tmp_path / "o" / "edgeworth_exact.json").read_text())
        assert_allclose(exact["sup_distance"], 0.01987, atol=5e-5)

    def test_validate_conditions(self, tmp_path):
        assert _run(["validate-conditions", "--config", _config(tmp_path, AMPLITUDE), "--n", 100,
                     "--out", tmp_path / "o"]) == 0
        out = json.loads((tmp_path / "o" / "conditions.json").read_text())
        assert out["envelopes"]["ok"] and out["B2"]["ok"] and out["D3"]["bounded"]
        assert out["B1"]["n_list"] == [100.0, 400.0, 1600.0]


class TestManifest:
    def test_checksums_and_fields(self, tmp_path):
        assert _run(["size", "--config", _config(tmp_path, AMPLITUDE), "--reps", 10_000, "--seed", 77,
                     "--out", tmp_path / "o"]) == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["command"] == "size" and manifest["master_seed"] == 77
        assert manifest["generator"] and manifest["csv_schema_version"] == "1"
        data = (tmp_path / "o" / "size.csv").read_bytes()
        assert manifest["files"]["size.csv"] == hashlib.sha256(data).hexdigest()
        assert manifest["config"]["n"] == [100.0]
        assert not [p for p in (tmp_path / "o").iterdir() if p.name.startswith(".staging")]

    def test_threads_do_not_change_output(self, tmp_path):
        cfg = _config(tmp_path, AMPLITUDE)
        for threads in (1, 2):
            assert _run(["power", "--config", cfg, "--reps", 10_000, "--threads", threads, "--seed", 12,
                         "--out", tmp_path / f"t{threads}"]) == 0
        assert (tmp_path / "t1" / "power.csv").read_bytes() == (tmp_path / "t2" / "power.csv").read_bytes()
