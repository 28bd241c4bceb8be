import json

import numpy as np
import pandas as pd
import pytest

from birkhoff_ps.cli import dispatch
from birkhoff_ps.errors import InitialGuessError
from birkhoff_ps.serialization import RunManifest, SolutionRecord


def test_nodes_on_unit_interval(tmp_path):
    out = tmp_path / "nodes.csv"
    code, manifest = dispatch(["nodes", "--kind", "cgl", "--n", "2", "--t0", "0", "--tf", "1", "--out", str(out)])
    assert code == 0
    np.testing.assert_allclose(np.loadtxt(out, delimiter=","), [0.0, 0.5, 1.0], atol=1e-15)
    stored = RunManifest.read(tmp_path / "nodes.manifest.json")
    assert stored.subcommand == "nodes"
    assert stored.parameters["n"] == 2
    assert stored.outputs == [str(out)]
    assert manifest.metrics["n_nodes"] == 3


def test_diffmat(tmp_path):
    out = tmp_path / "D.csv"
    code, _ = dispatch(["diffmat", "--kind", "uniform", "--n", "1", "--out", str(out)])
    assert code == 0
    np.testing.assert_allclose(np.loadtxt(out, delimiter=","), [[-0.5, 0.5], [-0.5, 0.5]])


def test_birkmat(tmp_path):
    out = tmp_path / "B.csv"
    code, manifest = dispatch(["birkmat", "--kind", "uniform", "--n", "1", "--out", str(out)])
    assert code == 0
    np.testing.assert_allclose(np.atleast_2d(np.loadtxt(out, delimiter=",")), [[2.0]])
    row = pd.read_csv(tmp_path / "B.row.csv")
    assert list(row.columns) == ["boundary_row"]
    assert row["boundary_row"].tolist() == [1.0]
    assert manifest.metrics["inverse_residual"] <= manifest.metrics["inverse_threshold"]


def test_birkmat_case_b_matches_shape(tmp_path):
    out = tmp_path / "Bb.csv"
    code, _ = dispatch(["birkmat", "--kind", "lgl", "--n", "12", "--case", "b", "--out", str(out)])
    assert code == 0
    assert np.loadtxt(out, delimiter=",").shape == (12, 12)


def test_check_passes(tmp_path):
    manifest_path = tmp_path / "check.json"
    code, manifest = dispatch(["check", "--kind", "cgl", "--n", "16", "--trials", "5",
                               "--manifest", str(manifest_path)])
    assert code == 0
    assert manifest_path.exists()
    assert "modal-round-trip" in manifest.metrics


def test_check_failure_exits_one(tmp_path, monkeypatch):
    monkeypatch.setattr("birkhoff_ps.verifier.inverse_residual", lambda ops, birk: 1.0)
    code, manifest = dispatch(["check", "--kind", "lgl", "--n", "8", "--trials", "2",
                               "--manifest", str(tmp_path / "check.json")])
    assert code == 1
    assert manifest.exit_code == 1


def test_check_uniform_beyond_low_orders_exits_one(tmp_path):
    code, manifest = dispatch(["check", "--kind", "uniform", "--n", "16", "--manifest", str(tmp_path / "check.json")])
    assert code == 1
    assert manifest.metrics["inverse-a"] > 1.6e-8
    assert RunManifest.read(tmp_path / "check.json").exit_code == 1


def test_cond_sweep(tmp_path):
    out = tmp_path / "cond.csv"
    code, manifest = dispatch(["cond", "--grids", "cgl", "--mats", "innerd,cbirk", "--ns", "8,16,32,64",
                               "--threads", "1", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["grid", "matrix", "N", "kappa"]
    assert len(frame) == 8
    slopes = json.loads((tmp_path / "cond.slopes.json").read_text())
    assert set(slopes["series"]) == {"cgl/innerd", "cgl/cbirk"}
    assert manifest.metrics["cgl/innerd"] > 1.0


@pytest.mark.parametrize("argv", [
    ["cond", "--grids", "lg", "--mats", "innerd", "--ns", "4,8,16,32"],
    ["cond", "--grids", "cgl", "--mats", "innerd", "--ns", "4,8,16"],
    ["nodes", "--n", "4", "--bogus"],
    ["nodes", "--n", "0"],
    ["transmogrify"],
    ["solve", "--problem", "lq", "--grid", "lgr", "--n", "8"],
    ["solve", "--n", "8"],
    ["solve", "--problem", "oxfer", "--A", "-1"],
    ["propagate", "--solution", "missing.json"],
    ["solve", "--problem", "lq", "--options", "missing.json5"],
    ["check", "--trials", "0"],
    ["check", "--log-level", "chatty"],
])
def test_usage_errors_exit_two(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    code, manifest = dispatch(argv)
    assert code == 2
    assert manifest is None


def test_solve_then_propagate(tmp_path):
    sol = tmp_path / "sol.json"
    code, manifest = dispatch(["solve", "--problem", "lq", "--n", "12", "--out", str(sol)])
    assert code == 0
    assert manifest.metrics["status"] == "optimal"
    record = SolutionRecord.read(sol)
    assert record.problem == "lq"
    assert record.descriptor.problem == "lq"
    assert record.n == 12
    assert len(record.X) == 13
    assert record.objective == pytest.approx(np.tanh(1.0), abs=1e-8)

    errors = tmp_path / "errors.csv"
    code, manifest = dispatch(["propagate", "--solution", str(sol), "--out", str(errors)])
    assert code == 0
    frame = pd.read_csv(errors)
    assert list(frame.columns) == ["t", "x_ps", "x_prop", "x_err"]
    assert frame["x_err"].max() <= 1e-6
    assert manifest.metrics["success"]


def test_solve_with_options_file(tmp_path):
    opts = tmp_path / "opts.json5"
    opts.write_text("{method: 'auglag', tol_opt: 1e-5, tol_feas: 1e-7}")
    code, manifest = dispatch(["solve", "--problem", "lq", "--n", "12", "--method", "left-precond-a",
                               "--options", str(opts), "--no-validate", "--out", str(tmp_path / "s.json")])
    assert code == 0
    assert manifest.parameters["options"] == str(opts)
    assert "propagation" not in manifest.metrics


def test_refine_exit_code_matches_manifest(tmp_path):
    out = tmp_path / "ref.json"
    code, manifest = dispatch(["refine", "--problem", "lq", "--ladder", "8,16", "--out", str(out)])
    stored = RunManifest.read(tmp_path / "ref.manifest.json")
    assert code == stored.exit_code == 0
    assert manifest.metrics["stop_reason"] == "tail_converged"
    diag = json.loads((tmp_path / "ref.diag.json").read_text())
    assert diag["converged"]
    assert SolutionRecord.read(out).status == "optimal"


def test_numerical_failure_exits_one_with_manifest(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise InitialGuessError("tangential-thrust arc never reached r = 0.5 within t = 200")

    monkeypatch.setattr("birkhoff_ps.cli.refine_solve", fail)
    manifest_path = tmp_path / "ref.json"
    code, manifest = dispatch(["refine", "--problem", "oxfer", "--r-ratio", "0.5", "--ladder", "8,16",
                               "--manifest", str(manifest_path)])
    assert code == 1
    assert "never reached" in manifest.metrics["error"]
    stored = RunManifest.read(manifest_path)
    assert stored.exit_code == 1
    assert stored.parameters["r_ratio"] == 0.5


def test_missing_output_sets_exit_one(tmp_path, monkeypatch):
    ghost = tmp_path / "ghost.csv"
    monkeypatch.setattr("birkhoff_ps.cli._nodes", lambda args: RunManifest(subcommand="nodes", outputs=[str(ghost)]))
    manifest_path = tmp_path / "nodes.json"
    code, manifest = dispatch(["nodes", "--n", "4", "--manifest", str(manifest_path)])
    assert code == 1
    assert manifest.exit_code == 1
    assert RunManifest.read(manifest_path).exit_code == 1
