import json
import logging

import numpy as np
import pandas as pd
import pytest

from app.api import commands
from app.main import main
from app.models import FitStatus
from app.services.testbed import oscillating_ridge, quadratic_sum


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if type(handler) in (logging.StreamHandler, logging.FileHandler):
            root.removeHandler(handler)
            handler.close()


def _dataset(path, fn, M=200, seed=0):
    X, f = fn.sample(M, seed)
    frame = pd.DataFrame(X, columns=[f"x{i + 1}" for i in range(fn.m)])
    frame["f"] = f
    frame.to_csv(path, index=False)
    return frame


@pytest.fixture
def trained(workdir):
    frame = _dataset(workdir / "train.csv", quadratic_sum(2))
    code = main(["fit", "train.csv", "--dim", "2", "--degree", "2", "--seed", "7",
                 "--restarts", "3", "--output", "model.json", "--report", "report.txt"])
    assert code == 0
    return frame


def test_fit_writes_model_and_report(trained, workdir):
    doc = json.loads((workdir / "model.json").read_text(encoding="utf-8"))
    assert doc["schema_version"] == 1
    assert doc["m"] == 10 and doc["n"] == 2 and doc["p"] == 2
    assert doc["family"] == "legendre"
    assert doc["training"]["seed"] == 7
    assert doc["training"]["feature_names"] == [f"x{i + 1}" for i in range(10)]
    assert doc["training"]["residual_norm"] <= 1e-10 * np.linalg.norm(trained["f"])
    assert "converged" in (workdir / "report.txt").read_text(encoding="utf-8")
    assert (workdir / "config" / "config.yaml").exists()
    assert (workdir / "logs" / "app.log").exists()


def test_fit_is_reproducible(trained, workdir):
    first = (workdir / "model.json").read_text(encoding="utf-8")
    assert main(["fit", "train.csv", "--dim", "2", "--degree", "2", "--seed", "7",
                 "--restarts", "3", "--output", "again.json", "--report", "r2.txt"]) == 0
    assert (workdir / "again.json").read_text(encoding="utf-8") == first


def test_predict_on_training_set(trained, workdir):
    assert main(["predict", "model.json", "train.csv", "--output", "pred.csv"]) == 0
    pred = pd.read_csv(workdir / "pred.csv")
    assert "g" in pred.columns
    err = np.max(np.abs(pred["g"] - trained["f"]))
    assert err <= 1e-8 * np.max(np.abs(trained["f"]))


def test_predict_ridge_invariance(trained, workdir):
    doc = json.loads((workdir / "model.json").read_text(encoding="utf-8"))
    U = np.array(doc["U"])
    X = trained[[f"x{i + 1}" for i in range(10)]].to_numpy()[:5]
    w = (np.eye(10) - U @ U.T) @ np.random.default_rng(0).standard_normal(10)
    cols = [f"x{i + 1}" for i in range(10)]
    pd.DataFrame(np.vstack([X, X + w]), columns=cols).to_csv(workdir / "pts.csv", index=False)
    assert main(["predict", "model.json", "pts.csv", "--output", "pred.csv"]) == 0
    g = pd.read_csv(workdir / "pred.csv")["g"].to_numpy()
    np.testing.assert_allclose(g[:5], g[5:], rtol=1e-10, atol=1e-10)


def test_predict_empty_input(trained, workdir, capsys):
    (workdir / "empty.csv").write_text("", encoding="utf-8")
    assert main(["predict", "model.json", "empty.csv"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and out[0].endswith("g")


def test_predict_width_mismatch(trained, workdir):
    pd.DataFrame({"a": [1.0], "b": [2.0]}).to_csv(workdir / "narrow.csv", index=False)
    assert main(["predict", "model.json", "narrow.csv"]) == 1


def test_feasibility_message(workdir, capsys):
    _dataset(workdir / "train.csv", quadratic_sum(2))
    assert main(["fit", "train.csv", "--dim", "2", "--degree", "1"]) == 1
    assert "p=1 ⇒ n=1" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["fit", "train.csv", "--dim", "0", "--degree", "2"],
    ["fit", "train.csv", "--degree", "2"],
    ["fit", "train.csv", "--dim", "1", "--degree", "2", "--target", "missing"],
    ["fit", "nowhere.csv", "--dim", "1", "--degree", "2"],
    ["fit", "train.csv", "--dim", "1", "--degree", "2", "--gamma", "1.5"],
    ["frobnicate"],
])
def test_usage_and_data_errors_exit_one(workdir, argv):
    _dataset(workdir / "train.csv", quadratic_sum(1), M=30)
    assert main(argv) == 1


def test_non_finite_cell_reports_location(workdir, capsys):
    (workdir / "bad.csv").write_text("x1,x2,f\n1,2,3\n4,nan,6\n", encoding="utf-8")
    assert main(["fit", "bad.csv", "--dim", "1", "--degree", "2"]) == 1
    assert "第 3 行第 2 列" in capsys.readouterr().err


def test_line_search_failure_exit_code(workdir, monkeypatch):
    _dataset(workdir / "train.csv", quadratic_sum(1), M=50)
    real_fit = commands.fit_gauss_newton

    def failing_fit(*args, **kwargs):
        model, report = real_fit(*args, **kwargs)
        report.status = FitStatus.LINE_SEARCH_FAILURE
        return model, report

    monkeypatch.setattr(commands, "fit_gauss_newton", failing_fit)
    assert main(["fit", "train.csv", "--dim", "1", "--degree", "2", "--seed", "1",
                 "--output", "m.json", "--report", "r.txt"]) == 2
    assert (workdir / "m.json").exists()


def test_alternating_solver_flag(workdir):
    _dataset(workdir / "train.csv", quadratic_sum(1), M=60)
    assert main(["fit", "train.csv", "--dim", "1", "--degree", "2", "--solver", "alternating",
                 "--inner-steps", "5", "--max-iter", "5", "--seed", "2",
                 "--output", "alt.json", "--report", "r.txt"]) in (0, 2)
    doc = json.loads((workdir / "alt.json").read_text(encoding="utf-8"))
    assert doc["training"]["solver"] == "alternating"


def test_shadow_one_dimensional(workdir):
    fn = oscillating_ridge(m=6, alpha=0.0)
    _dataset(workdir / "train.csv", fn, M=80)
    assert main(["fit", "train.csv", "--dim", "1", "--degree", "2", "--seed", "3",
                 "--output", "model.json", "--report", "r.txt"]) == 0
    assert main(["shadow", "model.json", "train.csv", "--output", "shadow.csv"]) == 0
    shadow = pd.read_csv(workdir / "shadow.csv")
    assert list(shadow.columns) == ["u1", "f", "g"]
    assert shadow["u1"].is_monotonic_increasing
    curve = pd.read_csv(workdir / "shadow_curve.csv")
    assert len(curve) == 200
    assert curve["u1"].iloc[0] == pytest.approx(shadow["u1"].min())
    assert curve["u1"].iloc[-1] == pytest.approx(shadow["u1"].max())


def test_bench_unknown_lists_names(workdir, capsys):
    assert main(["bench", "nope"]) == 1
    err = capsys.readouterr().err
    assert "conditioning" in err and "subspace_recovery" in err


def test_bench_conditioning_from_config(workdir):
    (workdir / "small.yaml").write_text(
        "experiments:\n  conditioning:\n    samples: 100\n    m: 8\n    max_degree: 4\n    panels: [ones]\n",
        encoding="utf-8",
    )
    assert main(["bench", "conditioning", "--config", "small.yaml", "--seed", "1", "--output", "cond.csv"]) == 0
    frame = pd.read_csv(workdir / "cond.csv")
    assert {"basis", "scaled", "degree", "cond"} <= set(frame.columns)
    assert frame["degree"].max() == 4


def test_bench_deterministic(workdir):
    (workdir / "small.yaml").write_text(
        "experiments:\n  global_min:\n    dims: [1]\n    samples: 100\n", encoding="utf-8",
    )
    args = ["bench", "global_min", "--config", "small.yaml", "--seed", "3", "--replicates", "2", "--raw"]
    assert main(args + ["--output", "a.csv"]) == 0
    assert main(args + ["--output", "b.csv"]) == 0
    assert (workdir / "a.csv").read_text() == (workdir / "b.csv").read_text()


def test_shadow_stdout_appends_curve_block(workdir, capsys):
    fn = oscillating_ridge(m=6, alpha=0.0)
    _dataset(workdir / "train.csv", fn, M=100)
    assert main(["fit", "train.csv", "--dim", "1", "--degree", "2", "--seed", "3",
                 "--output", "model.json", "--report", "r.txt"]) == 0
    capsys.readouterr()
    assert main(["shadow", "model.json", "train.csv"]) == 0
    shadow_block, curve_block = capsys.readouterr().out.split("\n\n")
    shadow = shadow_block.strip().splitlines()
    curve = curve_block.strip().splitlines()
    assert shadow[0] == "u1,f,g" and len(shadow) == 101
    assert curve[0] == "u1,g" and len(curve) == 201
    assert sorted(p.name for p in workdir.iterdir()) == ["config", "logs", "model.json", "r.txt", "train.csv"]
