import csv
import json
from pathlib import Path

import numpy as np
import pytest

from polymanifold import load_catalog, load_model
from polymanifold.cli import main
from polymanifold.manifold import load_pod

SMALL = ["--n-grid", "64", "--t-end", "0.004", "--inner-dt", "1e-5", "--n-test", "3"]


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert run("generate", "--out", out, *SMALL) == 0
    return out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_generate_outputs_and_manifest(small_run):
    cat = load_catalog(small_run)
    assert [mu for mu, _ in cat.train] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert len(cat.test) == 3 and cat.training_matrix().shape == (64, 100)
    stage = manifest(small_run)["stages"]["generate"]
    assert stage["seeds"] == {"test_mu_seed": 7}
    assert stage["config"]["t_end"] == "%.17g" % 0.004
    assert len(stage["outputs"]) == 1 + 5 + 3
    assert all(Path(p).is_file() for p in stage["outputs"])
    assert "simulate" in stage["timings_s"]


def test_generate_is_deterministic_and_replayable(small_run, tmp_path):
    assert run("generate", "--out", tmp_path / "again", *SMALL) == 0
    assert run("generate", "--out", tmp_path / "replay", "--config", small_run / "manifest.json") == 0
    for name in ("train/train_000.pmdr", "train/train_004.pmdr", "test/test_002.pmdr"):
        ref = (small_run / name).read_bytes()
        assert (tmp_path / "again" / name).read_bytes() == ref
        assert (tmp_path / "replay" / name).read_bytes() == ref


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"generate": {"seed": 3, "n_test": 2}}))
    base = ["--n-grid", "32", "--t-end", "0.0004", "--inner-dt", "1e-5", "--train-mus", "0"]
    assert run("generate", "--out", tmp_path / "a", *base, "--config", cfg) == 0
    assert run("generate", "--out", tmp_path / "b", *base, "--config", cfg, "--seed", 4) == 0
    assert run("generate", "--out", tmp_path / "c", *base, "--n-test", 2) == 0
    seeds = [load_catalog(tmp_path / d).seed for d in "abc"]
    assert seeds == [3, 4, 7]
    assert len(load_catalog(tmp_path / "a").test) == 2


def test_pod_stage(small_run):
    assert run("pod", "--out", small_run, "--catalog", small_run, "--tol", "1e-3") == 0
    rows = list(csv.DictReader(open(small_run / "singular_values.csv")))
    assert len(rows) == 64 and float(rows[0]["sigma_normalized"]) == 1.0
    sig = [float(r["sigma"]) for r in rows]
    assert sig == sorted(sig, reverse=True)
    stage = manifest(small_run)["stages"]["pod"]
    assert isinstance(stage["rank_for_tolerance"], int)
    assert "generate" in manifest(small_run)["stages"]


def test_train_pod_writes_basis_only(small_run, tmp_path):
    assert run("train", "--out", tmp_path, "--catalog", small_run, "--method", "pod", "--r", 6) == 0
    basis, c = load_pod(tmp_path / "model.pmdc")
    assert basis.r_max == 6 and c is not None
    assert not (tmp_path / "trace.csv").exists()


def test_train_am_and_evaluate(small_run, tmp_path):
    args = ["--catalog", small_run, "--method", "manifold-am", "--r", 3, "--q", 9, "--p", 3, "--gamma", 1.0]
    assert run("train", "--out", tmp_path, *args) == 0
    model = load_model(tmp_path / "model.pmdc")
    assert (model.method, model.r, model.q, model.p) == ("manifold_am", 3, 9, 3)
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    assert list(rows[0]) == ["cycle", "e", "objective"]
    J = [float(r["objective"]) for r in rows]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(J, J[1:]))
    stage = manifest(tmp_path)["stages"]["train"]
    assert stage["am_cycles"] == len(rows) - 1
    assert run("evaluate", "--out", tmp_path, "--catalog", small_run, "--model", tmp_path / "model.pmdc") == 0
    ev = json.loads((tmp_path / "evaluation.json").read_text())
    assert ev["encoder"] == "nonlinear" and len(ev["per_dataset"]) == 3
    assert 0 <= float(ev["test_error"]) < 1
    assert manifest(tmp_path)["stages"]["evaluate"]["encoder"] == "nonlinear"


def test_evaluate_pod_container(small_run, tmp_path):
    assert run("train", "--out", tmp_path, "--catalog", small_run, "--method", "pod", "--r", 4) == 0
    assert run("evaluate", "--out", tmp_path, "--catalog", small_run, "--model", tmp_path / "model.pmdc") == 0
    ev = json.loads((tmp_path / "evaluation.json").read_text())
    assert ev["method"] == "pod" and ev["encoder"] == "linear" and ev["r"] == 4


def test_sweep_single_r(small_run, tmp_path):
    code = run("sweep", "--out", tmp_path, "--catalog", small_run, "--r-list", 2, "--r-total", 12,
               "--gamma", 1.0, "--field-r", 2, "--field-p", 3)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert len(rows) == 7
    assert [r["method"] for r in rows] == ["pod"] + ["manifold_pod"] * 3 + ["manifold_am"] * 3
    stage = manifest(tmp_path)["stages"]["sweep"]
    names = {p.rsplit("/", 1)[-1] for p in stage["outputs"]}
    assert names == {"sweep.csv", "am_cycles.csv", "field.csv"}
    field = np.genfromtxt(tmp_path / "field.csv", delimiter=",", names=True)
    assert field.dtype.names == ("x", "t", "reference", "pod", "manifold_pod", "manifold_am")
    assert field.shape == (64 * 20,)


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--out", "X", "--r", "0"],
        ["train", "--out", "X", "--method", "nope"],
        ["sweep", "--out", "X", "--r-list", "a"],
        ["generate"],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    argv = [str(tmp_path) if a == "X" else a for a in argv]
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_semantic_usage_errors_exit_2(small_run, tmp_path):
    assert run("train", "--out", tmp_path, "--catalog", small_run, "--r", 60, "--q", 60) == 2
    assert run("train", "--out", tmp_path, "--catalog", small_run, "--p", 1) == 2
    assert run("generate", "--out", tmp_path, "--n-grid", 100) == 2
    assert run("train", "--out", tmp_path) == 2  # no catalog


def test_runtime_failure_exit_1(tmp_path):
    assert run("pod", "--out", tmp_path, "--catalog", tmp_path / "missing") == 1
