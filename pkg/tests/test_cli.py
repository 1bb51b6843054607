import json

import numpy as np
import pytest

from edmgan.cli import main
from edmgan.edm import PointSet, edm_from_points
from edmgan.io import iter_xyz_frames, parse_xyz, write_matrix_csv, write_xyz

from .test_edm import VIOLATING_D

TINY = {
    "steps": 3,
    "batch_size": 4,
    "n_critic": 1,
    "checkpoint_interval": 2,
    "generator": {"noise_dim": 4, "n": 5, "n_types": 2, "hidden": [8]},
    "critic": {"n_types": 2, "feature_dim": 8, "n_interactions": 1, "n_basis": 6},
    "data": {"synthetic": {"size": 32}},
}


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = write_config(tmp, dict(TINY, out_dir=str(tmp / "out")))
    assert main(["train", "--config", cfg]) == 0
    return tmp / "out"


def test_validate_exit_codes(tmp_path, capsys):
    write_matrix_csv(tmp_path / "ok.csv", edm_from_points(np.eye(4)))
    assert main(["validate", str(tmp_path / "ok.csv")]) == 0
    assert "embedding_dimension: 3" in capsys.readouterr().out

    write_matrix_csv(tmp_path / "bad.csv", VIOLATING_D)
    assert main(["validate", str(tmp_path / "bad.csv")]) == 1
    assert "min_schoenberg_eigenvalue: -0.8333" in capsys.readouterr().out

    (tmp_path / "junk.csv").write_text("a,b\nc\n")
    assert main(["validate", str(tmp_path / "junk.csv")]) == 2
    assert main(["validate", str(tmp_path / "missing.csv")]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["embed"])
    assert exc.value.code == 2


def test_embed_collinear(tmp_path):
    X = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
    write_matrix_csv(tmp_path / "d.csv", edm_from_points(X))
    out = tmp_path / "p.xyz"
    assert main(["embed", str(tmp_path / "d.csv"), "--out", str(out)]) == 0
    P = parse_xyz(out)
    assert P.types == ["X"] * 3
    Y = P.coords - P.coords[0]
    # every point lies on the line through the first two
    u = Y[1] / np.linalg.norm(Y[1])
    assert np.abs(Y - np.outer(Y @ u, u)).max() < 1e-8
    assert np.allclose(edm_from_points(P.coords), edm_from_points(X), atol=1e-10)


def test_embed_zero_and_invalid(tmp_path):
    write_matrix_csv(tmp_path / "z.csv", np.zeros((3, 3)))
    assert main(["embed", str(tmp_path / "z.csv"), "--out", str(tmp_path / "z.xyz")]) == 0
    P = parse_xyz(tmp_path / "z.xyz")
    assert np.allclose(P.coords, P.coords[0])
    write_matrix_csv(tmp_path / "bad.csv", VIOLATING_D)
    assert main(["embed", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "b.xyz")]) == 1


def test_train_outputs(trained_run):
    names = {p.name for p in trained_run.iterdir()}
    assert {"checkpoint.npz", "checkpoint_000002.npz", "metrics.csv", "train.xyz", "test.xyz", "manifest.json"} <= names
    lines = (trained_run / "metrics.csv").read_text().splitlines()
    assert len(lines) == 4
    manifest = json.loads((trained_run / "manifest.json").read_text())
    assert manifest["formula"] == "C3O2"
    assert len(list(iter_xyz_frames(trained_run / "train.xyz"))) == 16


def test_train_deterministic(tmp_path, trained_run):
    cfg = write_config(tmp_path, dict(TINY, out_dir=str(tmp_path / "again")))
    assert main(["train", "--config", cfg]) == 0
    assert (tmp_path / "again" / "metrics.csv").read_text() == (trained_run / "metrics.csv").read_text()


def test_train_zero_steps(tmp_path):
    cfg = write_config(tmp_path, dict(TINY, steps=0, out_dir=str(tmp_path / "z")))
    assert main(["train", "--config", cfg]) == 0
    ckpts = sorted(p.name for p in (tmp_path / "z").glob("checkpoint*.npz"))
    assert ckpts == ["checkpoint.npz"]


def test_train_config_errors(tmp_path):
    missing = dict(TINY, data={"path": str(tmp_path / "nope")}, out_dir=str(tmp_path / "m"))
    assert main(["train", "--config", write_config(tmp_path, missing)]) == 2
    typo = dict(TINY, stepz=3)
    assert main(["train", "--config", write_config(tmp_path, typo, "typo.json")]) == 2
    assert main(["train", "--config", str(tmp_path / "absent.json")]) == 2


def test_sample_outputs_validate(tmp_path, trained_run, capsys):
    out = tmp_path / "s"
    assert main(["sample", "--checkpoint", str(trained_run / "checkpoint.npz"),
                 "--count", "5", "--seed", "3", "--out", str(out)]) == 0
    files = sorted(out.glob("*.xyz"))
    assert len(files) == 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["checked"] == 5
    for f in files:
        P = parse_xyz(f)
        write_matrix_csv(tmp_path / "d.csv", edm_from_points(P))
        assert main(["validate", str(tmp_path / "d.csv")]) == 0

    out2 = tmp_path / "s2"
    main(["sample", "--checkpoint", str(trained_run / "checkpoint.npz"), "--count", "5", "--seed", "3", "--out", str(out2)])
    assert [f.read_text() for f in files] == [f.read_text() for f in sorted(out2.glob("*.xyz"))]


def test_sample_zero_and_bad_checkpoint(tmp_path, trained_run):
    out = tmp_path / "empty"
    assert main(["sample", "--checkpoint", str(trained_run / "checkpoint.npz"), "--count", "0", "--out", str(out)]) == 0
    assert out.is_dir() and not any(out.iterdir())
    (tmp_path / "junk.npz").write_text("x")
    assert main(["sample", "--checkpoint", str(tmp_path / "junk.npz"), "--out", str(out)]) == 2


def test_evaluate_copy_of_train(tmp_path, trained_run):
    out = tmp_path / "ev"
    train = str(trained_run / "train.xyz")
    assert main(["evaluate", "--samples", train, "--train-set", train,
                 "--test-set", str(trained_run / "test.xyz"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["known_A"] == summary["samples"] == 16
    rows = (out / "uniqueness.csv").read_text().splitlines()
    assert rows[0] == "sample_index,known_A,known_B,novel" and rows[-1] == "15,16,0,0"
    assert (out / "hist_CO.csv").exists()
    assert len((out / "matches.jsonl").read_text().splitlines()) == 16


def test_evaluate_empty_samples(tmp_path, trained_run):
    (tmp_path / "none").mkdir()
    out = tmp_path / "ev"
    assert main(["evaluate", "--samples", str(tmp_path / "none"),
                 "--train-set", str(trained_run / "train.xyz"), "--out", str(out)]) == 0
    assert (out / "uniqueness.csv").read_text().splitlines() == ["sample_index,known_A,known_B,novel"]
    assert (out / "hist_CC.csv").read_text().splitlines() == ["bin_center,density"]


def test_evaluate_cutoff_zero(tmp_path):
    rng = np.random.default_rng(0)
    base = PointSet(rng.standard_normal((4, 3)), ["C", "C", "O", "O"])
    d = tmp_path / "samples"
    d.mkdir()
    write_xyz(d / "0.xyz", base)
    write_xyz(d / "1.xyz", PointSet(base.coords + np.array([[0.01, 0, 0]] + [[0, 0, 0]] * 3), base.types))
    write_xyz(tmp_path / "ref.xyz", base)
    out = tmp_path / "ev"
    assert main(["evaluate", "--samples", str(d), "--train-set", str(tmp_path / "ref.xyz"),
                 "--cutoff", "0", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert (summary["known_A"], summary["novel"]) == (1, 1)


def test_evaluate_mixed_composition(tmp_path):
    write_xyz(tmp_path / "a.xyz", PointSet(np.eye(2, 3), ["C", "C"]))
    write_xyz(tmp_path / "b.xyz", PointSet(np.eye(2, 3), ["C", "O"]))
    assert main(["evaluate", "--samples", str(tmp_path / "a.xyz"), "--train-set", str(tmp_path / "b.xyz"),
                 "--out", str(tmp_path / "ev")]) == 1
    assert main(["evaluate", "--samples", str(tmp_path / "missing"), "--out", str(tmp_path / "ev")]) == 2
