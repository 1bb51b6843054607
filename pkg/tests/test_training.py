import csv

import numpy as np
import pytest
import torch

from edmgan.autodiff import CheckpointError, load_checkpoint, save_checkpoint
from edmgan.config import ConfigError, config_from_dict, config_to_dict, load_config
from edmgan.data import synthetic_dataset
from edmgan.edm import embedding_dimension, is_edm
from edmgan.networks import CriticConfig, GeneratorConfig
from edmgan.config import TrainConfig
from edmgan.training import (
    METRIC_FIELDS,
    TrainingDivergedError,
    init_params,
    load_run,
    sample,
    to_structure,
    train,
)


def tiny_config(**kw):
    cfg = TrainConfig(
        steps=4,
        batch_size=4,
        n_critic=2,
        checkpoint_interval=2,
        generator=GeneratorConfig(noise_dim=4, n=5, n_types=2, hidden=[8]),
        critic=CriticConfig(n_types=2, feature_dim=8, n_interactions=1, n_basis=6),
    )
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="module")
def data():
    return synthetic_dataset(size=40, seed=2)


def test_zero_steps_writes_initial_checkpoint(tmp_path, data):
    cfg = tiny_config(steps=0)
    res = train(cfg, data, tmp_path)
    assert res.metrics == []
    assert sorted(p.name for p in tmp_path.glob("*.npz")) == ["checkpoint.npz"]
    params, _ = load_checkpoint(tmp_path / "checkpoint.npz")
    assert params.equal(init_params(cfg))


def test_metrics_and_checkpoints(tmp_path, data):
    res = train(tiny_config(), data, tmp_path)
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["step"]) for r in rows] == [1, 2, 3, 4]
    assert list(rows[0]) == METRIC_FIELDS
    assert all(np.isfinite(float(v)) for r in rows for v in r.values())
    assert {p.name for p in tmp_path.glob("*.npz")} == {"checkpoint.npz", "checkpoint_000002.npz", "checkpoint_000004.npz"}
    final, meta = load_checkpoint(tmp_path / "checkpoint.npz")
    assert final.equal(res.params)
    assert meta["step"] == 4


def test_training_moves_both_networks(data):
    cfg = tiny_config()
    before = init_params(cfg)
    after = train(cfg, data).params
    for prefix in ("gen.", "critic."):
        assert any(not torch.equal(before[k], after[k].detach()) for k in before if k.startswith(prefix))


def test_same_seed_same_run(data):
    a = train(tiny_config(), data)
    b = train(tiny_config(), data)
    assert a.metrics == b.metrics
    assert a.params.equal(b.params)
    c = train(tiny_config(seed=1), data)
    assert c.metrics != a.metrics


def test_r_min_defaults_to_dataset(data):
    cfg = tiny_config(steps=1)
    assert cfg.weights.r_min is None
    train(cfg, data)
    assert cfg.weights.r_min == data.r_min


def test_shape_mismatch(data):
    cfg = tiny_config()
    cfg.generator.n = 6
    with pytest.raises(ValueError, match="n=6"):
        train(cfg, data)


def test_divergence_reports_checkpoint(tmp_path, data):
    cfg = tiny_config(steps=3)
    cfg.optimizer.lr = float("inf")
    with pytest.raises(TrainingDivergedError) as exc:
        train(cfg, data, tmp_path)
    assert exc.value.last_checkpoint == tmp_path / "checkpoint.npz"
    assert exc.value.step >= 1


def test_sampling_is_reproducible(tmp_path, data):
    train(tiny_config(), data, tmp_path)
    a = sample(tmp_path / "checkpoint.npz", 7, seed=5, batch=3)
    b = sample(tmp_path / "checkpoint.npz", 7, seed=5)
    assert len(a) == 7
    c = sample(tmp_path / "checkpoint.npz", 7, seed=5, batch=3)
    assert all(np.array_equal(x.D, y.D) and np.array_equal(x.t, y.t) for x, y in zip(a, c))
    # a different batch size may only change BLAS rounding
    assert all(np.allclose(x.D, y.D, rtol=1e-12, atol=1e-12) for x, y in zip(a, b))
    assert sample(tmp_path / "checkpoint.npz", 0) == []
    for s in a:
        assert is_edm(s.D, 1e-9)[0] and embedding_dimension(s.D) <= 3
        P = to_structure(s, data.elements)
        assert P.coords.shape == (5, 3) and set(P.types) <= {"C", "O"}


def test_load_run_rejects_mismatched_parameters(tmp_path, data):
    train(tiny_config(steps=0), data, tmp_path)
    params, meta = load_checkpoint(tmp_path / "checkpoint.npz")
    meta["config"]["critic"]["feature_dim"] = 9
    save_checkpoint(tmp_path / "bad.npz", params, meta)
    with pytest.raises(CheckpointError):
        load_run(tmp_path / "bad.npz")
    params2, cfg, elements = load_run(tmp_path / "checkpoint.npz")
    assert elements == ["C", "O"] and cfg.generator.n == 5


def test_config_round_trip_and_errors(tmp_path):
    cfg = tiny_config()
    again = config_from_dict(config_to_dict(cfg))
    assert again == cfg
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"optimizer": {"lr": 1e-3, "beta": 0.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"batch_size": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"weights": {"gp": -1.0}})
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
    assert config_from_dict({"weights": {"gp": 5.0}}).weights.r_min is None


def test_committed_configs_load():
    from pathlib import Path

    from edmgan.experiments import desk_scale_config

    root = Path(__file__).resolve().parents[1] / "configs"
    assert load_config(root / "desk_scale.json") == desk_scale_config()
    iso = load_config(root / "isomers.json")
    assert iso.data.formula == "C7O2H10" and iso.generator.n == 19


def test_desk_scale_report_untrained():
    from edmgan.experiments import desk_scale_config, desk_scale_data, desk_scale_metrics

    cfg = desk_scale_config()
    _, test = desk_scale_data(cfg)
    rep = desk_scale_metrics(init_params(cfg), cfg, test, count=20)
    assert rep.edm_fraction == 1.0
    assert rep.cutoff == pytest.approx(3 * 0.05 * np.sqrt(5))
    assert set(rep.passed) == {"a", "b", "c"} and rep.passed["a"]
