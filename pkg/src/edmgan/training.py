"""Alternating WGAN-GP training of the EDM generator against the critic."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .autodiff import DTYPE, CheckpointError, ParameterStore, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_from_dict, config_to_dict
from .data import Dataset
from .edm import PointSet, embed
from .losses import critic_loss, generator_loss
from .networks import TypedSample, generate, init_critic, init_generator, make_critic

log = logging.getLogger(__name__)

METRIC_FIELDS = [
    "step", "critic_loss", "generator_loss", "wasserstein_estimate",
    "gp", "drift", "types", "repulsion", "edm", "rank",
]


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step: int, last_checkpoint: Path | None):
        super().__init__(f"non-finite loss at generator step {step}; last good checkpoint: {last_checkpoint}")
        self.step = step
        self.last_checkpoint = last_checkpoint


@dataclass
class TrainResult:
    params: ParameterStore
    metrics: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def _check_shapes(cfg: TrainConfig, dataset: Dataset) -> None:
    n, k = dataset.n, len(dataset.elements)
    if cfg.generator.n != n or cfg.generator.n_types != k or cfg.critic.n_types != k:
        raise ValueError(
            f"config expects n={cfg.generator.n}, n_types={cfg.generator.n_types}/{cfg.critic.n_types}; "
            f"dataset has n={n}, n_types={k}"
        )


def init_params(cfg: TrainConfig) -> ParameterStore:
    store = init_generator(cfg.generator, cfg.seed)
    return init_critic(cfg.critic, cfg.seed + 1, store)


def checkpoint_meta(cfg: TrainConfig, step: int, elements: list[str]) -> dict:
    return {"step": step, "config": config_to_dict(cfg), "elements": elements}


def train(cfg: TrainConfig, dataset: Dataset, out_dir=None) -> TrainResult:
    """Run ``cfg.steps`` generator updates, each preceded by ``cfg.n_critic`` critic updates.

    Real minibatches are drawn with replacement. With ``out_dir`` set, writes
    ``metrics.csv`` and checkpoints (``checkpoint.npz`` plus one per
    interval). Raises :class:`TrainingDivergedError` on a non-finite loss.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    _check_shapes(cfg, dataset)
    w = cfg.weights
    if w.r_min is None:
        w.r_min = dataset.r_min
    torch_gen = torch.Generator().manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    params = init_params(cfg)
    gen_params = params.subset("gen.")
    critic_params = params.subset("critic.")
    betas = (cfg.optimizer.beta1, cfg.optimizer.beta2)
    opt_g = torch.optim.Adam(gen_params.tensors(), lr=cfg.optimizer.lr, betas=betas)
    opt_c = torch.optim.Adam(critic_params.tensors(), lr=cfg.optimizer.lr, betas=betas)
    critic = make_critic(params, cfg.critic)

    D_all, t_all = dataset.tensors()
    t_ref = t_all[0]
    m, nz = cfg.batch_size, cfg.generator.noise_dim
    elements = dataset.elements

    out = Path(out_dir) if out_dir is not None else None
    last_ckpt = None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        last_ckpt = out / "checkpoint.npz"
        save_checkpoint(last_ckpt, params, checkpoint_meta(cfg, 0, elements))
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()

    result = TrainResult(params, checkpoint=last_ckpt)
    step = 0
    try:
        for step in range(1, cfg.steps + 1):
            for _ in range(cfg.n_critic):
                idx = torch.as_tensor(rng.integers(len(dataset), size=m))
                z = torch.randn(m, nz, generator=torch_gen, dtype=DTYPE)
                with torch.no_grad():
                    D_f, t_f, _ = generate(z, params, cfg.generator)
                loss_c, c_parts = critic_loss(critic, (D_all[idx], t_all[idx]), (D_f, t_f), w, torch_gen)
                opt_c.zero_grad(set_to_none=True)
                loss_c.backward(inputs=critic_params.tensors())
                opt_c.step()

            z = torch.randn(m, nz, generator=torch_gen, dtype=DTYPE)
            D_f, t_f, M = generate(z, params, cfg.generator)
            loss_g, g_parts = generator_loss(critic, (D_f, t_f), w, t_ref, M, cfg.generator.mode)
            opt_g.zero_grad(set_to_none=True)
            loss_g.backward(inputs=gen_params.tensors())
            opt_g.step()

            row = {"step": step, "critic_loss": float(loss_c.detach()),
                   "generator_loss": float(loss_g.detach()), **c_parts, **g_parts}
            if not all(math.isfinite(v) for v in row.values()):
                raise TrainingDivergedError(step, last_ckpt)
            result.metrics.append(row)
            if writer is not None:
                writer.writerow(row)
                if cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
                    fh.flush()
                    save_checkpoint(out / f"checkpoint_{step:06d}.npz", params, checkpoint_meta(cfg, step, elements))
                    save_checkpoint(last_ckpt, params, checkpoint_meta(cfg, step, elements))
            if step % 500 == 0:
                log.info("step %d  W=%.4f  gp=%.4f  Lg=%.4f", step,
                         row["wasserstein_estimate"], row["gp"], row["generator_loss"])
        if out is not None:
            save_checkpoint(last_ckpt, params, checkpoint_meta(cfg, cfg.steps, elements))
    except TrainingDivergedError:
        raise
    except FloatingPointError as exc:
        # non-finite activations or eigendecomposition inputs
        raise TrainingDivergedError(step, last_ckpt) from exc
    finally:
        if fh is not None:
            fh.close()
    return result


def load_run(path) -> tuple[ParameterStore, TrainConfig, list[str]]:
    """Load a checkpoint and rebuild its config; verifies the parameter shapes."""
    params, meta = load_checkpoint(path)
    try:
        cfg = config_from_dict(meta["config"])
        elements = list(meta["elements"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad metadata ({exc})") from exc
    ref = init_params(cfg)
    if list(ref) != list(params) or any(ref[k].shape != params[k].shape for k in ref):
        raise CheckpointError(f"{path}: parameters do not match the stored config")
    return params, cfg, elements


def sample(checkpoint, count: int, seed: int = 0, batch: int = 256) -> list[TypedSample]:
    """Draw ``count`` samples from a checkpoint path or a ``(params, GeneratorConfig)`` pair."""
    if isinstance(checkpoint, (str, Path)):
        params, cfg, _ = load_run(checkpoint)
        gcfg = cfg.generator
    else:
        params, gcfg = checkpoint
    gen = torch.Generator().manual_seed(seed)
    # all noise up front so the draws do not depend on ``batch``
    z_all = torch.randn(count, gcfg.noise_dim, generator=gen, dtype=DTYPE)
    out: list[TypedSample] = []
    with torch.no_grad():
        for start in range(0, count, batch):
            D, t, _ = generate(z_all[start:start + batch], params, gcfg)
            out.extend(TypedSample(D[i].numpy().copy(), t[i].numpy().copy()) for i in range(D.shape[0]))
    return out


def to_structure(s: TypedSample, elements: list[str], dim: int = 3) -> PointSet:
    """Embed a sample in ``dim`` dimensions and label atoms by their most likely type."""
    P = embed(s.D, dim)
    labels = [elements[k] for k in np.argmax(s.t, axis=1)]
    return PointSet(P.coords, labels)
