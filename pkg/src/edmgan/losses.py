"""Training objectives for the EDM generator and the WGAN-GP critic.

Per-sample losses take batched tensors (leading batch axis) and return one
value per sample; the two top-level losses return a scalar plus a dict of
their detached components for logging.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from .autodiff import DTYPE, eigvals_desc
from .networks import pair_distances

Critic = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass
class LossWeights:
    eta_edm: float = 1.0
    eta_rank: float = 1.0
    gp: float = 10.0
    drift: float = 1e-3
    k_rep: float = 10.0
    r_min: float | None = 1.0
    dim: int = 3
    # False gives the literal two-sided harmonic term around r_min
    one_sided_repulsion: bool = True
    eps_log: float = 1e-12

    def __post_init__(self):
        for name in ("eta_edm", "eta_rank", "gp", "drift", "k_rep", "r_min", "eps_log"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")


def schoenberg_operator(D: torch.Tensor) -> torch.Tensor:
    B = D - D.mean(-2, keepdim=True) - D.mean(-1, keepdim=True) + D.mean((-2, -1), keepdim=True)
    B = -0.5 * B
    return 0.5 * (B + B.transpose(-1, -2))


def loss_edm(D: torch.Tensor) -> torch.Tensor:
    """Sum of squared negative eigenvalues of ``-J D J / 2``."""
    mu = eigvals_desc(schoenberg_operator(D))
    return torch.relu(-mu).pow(2).sum(-1)


def loss_rank(M: torch.Tensor, d: int = 3) -> torch.Tensor:
    """Sum of squared Gram eigenvalues beyond the ``d`` largest."""
    lam = eigvals_desc(M)
    return lam[..., d:].pow(2).sum(-1)


def loss_repulsion(D: torch.Tensor, r: float, k_rep: float = 10.0, one_sided: bool = True) -> torch.Tensor:
    """``k/2 * sum_{i != j} (sqrt(D_ij) - r)^2``, by default only for distances below ``r``."""
    dist = pair_distances(D)
    dev = dist - r
    if one_sided:
        dev = torch.clamp(dev, max=0.0)
    n = D.shape[-1]
    offdiag = ~torch.eye(n, dtype=torch.bool)
    return 0.5 * k_rep * (dev.pow(2) * offdiag).sum((-2, -1))


def loss_types(t: torch.Tensor, t_ref: torch.Tensor, eps_log: float = 1e-12) -> torch.Tensor:
    """Cross entropy of ``t`` against one-hot ``t_ref``, averaged over atoms."""
    t_ref = torch.as_tensor(t_ref, dtype=DTYPE)
    return -(t_ref * torch.log(t + eps_log)).sum(-1).mean(-1)


def gradient_penalty(
    critic: Critic,
    D_real: torch.Tensor,
    t_real: torch.Tensor,
    D_fake: torch.Tensor,
    t_fake: torch.Tensor,
    weight: float = 10.0,
    generator: torch.Generator | None = None,
    alpha: torch.Tensor | None = None,
) -> torch.Tensor:
    """WGAN-GP penalty on interpolates between paired real and fake samples.

    One ``alpha`` per pair is shared by the distance and type entries, so the
    interpolated ``D`` stays inside the EDM cone. The gradient norm is the
    Frobenius norm over the concatenated ``(D, t)`` entries. The result is
    differentiable with respect to the critic's parameters and to both
    input batches.
    """
    if D_real.shape != D_fake.shape or t_real.shape != t_fake.shape:
        raise ValueError("real and fake batches must have equal shapes")
    m = D_real.shape[0]
    if alpha is None:
        alpha = torch.rand(m, generator=generator, dtype=DTYPE)
    a = alpha.reshape(m, 1, 1)
    D_hat = a * D_real + (1 - a) * D_fake
    t_hat = a * t_real + (1 - a) * t_fake
    # keep the graph to the inputs when they carry one (exact input gradients);
    # otherwise the interpolates become fresh leaves
    if not D_hat.requires_grad:
        D_hat = D_hat.detach().requires_grad_(True)
    if not t_hat.requires_grad:
        t_hat = t_hat.detach().requires_grad_(True)
    scores = critic(D_hat, t_hat)
    if scores.requires_grad:
        gD, gt = torch.autograd.grad(
            scores.sum(), (D_hat, t_hat), create_graph=True, allow_unused=True
        )
    else:
        gD = gt = None
    gD = torch.zeros_like(D_hat) if gD is None else gD
    gt = torch.zeros_like(t_hat) if gt is None else gt
    sq = gD.pow(2).sum((-2, -1)) + gt.pow(2).sum((-2, -1))
    # sqrt has an infinite derivative at 0; a constant critic must still give a finite result
    norm = torch.sqrt(sq + 1e-30)
    if not torch.isfinite(norm).all():
        raise FloatingPointError("non-finite gradient norm in gradient penalty")
    return weight * (norm - 1.0).pow(2).mean()


def critic_loss(
    critic: Critic,
    real: tuple[torch.Tensor, torch.Tensor],
    fake: tuple[torch.Tensor, torch.Tensor],
    weights: LossWeights,
    generator: torch.Generator | None = None,
    alpha: torch.Tensor | None = None,
):
    """Fake-minus-real critic mean, plus gradient penalty and drift term."""
    D_r, t_r = real
    D_f, t_f = fake
    # one batched call; the critic scores each sample independently
    scores = critic(torch.cat([D_r, D_f]), torch.cat([t_r, t_f]))
    c_real, c_fake = scores[: D_r.shape[0]], scores[D_r.shape[0]:]
    gp = gradient_penalty(critic, D_r, t_r, D_f, t_f, weights.gp, generator, alpha)
    drift = weights.drift * c_real.pow(2).mean()
    wgan = c_fake.mean() - c_real.mean()
    total = wgan + gp + drift
    parts = {
        "wasserstein_estimate": float(-wgan.detach()),
        "gp": float(gp.detach()),
        "drift": float(drift.detach()),
    }
    return total, parts


def generator_loss(
    critic: Critic,
    fake: tuple[torch.Tensor, torch.Tensor],
    weights: LossWeights,
    t_ref: torch.Tensor,
    M: torch.Tensor | None = None,
    mode: str = "softplus_top_d",
):
    """Negated critic mean + type cross entropy + repulsion + EDM (and rank) penalties.

    ``M`` is the generator's Gram matrix; the rank penalty is only evaluated
    in ``softplus_all`` mode, where the rank is not fixed by construction.
    """
    D, t = fake
    adv = -critic(D, t).mean()
    types = loss_types(t, t_ref, weights.eps_log).mean()
    rep = loss_repulsion(D, weights.r_min, weights.k_rep, weights.one_sided_repulsion).mean()
    edm = loss_edm(D).mean()
    total = adv + types + rep + weights.eta_edm * edm
    rank = torch.zeros((), dtype=DTYPE)
    if mode == "softplus_all":
        if M is None:
            raise ValueError("rank penalty needs the Gram matrix")
        rank = loss_rank(M, weights.dim).mean()
        total = total + weights.eta_rank * rank
    parts = {
        "types": float(types.detach()),
        "repulsion": float(rep.detach()),
        "edm": float(edm.detach()),
        "rank": float(rank.detach()),
    }
    return total, parts
