"""Generator (noise -> typed EDM) and SchNet-style critic, written functionally.

Both networks read their weights from a :class:`ParameterStore`; names are
prefixed ``gen.`` and ``critic.`` so a single store can hold both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .autodiff import DTYPE, ParameterStore, spd_project
from .edm import DimensionError


@dataclass
class GeneratorConfig:
    noise_dim: int = 64
    n: int = 19
    n_types: int = 3
    hidden: list[int] = field(default_factory=lambda: [256, 256, 512])
    # "softplus_top_d" fixes the Gram rank; "softplus_all" leaves it to the rank loss
    mode: str = "softplus_top_d"
    embed_dim: int = 3
    leak: float = 0.2

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("generator needs n >= 2 points")
        if self.mode not in ("softplus_top_d", "softplus_all"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.hidden = list(self.hidden)


@dataclass
class CriticConfig:
    n_types: int = 3
    feature_dim: int = 64
    n_interactions: int = 3
    r_min: float = 0.0
    r_max: float = 6.0
    n_basis: int = 32
    gamma: float = 10.0

    def __post_init__(self):
        if not self.r_min < self.r_max:
            raise ValueError("need r_min < r_max")
        if self.n_basis < 2:
            raise ValueError("need at least two radial basis functions")


@dataclass
class TypedSample:
    """One structure as squared distances plus per-atom type probabilities."""

    D: np.ndarray
    t: np.ndarray

    @property
    def n(self) -> int:
        return self.D.shape[0]


def _dense_init(store, name, fan_in, fan_out, gen, bias=True, gain=1.0):
    bound = gain / math.sqrt(fan_in)
    w = (torch.rand(fan_in, fan_out, generator=gen, dtype=DTYPE) * 2 - 1) * bound
    store[f"{name}.weight"] = w
    if bias:
        store[f"{name}.bias"] = torch.zeros(fan_out, dtype=DTYPE)


def _dense(x, params, name):
    y = x @ params[f"{name}.weight"]
    b = params.get(f"{name}.bias")
    return y if b is None else y + b


def init_generator(config: GeneratorConfig, seed: int = 0, store: ParameterStore | None = None) -> ParameterStore:
    gen = torch.Generator().manual_seed(seed)
    store = ParameterStore() if store is None else store
    width = config.noise_dim
    for i, h in enumerate(config.hidden):
        _dense_init(store, f"gen.trunk.{i}", width, h, gen, gain=math.sqrt(3.0))
        width = h
    k = config.n - 1
    _dense_init(store, "gen.matrix", width, k * k, gen)
    _dense_init(store, "gen.types", width, config.n * config.n_types, gen)
    return store


def generator_forward(z: torch.Tensor, params, config: GeneratorConfig):
    """Noise ``(m, noise_dim)`` -> raw matrices ``(m, n-1, n-1)`` and type logits ``(m, n, n_types)``."""
    if z.ndim != 2 or z.shape[1] != config.noise_dim:
        raise DimensionError(f"expected noise of shape (m, {config.noise_dim}), got {tuple(z.shape)}")
    h = z
    for i in range(len(config.hidden)):
        h = F.leaky_relu(_dense(h, params, f"gen.trunk.{i}"), config.leak)
    k = config.n - 1
    X = _dense(h, params, "gen.matrix").reshape(-1, k, k)
    logits = _dense(h, params, "gen.types").reshape(-1, config.n, config.n_types)
    return X, logits


def gram_from_inner(L: torch.Tensor) -> torch.Tensor:
    return F.pad(L, (1, 0, 1, 0))


def edm_from_gram(M: torch.Tensor) -> torch.Tensor:
    diag = torch.diagonal(M, dim1=-2, dim2=-1)
    D = diag.unsqueeze(-1) + diag.unsqueeze(-2) - 2.0 * M
    eye = torch.eye(M.shape[-1], dtype=torch.bool)
    return torch.where(eye, torch.zeros_like(D), D)


def edm_chain(X: torch.Tensor, config: GeneratorConfig):
    """Raw matrices -> (Gram, EDM) via symmetrize, spectral softplus and Gram assembly."""
    L = 0.5 * (X + X.transpose(-1, -2))
    top_d = config.embed_dim if config.mode == "softplus_top_d" else None
    M = gram_from_inner(spd_project(L, top_d))
    return M, edm_from_gram(M)


def generate(z: torch.Tensor, params, config: GeneratorConfig):
    """Batched generation; returns ``(D, t, M)`` with ``t`` row-softmaxed."""
    X, logits = generator_forward(z, params, config)
    M, D = edm_chain(X, config)
    return D, torch.softmax(logits, dim=-1), M


def generate_sample(z: torch.Tensor, params, config: GeneratorConfig) -> TypedSample:
    z = torch.as_tensor(z, dtype=DTYPE).reshape(1, -1)
    with torch.no_grad():
        D, t, _ = generate(z, params, config)
    return TypedSample(D[0].numpy().copy(), t[0].numpy().copy())


# -- critic ----------------------------------------------------------------


def shifted_softplus(x):
    return F.softplus(x) - math.log(2.0)


def rbf_centers(config: CriticConfig) -> torch.Tensor:
    return torch.linspace(config.r_min, config.r_max, config.n_basis, dtype=DTYPE)


def rbf_expand(distances: torch.Tensor, config: CriticConfig) -> torch.Tensor:
    r = torch.as_tensor(distances, dtype=DTYPE).unsqueeze(-1)
    return torch.exp(-config.gamma * (r - rbf_centers(config)) ** 2)


def init_critic(config: CriticConfig, seed: int = 0, store: ParameterStore | None = None) -> ParameterStore:
    gen = torch.Generator().manual_seed(seed)
    store = ParameterStore() if store is None else store
    f = config.feature_dim
    store["critic.embedding"] = torch.randn(config.n_types, f, generator=gen, dtype=DTYPE)
    for i in range(config.n_interactions):
        p = f"critic.interaction.{i}"
        _dense_init(store, f"{p}.filter1", config.n_basis, f, gen)
        _dense_init(store, f"{p}.filter2", f, f, gen)
        _dense_init(store, f"{p}.in2f", f, f, gen, bias=False)
        _dense_init(store, f"{p}.f2out", f, f, gen, bias=False)
        _dense_init(store, f"{p}.dense", f, f, gen, bias=False)
    _dense_init(store, "critic.readout1", f, f // 2, gen)
    _dense_init(store, "critic.readout2", f // 2, 1, gen)
    return store


def _check(x, layer):
    if not torch.isfinite(x).all():
        raise FloatingPointError(f"non-finite activations in critic layer {layer}")
    return x


def pair_distances(D: torch.Tensor) -> torch.Tensor:
    """``sqrt(D)`` off the diagonal with a gradient that stays finite; zero on it."""
    n = D.shape[-1]
    eye = torch.eye(n, dtype=torch.bool)
    safe = torch.where(eye, torch.ones_like(D), D.clamp_min(1e-12))
    return torch.where(eye, torch.zeros_like(D), torch.sqrt(safe))


def critic_forward(D: torch.Tensor, t: torch.Tensor, params, config: CriticConfig) -> torch.Tensor:
    """Critic score. ``D (m, n, n)``, ``t (m, n, n_types)`` -> ``(m,)``; unbatched inputs give a scalar.

    Atoms start from ``t @ embedding``, exchange continuous-filter messages
    built from RBF-expanded pair distances, and are read out to one scalar
    each before a sum over atoms.
    """
    D = torch.as_tensor(D, dtype=DTYPE)
    t = torch.as_tensor(t, dtype=DTYPE)
    single = D.ndim == 2
    if single:
        D, t = D.unsqueeze(0), t.unsqueeze(0)
    m, n, _ = D.shape
    if t.shape != (m, n, config.n_types):
        raise DimensionError(f"type matrix shape {tuple(t.shape)} does not match ({m}, {n}, {config.n_types})")

    offdiag = (~torch.eye(n, dtype=torch.bool)).to(DTYPE).unsqueeze(-1)
    rbf = rbf_expand(pair_distances(D), config)  # (m, n, n, B)
    x = _check(t @ params["critic.embedding"], "embedding")
    for i in range(config.n_interactions):
        p = f"critic.interaction.{i}"
        W = _dense(shifted_softplus(_dense(rbf, params, f"{p}.filter1")), params, f"{p}.filter2")
        W = W * offdiag
        y = _dense(x, params, f"{p}.in2f")
        agg = (W * y.unsqueeze(1)).sum(dim=2)
        v = _dense(shifted_softplus(_dense(agg, params, f"{p}.f2out")), params, f"{p}.dense")
        x = _check(x + v, f"interaction.{i}")
    h = shifted_softplus(_dense(x, params, "critic.readout1"))
    out = _check(_dense(h, params, "critic.readout2").squeeze(-1).sum(-1), "readout")
    return out[0] if single else out


def critic_score(sample: TypedSample, params, config: CriticConfig) -> float:
    with torch.no_grad():
        return float(critic_forward(sample.D, sample.t, params, config))


def make_critic(params, config: CriticConfig):
    """Bind parameters so the critic can be passed around as ``f(D, t) -> (m,)``."""
    return lambda D, t: critic_forward(D, t, params, config)
