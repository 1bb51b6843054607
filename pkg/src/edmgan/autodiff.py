"""Reverse-mode pieces torch does not provide in the form we need.

Tensors are plain ``torch.Tensor`` objects in float64. This module adds

* :class:`EigvalsDesc` and :class:`SpectralFunction`, autograd functions for
  symmetric eigendecompositions with explicit backward rules,
* :func:`grad_check`, a finite-difference check independent of autograd,
* :class:`ParameterStore`, a named collection of trainable tensors with a
  versioned checkpoint format.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Callable, Iterator, Mapping

import numpy as np
import torch

log = logging.getLogger(__name__)

DTYPE = torch.float64
CHECKPOINT_FORMAT = "edmgan-checkpoint"
CHECKPOINT_VERSION = 1

#: relative eigenvalue gap that triggers the jitter fallback
DEGENERACY_TOL = 1e-9
#: jitter magnitude relative to the largest absolute eigenvalue
JITTER_SCALE = 1e-7


class CheckpointError(RuntimeError):
    """Unreadable checkpoint, wrong version, or parameters that do not fit a config."""


def _eigh_desc(A: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    w, U = torch.linalg.eigh(A)
    return w.flip(-1), U.flip(-1)


class EigvalsDesc(torch.autograd.Function):
    """Eigenvalues of a batch of symmetric matrices, sorted descending.

    Backward uses ``d lambda_k / dA = u_k u_k^T``, which stays finite at
    degenerate eigenvalues (any orthonormal basis of the eigenspace is a valid
    subgradient choice).
    """

    @staticmethod
    def forward(ctx, A):
        if not torch.isfinite(A).all():
            raise FloatingPointError("eigendecomposition of a non-finite matrix")
        w, U = _eigh_desc(A)
        ctx.save_for_backward(U)
        return w

    @staticmethod
    def backward(ctx, gw):
        (U,) = ctx.saved_tensors
        return (U * gw.unsqueeze(-2)) @ U.transpose(-1, -2)


_JITTER_CACHE: dict[int, torch.Tensor] = {}


def _jitter_direction(k: int) -> torch.Tensor:
    if k not in _JITTER_CACHE:
        rng = np.random.default_rng(k)
        S = rng.standard_normal((k, k))
        S = 0.5 * (S + S.T)
        _JITTER_CACHE[k] = torch.as_tensor(S / np.linalg.norm(S, 2), dtype=DTYPE)
    return _JITTER_CACHE[k]


def _split_degenerate(A: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Jitter the batch members whose spectrum has a gap below tolerance."""
    scale = w.abs().amax(-1)
    gaps = (w[..., :-1] - w[..., 1:]).amin(-1) if w.shape[-1] > 1 else scale + 1.0
    bad = (gaps < DEGENERACY_TOL * scale) & (scale > 0)
    if not bad.any():
        return A
    log.warning(
        "near-degenerate eigenvalues in %d matrices; applying symmetric jitter",
        int(bad.sum()),
    )
    S = _jitter_direction(A.shape[-1]).to(A.dtype)
    amount = torch.where(bad, JITTER_SCALE * scale, torch.zeros_like(scale))
    return A + amount[..., None, None] * S


def _softplus(x):
    return torch.nn.functional.softplus(x)


class SpectralFunction(torch.autograd.Function):
    """``U g(Lambda) U^T`` with ``g = softplus`` on the top ``d`` eigenvalues.

    ``top_d=None`` applies softplus to every eigenvalue; otherwise eigenvalues
    ranked below ``top_d`` are mapped to zero. Backward follows the
    Daleckii-Krein formula ``U (Gamma o (U^T G U)) U^T`` with divided
    differences ``Gamma``.
    """

    @staticmethod
    def forward(ctx, A, top_d):
        if not torch.isfinite(A).all():
            raise FloatingPointError("eigendecomposition of a non-finite matrix")
        w, U = _eigh_desc(A)
        if top_d is not None:
            A2 = _split_degenerate(A, w)
            if A2 is not A:
                w, U = _eigh_desc(A2)
        g = _softplus(w)
        dg = torch.sigmoid(w)
        if top_d is not None:
            g[..., top_d:] = 0.0
            dg[..., top_d:] = 0.0
        ctx.save_for_backward(w, U, g, dg)
        out = (U * g.unsqueeze(-2)) @ U.transpose(-1, -2)
        return 0.5 * (out + out.transpose(-1, -2))

    @staticmethod
    def backward(ctx, G):
        w, U, g, dg = ctx.saved_tensors
        dw = w.unsqueeze(-1) - w.unsqueeze(-2)
        dgv = g.unsqueeze(-1) - g.unsqueeze(-2)
        tiny = torch.finfo(w.dtype).eps * (1.0 + w.abs().amax(-1, keepdim=True)).unsqueeze(-1)
        close = dw.abs() <= tiny
        safe = torch.where(close, torch.ones_like(dw), dw)
        gamma = torch.where(close, 0.5 * (dg.unsqueeze(-1) + dg.unsqueeze(-2)), dgv / safe)
        Gs = 0.5 * (G + G.transpose(-1, -2))
        Ut = U.transpose(-1, -2)
        return U @ (gamma * (Ut @ Gs @ U)) @ Ut, None


def eigvals_desc(A: torch.Tensor) -> torch.Tensor:
    return EigvalsDesc.apply(A)


def spd_project(A: torch.Tensor, top_d: int | None = 3) -> torch.Tensor:
    """Differentiable, batched counterpart of :func:`edmgan.edm.spd_project`."""
    return SpectralFunction.apply(A, top_d)


def eig_sym_diff(A: torch.Tensor):
    """Descending eigenpairs. Eigenvalues carry the ``u_k u_k^T`` backward rule;
    eigenvectors are returned detached (use :func:`spd_project` for matrix
    functions that need eigenvector gradients)."""
    w = eigvals_desc(A)
    _, U = _eigh_desc(A.detach())
    return w, U


# -- finite differences --------------------------------------------------


def numeric_gradient(f: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, eps: float = 1e-5) -> np.ndarray:
    """Fourth-order central differences of scalar ``f`` at ``x``, one entry at a time."""
    base = x.detach().clone().to(DTYPE)
    flat = base.reshape(-1)
    out = np.empty(flat.numel())

    def ev(v):
        # not under no_grad: f may itself differentiate (gradient penalty)
        val = float(f(v).detach())
        if not np.isfinite(val):
            raise FloatingPointError("non-finite function value during finite differences")
        return val

    for i in range(flat.numel()):
        orig = flat[i].item()
        vals = []
        for step in (2.0, 1.0, -1.0, -2.0):
            flat[i] = orig + step * eps
            vals.append(ev(base))
        flat[i] = orig
        out[i] = (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * eps)
    return out.reshape(tuple(x.shape))


def analytic_gradient(f: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor) -> np.ndarray:
    xx = x.detach().clone().to(DTYPE).requires_grad_(True)
    y = f(xx)
    (g,) = torch.autograd.grad(y, xx, allow_unused=True)
    if g is None:
        return np.zeros(tuple(x.shape))
    return g.detach().numpy()


def grad_check(f: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, eps: float = 1e-5) -> float:
    """Max entrywise relative error between reverse-mode and finite-difference gradients.

    Entries where both gradients are below ``1e-8`` in combined magnitude
    are skipped.
    """
    a = analytic_gradient(f, x)
    n = numeric_gradient(f, x, eps)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        raise FloatingPointError("non-finite gradient")
    mask = (np.abs(a) + np.abs(n)) > 1e-8
    if not mask.any():
        return 0.0
    rel = np.abs(a - n)[mask] / np.maximum(np.abs(a), np.abs(n))[mask]
    return float(rel.max())


# -- parameters ------------------------------------------------------------


class ParameterStore(Mapping[str, torch.Tensor]):
    """Named float64 tensors, iterated in sorted-name order."""

    def __init__(self, tensors: Mapping[str, torch.Tensor] | None = None):
        self._data: dict[str, torch.Tensor] = {}
        for k, v in (tensors or {}).items():
            self[k] = v

    def __setitem__(self, name: str, value) -> None:
        t = torch.as_tensor(value, dtype=DTYPE).detach().clone()
        self._data[name] = t.requires_grad_(True)

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._data[name]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._data))

    def __len__(self) -> int:
        return len(self._data)

    def tensors(self) -> list[torch.Tensor]:
        return [self._data[k] for k in self]

    def subset(self, prefix: str) -> "ParameterStore":
        out = ParameterStore()
        out._data = {k: v for k, v in self._data.items() if k.startswith(prefix)}
        return out

    def zero_grad(self) -> None:
        for t in self._data.values():
            t.grad = None

    def numel(self) -> int:
        return sum(t.numel() for t in self._data.values())

    def to_numpy(self) -> dict[str, np.ndarray]:
        return {k: self._data[k].detach().numpy().copy() for k in self}

    def equal(self, other: "ParameterStore") -> bool:
        return list(self) == list(other) and all(
            torch.equal(self[k].detach(), other[k].detach()) for k in self
        )


def save_checkpoint(path, params: ParameterStore, meta: dict | None = None) -> None:
    """Write ``params`` and a JSON ``meta`` block to a ``.npz`` archive.

    Layout: one array per parameter name (shape and row-major values as
    stored by ``.npy``), plus ``__meta__`` holding a JSON string with the
    format tag, version and caller metadata. The write is atomic.
    """
    path = Path(path)
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "meta": meta or {}}
    arrays = {f"p:{k}": v for k, v in params.to_numpy().items()}
    arrays["__meta__"] = np.array(json.dumps(header, sort_keys=True))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[ParameterStore, dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["__meta__"]))
            tensors = {k[2:]: z[k] for k in z.files if k.startswith("p:")}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint {header.get('format')} v{header.get('version')}"
        )
    return ParameterStore(tensors), header["meta"]
