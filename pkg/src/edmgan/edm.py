"""Euclidean distance matrices, Gram matrices and coordinate embeddings.

All functions here are pure numpy transformations on single (unbatched)
matrices. Differentiable batched counterparts used during training live in
:mod:`edmgan.autodiff` and :mod:`edmgan.networks`.

Conventions
-----------
* ``D`` holds *squared* pairwise distances (units of length squared).
* The Gram matrix ``M`` is taken relative to the first point, so its first
  row and column are zero and ``M[1:, 1:]`` is the inner block ``L``.
* Spectra are sorted in descending order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

#: default relative tolerance for rank and PSD decisions
EIG_TOL = 1e-9


class DimensionError(ValueError):
    """Raised for matrices of the wrong shape or a too-small target dimension."""


class NotAnEDMError(ValueError):
    """Raised when an operation requires a valid EDM and gets something else."""


@dataclass
class Spectrum:
    """Eigendecomposition of a symmetric matrix, largest eigenvalue first."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns


@dataclass
class PointSet:
    """``n`` points in ``d`` dimensions with one element label per point."""

    coords: np.ndarray
    types: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if not self.types:
            self.types = ["X"] * len(self.coords)
        self.types = [str(t) for t in self.types]
        if len(self.types) != len(self.coords):
            raise DimensionError(
                f"{len(self.types)} type labels for {len(self.coords)} points"
            )

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


def _square(A, name="matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def sym_eig(A) -> Spectrum:
    """Eigendecomposition with descending eigenvalues and a fixed sign convention.

    Each eigenvector is flipped so that its largest-magnitude component is
    positive, which makes the output reproducible across LAPACK builds.
    """
    A = _square(A)
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("eigendecomposition of a non-finite matrix")
    w, U = np.linalg.eigh(0.5 * (A + A.T))
    w, U = w[::-1], U[:, ::-1]
    if U.size:
        idx = np.argmax(np.abs(U), axis=0)
        signs = np.sign(U[idx, np.arange(U.shape[1])])
        signs[signs == 0] = 1.0
        U = U * signs
    return Spectrum(w.copy(), U.copy())


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def symmetrize(X) -> np.ndarray:
    X = _square(X, "raw matrix")
    return 0.5 * (X + X.T)


def spd_project(
    L: np.ndarray,
    mode: Literal["softplus_all", "softplus_top_d"] = "softplus_top_d",
    d: int = 3,
) -> np.ndarray:
    """Map a symmetric matrix to a PSD one by applying softplus to its spectrum.

    In ``softplus_top_d`` mode only the ``d`` largest eigenvalues are mapped
    through softplus; the remaining ones are set to exactly zero, so the
    result has rank at most ``d``.
    """
    spec = sym_eig(L)
    g = softplus(spec.eigenvalues)
    if mode == "softplus_top_d":
        g[d:] = 0.0
    elif mode != "softplus_all":
        raise ValueError(f"unknown spd_project mode {mode!r}")
    U = spec.eigenvectors
    out = (U * g) @ U.T
    return 0.5 * (out + out.T)


def gram_from_inner(L) -> np.ndarray:
    L = _square(L, "inner block")
    n = L.shape[0] + 1
    M = np.zeros((n, n))
    M[1:, 1:] = L
    return M


def edm_from_gram(M) -> np.ndarray:
    M = _square(M, "Gram matrix")
    diag = np.diag(M)
    D = diag[:, None] + diag[None, :] - 2.0 * M
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def gram_from_edm(D) -> np.ndarray:
    """Gram matrix of the points translated so that the first one is at the origin."""
    D = _square(D, "distance matrix")
    M = 0.5 * (D[0][None, :] + D[:, 0][:, None] - D)
    M = 0.5 * (M + M.T)
    M[0, :] = 0.0
    M[:, 0] = 0.0
    return M


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def schoenberg_operator(D) -> np.ndarray:
    """Return ``-J D J / 2`` with ``J`` the centering matrix."""
    D = _square(D, "distance matrix")
    # double centering without forming J
    B = D - D.mean(axis=0, keepdims=True) - D.mean(axis=1, keepdims=True) + D.mean()
    B = -0.5 * B
    return 0.5 * (B + B.T)


def is_edm(D, tol: float = EIG_TOL) -> tuple[bool, float]:
    """Schoenberg test. Returns ``(flag, min_eigenvalue)``.

    ``flag`` holds iff the smallest eigenvalue of the double-centred matrix
    is at least ``-tol * trace``.
    """
    B = schoenberg_operator(D)
    if B.shape[0] == 0:
        return True, 0.0
    mu = np.linalg.eigvalsh(B)
    mu_min = float(mu[0])
    return bool(mu_min >= -tol * max(np.trace(B), 0.0)), mu_min


def _gram_rank(M, tol: float) -> int:
    w = np.linalg.eigvalsh(M)
    top = w[-1] if w.size else 0.0
    if top <= 0.0:
        return 0
    return int(np.sum(w > tol * top))


def embedding_dimension(D, tol: float = EIG_TOL) -> int:
    ok, mu_min = is_edm(D, tol)
    if not ok:
        raise NotAnEDMError(f"not an EDM (min Schoenberg eigenvalue {mu_min:.3e})")
    return _gram_rank(gram_from_edm(D), tol)


def embed(D, d: int = 3, tol: float = EIG_TOL) -> PointSet:
    """Coordinates realising ``D`` in ``d`` dimensions, first point at the origin.

    Only the eigen-directions counted by the rank tolerance are kept;
    eigenvalues below it (round-off on exactly low-rank inputs, or slightly
    negative values on nearly valid EDMs) become zero. The result is only
    defined up to rotation and reflection.
    """
    D = _square(D, "distance matrix")
    if d < 1:
        raise DimensionError("target dimension must be positive")
    ok, mu_min = is_edm(D, tol)
    if not ok:
        raise NotAnEDMError(f"not an EDM (min Schoenberg eigenvalue {mu_min:.3e})")
    M = gram_from_edm(D)
    k = _gram_rank(M, tol)
    if d < k:
        raise DimensionError(f"embedding dimension is {k}, cannot embed in {d}")
    spec = sym_eig(M)
    lam = np.clip(spec.eigenvalues[:d], 0.0, None)
    lam[k:] = 0.0
    Y = spec.eigenvectors[:, :d] * np.sqrt(lam)
    if Y.shape[1] < d:
        Y = np.hstack([Y, np.zeros((Y.shape[0], d - Y.shape[1]))])
    return PointSet(Y)


def edm_from_points(P) -> np.ndarray:
    X = P.coords if isinstance(P, PointSet) else np.atleast_2d(np.asarray(P, float))
    diff = X[:, None, :] - X[None, :, :]
    D = np.einsum("ijk,ijk->ij", diff, diff)
    return 0.5 * (D + D.T)


def relative_error(A, B) -> float:
    """``max|A - B| / max|B|`` (absolute error when ``B`` is zero)."""
    A, B = np.asarray(A, float), np.asarray(B, float)
    scale = np.max(np.abs(B)) if B.size else 0.0
    err = np.max(np.abs(A - B)) if A.size else 0.0
    return float(err / scale) if scale > 0 else float(err)


def permute(D, perm: Sequence[int]) -> np.ndarray:
    perm = np.asarray(perm)
    return np.asarray(D)[np.ix_(perm, perm)]
