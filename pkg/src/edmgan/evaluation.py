"""Post-hoc analysis of generated structures.

Structures are compared by first assigning atoms (Hungarian algorithm on a
mean-distance cost restricted to equal element types), then superposing the
reordered coordinates and taking the largest heavy-atom deviation.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .edm import PointSet, edm_from_points

D_CUTOFF = 0.6  # Angstrom
#: deviations below this (Angstrom) are treated as round-off
MATCH_ATOL = 1e-9
COVALENT_RADII = {"C": 0.76, "O": 0.66, "H": 0.31}
VALENCE = {"C": 4, "O": 2, "H": 1}
BOND_FACTOR = 1.3
TYPE_PAIRS = ("CC", "CO", "CH", "OO", "OH", "HH")


class InfeasibleAssignmentError(ValueError):
    """No perfect matching with finite cost exists."""


class UnsupportedElementError(ValueError):
    pass


# -- assignment ----------------------------------------------------------------


def assignment_cost(D1, t1, D2, t2) -> np.ndarray:
    D1, D2 = np.asarray(D1, float), np.asarray(D2, float)
    if D1.shape != D2.shape:
        raise ValueError("structures differ in size")
    t1, t2 = np.asarray(t1), np.asarray(t2)
    if sorted(t1.tolist()) != sorted(t2.tolist()):
        raise InfeasibleAssignmentError("element multisets differ")
    n = D1.shape[0]
    m1, m2 = D1.sum(1) / n, D2.sum(1) / n
    C = np.abs(m1[:, None] - m2[None, :])
    C[t1[:, None] != t2[None, :]] = np.inf
    return C


def hungarian(C) -> np.ndarray:
    """Minimum-cost perfect matching; returns ``sigma`` with row ``i`` -> column ``sigma[i]``.

    Shortest augmenting path formulation with row/column potentials,
    O(n^3). Infinite entries are forbidden pairings.
    """
    C = np.asarray(C, float)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("cost matrix must be square")
    if n == 0:
        return np.zeros(0, dtype=int)
    finite = np.isfinite(C)
    # replace forbidden entries with a cost larger than any finite matching
    big = (np.abs(C[finite]).sum() + 1.0) * (n + 1) if finite.any() else 1.0
    A = np.where(finite, C, big)

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match_col = np.zeros(n + 1, dtype=int)  # column j (1-based) -> row, 0 = free
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        way = np.zeros(n + 1, dtype=int)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            free = ~used[1:]
            cur = A[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match_col[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    sigma = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        sigma[match_col[j] - 1] = j - 1
    if not np.all(finite[np.arange(n), sigma]):
        raise InfeasibleAssignmentError("no finite-cost perfect matching")
    return sigma


def brute_force_assignment(C) -> tuple[np.ndarray, float]:
    """Exhaustive search over all permutations; reference for small ``n``."""
    C = np.asarray(C, float)
    n = C.shape[0]
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        cost = C[np.arange(n), perm].sum()
        if cost < best_cost:
            best, best_cost = np.array(perm), cost
    if best is None:
        raise InfeasibleAssignmentError("no finite-cost perfect matching")
    return best, float(best_cost)


# -- superposition -------------------------------------------------------------


def superpose(P1, P2, proper: bool = False):
    """Least-squares rigid fit of ``P1`` onto ``P2`` (atoms already in correspondence).

    Returns ``(R, t, deviations)`` with ``P2 ~ P1 @ R.T + t``. Reflections are
    allowed unless ``proper`` is set, since an EDM does not fix handedness.
    """
    X = P1.coords if isinstance(P1, PointSet) else np.asarray(P1, float)
    Y = P2.coords if isinstance(P2, PointSet) else np.asarray(P2, float)
    if X.shape != Y.shape:
        raise ValueError("point sets differ in shape")
    cx, cy = X.mean(0), Y.mean(0)
    H = (X - cx).T @ (Y - cy)
    U, _, Vt = np.linalg.svd(H)
    if proper and np.linalg.det(Vt.T @ U.T) < 0:
        Vt[-1] *= -1
    R = Vt.T @ U.T
    t = cy - cx @ R.T
    dev = np.linalg.norm(X @ R.T + t - Y, axis=1)
    return R, t, dev


def rmsd(X, Y) -> float:
    return float(np.sqrt(np.mean(np.sum((np.asarray(X) - np.asarray(Y)) ** 2, axis=1))))


@dataclass
class MatchResult:
    permutation: np.ndarray
    max_heavy_deviation: float
    distinct: bool


def match_structures(s1: PointSet, s2: PointSet, cutoff: float = D_CUTOFF, proper: bool = False) -> MatchResult:
    """Assign atoms of ``s1`` to ``s2``, superpose and report the worst heavy-atom deviation."""
    D1, D2 = edm_from_points(s1), edm_from_points(s2)
    C = assignment_cost(D1, s1.types, D2, s2.types)
    sigma = hungarian(C)
    _, _, dev = superpose(s1.coords, s2.coords[sigma], proper=proper)
    heavy = np.array([t != "H" for t in s1.types])
    worst = float(dev[heavy].max()) if heavy.any() else 0.0
    # superposing identical structures leaves round-off; don't call that distinct
    return MatchResult(sigma, worst, worst > cutoff + MATCH_ATOL)


def try_match(s1, s2, cutoff=D_CUTOFF, proper=False) -> MatchResult | None:
    try:
        return match_structures(s1, s2, cutoff, proper)
    except InfeasibleAssignmentError:
        return None


@dataclass
class UniquenessResult:
    known_a: int = 0
    known_b: int = 0
    novel: int = 0
    duplicates: int = 0
    curve: list[tuple[int, int, int, int]] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_index", "known_A", "known_B", "novel"])
            w.writerows(self.curve)


def _closest(sample, refs, cutoff, proper):
    best, best_dev = None, np.inf
    for k, ref in enumerate(refs):
        res = try_match(sample, ref, cutoff, proper)
        if res is not None and res.max_heavy_deviation < best_dev:
            best, best_dev = k, res.max_heavy_deviation
    if best is not None and best_dev <= cutoff + MATCH_ATOL:
        return best
    return None


def uniqueness_count(samples, refs_a, refs_b=(), cutoff: float = D_CUTOFF, proper: bool = False) -> UniquenessResult:
    """Greedy streaming count of distinct conformations.

    Each sample is matched to its closest reference in set A, then set B, and
    finally to the novel structures accepted so far. A sample whose match was
    already claimed by an earlier sample is a duplicate and is not counted.
    Labels per sample are ``"A"``, ``"B"``, ``"novel"`` or ``"duplicate"``.
    """
    res = UniquenessResult()
    claimed_a, claimed_b = set(), set()
    novel: list[PointSet] = []
    for idx, s in enumerate(samples):
        label = None
        k = _closest(s, refs_a, cutoff, proper)
        if k is not None:
            label = "duplicate" if k in claimed_a else "A"
            claimed_a.add(k)
        else:
            k = _closest(s, refs_b, cutoff, proper)
            if k is not None:
                label = "duplicate" if k in claimed_b else "B"
                claimed_b.add(k)
            elif _closest(s, novel, cutoff, proper) is not None:
                label = "duplicate"
            else:
                label = "novel"
                novel.append(s)
        if label == "A":
            res.known_a += 1
        elif label == "B":
            res.known_b += 1
        elif label == "novel":
            res.novel += 1
        else:
            res.duplicates += 1
        res.labels.append(label)
        res.curve.append((idx, res.known_a, res.known_b, res.novel))
    return res


# -- validity ------------------------------------------------------------------


def infer_bonds(P: PointSet, bond_factor: float = BOND_FACTOR) -> list[tuple[int, int]]:
    for t in P.types:
        if t not in COVALENT_RADII:
            raise UnsupportedElementError(f"no covalent radius for element {t!r}")
    D = np.sqrt(edm_from_points(P))
    r = np.array([COVALENT_RADII[t] for t in P.types])
    limit = bond_factor * (r[:, None] + r[None, :])
    i, j = np.nonzero(np.triu(D < limit, 1))
    return list(zip(i.tolist(), j.tolist()))


def _connected(n, bonds) -> bool:
    if n <= 1:
        return True
    adj = [[] for _ in range(n)]
    for i, j in bonds:
        adj[i].append(j)
        adj[j].append(i)
    seen, stack = {0}, [0]
    while stack:
        for k in adj[stack.pop()]:
            if k not in seen:
                seen.add(k)
                stack.append(k)
    return len(seen) == n


def validity_check(P: PointSet, bond_factor: float = BOND_FACTOR) -> tuple[bool, list[str]]:
    """Distance-based bond inference followed by exact valence and connectivity tests.

    A simplified stand-in for bond perception: single bonds only, so every
    atom's neighbour count must equal its valence.
    """
    bonds = infer_bonds(P, bond_factor)
    degree = np.zeros(P.n, dtype=int)
    for i, j in bonds:
        degree[i] += 1
        degree[j] += 1
    reasons = []
    for k, (t, deg) in enumerate(zip(P.types, degree)):
        if deg != VALENCE[t]:
            reasons.append(f"atom {k} ({t}) has {deg} bonds, valence {VALENCE[t]}")
    if not _connected(P.n, bonds):
        reasons.append("disconnected")
    return not reasons, reasons


# -- distance distributions ----------------------------------------------------


@dataclass
class Histogram:
    edges: np.ndarray
    mass: np.ndarray  # probability per bin; all zero when nothing was selected

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        return self.mass / np.diff(self.edges)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center", "density"])
            for c, d in zip(self.centers, self.density):
                w.writerow([f"{c:.6g}", f"{d:.6g}"])


def pair_distances(structures, type_pair: str | None = None) -> np.ndarray:
    """Distances of unordered atom pairs, optionally restricted to an element pair like ``"CH"``."""
    out = []
    for P in structures:
        D = np.sqrt(edm_from_points(P))
        i, j = np.triu_indices(P.n, 1)
        if type_pair is not None:
            a, b = type_pair[0], type_pair[1]
            ti, tj = np.array(P.types)[i], np.array(P.types)[j]
            keep = ((ti == a) & (tj == b)) | ((ti == b) & (tj == a))
            i, j = i[keep], j[keep]
        out.append(D[i, j])
    return np.concatenate(out) if out else np.zeros(0)


def distance_histogram(structures, type_pair: str | None = None, bins: int = 100,
                       range_: tuple[float, float] = (0.0, 10.0)) -> Histogram:
    d = pair_distances(structures, type_pair)
    counts, edges = np.histogram(d, bins=bins, range=range_)
    total = counts.sum()
    mass = counts / total if total else counts.astype(float)
    return Histogram(edges, mass)


def distance_histograms(structures, bins: int = 100, range_=(0.0, 10.0)) -> dict[str, Histogram]:
    return {p: distance_histogram(structures, p, bins, range_) for p in TYPE_PAIRS}


def histogram_distance(h1: Histogram, h2: Histogram) -> float:
    """1-Wasserstein distance between two histograms on the same bins."""
    if h1.edges.shape != h2.edges.shape or not np.allclose(h1.edges, h2.edges):
        raise ValueError("histograms use different binning")
    cdf_diff = np.cumsum(h1.mass - h2.mass)
    return float(np.sum(np.abs(cdf_diff[:-1]) * np.diff(h1.centers)))
