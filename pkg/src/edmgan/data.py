"""Datasets of fixed-composition structures: ingestion, splitting, synthetic stand-ins."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from .autodiff import DTYPE
from .edm import PointSet, edm_from_points
from .io import load_structures, parse_xyz, write_xyz_frames  # noqa: F401  (re-export)

ISOMER_FORMULA = "C7O2H10"
ELEMENT_ORDER = ("C", "O", "H")


def parse_formula(formula: str) -> dict[str, int]:
    """``"C7O2H10"`` -> ``{"C": 7, "O": 2, "H": 10}`` (insertion order kept)."""
    out: dict[str, int] = {}
    for el, cnt in re.findall(r"([A-Z][a-z]?)(\d*)", formula):
        out[el] = out.get(el, 0) + (int(cnt) if cnt else 1)
    if not out or "".join(f"{e}{c}" for e, c in re.findall(r"([A-Z][a-z]?)(\d*)", formula)) != formula:
        raise ValueError(f"cannot parse formula {formula!r}")
    return out


def format_formula(counts: dict[str, int]) -> str:
    return "".join(f"{el}{c if c != 1 else ''}" for el, c in counts.items())


def element_order(counts: dict[str, int]) -> list[str]:
    """Canonical element order: C, O, H first (in that order), then the rest alphabetically."""
    known = [e for e in ELEMENT_ORDER if e in counts]
    return known + sorted(e for e in counts if e not in ELEMENT_ORDER)


def canonical_order(P: PointSet, elements: list[str]) -> PointSet:
    """Reorder atoms into element blocks; order inside a block is preserved."""
    rank = {e: i for i, e in enumerate(elements)}
    idx = sorted(range(P.n), key=lambda i: (rank[P.types[i]], i))
    return PointSet(P.coords[idx], [P.types[i] for i in idx])


@dataclass
class Dataset:
    samples: list[PointSet]
    formula: dict[str, int]
    r_min: float = field(default=float("nan"))

    def __post_init__(self):
        if self.samples and not np.isfinite(self.r_min):
            self.r_min = min_pairwise_distance(self)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n(self) -> int:
        return sum(self.formula.values())

    @property
    def elements(self) -> list[str]:
        return element_order(self.formula)

    def type_matrix(self) -> np.ndarray:
        """One-hot types in canonical atom order, shared by every sample."""
        els = self.elements
        labels = [e for e in els for _ in range(self.formula[e])]
        t = np.zeros((len(labels), len(els)))
        t[np.arange(len(labels)), [els.index(e) for e in labels]] = 1.0
        return t

    def tensors(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Stacked ``(D, t)`` tensors of shape ``(N, n, n)`` and ``(N, n, n_types)``."""
        D = np.stack([edm_from_points(P) for P in self.samples]) if self.samples else np.zeros((0, self.n, self.n))
        t = np.broadcast_to(self.type_matrix(), (len(self.samples),) + self.type_matrix().shape)
        return torch.as_tensor(D, dtype=DTYPE), torch.as_tensor(np.array(t), dtype=DTYPE)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.samples[i] for i in idx], dict(self.formula), self.r_min)


def filter_formula(collection, formula: str | dict[str, int] = ISOMER_FORMULA) -> Dataset:
    counts = parse_formula(formula) if isinstance(formula, str) else dict(formula)
    target = Counter(counts)
    els = element_order(counts)
    kept = [canonical_order(P, els) for P in collection if Counter(P.types) == target]
    return Dataset(kept, counts)


def split(dataset: Dataset, fraction: float = 0.5, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(len(dataset))
    k = int(np.floor(fraction * len(dataset)))
    train, test = dataset.subset(sorted(order[:k])), dataset.subset(sorted(order[k:]))
    # r_min stays a property of the whole subset, not of either half
    return train, test


def min_pairwise_distance(dataset: Dataset) -> float:
    if not dataset.samples:
        raise ValueError("empty dataset")
    best = np.inf
    for P in dataset.samples:
        D = edm_from_points(P)
        if P.n > 1:
            best = min(best, float(np.sqrt(D[np.triu_indices(P.n, 1)].min())))
    return best


# -- synthetic stand-in ------------------------------------------------------

# Two irregular C3O2 clusters (Angstrom). Within each element block every atom
# has a clearly distinct mean squared distance to the rest, so the
# mean-distance assignment cost is unambiguous.
TEMPLATES: list[PointSet] = [
    PointSet(
        [[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.3, 1.25, 0.0], [-0.75, 1.2, 0.35], [1.9, -1.05, 1.1]],
        ["C", "C", "C", "O", "O"],
    ),
    PointSet(
        [[0.0, 0.0, 0.0], [0.55, 1.4, 0.3], [-1.3, -0.6, -0.55], [1.45, 0.25, 0.0], [0.9, 0.9, 1.45]],
        ["C", "C", "C", "O", "O"],
    ),
]


def _make_templates(template_count: int, n: int, rng) -> list[PointSet]:
    if n == 5 and template_count <= len(TEMPLATES):
        return TEMPLATES[:template_count]
    # generic fallback: random clusters with a 1.2 A minimum separation
    out = []
    n_o = max(1, n // 3) if n > 1 else 0
    types = ["C"] * (n - n_o) + ["O"] * n_o
    while len(out) < template_count:
        X = rng.uniform(-1.0, 1.0, size=(n, 3)) * (1.0 + 0.35 * n ** (1 / 3))
        D = edm_from_points(X)
        if n < 2 or np.sqrt(D[np.triu_indices(n, 1)]).min() > 1.2:
            out.append(PointSet(X, types))
    return out


def synthetic_dataset(
    template_count: int = 2,
    n: int = 5,
    noise: float = 0.05,
    size: int = 4096,
    seed: int = 0,
) -> Dataset:
    """Noisy, randomly rotated and relabelled copies of rigid templates.

    Each sample picks a template uniformly, adds i.i.d. Gaussian noise of
    standard deviation ``noise`` to every coordinate, applies a random
    rotation and translation, and shuffles atoms within each element block.
    """
    if n < 2:
        raise ValueError("need at least two atoms")
    rng = np.random.default_rng(seed)
    templates = _make_templates(template_count, n, rng)
    counts = dict(Counter(templates[0].types))
    els = element_order(counts)
    samples = []
    for _ in range(size):
        T = templates[rng.integers(len(templates))]
        X = T.coords + noise * rng.standard_normal(T.coords.shape)
        R = Rotation.random(random_state=rng).as_matrix()
        X = X @ R.T + rng.normal(scale=2.0, size=3)
        P = canonical_order(PointSet(X, T.types), els)
        perm = np.concatenate(
            [rng.permutation(np.flatnonzero(np.array(P.types) == e)) for e in els]
        )
        samples.append(PointSet(P.coords[perm], [P.types[i] for i in perm]))
    return Dataset(samples, counts)


def load_dataset(path, formula: str | None = None) -> Dataset:
    """Load structures from a directory, multi-frame XYZ or tar archive.

    Without ``formula`` the composition of the first structure is used.
    """
    structures = load_structures(path)
    if formula is None:
        if not structures:
            return Dataset([], {})
        counts = Counter(structures[0].types)
        formula = format_formula({e: counts[e] for e in element_order(counts)})
    return filter_formula(structures, formula)


# -- manifest ----------------------------------------------------------------


def write_manifest(path, *, formula: dict[str, int], r_min: float, split_seed: int,
                   train: str, test: str, source: str | None = None) -> None:
    doc = {
        "formula": format_formula(formula),
        "r_min": r_min,
        "split_seed": split_seed,
        "train": train,
        "test": test,
        "source": source,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    base = Path(path).parent
    for key in ("train", "test"):
        if doc.get(key) is not None:
            doc[key] = str(base / doc[key])
    return doc
