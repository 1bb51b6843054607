"""Plain-text file formats: matrices as CSV, point sets as XYZ."""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Iterator

import numpy as np

from .edm import PointSet


class ParseError(ValueError):
    """Malformed input file. The message carries the offending line number."""


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise ParseError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() != len(rows):
        raise ParseError(f"{path}: matrix is not square")
    return np.array(rows)


def write_matrix_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in A:
            writer.writerow([repr(float(x)) for x in row])


def _float(tok: str) -> float:
    # QM9 writes exponents as "1.2*^-6"
    return float(tok.replace("*^", "e"))


def _looks_like_atom(line: str) -> bool:
    parts = line.split()
    if len(parts) < 4 or not parts[0][:1].isalpha():
        return False
    try:
        [_float(p) for p in parts[1:4]]
    except ValueError:
        return False
    return True


def _read_frame(lines: list[str], start: int, path) -> tuple[PointSet, str, int]:
    """Parse one XYZ frame starting at ``lines[start]``; return it and the next index."""
    try:
        count = int(lines[start].strip())
    except (ValueError, IndexError):
        raise ParseError(f"{path}:{start + 1}: expected an atom count") from None
    if count < 0:
        raise ParseError(f"{path}:{start + 1}: negative atom count")
    comment = lines[start + 1].rstrip("\n") if start + 1 < len(lines) else ""
    types, coords = [], []
    for k in range(count):
        idx = start + 2 + k
        if idx >= len(lines) or not lines[idx].strip():
            raise ParseError(f"{path}:{idx + 1}: expected {count} atoms, found {k}")
        parts = lines[idx].split()
        if len(parts) < 4:
            raise ParseError(f"{path}:{idx + 1}: expected 'Element x y z'")
        try:
            coords.append([_float(p) for p in parts[1:4]])
        except ValueError:
            raise ParseError(f"{path}:{idx + 1}: bad coordinate") from None
        types.append(parts[0])
    return PointSet(np.array(coords).reshape(count, 3), types), comment, start + 2 + count


def parse_xyz(path) -> PointSet:
    """Read a single-frame XYZ file.

    Trailing non-atom lines (as in QM9's extended XYZ, which appends
    frequencies, SMILES and InChI) are ignored; a trailing line that looks
    like another atom record means the count line is wrong.
    """
    with open(path) as fh:
        lines = fh.readlines()
    P, _, nxt = _read_frame(lines, 0, path)
    if nxt < len(lines) and _looks_like_atom(lines[nxt]):
        raise ParseError(f"{path}:{nxt + 1}: more atoms than the count line declares")
    return P


def iter_xyz_frames(path) -> Iterator[PointSet]:
    """Iterate over the frames of a (possibly multi-frame) XYZ file."""
    with open(path) as fh:
        lines = fh.readlines()
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        P, _, pos = _read_frame(lines, pos, path)
        yield P


def format_xyz(P: PointSet, comment: str = "") -> str:
    coords = P.coords
    if coords.shape[1] < 3:
        coords = np.hstack([coords, np.zeros((P.n, 3 - coords.shape[1]))])
    out = [str(P.n), comment.replace("\n", " ")]
    for t, (x, y, z) in zip(P.types, coords[:, :3]):
        out.append(f"{t} {float(x)!r} {float(y)!r} {float(z)!r}")
    return "\n".join(out) + "\n"


def write_xyz(path, P: PointSet, comment: str = "") -> None:
    Path(path).write_text(format_xyz(P, comment))


def write_xyz_frames(path, frames, comments=None) -> None:
    comments = comments or [""] * len(frames)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        for P, c in zip(frames, comments):
            fh.write(format_xyz(P, c))
    os.replace(tmp, path)


def load_structures(path) -> list[PointSet]:
    """Load every structure under ``path``.

    ``path`` may be a directory of ``.xyz`` files (sorted by name), a
    multi-frame ``.xyz`` file, or a tar archive of ``.xyz`` files such as the
    QM9 distribution.
    """
    import tarfile
    import tempfile

    path = Path(path)
    if path.is_dir():
        return [parse_xyz(p) for p in sorted(path.glob("*.xyz"))]
    if path.suffix != ".xyz" and tarfile.is_tarfile(path):
        out = []
        with tarfile.open(path) as tar, tempfile.TemporaryDirectory() as tmp:
            members = sorted(
                (m for m in tar.getmembers() if m.isfile() and m.name.endswith(".xyz")),
                key=lambda m: m.name,
            )
            for m in members:
                target = Path(tmp) / "frame.xyz"
                target.write_bytes(tar.extractfile(m).read())
                out.append(parse_xyz(target))
        return out
    return list(iter_xyz_frames(path))
