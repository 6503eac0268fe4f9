"""Dataset ingestion and validation.

The three named datasets ship as fixture CSVs under cveval/data; loaders
accept explicit paths so alternate copies (or deliberately corrupted test
files) can be read with the same validation. Loaders reject any file that
would silently change the unit count of a named dataset.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import LoadError

__all__ = ["SeedsData", "LipCancerData", "load_galaxy", "load_lipcancer", "load_seeds", "data_path"]


def data_path(name: str) -> Path:
    """Filesystem path of a packaged fixture file."""
    return Path(resources.files("cveval.data") / name)


def _read_csv(path, columns) -> dict[str, list[str]]:
    path = Path(path)
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise LoadError(f"cannot read {path}: {e}") from e
    if rows and any(c not in rows[0] for c in columns):
        raise LoadError(f"{path}: expected columns {columns}, found {sorted(rows[0])}")
    return {c: [row[c] for row in rows] for c in columns}


def load_galaxy(path=None) -> np.ndarray:
    """82 galaxy velocities, divided by 1000 at load time."""
    path = data_path("galaxy.csv") if path is None else path
    cols = _read_csv(path, ["velocity"])
    v = np.array([float(x) for x in cols["velocity"]])
    if v.size != 82:
        raise LoadError(f"{path}: expected 82 velocities, found {v.size}")
    return v / 1000.0


@dataclass
class SeedsData:
    """Germination counts on 21 plates in a 2x2 factorial layout."""

    r: np.ndarray
    n: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    @property
    def n_units(self) -> int:
        return self.r.size


def load_seeds(path=None) -> SeedsData:
    path = data_path("seeds.csv") if path is None else path
    cols = _read_csv(path, ["r", "n", "x1", "x2"])
    r = np.array([int(v) for v in cols["r"]])
    n = np.array([int(v) for v in cols["n"]])
    x1 = np.array([int(v) for v in cols["x1"]])
    x2 = np.array([int(v) for v in cols["x2"]])
    if r.size != 21:
        raise LoadError(f"{path}: expected 21 plates, found {r.size}")
    for i, (ri, ni) in enumerate(zip(r, n)):
        if ri > ni:
            raise LoadError(f"{path}: row {i + 1} has r = {ri} > n = {ni}")
    if np.any((x1 != 0) & (x1 != 1)) or np.any((x2 != 0) & (x2 != 1)):
        raise LoadError(f"{path}: x1 and x2 must be 0/1")
    if {(a, b) for a, b in zip(x1.tolist(), x2.tolist())} != {(0, 0), (0, 1), (1, 0), (1, 1)}:
        raise LoadError(f"{path}: factorial layout incomplete (missing an (x1, x2) cell)")
    return SeedsData(r=r, n=n, x1=x1, x2=x2)


@dataclass
class LipCancerData:
    """Observed and expected lip cancer counts for 56 districts, a covariate,
    and the symmetric neighbour structure (0-indexed adjacency lists)."""

    y: np.ndarray
    expected: np.ndarray
    x: np.ndarray
    neighbors: list[list[int]] = field(repr=False)

    @property
    def n_units(self) -> int:
        return self.y.size

    def adjacency_matrix(self) -> np.ndarray:
        n = self.n_units
        a = np.zeros((n, n))
        for i, ns in enumerate(self.neighbors):
            a[i, ns] = 1.0
        return a


def load_lipcancer(data_path_=None, adjacency_path=None, symmetrize=False) -> LipCancerData:
    """Load the district table and the `district: neighbor ...` adjacency file.

    The adjacency must list every edge from both ends; an asymmetric listing
    raises naming the offending pair unless symmetrize=True, which takes the
    union of the directed listings with a warning.
    """
    dpath = data_path("lipcancer.csv") if data_path_ is None else data_path_
    apath = data_path("lipcancer_adj.txt") if adjacency_path is None else adjacency_path
    cols = _read_csv(dpath, ["district", "y", "E", "x"])
    district = [int(v) for v in cols["district"]]
    y = np.array([int(v) for v in cols["y"]])
    expected = np.array([float(v) for v in cols["E"]])
    x = np.array([float(v) for v in cols["x"]])
    n = y.size
    if n != 56:
        raise LoadError(f"{dpath}: expected 56 districts, found {n}")
    if district != list(range(1, n + 1)):
        raise LoadError(f"{dpath}: district column must run 1..{n} in order")
    if np.any(expected <= 0):
        raise LoadError(f"{dpath}: expected counts must be positive")

    neighbors: dict[int, list[int]] = {}
    with open(apath) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            head, _, tail = line.partition(":")
            try:
                i = int(head)
                ns = [int(t) for t in tail.split()]
            except ValueError as e:
                raise LoadError(f"{apath}: line {lineno} is not 'district: neighbors'") from e
            if i in neighbors:
                raise LoadError(f"{apath}: duplicate entry for district {i}")
            neighbors[i] = ns
    if sorted(neighbors) != list(range(1, n + 1)):
        raise LoadError(f"{apath}: adjacency must cover districts 1..{n} exactly")
    for i, ns in neighbors.items():
        if i in ns:
            raise LoadError(f"{apath}: district {i} lists itself as a neighbour")
        if len(ns) != len(set(ns)):
            raise LoadError(f"{apath}: district {i} lists a neighbour twice")
        if any(j < 1 or j > n for j in ns):
            raise LoadError(f"{apath}: district {i} lists an out-of-range neighbour")
    asym = [(i, j) for i, ns in sorted(neighbors.items()) for j in ns if i not in neighbors[j]]
    if asym:
        if not symmetrize:
            i, j = asym[0]
            raise LoadError(
                f"{apath}: asymmetric adjacency: {i} lists {j} but {j} does not list {i}"
            )
        warnings.warn(f"symmetrizing one-sided adjacency listing ({len(asym)} directed edges)")
        for i, j in asym:
            neighbors[j].append(i)
        neighbors = {i: sorted(ns) for i, ns in neighbors.items()}

    zero_index = [sorted(v - 1 for v in neighbors[i]) for i in range(1, n + 1)]
    return LipCancerData(y=y, expected=expected, x=x, neighbors=zero_index)
