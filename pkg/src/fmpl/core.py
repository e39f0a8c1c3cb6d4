"""Datasets, graphs and the scatter-matrix / log-determinant machinery.

Everything downstream (scoring, search, evaluation) consumes the types
defined here. Node indices are 0-based throughout.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, NotPositiveDefiniteError

GRAPH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """An n x p matrix of observations (rows) plus standardization metadata."""

    values: np.ndarray
    standardized: bool = False
    column_means: np.ndarray | None = None
    column_sds: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise InputError("dataset must be a 2-d table")
        if values.shape[0] < 2:
            raise InputError(f"need at least 2 observations, got {values.shape[0]}")
        if values.shape[1] < 1:
            raise InputError("need at least 1 variable")
        if not np.all(np.isfinite(values)):
            raise InputError("dataset contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def standardize(self) -> "Dataset":
        """Center each column and scale it to unit sample sd (divisor n - 1)."""
        means = self.values.mean(axis=0)
        sds = self.values.std(axis=0, ddof=1)
        scale = np.maximum(np.abs(means), 1.0)
        constant = np.flatnonzero(sds <= 1e-12 * scale)
        if constant.size:
            raise InputError(
                f"cannot standardize constant column(s) {constant.tolist()}"
            )
        return Dataset((self.values - means) / sds, True, means, sds)

    def transform_like(self, reference: "Dataset") -> "Dataset":
        """Center and scale with another dataset's recorded means and sds."""
        if not reference.standardized:
            return self
        if reference.p != self.p:
            raise InputError(f"variable count mismatch: {self.p} vs {reference.p}")
        vals = (self.values - reference.column_means) / reference.column_sds
        return Dataset(vals, True, reference.column_means, reference.column_sds)

    def head(self, n: int) -> "Dataset":
        return Dataset(self.values[:n])


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"non-numeric cell {text!r} at row {row}, column {col}") from None


def _looks_numeric(cells: Sequence[str]) -> bool:
    try:
        [float(c) for c in cells]
    except ValueError:
        return False
    return True


def parse_table(text: str) -> np.ndarray:
    """Parse comma-separated numeric text; a non-numeric first row is a header."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError("empty table")
    start = 0 if _looks_numeric([c.strip() for c in rows[0]]) else 1
    width = len(rows[0])
    out = []
    for k, r in enumerate(rows[start:], start=start + 1):
        if len(r) != width:
            raise InputError(f"ragged row {k}: expected {width} cells, got {len(r)}")
        out.append([_parse_cell(c.strip(), k, i) for i, c in enumerate(r)])
    if not out:
        raise InputError("table has a header but no data rows")
    return np.array(out, dtype=float)


def load_dataset(source, standardize: bool = False) -> Dataset:
    """Load a dataset from CSV text, a path, or a nested sequence of numbers.

    Parameters
    ----------
    source : str, Path or array-like
        A path to a CSV file, raw CSV text (anything containing a newline or a
        comma), or a rectangular numeric table.
    standardize : bool
        If true, columns are centered and divided by their sample sd.
    """
    if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source and "," not in source
    ):
        source = Path(source).read_text()
    if isinstance(source, str):
        values = parse_table(source)
    else:
        rows = list(source)
        widths = {len(np.atleast_1d(r)) for r in rows}
        if len(widths) > 1:
            raise InputError("ragged rows in table")
        try:
            values = np.array(rows, dtype=float)
        except (TypeError, ValueError) as exc:
            raise InputError(f"non-numeric cell: {exc}") from None
    data = Dataset(values)
    return data.standardize() if standardize else data


def write_table(path, values: np.ndarray, header: Sequence[str] | None = None):
    """Write a numeric matrix as CSV with round-trip float precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in np.atleast_2d(values):
            w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class ScatterMatrix:
    """Unscaled cross-product matrix S = X^T X and the sample count behind it."""

    s: np.ndarray
    n: int

    def __post_init__(self):
        s = np.array(self.s, dtype=float, copy=True)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InputError("scatter matrix must be square")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def p(self) -> int:
        return self.s.shape[0]


def scatter(dataset: Dataset) -> ScatterMatrix:
    x = dataset.values
    s = x.T @ x
    # Exact symmetry so submatrix factorizations never see rounding skew.
    s = 0.5 * (s + s.T)
    return ScatterMatrix(s, dataset.n)


def _as_index(subset: Iterable[int]) -> np.ndarray:
    return np.fromiter(subset, dtype=np.intp)


def _cholesky(sub: np.ndarray, subset) -> np.ndarray:
    try:
        L = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(subset) from None
    d = np.diagonal(L)
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise NotPositiveDefiniteError(subset)
    return L


def logdet_submatrix(scatter: ScatterMatrix, subset: Iterable[int]) -> float:
    """log |S_subset| via Cholesky; the empty subset has log-determinant 0."""
    idx = _as_index(sorted(subset))
    if idx.size == 0:
        return 0.0
    L = _cholesky(scatter.s[np.ix_(idx, idx)], tuple(idx.tolist()))
    return 2.0 * float(np.sum(np.log(np.diagonal(L))))


def logdet_pair(scatter: ScatterMatrix, j: int, mb: Iterable[int]) -> tuple[float, float]:
    """Return ``(log|S_mb|, log|S_fa|)`` with fa = mb + {j} from one factorization.

    The Cholesky factor of S ordered as (mb..., j) contains the factor of S_mb
    as its leading block, so both determinants come from a single
    decomposition.
    """
    members = sorted(mb)
    if j in members:
        raise InputError(f"node {j} cannot be in its own conditioning set")
    idx = _as_index(members + [j])
    L = _cholesky(scatter.s[np.ix_(idx, idx)], tuple(members) + (j,))
    logd = 2.0 * np.log(np.diagonal(L))
    ld_fa = float(np.sum(logd))
    ld_mb = float(np.sum(logd[:-1]))
    return ld_mb, ld_fa


def schur_conditional_variance(scatter: ScatterMatrix, j: int, mb: Iterable[int]) -> float:
    """Residual S_jj - S_j,mb S_mb^-1 S_mb,j of node j after regressing on mb."""
    members = sorted(mb)
    if j in members:
        raise InputError(f"node {j} cannot be in its own conditioning set")
    s = scatter.s
    if not members:
        return float(s[j, j])
    idx = _as_index(members)
    L = _cholesky(s[np.ix_(idx, idx)], tuple(members))
    # S_j,mb S_mb^-1 S_mb,j = |L^-1 S_mb,j|^2
    w = solve_triangular(L, s[idx, j], lower=True)
    return float(s[j, j] - w @ w)


@dataclass(frozen=True)
class UndirectedGraph:
    """p nodes and a set of undirected edges stored as (i, j) with i < j."""

    p: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.p < 0:
            raise InputError("node count must be non-negative")
        canon = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise InputError(f"self-loop on node {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise InputError(f"edge ({i}, {j}) out of range for p={self.p}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(canon))

    def markov_blanket(self, j: int) -> frozenset:
        return frozenset(b if a == j else a for a, b in self.edges if j in (a, b))

    def blankets(self) -> "MarkovBlanketFamily":
        mbs = [set() for _ in range(self.p)]
        for i, j in self.edges:
            mbs[i].add(j)
            mbs[j].add(i)
        return MarkovBlanketFamily(tuple(frozenset(m) for m in mbs))

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def density(self) -> float:
        pairs = self.p * (self.p - 1) // 2
        return self.n_edges / pairs if pairs else 0.0

    def to_dict(self) -> dict:
        return {"edges": [list(e) for e in self.edge_list()], "p": self.p}

    @classmethod
    def from_dict(cls, obj: dict) -> "UndirectedGraph":
        try:
            p = int(obj["p"])
            edges = [tuple(e) for e in obj["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed graph object: {exc}") from None
        for e in edges:
            if len(e) != 2:
                raise InputError(f"edge {list(e)} does not have two endpoints")
        return cls(p, frozenset(edges))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "UndirectedGraph":
        adj = np.asarray(adj)
        p = adj.shape[0]
        ii, jj = np.nonzero(np.triu(adj != 0, k=1))
        return cls(p, frozenset(zip(ii.tolist(), jj.tolist())))


def write_graph(path, graph: UndirectedGraph, version: bool = True):
    obj = graph.to_dict()
    if version:
        obj["version"] = GRAPH_FORMAT_VERSION
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n")


def read_graph(path) -> UndirectedGraph:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    return UndirectedGraph.from_dict(obj)


@dataclass(frozen=True)
class MarkovBlanketFamily:
    """Per-node blanket sets as returned by search; not necessarily symmetric."""

    blankets: tuple

    def __post_init__(self):
        mbs = tuple(frozenset(int(i) for i in b) for b in self.blankets)
        p = len(mbs)
        for j, b in enumerate(mbs):
            if j in b:
                raise InputError(f"blanket of node {j} contains the node itself")
            if any(not 0 <= i < p for i in b):
                raise InputError(f"blanket of node {j} has out-of-range members")
        object.__setattr__(self, "blankets", mbs)

    @property
    def p(self) -> int:
        return len(self.blankets)

    def __getitem__(self, j: int) -> frozenset:
        return self.blankets[j]

    def __iter__(self):
        return iter(self.blankets)

    def __len__(self):
        return len(self.blankets)

    def is_symmetric(self) -> bool:
        return all(j in self.blankets[i] for j, b in enumerate(self.blankets) for i in b)

