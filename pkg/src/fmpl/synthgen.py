"""Synthetic graphs, graph-constrained precision matrices and Gaussian samples.

Randomness comes from numpy's ``Generator`` over the PCG64 bit generator
(``numpy.random.default_rng(seed)``). One generator is threaded through graph
construction, precision sampling and data sampling, so a seed pins down every
artifact of a simulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .core import Dataset, UndirectedGraph
from .errors import InputError

PRIMITIVE_KINDS = ("cycle", "path", "star", "grid", "random")
DEFAULT_BLOCKS = ("cycle", "path", "star", "grid")


def parse_kind(kind: str) -> tuple[str, Optional[float]]:
    """Split ``"random(0.3)"`` / ``"random:0.3"`` into ("random", 0.3)."""
    text = kind.strip().lower()
    for sep in ("(", ":"):
        if sep in text:
            name, arg = text.split(sep, 1)
            arg = arg.rstrip(")")
            try:
                prob = float(arg)
            except ValueError:
                raise InputError(f"bad edge probability in block kind {kind!r}") from None
            if name != "random":
                raise InputError(f"block kind {name!r} takes no argument")
            if not 0.0 <= prob <= 1.0:
                raise InputError(f"edge probability {prob} outside [0, 1]")
            return name, prob
    if text == "random":
        return text, 0.3
    if text not in PRIMITIVE_KINDS:
        raise InputError(f"unknown block kind {kind!r}; expected one of {PRIMITIVE_KINDS}")
    return text, None


@dataclass(frozen=True)
class GeneratorSpec:
    """Layout and value ranges for a synthetic precision model."""

    block_kinds: tuple = DEFAULT_BLOCKS
    block_size: int = 8
    replication: int = 2
    seed: int = 0
    offdiag_range: tuple = (0.1, 0.9)
    negative_fraction: float = 0.5
    pd_margin: float = 0.1

    def __post_init__(self):
        kinds = (self.block_kinds,) if isinstance(self.block_kinds, str) else self.block_kinds
        kinds = tuple(kinds)
        if not kinds:
            raise InputError("at least one block kind is required")
        for k in kinds:
            parse_kind(k)
        object.__setattr__(self, "block_kinds", kinds)
        lo, hi = (float(v) for v in self.offdiag_range)
        if not 0 < lo < hi:
            raise InputError(f"offdiag_range must satisfy 0 < lo < hi, got {(lo, hi)}")
        object.__setattr__(self, "offdiag_range", (lo, hi))
        if self.block_size < 2:
            raise InputError("block_size must be at least 2")
        if self.replication < 1:
            raise InputError("replication must be at least 1")
        if not self.pd_margin > 0:
            raise InputError("pd_margin must be positive")
        if not 0.0 <= self.negative_fraction <= 1.0:
            raise InputError("negative_fraction must lie in [0, 1]")

    @property
    def p(self) -> int:
        return self.block_size * self.replication * len(self.block_kinds)


def composite_spec(p: int = 64, seed: int = 0, block_size: int = 8,
                   block_kinds: Sequence[str] = DEFAULT_BLOCKS) -> GeneratorSpec:
    """The benchmark graph family: the block library replicated up to ``p`` nodes."""
    unit = block_size * len(block_kinds)
    if p % unit:
        raise InputError(f"p={p} is not a multiple of {unit} (block_size x kinds)")
    return GeneratorSpec(tuple(block_kinds), block_size, p // unit, seed)


def _grid_shape(k: int) -> tuple[int, int]:
    rows = max(r for r in range(1, math.isqrt(k) + 1) if k % r == 0)
    return rows, k // rows


def block_edges(kind: str, k: int, rng: Optional[np.random.Generator] = None) -> list:
    """Edges of one primitive block on local nodes 0..k-1."""
    name, prob = parse_kind(kind)
    if name == "path":
        return [(i, i + 1) for i in range(k - 1)]
    if name == "cycle":
        edges = [(i, i + 1) for i in range(k - 1)]
        if k > 2:
            edges.append((0, k - 1))
        return edges
    if name == "star":
        return [(0, i) for i in range(1, k)]
    if name == "grid":
        rows, cols = _grid_shape(k)
        edges = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    edges.append((v, v + 1))
                if r + 1 < rows:
                    edges.append((v, v + cols))
        return edges
    if rng is None:
        raise InputError("random blocks need a random generator")
    draws = rng.random(k * (k - 1) // 2)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    return [e for e, u in zip(pairs, draws) if u < prob]


def generate_graph(spec: GeneratorSpec, rng: Optional[np.random.Generator] = None) -> UndirectedGraph:
    """Disjoint union of ``replication`` copies of each primitive block.

    Node numbering is block-contiguous: copy r of kind index t occupies
    nodes starting at (r * len(kinds) + t) * block_size.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    edges = set()
    offset = 0
    for _ in range(spec.replication):
        for kind in spec.block_kinds:
            for i, j in block_edges(kind, spec.block_size, rng):
                edges.add((offset + i, offset + j))
            offset += spec.block_size
    return UndirectedGraph(spec.p, frozenset(edges))


@dataclass(frozen=True)
class PrecisionModel:
    """A symmetric positive-definite precision matrix and the graph of its zeros."""

    omega: np.ndarray
    graph: UndirectedGraph

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float, copy=True)
        if omega.shape != (self.graph.p, self.graph.p):
            raise InputError("precision matrix shape does not match graph")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    @property
    def p(self) -> int:
        return self.graph.p

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.omega)

    def pattern_matches(self) -> bool:
        off = ~np.eye(self.p, dtype=bool)
        return bool(np.array_equal((self.omega != 0) & off, self.graph.adjacency()))

    @classmethod
    def from_matrix(cls, omega: np.ndarray) -> "PrecisionModel":
        return cls(omega, UndirectedGraph.from_adjacency(omega))


def generate_precision(
    graph: UndirectedGraph, spec: GeneratorSpec, rng: np.random.Generator
) -> PrecisionModel:
    """Random precision matrix whose off-diagonal support is exactly the edge set.

    Edge weights have magnitude uniform on ``offdiag_range`` and are negative
    with probability ``negative_fraction``. The diagonal is drawn from the same
    range and then shifted by a constant so that the smallest eigenvalue is at
    least ``pd_margin``.
    """
    lo, hi = spec.offdiag_range
    p = graph.p
    omega = np.zeros((p, p))
    edges = graph.edge_list()
    if edges:
        mags = rng.uniform(lo, hi, size=len(edges))
        neg = rng.random(len(edges)) < spec.negative_fraction
        vals = np.where(neg, -mags, mags)
        ii, jj = np.array(edges).T
        omega[ii, jj] = vals
        omega[jj, ii] = vals
    omega[np.diag_indices(p)] = rng.uniform(lo, hi, size=p)
    if p:
        lam_min = float(np.linalg.eigvalsh(omega)[0])
        if lam_min < spec.pd_margin:
            omega[np.diag_indices(p)] += spec.pd_margin - lam_min
    return PrecisionModel(omega, graph)


def sample_mvn(model: PrecisionModel, n: int, rng: np.random.Generator) -> Dataset:
    """Draw n rows from N(0, omega^-1) by back-substitution on the Cholesky factor."""
    if n < 2:
        raise InputError("a dataset needs at least 2 rows")
    L = np.linalg.cholesky(model.omega)
    z = rng.standard_normal((n, model.p))
    # omega = L L^T, so x = L^-T z has covariance omega^-1.
    x = solve_triangular(L.T, z.T, lower=False).T
    return Dataset(x)


@dataclass(frozen=True)
class Simulation:
    spec: GeneratorSpec
    model: PrecisionModel
    data: Dataset

    @property
    def graph(self) -> UndirectedGraph:
        return self.model.graph


def simulate(spec: GeneratorSpec, n: int) -> Simulation:
    """Graph, precision matrix and data from a single generator seeded by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    graph = generate_graph(spec, rng)
    model = generate_precision(graph, spec, rng)
    data = sample_mvn(model, n, rng)
    return Simulation(spec, model, data)
