"""Greedy Markov blanket search and assembly of blankets into graphs.

Each node's blanket is optimized independently by best-improvement hill
climbing over single additions and deletions. The resulting (possibly
asymmetric) family is turned into an undirected graph by the OR rule, the
AND rule, or a global hill climb restricted to the OR edge set (HC).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .core import MarkovBlanketFamily, ScatterMatrix, UndirectedGraph
from .errors import FMPLError, InputError, NotPositiveDefiniteError, SearchError
from .scoring import (
    ScoreCard,
    ScoreParams,
    global_fmpl_score,
    local_fmpl_log_score,
    log_prior_mb,
)

METHODS = ("or", "and", "hc")


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for blanket search and graph assembly.

    ``max_mb_size=None`` resolves to min(p - 1, n - 2) against the data.
    ``parallelism`` is the number of worker threads for per-node searches;
    it never changes results.
    """

    method: str = "and"
    max_mb_size: Optional[int] = None
    score_params: ScoreParams = field(default_factory=ScoreParams)
    parallelism: int = 1

    def __post_init__(self):
        method = self.method.lower()
        if method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", method)
        if self.max_mb_size is not None and self.max_mb_size < 0:
            raise InputError("max_mb_size must be non-negative")
        if self.parallelism < 1:
            raise InputError("parallelism must be at least 1")

    def resolved_cap(self, scatter: ScatterMatrix) -> int:
        cap = max(0, min(scatter.p - 1, scatter.n - 2))
        if self.max_mb_size is not None:
            cap = min(cap, self.max_mb_size)
        return cap


class LocalScorer:
    """Memoized local objective: log FMPL of (j, mb) plus the blanket prior.

    Candidates that cannot be scored (non-PD submatrix or too large for n)
    come back as -inf so the search simply rejects them. One instance is
    meant for one worker; it is not thread-safe.
    """

    def __init__(self, scatter: ScatterMatrix, params: ScoreParams):
        self.scatter = scatter
        self.params = params
        self._cache: dict[tuple[int, frozenset], float] = {}

    def local(self, j: int, mb: frozenset) -> float:
        key = (j, mb)
        hit = self._cache.get(key)
        if hit is None:
            try:
                hit = local_fmpl_log_score(self.scatter, j, mb)
            except (NotPositiveDefiniteError, InputError):
                hit = -math.inf
            self._cache[key] = hit
        return hit

    def __call__(self, j: int, mb: frozenset) -> float:
        return self.local(j, mb) + log_prior_mb(len(mb), self.params)


def search_markov_blanket(
    scatter: ScatterMatrix,
    j: int,
    config: SearchConfig = SearchConfig(),
    trace: Optional[list] = None,
    scorer: Optional[LocalScorer] = None,
) -> frozenset:
    """Hill-climb the blanket of node ``j`` starting from the empty set.

    Every iteration scores all single deletions and all single additions
    (subject to the size cap) and applies the best strictly improving one.
    Ties go to deletions, then to the lowest node index.

    If ``trace`` is given, the objective value of the start and of every
    accepted move is appended to it.
    """
    if scatter.n < 3:
        raise InputError(f"blanket search needs n >= 3, got {scatter.n}")
    if not 0 <= j < scatter.p:
        raise InputError(f"node {j} out of range for p={scatter.p}")
    scorer = scorer or LocalScorer(scatter, config.score_params)
    cap = config.resolved_cap(scatter)
    others = [i for i in range(scatter.p) if i != j]

    current = frozenset()
    # The start must be scorable; a failure here is a real data problem.
    local0 = local_fmpl_log_score(scatter, j, current)
    best_now = local0 + log_prior_mb(0, config.score_params)
    if trace is not None:
        trace.append(best_now)

    while True:
        best_move, best_val = None, best_now
        for i in sorted(current):
            cand = current - {i}
            val = scorer(j, cand)
            if val > best_val:
                best_move, best_val = cand, val
        if len(current) < cap:
            for i in others:
                if i in current:
                    continue
                cand = current | {i}
                val = scorer(j, cand)
                if val > best_val:
                    best_move, best_val = cand, val
        if best_move is None:
            return current
        current, best_now = best_move, best_val
        if trace is not None:
            trace.append(best_now)


def search_all_blankets(
    scatter: ScatterMatrix, config: SearchConfig = SearchConfig()
) -> MarkovBlanketFamily:
    """Search every node's blanket; results are gathered by node index."""

    def run(j):
        try:
            return search_markov_blanket(scatter, j, config)
        except FMPLError as exc:
            return exc

    nodes = range(scatter.p)
    if config.parallelism > 1 and scatter.p > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(run, nodes))
    else:
        results = [run(j) for j in nodes]

    failures = {j: r for j, r in enumerate(results) if isinstance(r, Exception)}
    if failures:
        raise SearchError(failures)
    return MarkovBlanketFamily(tuple(results))


def assemble_or(family: MarkovBlanketFamily) -> UndirectedGraph:
    edges = {(min(i, j), max(i, j)) for j, mb in enumerate(family) for i in mb}
    return UndirectedGraph(family.p, frozenset(edges))


def assemble_and(family: MarkovBlanketFamily) -> UndirectedGraph:
    edges = {(i, j) for j, mb in enumerate(family) for i in mb if i < j and j in family[i]}
    return UndirectedGraph(family.p, frozenset(edges))


def refine_hc(
    scatter: ScatterMatrix,
    family: MarkovBlanketFamily,
    config: SearchConfig = SearchConfig(),
    trace: Optional[list] = None,
    scorer: Optional[LocalScorer] = None,
) -> UndirectedGraph:
    """Greedy edge toggling inside the OR edge set, starting from the OR graph.

    A toggle of edge (i, j) only changes the local objectives of i and j, so
    each candidate costs two (memoized) local evaluations. The move with the
    largest strict gain is applied; on exact ties removals win over
    additions, then lexicographic edge order decides.
    """
    scorer = scorer or LocalScorer(scatter, config.score_params)
    start = assemble_or(family)
    candidates = start.edge_list()
    mbs = [set(b) for b in start.blankets()]
    node_val = [scorer(j, frozenset(mbs[j])) for j in range(start.p)]
    present = set(candidates)
    if trace is not None:
        trace.append(math.fsum(node_val))

    while True:
        best_gain, best_edge, best_vals = 0.0, None, None
        removals = [e for e in candidates if e in present]
        additions = [e for e in candidates if e not in present]
        for removing, group in ((True, removals), (False, additions)):
            for i, j in group:
                if removing:
                    mi, mj = frozenset(mbs[i] - {j}), frozenset(mbs[j] - {i})
                else:
                    mi, mj = frozenset(mbs[i] | {j}), frozenset(mbs[j] | {i})
                vi, vj = scorer(i, mi), scorer(j, mj)
                gain = (vi - node_val[i]) + (vj - node_val[j])
                if gain > best_gain:
                    best_gain, best_edge, best_vals = gain, (i, j), (vi, vj)
        if best_edge is None:
            break
        i, j = best_edge
        if best_edge in present:
            present.discard(best_edge)
            mbs[i].discard(j)
            mbs[j].discard(i)
        else:
            present.add(best_edge)
            mbs[i].add(j)
            mbs[j].add(i)
        node_val[i], node_val[j] = best_vals
        if trace is not None:
            trace.append(math.fsum(node_val))
    return UndirectedGraph(start.p, frozenset(present))


def assemble(
    scatter: ScatterMatrix, family: MarkovBlanketFamily, config: SearchConfig
) -> UndirectedGraph:
    if config.method == "or":
        return assemble_or(family)
    if config.method == "and":
        return assemble_and(family)
    return refine_hc(scatter, family, config)


def learn_graph(
    scatter: ScatterMatrix, config: SearchConfig = SearchConfig()
) -> tuple[UndirectedGraph, MarkovBlanketFamily, ScoreCard]:
    """Full pipeline: per-node search, assembly, and the final graph's score card."""
    family = search_all_blankets(scatter, config)
    graph = assemble(scatter, family, config)
    card = global_fmpl_score(scatter, graph, config.score_params)
    return graph, family, card
