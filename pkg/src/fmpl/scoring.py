"""Fractional marginal pseudo-likelihood scores and the blanket-size prior.

All quantities are natural-log scores. The per-node score is the objective
Gaussian DAG fractional marginal likelihood of one node given a conditioning
set (fraction 1/n, Wishart shape p - 1), so the same kernel serves both the
undirected pseudo-likelihood and exact DAG marginal likelihoods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import MarkovBlanketFamily, ScatterMatrix, UndirectedGraph, logdet_pair
from .errors import InputError, NotPositiveDefiniteError

LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class ScoreParams:
    use_prior: bool = True
    prior_a: float = 0.5
    prior_b: float = 0.5

    def __post_init__(self):
        for name in ("prior_a", "prior_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"{name} must be finite and positive, got {v}")


NO_PRIOR = ScoreParams(use_prior=False)


@dataclass(frozen=True)
class ScoreCard:
    local_log_scores: tuple
    local_log_priors: tuple
    total: float

    @property
    def p(self) -> int:
        return len(self.local_log_scores)

    def to_dict(self) -> dict:
        return {
            "local_log_priors": list(self.local_log_priors),
            "local_log_scores": list(self.local_log_scores),
            "total": self.total,
        }


def _size_terms(n: int, k: int) -> float:
    """Terms of the local score that depend only on n and the set size k."""
    return (
        -0.5 * (n - 1) * LOG_PI
        + math.lgamma(0.5 * (n + k))
        - math.lgamma(0.5 * (k + 1))
        - 0.5 * (2 * k + 1) * math.log(n)
    )


def local_score_from_logdets(n: int, k: int, logdet_mb: float, logdet_fa: float) -> float:
    return _size_terms(n, k) - 0.5 * (n - 1) * (logdet_fa - logdet_mb)


def local_fmpl_log_score(scatter: ScatterMatrix, j: int, mb: Iterable[int]) -> float:
    """Log local fractional marginal pseudo-likelihood of node ``j`` given ``mb``.

    Raises
    ------
    InputError
        If ``j`` is in ``mb`` or the set is too large for the sample size
        (need n >= |mb| + 2).
    NotPositiveDefiniteError
        If S restricted to mb + {j} fails to factor.
    """
    mb = frozenset(mb)
    k = len(mb)
    n = scatter.n
    if n < k + 2:
        raise InputError(f"blanket of size {k} needs n >= {k + 2}, got n={n}")
    try:
        ld_mb, ld_fa = logdet_pair(scatter, j, mb)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(exc.subset, node=j) from None
    return local_score_from_logdets(n, k, ld_mb, ld_fa)


def log_prior_mb(p_j: int, params: ScoreParams = ScoreParams()) -> float:
    """Unnormalized log prior of a blanket with ``p_j`` members.

    Beta-binomial with the edge probability integrated out under
    Beta(a, b), using m = p_j (p_j + 1) / 2 trials.
    """
    if p_j < 0:
        raise InputError("blanket size must be non-negative")
    if not params.use_prior:
        return 0.0
    a, b = params.prior_a, params.prior_b
    m = p_j * (p_j + 1) // 2
    return _log_beta(a + p_j, b + m - p_j) - _log_beta(a, b)


def _log_beta(x: float, y: float) -> float:
    return math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y)


def _blankets_of(graph) -> Sequence[frozenset]:
    if isinstance(graph, UndirectedGraph):
        return graph.blankets().blankets
    if isinstance(graph, MarkovBlanketFamily):
        return graph.blankets
    return MarkovBlanketFamily(tuple(graph)).blankets


def global_fmpl_score(
    scatter: ScatterMatrix, graph, params: ScoreParams = ScoreParams()
) -> ScoreCard:
    """Score every node's blanket and total the pseudo-likelihood plus prior."""
    mbs = _blankets_of(graph)
    if len(mbs) != scatter.p:
        raise InputError(f"graph has {len(mbs)} nodes, scatter has {scatter.p}")
    scores = tuple(local_fmpl_log_score(scatter, j, mb) for j, mb in enumerate(mbs))
    priors = tuple(log_prior_mb(len(mb), params) for mb in mbs)
    total = math.fsum(scores) + math.fsum(priors)
    return ScoreCard(scores, priors, total)


def _check_acyclic(parent_sets: Sequence[frozenset]):
    p = len(parent_sets)
    indeg = [len(ps) for ps in parent_sets]
    children = [[] for _ in range(p)]
    for j, ps in enumerate(parent_sets):
        for i in ps:
            children[i].append(j)
    queue = [j for j in range(p) if indeg[j] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen != p:
        raise InputError("parent sets contain a directed cycle")


def dag_log_marginal_likelihood(
    scatter: ScatterMatrix, parent_sets: Sequence[Iterable[int]]
) -> float:
    """Objective fractional log marginal likelihood of a Gaussian DAG."""
    parents = [frozenset(ps) for ps in parent_sets]
    if len(parents) != scatter.p:
        raise InputError(f"{len(parents)} parent sets for {scatter.p} variables")
    for j, ps in enumerate(parents):
        if j in ps:
            raise InputError(f"node {j} is its own parent")
        if any(not 0 <= i < scatter.p for i in ps):
            raise InputError(f"parent set of node {j} out of range")
    _check_acyclic(parents)
    return math.fsum(local_fmpl_log_score(scatter, j, ps) for j, ps in enumerate(parents))

