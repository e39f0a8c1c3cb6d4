import math

import mpmath
import numpy as np
import pytest

from fmpl.core import Dataset, MarkovBlanketFamily, ScatterMatrix, UndirectedGraph, scatter
from fmpl.errors import InputError, NotPositiveDefiniteError
from fmpl.scoring import (
    NO_PRIOR,
    ScoreParams,
    dag_log_marginal_likelihood,
    global_fmpl_score,
    local_fmpl_log_score,
    log_prior_mb,
)


def mp_local_score(S, n, j, mb):
    """High-precision evaluation of the local score, one factor at a time."""
    mpmath.mp.dps = 50
    k = len(mb)
    fa = sorted(mb) + [j]
    det_fa = mpmath.det(mpmath.matrix([[S[a][b] for b in fa] for a in fa]))
    det_mb = (
        mpmath.det(mpmath.matrix([[S[a][b] for b in sorted(mb)] for a in sorted(mb)]))
        if mb
        else mpmath.mpf(1)
    )
    n = mpmath.mpf(n)
    factors = [
        mpmath.power(mpmath.pi, -(n - 1) / 2),
        mpmath.gamma((n + k) / 2) / mpmath.gamma(mpmath.mpf(k + 1) / 2),
        mpmath.power(n, -mpmath.mpf(2 * k + 1) / 2),
        mpmath.power(det_fa / det_mb, -(n - 1) / 2),
    ]
    return float(sum(mpmath.log(f) for f in factors))


def test_two_point_example():
    s = scatter(Dataset([[1.0], [-1.0]]))
    expected = -math.log(math.pi) - math.log(2)
    assert local_fmpl_log_score(s, 0, []) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-1.8378771, abs=1e-7)


def test_identity_scatter_depends_only_on_size():
    s = ScatterMatrix(np.eye(3), 10)
    assert local_fmpl_log_score(s, 0, {1}) == local_fmpl_log_score(s, 0, {2})
    assert local_fmpl_log_score(s, 1, {0}) == local_fmpl_log_score(s, 2, {1})


def test_against_high_precision_oracle(rng):
    x = rng.standard_normal((25, 4)) @ rng.standard_normal((4, 4))
    s = scatter(Dataset(x))
    S = s.s.tolist()
    for j, mb in [(0, {1, 2}), (3, set()), (2, {0, 1, 3})]:
        assert local_fmpl_log_score(s, j, mb) == pytest.approx(
            mp_local_score(S, 25, j, mb), rel=1e-10
        )


def test_large_n_does_not_overflow(rng):
    x = rng.standard_normal((5000, 3))
    s = scatter(Dataset(x))
    assert math.isfinite(local_fmpl_log_score(s, 0, {1, 2}))
    assert local_fmpl_log_score(s, 0, {1, 2}) == pytest.approx(
        mp_local_score(s.s.tolist(), 5000, 0, {1, 2}), rel=1e-10
    )


def test_local_score_preconditions():
    s = ScatterMatrix(np.eye(4), 3)
    with pytest.raises(InputError):
        local_fmpl_log_score(s, 0, {1, 2})  # needs n >= 4
    with pytest.raises(InputError):
        local_fmpl_log_score(s, 0, {0})
    bad = ScatterMatrix([[1.0, 1.0], [1.0, 1.0]], 10)
    with pytest.raises(NotPositiveDefiniteError) as info:
        local_fmpl_log_score(bad, 0, {1})
    assert info.value.node == 0


# ---------------------------------------------------------------- prior


@pytest.mark.parametrize(
    "k, expected",
    [(0, 0.0), (1, math.log(0.5)), (2, math.log(1 / 16))],
)
def test_prior_values(k, expected):
    # beta(3/2,1/2) = pi/2 and beta(5/2,3/2) = pi/16, over beta(1/2,1/2) = pi
    assert log_prior_mb(k) == pytest.approx(expected, abs=1e-12)


def test_prior_off():
    assert log_prior_mb(5, NO_PRIOR) == 0.0


def test_prior_strictly_decreasing():
    vals = [log_prior_mb(k) for k in range(0, 51)]
    assert all(b < a for a, b in zip(vals[1:], vals[2:]))


def test_prior_against_mpmath():
    mpmath.mp.dps = 40
    a, b = 0.7, 2.5
    for k in (0, 3, 10):
        m = k * (k + 1) // 2
        ref = mpmath.log(mpmath.beta(a + k, b + m - k) / mpmath.beta(a, b))
        assert log_prior_mb(k, ScoreParams(True, a, b)) == pytest.approx(float(ref), abs=1e-10)


@pytest.mark.parametrize("a, b", [(0, 1), (1, -1), (math.inf, 1), (math.nan, 1)])
def test_prior_params_validated(a, b):
    with pytest.raises(InputError):
        ScoreParams(True, a, b)


# ---------------------------------------------------------------- global score


def _sim(rng, n, omega):
    cov = np.linalg.inv(omega)
    return Dataset(rng.multivariate_normal(np.zeros(len(omega)), cov, size=n))


def test_global_score_empty_graph():
    s = ScatterMatrix([[3.0, 0.2], [0.2, 2.0]], 12)
    card = global_fmpl_score(s, UndirectedGraph(2), NO_PRIOR)
    assert card.total == local_fmpl_log_score(s, 0, []) + local_fmpl_log_score(s, 1, [])
    assert card.local_log_priors == (0.0, 0.0)


def test_global_score_brute_force_sum(rng):
    omega = np.array([[1.0, 0.4, 0], [0.4, 1.0, -0.3], [0, -0.3, 1.0]])
    s = scatter(_sim(rng, 200, omega))
    g = UndirectedGraph(3, frozenset({(0, 1), (1, 2)}))
    card = global_fmpl_score(s, g, ScoreParams())
    ref = 0.0
    for j, mb in enumerate([{1}, {0, 2}, {1}]):
        ref += mp_local_score(s.s.tolist(), 200, j, mb)
        m = len(mb) * (len(mb) + 1) // 2
        ref += math.log(
            math.gamma(0.5 + len(mb)) * math.gamma(0.5 + m - len(mb)) / math.gamma(1 + m)
            / math.pi
        )
    assert card.total == pytest.approx(ref, rel=1e-10)
    assert card.total == pytest.approx(
        sum(a + b for a, b in zip(card.local_log_scores, card.local_log_priors)), rel=1e-10
    )


def test_global_score_is_exactly_decomposable(rng):
    s = scatter(Dataset(rng.standard_normal((80, 5))))
    fam = MarkovBlanketFamily(({1, 2}, {0}, set(), {4}, {0, 1, 3}))
    card = global_fmpl_score(s, fam, ScoreParams())
    scores = [local_fmpl_log_score(s, j, mb) for j, mb in enumerate(fam)]
    priors = [log_prior_mb(len(mb)) for mb in fam]
    assert list(card.local_log_scores) == scores
    assert card.total == math.fsum(scores) + math.fsum(priors)


def test_global_score_size_mismatch():
    with pytest.raises(InputError):
        global_fmpl_score(ScatterMatrix(np.eye(3), 10), UndirectedGraph(2))


def test_rescaling_leaves_blanket_differences(rng):
    omega = np.array([[1.0, 0.3, 0.2], [0.3, 1.0, 0.0], [0.2, 0.0, 1.0]])
    d = _sim(rng, 300, omega)
    c = 7.3
    scaled = Dataset(d.values * np.array([c, 1, 1]))
    s0, s1 = scatter(d), scatter(scaled)
    cands = [set(), {1}, {2}, {1, 2}]
    base = [local_fmpl_log_score(s0, 0, mb) for mb in cands]
    resc = [local_fmpl_log_score(s1, 0, mb) for mb in cands]
    for a, b in zip(base, resc):
        assert b - a == pytest.approx(-(300 - 1) * math.log(c), rel=1e-9)
    for k in range(1, len(cands)):
        assert abs((base[k] - base[0]) - (resc[k] - resc[0])) < 1e-8


# ---------------------------------------------------------------- DAG score


def test_dag_two_node_equivalence(rng):
    s = scatter(Dataset(rng.standard_normal((40, 2)) @ [[1, 0.5], [0, 1]]))
    assert dag_log_marginal_likelihood(s, [set(), {0}]) == pytest.approx(
        dag_log_marginal_likelihood(s, [{1}, set()]), rel=1e-12
    )


def test_dag_chains_and_v_structure(rng):
    omega = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]])
    s = scatter(_sim(rng, 100, omega))
    chain = dag_log_marginal_likelihood(s, [set(), {0}, {1}])  # 0->1->2
    rev = dag_log_marginal_likelihood(s, [{1}, {2}, set()])  # 2->1->0
    fork = dag_log_marginal_likelihood(s, [{1}, set(), {1}])  # 0<-1->2
    vee = dag_log_marginal_likelihood(s, [set(), {0, 2}, set()])  # 0->1<-2
    assert rev == pytest.approx(chain, rel=1e-9)
    assert fork == pytest.approx(chain, rel=1e-9)
    assert abs(vee - chain) > 1e-9 * abs(chain)


def test_empty_dag_is_sum_of_empty_blankets(rng):
    s = scatter(Dataset(rng.standard_normal((30, 4))))
    ref = math.fsum(local_fmpl_log_score(s, j, ()) for j in range(4))
    assert dag_log_marginal_likelihood(s, [()] * 4) == ref


def test_dag_rejects_cycles_and_bad_sets():
    s = ScatterMatrix(np.eye(3), 10)
    with pytest.raises(InputError, match="cycle"):
        dag_log_marginal_likelihood(s, [{2}, {0}, {1}])
    with pytest.raises(InputError):
        dag_log_marginal_likelihood(s, [{0}, set(), set()])
    with pytest.raises(InputError):
        dag_log_marginal_likelihood(s, [set(), set()])
