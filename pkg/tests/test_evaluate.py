import math

import numpy as np
import pytest

from fmpl.core import Dataset, ScatterMatrix, UndirectedGraph, scatter
from fmpl.errors import ConvergenceError, InputError, NotPositiveDefiniteError
from fmpl.evaluate import (
    deviance_statistic,
    ebic,
    gaussian_loglik,
    mle_precision_given_graph,
    predict_components,
    predict_values,
    prediction_experiment,
    recovery_report,
)
from fmpl.synthgen import GeneratorSpec, PrecisionModel, composite_spec, sample_mvn, simulate

from conftest import random_spd


def G(p, *edges):
    return UndirectedGraph(p, frozenset(edges))


# ---------------------------------------------------------------- recovery


def test_identical_graphs():
    g = G(4, (0, 1), (2, 3))
    r = recovery_report(g, g)
    assert (r.hamming, r.tp_rate, r.fp_rate) == (0, 1.0, 0.0)


def test_partial_recovery_arithmetic():
    truth = G(5, (0, 1), (1, 2), (2, 3), (3, 4))
    learned = G(5, (0, 1), (1, 2), (2, 3), (0, 4))
    r = recovery_report(truth, learned)
    assert r.hamming == 2
    assert r.tp_rate == 0.75
    assert r.fp_rate == pytest.approx(1 / 6)
    assert (r.edges_true, r.edges_learned) == (4, 4)


def test_empty_vs_complete():
    complete = G(4, *[(i, j) for i in range(4) for j in range(i + 1, 4)])
    r = recovery_report(complete, G(4))
    assert (r.hamming, r.tp_rate, r.fp_rate) == (6, 0.0, 0.0)


def test_empty_truth_conventions():
    assert recovery_report(G(3), G(3)).tp_rate == 1.0
    assert recovery_report(G(3), G(3, (0, 1))).tp_rate == 0.0
    with pytest.raises(InputError):
        recovery_report(G(3), G(4))


# ---------------------------------------------------------------- MLE


def _data(rng, omega, n):
    return sample_mvn(PrecisionModel.from_matrix(omega), n, rng)


def test_complete_graph_mle_is_inverse(rng):
    d = Dataset(rng.standard_normal((60, 4)))
    C = scatter(d).s / d.n
    complete = G(4, *[(i, j) for i in range(4) for j in range(i + 1, 4)])
    m = mle_precision_given_graph(d, complete)
    np.testing.assert_allclose(m.omega, np.linalg.inv(C), atol=1e-8)


def test_empty_graph_mle_is_diagonal(rng):
    d = Dataset(rng.standard_normal((60, 4)))
    C = scatter(d).s / d.n
    m = mle_precision_given_graph(d, G(4))
    np.testing.assert_allclose(m.omega, np.diag(1 / np.diagonal(C)), atol=1e-12)


def decomposable_path_mle(C):
    """Closed form for the chain 0-1-2: cliques {0,1}, {1,2}, separator {1}."""
    K = np.zeros((3, 3))
    K[np.ix_([0, 1], [0, 1])] += np.linalg.inv(C[np.ix_([0, 1], [0, 1])])
    K[np.ix_([1, 2], [1, 2])] += np.linalg.inv(C[np.ix_([1, 2], [1, 2])])
    K[1, 1] -= 1 / C[1, 1]
    return K


def test_path_mle_matches_closed_form(rng):
    omega = np.array([[1.0, 0.4, 0.0], [0.4, 1.2, -0.5], [0.0, -0.5, 0.9]])
    d = _data(rng, omega, 300)
    C = scatter(d).s / d.n
    m = mle_precision_given_graph(d, G(3, (0, 1), (1, 2)))
    np.testing.assert_allclose(m.omega, decomposable_path_mle(C), atol=1e-7)
    assert m.omega[0, 2] == 0.0


def test_cycle_mle_fixed_point_and_dominance():
    sim = simulate(GeneratorSpec(("cycle",), 6, 2, seed=3), 400)
    d = sim.data
    C = scatter(d).s / d.n
    m = mle_precision_given_graph(d, sim.graph, tol=1e-8)
    mask = sim.graph.adjacency() | np.eye(12, dtype=bool)
    assert np.max(np.abs(np.linalg.inv(m.omega) - C)[mask]) <= 1e-8
    assert np.max(np.abs(m.omega[~mask])) == 0.0
    indep = np.diag(1 / np.diagonal(C))
    assert gaussian_loglik(m, C, d.n) >= gaussian_loglik(indep, C, d.n)


def test_mle_non_convergence():
    sim = simulate(GeneratorSpec(("cycle",), 5, 1, seed=0), 100)
    with pytest.raises(ConvergenceError) as info:
        mle_precision_given_graph(sim.data, sim.graph, tol=1e-14, max_iter=1)
    assert info.value.iterations == 1


def test_mle_singular_block():
    x = np.random.default_rng(0).standard_normal((30, 2))
    d = Dataset(np.column_stack([x, x[:, 0]]))
    with pytest.raises(NotPositiveDefiniteError):
        mle_precision_given_graph(d, G(3, (0, 1), (1, 2), (0, 2)))


# ---------------------------------------------------------------- prediction


def test_diagonal_precision_predicts_zero(rng):
    test = Dataset(rng.standard_normal((10, 3)))
    om = np.diag([1.0, 2.0, 3.0])
    assert np.all(predict_values(om, test.values) == 0)
    assert predict_components(om, test) == pytest.approx(np.mean(test.values**2))


def test_two_variable_prediction_by_hand():
    om = np.array([[1.0, -0.5], [-0.5, 1.0]])
    test = Dataset([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(predict_values(om, test.values), [[0.5, 0.5], [0.5, 0.5]])
    assert predict_components(om, test) == pytest.approx(0.25)


def test_partial_correlation_form_agrees(rng):
    om = random_spd(rng, 5)
    x = rng.standard_normal((7, 5))
    d = np.sqrt(np.diagonal(om))
    rho = -om / np.outer(d, d)
    ref = np.zeros_like(x)
    for i in range(5):
        for j in range(5):
            if j != i:
                ref[:, i] += rho[i, j] * np.sqrt(om[j, j] / om[i, i]) * x[:, j]
    np.testing.assert_allclose(predict_values(om, x), ref, atol=1e-12)


def test_prediction_errors():
    with pytest.raises(InputError):
        predict_values(np.array([[0.0, 1.0], [1.0, 1.0]]), np.ones((2, 2)))
    with pytest.raises(InputError):
        predict_components(np.eye(3), Dataset(np.ones((2, 2))))


def test_true_precision_beats_independence():
    wins = 0
    for seed in range(100):
        sim = simulate(composite_spec(16, seed=seed, block_size=4), 2000 + 500)
        train, test = sim.data.head(2000), Dataset(sim.data.values[2000:])
        indep = mle_precision_given_graph(train, UndirectedGraph(16))
        wins += predict_components(sim.model, test) <= predict_components(indep, test)
    assert wins >= 95


def test_prediction_experiment_fields():
    sim = simulate(composite_spec(16, seed=1, block_size=4), 548)
    train, test = sim.data.head(500), Dataset(sim.data.values[500:])
    out = prediction_experiment(train, test, sim.graph)
    assert set(out) == {"mse", "edge_density", "edges"}
    assert out["edges"] == sim.graph.n_edges
    assert 0 < out["mse"] < 1.5


# ---------------------------------------------------------------- deviance / EBIC


def test_deviance_identity_scatter():
    s = ScatterMatrix(np.eye(4), 100)
    assert deviance_statistic(s, {0}, {1}, {2, 3}) == 0.0
    assert deviance_statistic(s, set(), {1}, {2}) == 0.0
    with pytest.raises(InputError):
        deviance_statistic(s, {0}, {0}, {1})


def test_deviance_empty_conditioning_matches_correlation(rng):
    x = rng.standard_normal((500, 2)) @ [[1, 0.3], [0, 1]]
    s = scatter(Dataset(x))
    r2 = s.s[0, 1] ** 2 / (s.s[0, 0] * s.s[1, 1])
    assert deviance_statistic(s, [], [0], [1]) == pytest.approx(-500 * math.log(1 - r2))


def test_deviance_grows_linearly_under_dependence():
    omega = np.array([[1.0, -0.3, 0.0], [-0.3, 1.0, -0.3], [0.0, -0.3, 1.0]])
    model = PrecisionModel.from_matrix(omega)
    means = {}
    for n in (1000, 4000):
        rng = np.random.default_rng(n)
        vals = [
            deviance_statistic(scatter(sample_mvn(model, n, rng)), [2], [0], [1])
            for _ in range(50)
        ]
        means[n] = np.mean(vals)
    assert 3.0 < means[4000] / means[1000] < 5.0


def test_ebic_identity():
    s = ScatterMatrix(np.eye(3) * 50, 50)
    assert ebic(np.eye(3), s) == pytest.approx(150.0)


def test_ebic_two_by_two_by_hand():
    om = np.array([[2.0, -0.5], [-0.5, 1.0]])
    s = ScatterMatrix([[4.0, 1.0], [1.0, 2.0]], 2)
    # C = [[2, .5], [.5, 1]], tr(om C) = 4 - .25 - .25 + 1 = 4.5, det om = 1.75, K = 1
    expected = 2 * 4.5 - 2 * math.log(1.75) + math.log(2) + 4 * 0.5 * math.log(2)
    assert ebic(om, s, gamma=0.5) == pytest.approx(expected, rel=1e-12)
    bic = 2 * 4.5 - 2 * math.log(1.75) + math.log(2)
    assert ebic(om, s, gamma=0.0) == pytest.approx(bic, rel=1e-12)


def test_ebic_errors():
    s = ScatterMatrix(np.eye(2), 10)
    with pytest.raises(InputError):
        ebic(np.eye(2), s, gamma=1.5)
    with pytest.raises(NotPositiveDefiniteError):
        ebic(np.array([[1.0, 2.0], [2.0, 1.0]]), s)
