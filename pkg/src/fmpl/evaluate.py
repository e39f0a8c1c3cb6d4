"""Structure-recovery metrics, graph-constrained Gaussian MLE, prediction and
likelihood-ratio diagnostics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import Dataset, ScatterMatrix, UndirectedGraph, logdet_submatrix, scatter
from .errors import ConvergenceError, InputError, NotPositiveDefiniteError
from .synthgen import PrecisionModel


@dataclass(frozen=True)
class RecoveryReport:
    hamming: int
    tp_rate: float
    fp_rate: float
    edges_true: int
    edges_learned: int

    def to_dict(self) -> dict:
        return asdict(self)


def recovery_report(true_graph: UndirectedGraph, learned: UndirectedGraph) -> RecoveryReport:
    """Hamming distance plus true/false positive rates of a learned graph.

    The false-positive rate is normalized by the number of true non-edges.
    """
    if true_graph.p != learned.p:
        raise InputError(f"node count mismatch: {true_graph.p} vs {learned.p}")
    t, l = true_graph.edges, learned.edges
    hits = len(t & l)
    false = len(l - t)
    non_edges = true_graph.p * (true_graph.p - 1) // 2 - len(t)
    if t:
        tp = hits / len(t)
    else:
        tp = 1.0 if not l else 0.0
    fp = false / non_edges if non_edges else 0.0
    return RecoveryReport(len(t ^ l), tp, fp, len(t), len(l))


def _omega_array(omega) -> np.ndarray:
    return omega.omega if isinstance(omega, PrecisionModel) else np.asarray(omega, float)


def gaussian_loglik(omega, cov: np.ndarray, n: int) -> float:
    """Zero-mean Gaussian log-likelihood up to the constant -(n p / 2) log 2 pi."""
    om = _omega_array(omega)
    try:
        c, _ = cho_factor(om, lower=True)
    except LinAlgError:
        raise NotPositiveDefiniteError(range(om.shape[0])) from None
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(c))))
    return 0.5 * n * (logdet - float(np.sum(om * cov)))


# Relative pivot floor below which a family block of C counts as singular.
_PIVOT_FLOOR = 1e-12


def _check_families(C: np.ndarray, nbrs: list) -> None:
    """Every closed neighbourhood of C must be safely positive definite.

    Exact collinearity often survives a plain Cholesky through rounding, so
    squared pivots are compared against the block's largest diagonal entry.
    """
    for j, nb in enumerate(nbrs):
        fa = nb + [j]
        block = C[np.ix_(fa, fa)]
        try:
            L = np.linalg.cholesky(block)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(fa, node=j) from None
        if np.min(np.diagonal(L)) ** 2 <= _PIVOT_FLOOR * np.max(np.diagonal(block)):
            raise NotPositiveDefiniteError(fa, node=j)


def _fixed_point_residual(omega: np.ndarray, cov: np.ndarray, mask: np.ndarray) -> float:
    sigma = np.linalg.inv(omega)
    return float(np.max(np.abs(sigma - cov)[mask]))


def mle_precision_given_graph(
    dataset: Dataset, graph: UndirectedGraph, tol: float = 1e-8, max_iter: int = 500
) -> PrecisionModel:
    """Maximum likelihood precision matrix with zeros fixed by ``graph``.

    Cyclic nodewise regression on the working covariance W (covariance
    selection in its regression form): for each node, regress on its
    neighbours using the current W, then overwrite that node's row and column
    of W. Sweeps continue until the implied inverse matches the sample
    covariance C = S / n on every edge and on the diagonal to within ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` sweeps do not reach ``tol``.
    NotPositiveDefiniteError
        If some node's closed neighbourhood of C is (numerically) singular,
        or a neighbour block of the working covariance cannot be factored.
    """
    if dataset.p != graph.p:
        raise InputError(f"dataset has {dataset.p} variables, graph has {graph.p}")
    s = scatter(dataset)
    C = s.s / s.n
    p = graph.p
    nbrs = [sorted(b) for b in graph.blankets()]
    others = [np.array([k for k in range(p) if k != j], dtype=np.intp) for j in range(p)]
    mask = graph.adjacency() | np.eye(p, dtype=bool)
    _check_families(C, nbrs)

    W = C.copy()
    betas = [np.zeros(p - 1) for _ in range(p)]
    residual = math.inf
    for sweep in range(1, max_iter + 1):
        for j in range(p):
            rest = others[j]
            beta = np.zeros(p - 1)
            nb = nbrs[j]
            if nb:
                # positions of the neighbours inside ``rest``
                pos = np.array([k if k < j else k - 1 for k in nb], dtype=np.intp)
                W11 = W[np.ix_(rest, rest)]
                try:
                    fac = cho_factor(W11[np.ix_(pos, pos)], lower=True)
                except LinAlgError:
                    raise NotPositiveDefiniteError(nb, node=j) from None
                beta[pos] = cho_solve(fac, C[nb, j])
                w12 = W11 @ beta
            else:
                w12 = np.zeros(p - 1)
            W[rest, j] = w12
            W[j, rest] = w12
            betas[j] = beta

        omega = np.zeros((p, p))
        for j in range(p):
            rest = others[j]
            cond_var = C[j, j] - W[j, rest] @ betas[j]
            if not cond_var > 0:
                raise NotPositiveDefiniteError(nbrs[j] + [j], node=j)
            theta = 1.0 / cond_var
            omega[j, j] = theta
            omega[rest, j] = -betas[j] * theta
        omega = 0.5 * (omega + omega.T)
        omega[~mask] = 0.0
        try:
            residual = _fixed_point_residual(omega, C, mask)
        except np.linalg.LinAlgError:
            residual = math.inf
        if residual <= tol:
            return PrecisionModel(omega, graph)
    raise ConvergenceError(
        f"covariance selection did not converge in {max_iter} sweeps "
        f"(residual {residual:.3e} > {tol:.1e})",
        iterations=max_iter,
        residual=residual,
    )


def predict_values(omega, values: np.ndarray) -> np.ndarray:
    """Predict every entry of each row from the other entries of that row.

    x_hat_i = -sum_{j != i} (omega_ij / omega_ii) x_j, the conditional mean
    of a zero-mean Gaussian.
    """
    om = _omega_array(omega)
    diag = np.diagonal(om)
    if np.any(diag == 0):
        raise InputError("precision matrix has a zero diagonal entry")
    off = om - np.diag(diag)
    return -(np.asarray(values, float) @ off) / diag


def predict_components(omega, test: Dataset) -> float:
    """Mean squared error of leave-one-component-out predictions.

    The mean is pooled over all (row, variable) pairs.
    """
    om = _omega_array(omega)
    if om.shape[0] != test.p:
        raise InputError(f"precision is {om.shape[0]}x{om.shape[0]}, test has p={test.p}")
    err = predict_values(om, test.values) - test.values
    return float(np.mean(err * err))


def prediction_experiment(train: Dataset, test: Dataset, graph: UndirectedGraph,
                          tol: float = 1e-8, max_iter: int = 500,
                          standardize: bool = True) -> dict:
    """Fit the graph-constrained MLE on ``train`` and score it on ``test``.

    With ``standardize`` the training data are centered and scaled and the
    test rows are transformed with the training means and sds.
    """
    train_std = train
    if standardize and not train.standardized:
        train_std = train.standardize()
    test_std = test.transform_like(train_std)
    model = mle_precision_given_graph(train_std, graph, tol, max_iter)
    return {
        "edge_density": graph.density(),
        "edges": graph.n_edges,
        "mse": predict_components(model, test_std),
    }


def deviance_statistic(
    scatter: ScatterMatrix, A: Iterable[int], B: Iterable[int], C: Iterable[int]
) -> float:
    """Likelihood-ratio deviance for x_B independent of x_C given x_A.

    Asymptotically chi-squared with |B| |C| degrees of freedom under the
    hypothesis. An empty A contributes log|S_A| = 0.
    """
    A, B, C = set(A), set(B), set(C)
    if A & B or A & C or B & C:
        raise InputError("A, B and C must be disjoint")
    ld = lambda sub: logdet_submatrix(scatter, sub)  # noqa: E731
    return -scatter.n * (ld(A | B | C) + ld(A) - ld(A | B) - ld(A | C))


def ebic(omega_hat, scatter: ScatterMatrix, gamma: float = 0.5) -> float:
    """Extended BIC: n tr(Omega C) - n log det Omega + K log n + 4 K gamma log p."""
    if not 0.0 <= gamma <= 1.0:
        raise InputError(f"gamma must lie in [0, 1], got {gamma}")
    om = _omega_array(omega_hat)
    n, p = scatter.n, scatter.p
    if om.shape != (p, p):
        raise InputError("precision and scatter shapes differ")
    C = scatter.s / n
    try:
        c, _ = cho_factor(om, lower=True)
    except LinAlgError:
        raise NotPositiveDefiniteError(range(p)) from None
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(c))))
    K = int(np.count_nonzero(np.triu(om, k=1)))
    return n * float(np.sum(om * C)) - n * logdet + K * math.log(n) + 4 * K * gamma * math.log(p)
