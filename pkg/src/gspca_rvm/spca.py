"""Sparse PCA by alternating elastic-net regression and Procrustes rotation.

The loadings B and the orthonormal auxiliary A minimise

    sum_i ||x_i - A B^T x_i||^2 + lambda_ridge * sum_j ||b_j||^2
                                 + sum_j lambda_lasso[j] * ||b_j||_1

For fixed A the problem splits into one elastic net per component with
target X a_j; for fixed B the optimal A is U V^T from the SVD of X^T X B.
Everything below works on the Gram matrix X^T X, so the cost per sweep is
independent of n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit


class ConvergenceError(RuntimeError):
    """Elastic net ran out of sweeps; carries the last iterate."""

    def __init__(self, message, coefficients, kkt_residual):
        super().__init__(message)
        self.coefficients = coefficients
        self.kkt_residual = kkt_residual


@dataclass(frozen=True)
class SpcaConfig:
    k: int = 1
    lambda_ridge: float = 1e-4
    lambda_lasso: float | Sequence[float] = 0.0
    max_outer_iterations: int = 200
    convergence_tolerance: float = 1e-6
    max_inner_sweeps: int = 10_000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.lambda_ridge < 0:
            raise ValueError("lambda_ridge must be >= 0")
        lasso = self.lasso_vector()
        if np.any(lasso < 0):
            raise ValueError("lambda_lasso entries must be >= 0")
        if self.max_outer_iterations < 1 or self.convergence_tolerance <= 0:
            raise ValueError("need max_outer_iterations >= 1 and convergence_tolerance > 0")

    def lasso_vector(self) -> np.ndarray:
        lasso = np.atleast_1d(np.asarray(self.lambda_lasso, dtype=float))
        if lasso.size == 1:
            return np.full(self.k, lasso[0])
        if lasso.size != self.k:
            raise ValueError(f"lambda_lasso has {lasso.size} entries for k={self.k}")
        return lasso

    def with_components(self, k: int) -> "SpcaConfig":
        """Same penalties, different k; a scalar lasso penalty is broadcast."""
        lasso = np.atleast_1d(np.asarray(self.lambda_lasso, dtype=float))
        if lasso.size == 1:
            lam = float(lasso[0])
        elif lasso.size >= k:
            lam = tuple(float(v) for v in lasso[:k])
        else:
            raise ValueError(f"lambda_lasso has {lasso.size} entries, need {k}")
        return SpcaConfig(k, self.lambda_ridge, lam, self.max_outer_iterations,
                          self.convergence_tolerance, self.max_inner_sweeps)


@dataclass(frozen=True)
class SpcaLoadings:
    loadings: np.ndarray
    nonzero_counts: np.ndarray
    adjusted_variance: np.ndarray
    converged: bool
    iterations_used: int
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def k(self) -> int:
        return self.loadings.shape[1]


# ------------------------------------------------------------------- PCA

def pca_loadings(X: np.ndarray, k: int) -> np.ndarray:
    """Top-k eigenvectors of X^T X / n, largest-magnitude entry made positive."""
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k={k} out of range [1, {min(n, m)}]")
    evals, evecs = np.linalg.eigh(X.T @ X / n)
    order = np.argsort(evals)[::-1][:k]
    V = evecs[:, order]
    return _fix_signs(V)


def _fix_signs(V):
    V = V.copy()
    for j in range(V.shape[1]):
        i = np.argmax(np.abs(V[:, j]))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


# ------------------------------------------------------------ elastic net

@njit(cache=True)
def _cd_sweeps(G, c, l2, l1, beta, max_sweeps, tol):
    # residual correlation r = c - G beta, kept in sync with beta
    m = beta.shape[0]
    r = c - G @ beta
    half = 0.5 * l1
    for sweep in range(max_sweeps):
        max_change = 0.0
        scale = 0.0
        for j in range(m):
            gjj = G[j, j]
            denom = gjj + l2
            if denom <= 0.0:
                continue
            rho = r[j] + gjj * beta[j]
            if rho > half:
                new = (rho - half) / denom
            elif rho < -half:
                new = (rho + half) / denom
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                for i in range(m):
                    r[i] -= G[i, j] * delta
                beta[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
            if abs(new) > scale:
                scale = abs(new)
        if max_change <= tol * max(scale, 1.0):
            return sweep + 1
    return -1


def kkt_residual(G, c, beta, lambda_ridge, lambda_lasso):
    """Largest violation of the elastic-net optimality conditions.

    With g = 2(c - G beta) - 2 lambda_ridge beta: |g_j| <= lambda_lasso where
    beta_j = 0, and g_j = lambda_lasso * sign(beta_j) elsewhere.
    """
    g = 2.0 * (c - G @ beta) - 2.0 * lambda_ridge * beta
    nz = beta != 0
    viol = np.where(nz, np.abs(g - lambda_lasso * np.sign(beta)),
                    np.maximum(np.abs(g) - lambda_lasso, 0.0))
    return float(viol.max()) if viol.size else 0.0


def elastic_net_objective(X, y, beta, lambda_ridge, lambda_lasso):
    resid = y - X @ beta
    return float(resid @ resid + lambda_ridge * beta @ beta
                 + lambda_lasso * np.abs(beta).sum())


def _enet_gram(G, c, lambda_ridge, lambda_lasso, beta0=None,
               max_sweeps=10_000, tol=1e-10):
    m = c.shape[0]
    beta = np.zeros(m) if beta0 is None else np.array(beta0, dtype=float)
    kkt_tol = tol * max(1.0, 2.0 * np.abs(c).max(), lambda_lasso)
    step_tol = 1e-3 * tol
    used = 0
    while used < max_sweeps:
        sweeps = _cd_sweeps(G, c, float(lambda_ridge), float(lambda_lasso),
                            beta, max_sweeps - used, step_tol)
        used = max_sweeps if sweeps < 0 else used + sweeps
        resid = kkt_residual(G, c, beta, lambda_ridge, lambda_lasso)
        if resid <= kkt_tol:
            return beta
        step_tol *= 1e-2
        if step_tol < 1e-300:
            break
    raise ConvergenceError(
        f"elastic net did not converge in {max_sweeps} sweeps (KKT residual {resid:.3g})",
        beta, resid)


def elastic_net(X, y, lambda_ridge: float, lambda_lasso: float, *,
                max_sweeps: int = 10_000, tol: float = 1e-10, beta0=None) -> np.ndarray:
    """Minimise ||y - X b||^2 + lambda_ridge ||b||^2 + lambda_lasso ||b||_1.

    Cyclic coordinate descent with soft-thresholding. Raises
    ``ConvergenceError`` (holding the last iterate) if the KKT residual is
    still above ``tol`` (relative) after ``max_sweeps`` sweeps.
    """
    if lambda_ridge < 0 or lambda_lasso < 0:
        raise ValueError("penalties must be non-negative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return _enet_gram(X.T @ X, X.T @ y, lambda_ridge, lambda_lasso, beta0, max_sweeps, tol)


# ------------------------------------------------------------ sparse PCA

def _spca_objective(G, A, B, lambda_ridge, lasso):
    return float(np.trace(G) - 2.0 * np.sum(A * (G @ B)) + np.sum(B * (G @ B))
                 + lambda_ridge * np.sum(B * B) + np.sum(lasso * np.abs(B).sum(axis=0)))


def _normalize_columns(B):
    out = np.zeros_like(B)
    norms = np.linalg.norm(B, axis=0)
    nz = norms > 0
    out[:, nz] = B[:, nz] / norms[nz]
    return out


def spca_fit(X: np.ndarray, config: SpcaConfig, initial_a: np.ndarray | None = None) -> SpcaLoadings:
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    k = config.k
    if k > min(n, m):
        raise ValueError(f"k={k} exceeds min(n, m)={min(n, m)}")
    lasso = config.lasso_vector()
    G = X.T @ X
    A = pca_loadings(X, k) if initial_a is None else np.array(initial_a, dtype=float)
    B = np.zeros((m, k))
    prev = None
    trace = []
    converged = False
    inner_ok = True
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        for j in range(k):
            try:
                B[:, j] = _enet_gram(G, G @ A[:, j], config.lambda_ridge, lasso[j],
                                     beta0=B[:, j], max_sweeps=config.max_inner_sweeps,
                                     tol=1e-12)
            except ConvergenceError as exc:
                B[:, j] = exc.coefficients
                inner_ok = False
        U, _, Vt = np.linalg.svd(G @ B, full_matrices=False)
        A = U @ Vt
        trace.append(_spca_objective(G, A, B, config.lambda_ridge, lasso))
        current = _normalize_columns(B)
        if prev is not None and np.abs(current - prev).max() < config.convergence_tolerance:
            converged = inner_ok
            break
        prev = current

    loadings = _normalize_columns(B)
    nonzero = np.count_nonzero(loadings, axis=0)
    result = SpcaLoadings(loadings, nonzero, np.zeros(k), converged, it, np.asarray(trace))
    object.__setattr__(result, "adjusted_variance", adjusted_variance(X, result))
    return result


def selected_features(loadings: SpcaLoadings, use_components: int) -> list[int]:
    B = loadings.loadings
    if not 1 <= use_components <= B.shape[1]:
        raise ValueError(f"use_components={use_components} out of range [1, {B.shape[1]}]")
    return [int(i) for i in np.flatnonzero(np.any(B[:, :use_components] != 0, axis=1))]


def adjusted_variance(X: np.ndarray, loadings: SpcaLoadings | np.ndarray) -> np.ndarray:
    """Variance explained by each component after removing overlap with the
    earlier ones: R[j, j]^2 / n from the QR decomposition of X B."""
    B = loadings.loadings if isinstance(loadings, SpcaLoadings) else np.asarray(loadings)
    X = np.asarray(X, dtype=float)
    _, R = np.linalg.qr(X @ B)
    return np.diag(R) ** 2 / X.shape[0]
