"""Relevance vector machine for regression and binary classification.

Weights get independent zero-mean Gaussian priors with one precision per
basis (the bias column included). Precisions are re-estimated by type-II
maximum likelihood with the MacKay fixed-point update ``alpha = gamma / mu^2``;
bases whose precision exceeds ``prune_threshold`` are removed. Classification
uses a Laplace approximation around the posterior mode found by Newton/IRLS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import expit
from scipy.spatial.distance import cdist

_P_MAX = np.nextafter(1.0, 0.0)
_P_MIN = np.finfo(float).tiny


class NumericalError(RuntimeError):
    """A linear system or the IRLS iteration could not be solved."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class DegenerateModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    width: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "laplacian"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.width > 0:
            raise ValueError("kernel width must be positive")


@dataclass(frozen=True)
class RvmOptions:
    max_outer_iterations: int = 1000
    tolerance: float = 1e-6
    prune_threshold: float = 1e12
    irls_max_steps: int = 100
    irls_gradient_tolerance: float = 1e-8
    noise_floor: float = 1e-12
    prune_diverging: bool = True


@dataclass(frozen=True)
class RvmModel:
    mode: str
    kernel: KernelSpec
    relevance_vectors: np.ndarray
    weights: np.ndarray
    bias_retained: bool
    alphas: np.ndarray
    noise_variance: float | None = None

    def __post_init__(self):
        rv = np.asarray(self.relevance_vectors, dtype=float)
        if rv.ndim != 2:
            raise ValueError("relevance_vectors must be a 2-D array")
        object.__setattr__(self, "relevance_vectors", rv)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        expected = rv.shape[0] + int(self.bias_retained)
        if self.weights.shape != (expected,) or self.alphas.shape != (expected,):
            raise ValueError(f"need {expected} weights and alphas")
        if self.mode not in ("regression", "classification"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_relevance_vectors(self) -> int:
        return self.relevance_vectors.shape[0]

    @property
    def degenerate(self) -> bool:
        """True for a bias-only model."""
        return self.n_relevance_vectors == 0

    @property
    def input_dim(self) -> int:
        return self.relevance_vectors.shape[1]

    def design(self, X) -> np.ndarray:
        X = _as_rows(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"inputs have {X.shape[1]} columns, model expects {self.input_dim}")
        K = kernel_matrix(X, self.relevance_vectors, self.kernel)
        if self.bias_retained:
            return np.hstack([np.ones((X.shape[0], 1)), K])
        return K

    def decision_function(self, X) -> np.ndarray:
        return self.design(X) @ self.weights


@dataclass
class TrainDiagnostics:
    outer_iterations: int
    pruned_count: int
    final_basis_count: int
    log_marginal_trace: list[float] = field(default_factory=list)
    converged: bool = False


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def kernel_matrix(rows, centers, spec: KernelSpec) -> np.ndarray:
    rows, centers = _as_rows(rows), _as_rows(centers)
    if rows.shape[1] != centers.shape[1]:
        raise ValueError(f"dimension mismatch: {rows.shape[1]} vs {centers.shape[1]}")
    if spec.family == "gaussian":
        return np.exp(-spec.width * cdist(rows, centers, "sqeuclidean"))
    return np.exp(-spec.width * cdist(rows, centers, "euclidean"))


def design_matrix(X, centers, spec: KernelSpec) -> np.ndarray:
    """Bias column of ones followed by kernels against ``centers``."""
    K = kernel_matrix(X, centers, spec)
    return np.hstack([np.ones((K.shape[0], 1)), K])


def _cholesky(H):
    try:
        return cho_factor(H, lower=True)
    except LinAlgError:
        pass
    jitter = 1e-10 * np.mean(np.diag(H))
    try:
        return cho_factor(H + jitter * np.eye(H.shape[0]), lower=True)
    except LinAlgError:
        raise NumericalError(
            f"posterior precision ({H.shape[0]}x{H.shape[0]}) is not positive definite") from None


def _logdet(chol):
    return 2.0 * np.sum(np.log(np.diag(chol[0])))


def _initial_scale(t):
    s = float(np.var(t))
    if s <= 0:
        s = float(np.mean(np.square(t)))
    return s if s > 0 else 1.0


def _diverging(alpha_new, sigma_diag, options):
    """Flag the one basis whose evidence is maximised at alpha = infinity
    (q^2 <= s, equivalently gamma / mu^2 >= 1 / Sigma_ii) by the widest margin.

    Removing a single such basis cannot lower the marginal likelihood, so the
    ascent stays monotone; removing several at once can.
    """
    out = np.zeros(alpha_new.shape, dtype=bool)
    if not options.prune_diverging:
        return out
    ratio = np.nan_to_num(alpha_new * sigma_diag, nan=0.0, posinf=np.finfo(float).max)
    i = int(np.argmax(ratio))
    if ratio[i] >= 1.0:
        out[i] = True
    return out


def _prune(alpha_new, active, bias_col, iteration, threshold, diverging=None):
    """Return the boolean keep-mask over ``active``; never empties the model."""
    drop = ~(alpha_new <= threshold)   # also catches inf / nan
    if diverging is not None:
        drop |= diverging
    if iteration == 1:
        drop &= active != bias_col
    if drop.all():
        keep_one = int(np.argmin(np.where(np.isfinite(alpha_new), alpha_new, np.inf)))
        if np.isinf(alpha_new[keep_one]) and bias_col in active:
            keep_one = int(np.flatnonzero(active == bias_col)[0])
        drop[keep_one] = False
    return ~drop


def _finalize(mode, spec, X, active, mu, alpha, noise):
    bias = 0 in active
    centers = X[active[active > 0] - 1]
    alpha = np.where(np.isfinite(alpha), alpha, 0.0)
    return RvmModel(mode, spec, centers.reshape(-1, X.shape[1]), mu, bias, alpha, noise)


# ------------------------------------------------------------ regression

def regression_posterior(Phi, t, alpha, noise):
    """Posterior covariance, mean and Cholesky factor for fixed hyperparameters."""
    beta = 1.0 / noise
    H = beta * Phi.T @ Phi + np.diag(alpha)
    chol = _cholesky(H)
    Sigma = cho_solve(chol, np.eye(H.shape[0]))
    mu = beta * Sigma @ (Phi.T @ t)
    return Sigma, mu, chol


def regression_log_marginal(Phi, t, alpha, noise, mu=None, chol=None):
    """log p(t | alpha, noise) with the weights integrated out."""
    if mu is None or chol is None:
        _, mu, chol = regression_posterior(Phi, t, alpha, noise)
    n = t.shape[0]
    resid = t - Phi @ mu
    logdet_C = n * math.log(noise) + _logdet(chol) - np.sum(np.log(alpha))
    quad = resid @ resid / noise + mu @ (alpha * mu)
    return float(-0.5 * (n * math.log(2 * math.pi) + logdet_C + quad))


def fit_regression(X, t, spec: KernelSpec, options: RvmOptions = RvmOptions(),
                   candidates=None) -> tuple[RvmModel, TrainDiagnostics]:
    """Type-II ML regression RVM.

    ``candidates`` optionally restricts the initial basis pool (indices into
    the full design, 0 being the bias).
    """
    X = _as_rows(X)
    t = np.asarray(t, dtype=float).ravel()
    n = X.shape[0]
    if n < 1 or t.shape[0] != n:
        raise ValueError("need one target per row")
    if not np.all(np.isfinite(t)):
        raise ValueError("targets must be finite")
    Phi_full = design_matrix(X, X, spec)
    active = np.arange(n + 1) if candidates is None else np.asarray(sorted(candidates), dtype=int)
    scale = _initial_scale(t)
    alpha = np.full(active.size, 1.0 / scale)
    noise = max(0.1 * scale, options.noise_floor)
    diag = TrainDiagnostics(0, 0, active.size)
    initial_count = n + 1

    for it in range(1, options.max_outer_iterations + 1):
        Phi = Phi_full[:, active]
        Sigma, mu, chol = regression_posterior(Phi, t, alpha, noise)
        diag.log_marginal_trace.append(regression_log_marginal(Phi, t, alpha, noise, mu, chol))
        gamma = 1.0 - alpha * np.diag(Sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha_new = np.where(gamma > 0, gamma / mu**2, np.inf)
        resid = t - Phi @ mu
        dof = max(n - float(np.sum(np.clip(gamma, 0.0, 1.0))), 1e-12)
        noise_new = max(float(resid @ resid) / dof, options.noise_floor)

        keep = _prune(alpha_new, active, 0, it, options.prune_threshold,
                      _diverging(alpha_new, np.diag(Sigma), options))
        with np.errstate(divide="ignore", invalid="ignore"):
            dlog = np.abs(np.log(alpha_new[keep]) - np.log(alpha[keep]))
        delta = max(float(np.nanmax(dlog)) if dlog.size else 0.0,
                    abs(math.log(noise_new) - math.log(noise)))
        pruned_now = not keep.all()
        active = active[keep]
        alpha = np.minimum(alpha_new[keep], options.prune_threshold)
        noise = noise_new
        diag.outer_iterations = it
        if not pruned_now and delta < options.tolerance:
            diag.converged = True
            break

    if active.size == 0:
        raise DegenerateModelError("no basis survived pruning")
    Phi = Phi_full[:, active]
    _, mu, _ = regression_posterior(Phi, t, alpha, noise)
    diag.final_basis_count = int(active.size)
    diag.pruned_count = initial_count - diag.final_basis_count
    return _finalize("regression", spec, X, active, mu, alpha, noise), diag


def predict_regression(model: RvmModel, X) -> np.ndarray:
    if model.mode != "regression":
        raise ValueError("model was not trained for regression")
    return model.decision_function(X)


# -------------------------------------------------------- classification

def stable_sigmoid(a) -> np.ndarray:
    """Logistic function clipped to the open interval (0, 1)."""
    a = np.asarray(a, dtype=float)
    p = np.where(a < 0, expit(a), 1.0 - expit(-a))
    return np.clip(p, _P_MIN, _P_MAX)


def penalized_log_likelihood(w, Phi, t, alpha) -> float:
    a = Phi @ w
    # t log y + (1 - t) log(1 - y) with log y = -log(1 + e^{-a})
    ll = -np.sum(t * np.logaddexp(0.0, -a) + (1.0 - t) * np.logaddexp(0.0, a))
    return float(ll - 0.5 * w @ (alpha * w))


def penalized_gradient(w, Phi, t, alpha) -> np.ndarray:
    return Phi.T @ (t - expit(Phi @ w)) - alpha * w


def laplace_mode(Phi, t, alpha, w0=None, max_steps: int = 100, grad_tol: float = 1e-8):
    """Newton ascent with step halving on the penalized log-likelihood.

    Returns the mode and the Cholesky factor of the negative Hessian there.
    """
    w = np.zeros(Phi.shape[1]) if w0 is None else np.array(w0, dtype=float)
    f = penalized_log_likelihood(w, Phi, t, alpha)
    trace = [f]
    for _ in range(max_steps):
        y = expit(Phi @ w)
        g = Phi.T @ (t - y) - alpha * w
        B = y * (1.0 - y)
        H = (Phi.T * B) @ Phi + np.diag(alpha)
        chol = _cholesky(H)
        if np.linalg.norm(g) < grad_tol:
            return w, chol
        step = cho_solve(chol, g)
        # rounding can hide a real ascent step near the optimum
        slack = 1e-13 * (1.0 + abs(f))
        s = 1.0
        for _ in range(60):
            w_try = w + s * step
            f_try = penalized_log_likelihood(w_try, Phi, t, alpha)
            if f_try >= f - slack:
                break
            s *= 0.5
        else:
            raise NumericalError("IRLS step halving failed to improve the objective", trace)
        w, f = w_try, f_try
        trace.append(f)
    y = expit(Phi @ w)
    g = Phi.T @ (t - y) - alpha * w
    if np.linalg.norm(g) < grad_tol * 1e3:
        H = (Phi.T * (y * (1.0 - y))) @ Phi + np.diag(alpha)
        return w, _cholesky(H)
    raise NumericalError(f"IRLS did not converge in {max_steps} steps", trace)


def fit_classification(X, t, spec: KernelSpec, options: RvmOptions = RvmOptions(),
                       candidates=None) -> tuple[RvmModel, TrainDiagnostics]:
    X = _as_rows(X)
    t = np.asarray(t, dtype=float).ravel()
    n = X.shape[0]
    if t.shape[0] != n:
        raise ValueError("need one label per row")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("labels must be 0 or 1")
    if n < 2 or t.min() == t.max():
        raise ValueError("classification needs at least one example of each class")
    Phi_full = design_matrix(X, X, spec)
    active = np.arange(n + 1) if candidates is None else np.asarray(sorted(candidates), dtype=int)
    alpha = np.full(active.size, 1.0)
    w = np.zeros(active.size)
    diag = TrainDiagnostics(0, 0, active.size)
    initial_count = n + 1

    for it in range(1, options.max_outer_iterations + 1):
        Phi = Phi_full[:, active]
        w, chol = laplace_mode(Phi, t, alpha, w, options.irls_max_steps,
                               options.irls_gradient_tolerance)
        Sigma = cho_solve(chol, np.eye(active.size))
        diag.log_marginal_trace.append(
            penalized_log_likelihood(w, Phi, t, alpha)
            + 0.5 * (np.sum(np.log(alpha)) - _logdet(chol)))
        gamma = 1.0 - alpha * np.diag(Sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha_new = np.where(gamma > 0, gamma / w**2, np.inf)
        keep = _prune(alpha_new, active, 0, it, options.prune_threshold,
                      _diverging(alpha_new, np.diag(Sigma), options))
        with np.errstate(divide="ignore", invalid="ignore"):
            dlog = np.abs(np.log(alpha_new[keep]) - np.log(alpha[keep]))
        delta = float(np.nanmax(dlog)) if dlog.size else 0.0
        pruned_now = not keep.all()
        active = active[keep]
        alpha = np.minimum(alpha_new[keep], options.prune_threshold)
        w = w[keep]
        diag.outer_iterations = it
        if not pruned_now and delta < options.tolerance:
            diag.converged = True
            break

    if active.size == 0:
        raise DegenerateModelError("no basis survived pruning")
    w, _ = laplace_mode(Phi_full[:, active], t, alpha, w, options.irls_max_steps,
                        options.irls_gradient_tolerance)
    diag.final_basis_count = int(active.size)
    diag.pruned_count = initial_count - diag.final_basis_count
    return _finalize("classification", spec, X, active, w, alpha, None), diag


def predict_proba(model: RvmModel, X) -> np.ndarray:
    if model.mode != "classification":
        raise ValueError("model was not trained for classification")
    return stable_sigmoid(model.decision_function(X))


# ------------------------------------------------------- width selection

@dataclass(frozen=True)
class WidthScores:
    widths: tuple[float, ...]
    scores: tuple[float, ...]
    failures: tuple[int, ...]
    scheme: str            # "loo" or "kfold"
    n_folds: int

    @property
    def used_kfold(self) -> bool:
        return self.scheme == "kfold"


def _folds(t, mode, n_folds, seed):
    n = t.shape[0]
    fold_of = np.empty(n, dtype=int)
    rng = np.random.default_rng(seed)
    if mode == "classification":
        offset = 0
        for cls in (0, 1):
            members = rng.permutation(np.flatnonzero(t == cls))
            fold_of[members] = (np.arange(members.size) + offset) % n_folds
            offset += members.size
    else:
        fold_of[rng.permutation(n)] = np.arange(n) % n_folds
    return [np.flatnonzero(fold_of == f) for f in range(n_folds)]


def _fold_score(X, t, train, test, spec, mode, options):
    if mode == "classification":
        tt = t[train]
        if tt.min() == tt.max():
            pred = np.full(test.size, tt[0])
        else:
            model, _ = fit_classification(X[train], tt, spec, options)
            pred = (predict_proba(model, X[test]) >= 0.5).astype(float)
        return float(np.sum(pred == t[test]))
    model, _ = fit_regression(X[train], t[train], spec, options)
    return -float(np.sum((predict_regression(model, X[test]) - t[test]) ** 2))


def select_kernel_width(X, t, candidate_widths, mode: str = "classification",
                        family: str = "gaussian", loo_cutoff: int = 200,
                        k_folds: int = 10, seed: int = 0,
                        options: RvmOptions = RvmOptions()) -> tuple[KernelSpec, WidthScores]:
    """Pick the kernel width by leave-one-out (or k-fold above ``loo_cutoff``).

    Scores are mean held-out accuracy (classification) or negative mean
    squared error (regression). Ties go to the smallest width, then to the
    first occurrence in the grid. A failed fit costs that fold its whole score
    in classification and is counted in ``failures``.
    """
    widths = [float(w) for w in candidate_widths]
    if not widths:
        raise ValueError("candidate width grid is empty")
    if any(not w > 0 for w in widths):
        raise ValueError("candidate widths must be positive")
    X = _as_rows(X)
    t = np.asarray(t, dtype=float).ravel()
    n = X.shape[0]
    if n <= loo_cutoff:
        folds, scheme = [np.array([i]) for i in range(n)], "loo"
    else:
        folds, scheme = _folds(t, mode, min(k_folds, n), seed), "kfold"
    everything = np.arange(n)

    scores, failures = [], []
    for width in widths:
        spec = KernelSpec(family, width)
        total, failed = 0.0, 0
        for test in folds:
            train = np.setdiff1d(everything, test)
            try:
                total += _fold_score(X, t, train, test, spec, mode, options)
            except (NumericalError, DegenerateModelError):
                failed += 1
                if mode == "regression":
                    total = -np.inf
        scores.append(total / n)
        failures.append(failed)

    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    winner = min(tied, key=lambda i: (widths[i], i))
    table = WidthScores(tuple(widths), tuple(scores), tuple(failures), scheme, len(folds))
    return KernelSpec(family, widths[winner]), table
