"""Exact Gaussian-process regression with an ARD squared-exponential kernel.

Noise-free observations, zero-mean prior on centered targets, Cholesky
factorization with an escalating diagonal jitter, and marginal-likelihood
hyperparameter fitting by multi-start coordinate pattern search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ModelConditioningError
from .sobol import SobolSequence

JITTER_CEILING = 1e-4


@dataclass
class KernelParams:
    """ARD squared-exponential hyperparameters.

    ``jitter`` is relative: the factorized matrix is K + jitter*signal_variance*I.
    """

    length_scales: np.ndarray
    signal_variance: float = 1.0
    jitter: float = 1e-8

    def __post_init__(self):
        self.length_scales = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if np.any(self.length_scales <= 0):
            raise ValueError("length scales must be strictly positive")
        if self.signal_variance <= 0:
            raise ValueError("signal variance must be strictly positive")
        if self.jitter <= 0:
            raise ValueError("jitter must be strictly positive")


def kernel(a, b, params: KernelParams) -> float:
    """Covariance between two inputs: sigma_f^2 * exp(-1/2 sum ((a_d-b_d)/l_d)^2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != params.length_scales.shape:
        raise ValueError("kernel inputs and length scales must share one dimension")
    r2 = np.sum(((a - b) / params.length_scales) ** 2)
    return params.signal_variance * math.exp(-0.5 * r2)


def _scaled_sqdist(A, B, length_scales):
    """Pairwise squared distances of rows of A and B after per-dimension scaling."""
    A = A / length_scales
    B = B / length_scales
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def kernel_matrix(X, params: KernelParams):
    """Dense covariance matrix of the rows of X."""
    return params.signal_variance * np.exp(-0.5 * _scaled_sqdist(X, X, params.length_scales))


def cross_kernel(X, Z, params: KernelParams):
    """Covariance matrix between rows of X (training) and rows of Z (queries)."""
    return params.signal_variance * np.exp(-0.5 * _scaled_sqdist(X, Z, params.length_scales))


@dataclass
class GpModel:
    """Trained surrogate: factorized kernel matrix plus precomputed solve."""

    train_inputs: np.ndarray
    train_targets: np.ndarray  # centered
    target_mean: float
    params: KernelParams
    chol_factor: np.ndarray  # lower triangular
    alpha: np.ndarray  # (K + jitter_used*sigma_f^2 I)^-1 @ train_targets
    jitter_used: float

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]


def _factorize(K, signal_variance, jitter):
    """Cholesky with jitter escalation (x10 per retry, capped at JITTER_CEILING)."""
    t = K.shape[0]
    jit = jitter
    while True:
        try:
            L = np.linalg.cholesky(K + (jit * signal_variance) * np.eye(t))
            return L, jit
        except np.linalg.LinAlgError:
            jit *= 10.0
            if jit > JITTER_CEILING:
                raise ModelConditioningError(
                    f"kernel matrix not positive definite at jitter {jit / 10:.1e}"
                ) from None


def gp_train(inputs, targets, params: KernelParams) -> GpModel:
    """Fit the exact GP: center targets, factorize the jittered kernel matrix."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("need at least one training point with matching target")
    mean = float(np.mean(y))
    yc = y - mean
    K = kernel_matrix(X, params)
    L, jit = _factorize(K, params.signal_variance, params.jitter)
    alpha = solve_triangular(L.T, solve_triangular(L, yc, lower=True), lower=False)
    return GpModel(X, yc, mean, params, L, alpha, jit)


def gp_predict_batch(model: GpModel, X):
    """Vectorized predictive mean and variance at the rows of X.

    Variance is clamped at zero; with noise-free training data the mean
    interpolates the targets at the training inputs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.train_inputs.shape[1]:
        raise ValueError("query dimension does not match training inputs")
    k = cross_kernel(model.train_inputs, X, model.params)  # (t, n)
    mean = model.target_mean + k.T @ model.alpha
    w = solve_triangular(model.chol_factor, k, lower=True)
    var = model.params.signal_variance - np.sum(w * w, axis=0)
    np.maximum(var, 0.0, out=var)
    return mean, var


def gp_predict(model: GpModel, x):
    """Predictive (mean, variance) at a single input."""
    mean, var = gp_predict_batch(model, np.asarray(x, dtype=float)[None, :])
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(model: GpModel) -> float:
    """Log evidence of the centered targets under the factorized model."""
    t = model.n_train
    fit = -0.5 * float(model.train_targets @ model.alpha)
    logdet = -float(np.sum(np.log(np.diag(model.chol_factor))))
    return fit + logdet - 0.5 * t * math.log(2.0 * math.pi)


@dataclass
class HyperSearchConfig:
    """Multi-start pattern-search settings for hyperparameter fitting.

    Bounds are relative: length scales to each input dimension's observed
    range, signal variance to the target variance. The search runs in natural
    log space with greedy coordinate probes; ``sweep_all`` probes every
    coordinate per iteration, otherwise one coordinate round-robin (cheaper,
    used for warm refits).
    """

    n_starts: int = 8
    iterations: int = 60
    lengthscale_bounds: tuple = (1e-2, 1e2)
    signal_bounds: tuple = (1e-4, 1e2)
    initial_step: float = 1.0
    min_step: float = 1e-3
    sweep_all: bool = True
    jitter: float = 1e-8


@dataclass
class FitResult:
    params: KernelParams
    log_likelihood: float
    improved: bool  # False: no search start could be improved upon


class _LmlObjective:
    """LML as a function of log-hyperparameters, with cached squared differences."""

    def __init__(self, X, y, jitter):
        self.t, self.d = X.shape
        self.yc = y - np.mean(y)
        self.jitter = jitter
        diff = X[:, None, :] - X[None, :, :]
        self.d2 = np.ascontiguousarray(np.moveaxis(diff * diff, 2, 0))  # (d, t, t)

    def __call__(self, theta):
        inv_l2 = np.exp(-2.0 * theta[: self.d])
        sigma2 = math.exp(theta[self.d])
        K = sigma2 * np.exp(-0.5 * np.tensordot(inv_l2, self.d2, axes=1))
        try:
            L, _ = _factorize(K, sigma2, self.jitter)
        except ModelConditioningError:
            return -math.inf
        z = solve_triangular(L, self.yc, lower=True)
        return (
            -0.5 * float(z @ z)
            - float(np.sum(np.log(np.diag(L))))
            - 0.5 * self.t * math.log(2.0 * math.pi)
        )


def _pattern_search(objective, theta0, lo, hi, cfg: HyperSearchConfig):
    theta = theta0.copy()
    best = objective(theta)
    step = cfg.initial_step
    n = len(theta)
    coord = 0
    for _ in range(cfg.iterations):
        moved = False
        coords = range(n) if cfg.sweep_all else [coord]
        for i in coords:
            for delta in (step, -step):
                cand = theta.copy()
                cand[i] = min(max(cand[i] + delta, lo[i]), hi[i])
                if cand[i] == theta[i]:
                    continue
                val = objective(cand)
                if val > best:
                    theta, best = cand, val
                    moved = True
                    break
        coord = (coord + 1) % n
        if not moved and (cfg.sweep_all or coord == 0):
            step *= 0.5
            if step < cfg.min_step:
                break
    return theta, best


def fit_hyperparameters(
    inputs, targets, search: HyperSearchConfig | None = None, warm: KernelParams | None = None
) -> FitResult:
    """Maximize the marginal likelihood over ARD length scales and signal variance.

    Starts are drawn from a Sobol grid over the log-space bounds; an optional
    ``warm`` parameter set joins them. The returned parameters score at least
    as well as every start evaluated.
    """
    cfg = search or HyperSearchConfig()
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    t, d = X.shape
    if t < 5:
        raise ValueError("hyperparameter fitting needs at least 5 training points")

    ranges = X.max(axis=0) - X.min(axis=0)
    ranges[ranges <= 0] = 1.0
    tvar = float(np.var(y))
    if tvar <= 0:
        tvar = 1.0  # constant targets: likelihood is flat, any scale admissible
    lo = np.log(np.concatenate([cfg.lengthscale_bounds[0] * ranges, [cfg.signal_bounds[0] * tvar]]))
    hi = np.log(np.concatenate([cfg.lengthscale_bounds[1] * ranges, [cfg.signal_bounds[1] * tvar]]))

    objective = _LmlObjective(X, y, cfg.jitter)
    starts = []
    if cfg.n_starts > 0:
        grid = SobolSequence(d + 1).take(cfg.n_starts)
        starts.extend(lo + grid * (hi - lo))
    if warm is not None:
        theta_w = np.log(np.concatenate([warm.length_scales, [warm.signal_variance]]))
        starts.append(np.clip(theta_w, lo, hi))
    if not starts:
        raise ValueError("no search starts configured")

    start_scores = [objective(th) for th in starts]
    best_start = max(start_scores)
    best_theta, best_val = None, -math.inf
    for th, sc in zip(starts, start_scores):
        if not math.isfinite(sc):
            continue
        theta, val = _pattern_search(objective, th, lo, hi, cfg)
        if val > best_val:
            best_theta, best_val = theta, val
    if best_theta is None:  # every start failed to factorize
        idx = int(np.argmax(start_scores))
        best_theta, best_val = starts[idx], start_scores[idx]
    params = KernelParams(
        length_scales=np.exp(best_theta[:d]),
        signal_variance=math.exp(best_theta[d]),
        jitter=cfg.jitter,
    )
    return FitResult(params, best_val, improved=best_val > best_start)


def dump_model(model: GpModel, path) -> None:
    """Write a small diagnostics file: hyperparameters, target mean, row count."""
    lines = [
        "gp model dump",
        f"rows = {model.n_train}",
        f"target_mean = {model.target_mean!r}",
        f"signal_variance = {model.params.signal_variance!r}",
        f"jitter_used = {model.jitter_used!r}",
        "length_scales = " + " ".join(repr(v) for v in model.params.length_scales),
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
