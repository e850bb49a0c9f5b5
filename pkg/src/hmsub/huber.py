"""Huber loss, its score, and the least-squares / IRLS solvers built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from hmsub.data import Dataset
from hmsub.errors import DegenerateScaleError, DimensionMismatchError, SingularMatrixError

RIDGE_FACTOR = 1e-8


@dataclass(frozen=True)
class HuberConfig:
    tau: float
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class FitResult:
    """Fitted coefficients plus solver diagnostics.

    ``ridge`` is set when the normal equations needed the ridge fallback at
    any point; ``loss_history`` holds the objective after every iterate
    (starting with the initial point for IRLS).
    """

    beta: np.ndarray
    converged: bool
    iterations: int
    final_loss: float
    ridge: bool = False
    loss_history: list[float] = field(default_factory=list)


def _check_tau(tau):
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")


def huber_loss(x, tau):
    """x**2/2 inside [-tau, tau], tau*|x| - tau**2/2 outside. Vectorized."""
    _check_tau(tau)
    ax = np.abs(x)
    out = np.where(ax <= tau, 0.5 * np.square(x), tau * ax - 0.5 * tau * tau)
    return out if np.ndim(out) else float(out)


def huber_score(x, tau):
    """Derivative of :func:`huber_loss`: sign(x) * min(|x|, tau)."""
    _check_tau(tau)
    out = np.clip(x, -tau, tau)
    return out if np.ndim(out) else float(out)


def _residuals(data: Dataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.d,):
        raise DimensionMismatchError(f"beta has shape {beta.shape}, expected ({data.d},)")
    return data.y - data.X @ beta


def empirical_loss(data: Dataset, beta, tau: float) -> float:
    return float(np.mean(huber_loss(_residuals(data, beta), tau)))


def empirical_gradient(data: Dataset, beta, tau: float) -> np.ndarray:
    r = _residuals(data, beta)
    return -(data.X.T @ huber_score(r, tau)) / data.n


def solve_gram(G, B):
    """Solve the symmetric PSD system G x = B; returns (x, ridge_used).

    Well-conditioned systems go through Cholesky. Anything with a small
    pivot is re-examined by eigendecomposition: a smallest eigenvalue below
    the usual rank tolerance triggers one retry with
    ``RIDGE_FACTOR * trace / d`` on the diagonal.
    """
    d = G.shape[0]
    eps = np.finfo(float).eps
    try:
        c, low = scipy.linalg.cho_factor(G, check_finite=False)
        piv = np.diag(c)
        if piv.min() ** 2 > np.max(np.diag(G)) * d * eps * 1e4:
            return scipy.linalg.cho_solve((c, low), B, check_finite=False), False
    except np.linalg.LinAlgError:
        pass
    evals, evecs = np.linalg.eigh(G)
    ridge = False
    if not evals[-1] > 0 or evals[0] <= evals[-1] * d * eps:
        lam = RIDGE_FACTOR * np.trace(G) / d
        if not lam > 0:
            raise SingularMatrixError("normal equations are singular (zero design)")
        evals = evals + lam
        ridge = True
        if evals[0] <= evals[-1] * d * eps:
            raise SingularMatrixError("normal equations singular after ridge fallback")
    coef = evecs.T @ B
    coef = coef / (evals if coef.ndim == 1 else evals[:, None])
    return evecs @ coef, ridge


def _solve_normal(X, y, w=None):
    Xw = X if w is None else X * w[:, None]
    return solve_gram(Xw.T @ X, Xw.T @ y)


def _ols_loss(data, beta):
    return float(0.5 * np.mean(np.square(data.y - data.X @ beta)))


def fit_ols(data: Dataset) -> FitResult:
    """Least squares via the normal equations, with ridge fallback when singular."""
    beta, ridge = _solve_normal(data.X, data.y)
    loss = _ols_loss(data, beta)
    return FitResult(beta, True, 1, loss, ridge, [loss])


def fit_weighted_ols(data: Dataset, weights) -> FitResult:
    """Minimize sum_i w_i (y_i - x_i'b)^2 for strictly positive weights."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n,):
        raise DimensionMismatchError(f"weights have shape {w.shape}, expected ({data.n},)")
    if not np.all(w > 0):
        raise ValueError("weights must be strictly positive")
    beta, ridge = _solve_normal(data.X, data.y, w)
    loss = float(0.5 * np.sum(w * np.square(data.y - data.X @ beta)) / np.sum(w))
    return FitResult(beta, True, 1, loss, ridge, [loss])


def irls_weights(r, tau):
    ar = np.abs(r)
    return np.where(ar <= tau, 1.0, tau / np.maximum(ar, tau))


def fit_huber_irls(data: Dataset, cfg: HuberConfig, beta_init=None) -> FitResult:
    """Huber regression by iteratively reweighted least squares.

    Each step solves a weighted least-squares problem with weights
    min(1, tau/|r_i|), which majorizes the Huber objective, so the loss
    never increases. Stops once the sup-norm coefficient change is at most
    ``cfg.tol``; hitting ``cfg.max_iter`` returns the best iterate with
    ``converged=False``.
    """
    tau = cfg.tau
    ridge = False
    if beta_init is None:
        init = fit_ols(data)
        beta, ridge = init.beta, init.ridge
    else:
        beta = np.array(beta_init, dtype=float)
        if beta.shape != (data.d,):
            raise DimensionMismatchError(f"beta_init has shape {beta.shape}, expected ({data.d},)")
    X, y = data.X, data.y
    r = y - X @ beta
    loss = float(np.mean(huber_loss(r, tau)))
    history = [loss]
    best_beta, best_loss = beta, loss
    converged = False
    it = 0
    for it in range(1, int(cfg.max_iter) + 1):
        new_beta, used_ridge = _solve_normal(X, y, irls_weights(r, tau))
        ridge |= used_ridge
        r = y - X @ new_beta
        loss = float(np.mean(huber_loss(r, tau)))
        history.append(loss)
        step = np.max(np.abs(new_beta - beta))
        beta = new_beta
        if loss <= best_loss:
            best_beta, best_loss = beta, loss
        if step <= cfg.tol:
            converged = True
            break
    if converged:
        best_beta, best_loss = beta, loss
    return FitResult(best_beta, converged, it, best_loss, ridge, history)


def tau_rule_sigma(data: Dataset, n_sub: int, t: float) -> float:
    """tau = sigma * sqrt(n_sub / t), sigma**2 the mean squared deviation of y (divisor n)."""
    if data.n < 2:
        raise ValueError("need at least two observations")
    if n_sub < 1 or not t > 0:
        raise ValueError("n_sub must be >= 1 and t > 0")
    sigma = float(np.sqrt(np.mean(np.square(data.y - data.y.mean()))))
    if sigma == 0.0:
        raise DegenerateScaleError("response is constant; sigma = 0")
    return sigma * float(np.sqrt(n_sub / t))


def default_tau_grid(data: Dataset, num: int = 20) -> np.ndarray:
    """``num`` log-spaced values from 0.01*sigma to 100*sigma."""
    sigma = tau_rule_sigma(data, 1, 1.0)
    return np.geomspace(0.01 * sigma, 100 * sigma, num)


def select_tau_grid(
    data: Dataset | None,
    pilot,
    grid: Sequence[float] | None,
    eval_fn: Callable[[float], float],
) -> float:
    """Return the grid value with the smallest ``eval_fn(tau)``; ties go to the smaller tau.

    ``grid=None`` uses :func:`default_tau_grid` on ``data``. ``pilot`` is not
    read here; callers close over it inside ``eval_fn``.
    """
    if grid is None:
        grid = default_tau_grid(data)
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("tau grid is empty")
    if grid[0] <= 0:
        raise ValueError("tau grid values must be positive")
    best_tau, best_val = grid[0], float(eval_fn(grid[0]))
    for tau in grid[1:]:
        val = float(eval_fn(tau))
        if val < best_val or (np.isnan(best_val) and not np.isnan(val)):
            best_tau, best_val = tau, val
    return best_tau
