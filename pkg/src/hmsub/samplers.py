"""Subsampling strategies: uniform, leverage-based, gradient, influence and the Huber Markov chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from hmsub.data import Dataset, SubsampleSelection, as_generator, select_rows
from hmsub.errors import DimensionMismatchError, ProposalCapExceeded
from hmsub.huber import (
    FitResult,
    HuberConfig,
    fit_huber_irls,
    fit_ols,
    fit_weighted_ols,
    huber_loss,
    solve_gram,
)

EPS_FLOOR = 1e-12
PROPOSAL_CAP_FACTOR = 1000

KINDS = ("uniform", "leverage", "slev", "levunw", "gradient", "influence", "hms")
_TAGS = {
    "uniform": "UNIF",
    "leverage": "LEV",
    "levunw": "LEVUNW",
    "gradient": "GS",
    "influence": "IS",
    "hms": "HMS",
}
_ALIASES = {
    "unif": "uniform",
    "lev": "leverage",
    "shrinkleverage": "slev",
    "leverageunweighted": "levunw",
    "gs": "gradient",
    "is": "influence",
}
PILOT_KINDS = frozenset({"gradient", "influence", "hms"})


@dataclass(frozen=True)
class SamplerSpec:
    """Which sampler to run and how many rows to draw.

    ``alpha`` only matters for ``slev``; ``tau`` and ``burn_in`` only for
    ``hms``. ``tau=None`` is allowed at construction so experiment drivers
    can fill it in from a tau policy; :func:`run_sampler` requires it.
    ``burn_in=None`` means burn-in equal to ``n_sub``.
    """

    kind: str
    n_sub: int
    alpha: float | None = None
    tau: float | None = None
    burn_in: int | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if int(self.n_sub) < 1:
            raise ValueError(f"n_sub must be >= 1, got {self.n_sub}")
        if kind == "slev":
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ValueError(f"slev needs alpha in [0, 1], got {self.alpha}")
        if kind == "hms":
            if self.tau is not None and not self.tau > 0:
                raise ValueError(f"hms tau must be positive, got {self.tau}")
            if self.burn_in is not None and self.burn_in < 0:
                raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")

    @property
    def tag(self) -> str:
        if self.kind == "slev":
            return f"SLEV{self.alpha:g}"
        return _TAGS[self.kind]

    @property
    def needs_pilot(self) -> bool:
        return self.kind in PILOT_KINDS

    @property
    def effective_burn_in(self) -> int:
        return self.n_sub if self.burn_in is None else int(self.burn_in)


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Sampling law over rows; ``degenerate`` marks a uniform fallback."""

    p: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probability vector must be a non-empty 1-d array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __len__(self):
        return self.p.size

    @classmethod
    def from_scores(cls, scores) -> ProbabilityVector:
        s = np.asarray(scores, dtype=float)
        total = s.sum()
        if not total > 0:
            return cls(np.full(s.size, 1.0 / s.size), degenerate=True)
        return cls(s / total)


def leverage_scores(X) -> np.ndarray:
    """Diagonal of the hat matrix from a column-pivoted thin QR.

    Columns of Q beyond the numerical rank are dropped, so the scores sum to
    rank(X).
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < d:
        raise ValueError(f"leverage scores need n >= d, got {n} x {d}")
    Q, R, _ = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, d) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    return np.einsum("ij,ij->i", Q[:, :rank], Q[:, :rank])


def leverage_probs(X) -> ProbabilityVector:
    X = np.asarray(X, dtype=float)
    if not np.any(X):
        raise ValueError("leverage probabilities undefined for an all-zero design")
    return ProbabilityVector.from_scores(leverage_scores(X))


def slev_probs(lev: ProbabilityVector, alpha: float) -> ProbabilityVector:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    p = alpha * lev.p + (1.0 - alpha) / len(lev)
    return ProbabilityVector(p / p.sum())


def _pilot_residuals(data: Dataset, pilot) -> np.ndarray:
    pilot = np.asarray(pilot, dtype=float)
    if pilot.shape != (data.d,):
        raise DimensionMismatchError(f"pilot has shape {pilot.shape}, expected ({data.d},)")
    return data.y - data.X @ pilot


def gradient_probs(data: Dataset, pilot) -> ProbabilityVector:
    """p_i proportional to the norm of the squared-loss gradient |r_i| * ||x_i||."""
    r = _pilot_residuals(data, pilot)
    return ProbabilityVector.from_scores(np.abs(r) * np.linalg.norm(data.X, axis=1))


def influence_probs(data: Dataset, pilot) -> ProbabilityVector:
    """p_i proportional to ||r_i * Sigma_n^{-1} x_i|| with Sigma_n = X'X / n."""
    r = _pilot_residuals(data, pilot)
    sigma_n = data.X.T @ data.X / data.n
    solved, _ = solve_gram(sigma_n, data.X.T)
    return ProbabilityVector.from_scores(np.abs(r) * np.linalg.norm(solved, axis=0))


def sample_weighted(p: ProbabilityVector, n_sub: int, rng) -> SubsampleSelection:
    """i.i.d. draws with replacement; weights 1/(n p_i) for the weighted refit."""
    if n_sub < 1:
        raise ValueError(f"n_sub must be >= 1, got {n_sub}")
    n = len(p)
    idx = as_generator(rng).choice(n, size=n_sub, replace=True, p=p.p)
    return SubsampleSelection(idx, 1.0 / (n * p.p[idx]))


def sample_uniform(n: int, n_sub: int, rng) -> SubsampleSelection:
    if not 1 <= n_sub <= n:
        raise ValueError(f"uniform sampling without replacement needs 1 <= n_sub <= n, got {n_sub}, {n}")
    return SubsampleSelection(as_generator(rng).choice(n, size=n_sub, replace=False), method_tag="UNIF")


def acceptance_probability(loss_current: float, loss_candidate: float) -> float:
    """min(1, loss_current / loss_candidate); 1 when the candidate loss is below the floor."""
    if loss_current < 0 or loss_candidate < 0:
        raise ValueError("Huber losses are nonnegative")
    if loss_candidate <= EPS_FLOOR:
        return 1.0
    return min(1.0, loss_current / loss_candidate)


def hms_chain(losses, n_states: int, rng, max_proposals: int | None = None) -> np.ndarray:
    """Run the Huber-ratio chain over precomputed per-row losses.

    The first state is a uniform draw. Candidates are uniform over all rows;
    a rejected candidate is re-proposed without recording anything, and each
    acceptance records the new state. Returns all ``n_states`` recorded
    states in order.
    """
    loss = np.asarray(losses, dtype=float).tolist()
    n = len(loss)
    g = as_generator(rng)
    if max_proposals is None:
        max_proposals = PROPOSAL_CAP_FACTOR * n_states
    state = int(g.integers(n))
    states = [state]
    cur = loss[state]
    proposals = 0
    floor = EPS_FLOOR
    while len(states) < n_states:
        batch = max(1024, 4 * (n_states - len(states)))
        cands = g.integers(0, n, size=batch).tolist()
        us = g.random(batch).tolist()
        for c, u in zip(cands, us):
            proposals += 1
            lc = loss[c]
            # u < 1 always, so a ratio >= 1 accepts without the min()
            if lc <= floor or u * lc < cur:
                cur = lc
                states.append(c)
                if len(states) == n_states:
                    break
            if proposals >= max_proposals:
                raise ProposalCapExceeded(
                    f"{proposals} proposals produced only {len(states)} of {n_states} states"
                )
    return np.array(states, dtype=np.int64)


def hms_sample(data: Dataset, pilot, tau: float, n_sub: int, burn_in: int, rng) -> SubsampleSelection:
    """Markov subsample of ``n_sub`` rows scored by the pilot's Huber losses.

    The chain records ``burn_in + n_sub`` accepted states (the initial state
    counts toward burn-in) and keeps the last ``n_sub``.
    """
    if n_sub < 1 or burn_in < 0:
        raise ValueError("n_sub must be >= 1 and burn_in >= 0")
    losses = huber_loss(_pilot_residuals(data, pilot), tau)
    states = hms_chain(np.atleast_1d(losses), n_sub + burn_in, rng)
    return SubsampleSelection(states[burn_in:], method_tag="HMS")


def pilot_estimate(data: Dataset, n0: int, rng) -> FitResult:
    """OLS on a uniform subsample of ``n0`` rows (ridge fallback when n0 < d)."""
    return fit_ols(select_rows(data, sample_uniform(data.n, min(n0, data.n), rng)))


def run_sampler(spec: SamplerSpec, data: Dataset, pilot, rng, huber_cfg: HuberConfig | None = None):
    """Draw a subsample according to ``spec`` and fit its estimator.

    Returns ``(selection, fit)``. The fit is OLS for UNIF and LEVUNW,
    importance-weighted OLS for LEV, SLEV, GS and IS, and Huber IRLS
    (started at the pilot) for HMS.
    """
    if spec.needs_pilot and pilot is None:
        raise ValueError(f"sampler {spec.tag} requires a pilot estimate")
    kind = spec.kind
    if kind == "uniform":
        sel = sample_uniform(data.n, spec.n_sub, rng)
    elif kind == "hms":
        if spec.tau is None:
            raise ValueError("HMS sampler needs tau")
        sel = hms_sample(data, pilot, spec.tau, spec.n_sub, spec.effective_burn_in, rng)
    else:
        if kind in ("leverage", "levunw"):
            p = leverage_probs(data.X)
        elif kind == "slev":
            p = slev_probs(leverage_probs(data.X), spec.alpha)
        elif kind == "gradient":
            p = gradient_probs(data, pilot)
        else:
            p = influence_probs(data, pilot)
        drawn = sample_weighted(p, spec.n_sub, rng)
        weights = None if kind == "levunw" else drawn.weights
        sel = SubsampleSelection(drawn.indices, weights, spec.tag)
    sel = SubsampleSelection(sel.indices, sel.weights, spec.tag)
    sub = select_rows(data, sel)
    if kind == "hms":
        cfg = huber_cfg or HuberConfig(spec.tau)
        if cfg.tau != spec.tau:
            cfg = HuberConfig(spec.tau, cfg.tol, cfg.max_iter)
        fit = fit_huber_irls(sub, cfg, beta_init=pilot)
    elif sel.weights is not None:
        fit = fit_weighted_ols(sub, sel.weights)
    else:
        fit = fit_ols(sub)
    return sel, fit
