"""Simulation designs: two-component Gaussian mixture covariates and heavy-tailed noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmsub.data import Dataset, RngSeed, as_generator, validate_dataset

# (mu1, sigma1, mu2, sigma2) for the two equal-weight mixture components
DESIGNS = {
    "M1": (-2.0, 3.0, 2.0, 10.0),
    "M2": (0.0, 3.0, 0.0, 10.0),
}
BETA_SUPPORT = np.array([-3, -2, -1, 0, 1, 2, 3], dtype=float)

# sub-stream keys under one RngSeed
_DESIGN, _BETA, _NOISE = 0, 1, 2


@dataclass(frozen=True)
class LogNormal:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"lognormal sigma must be positive, got {self.sigma}")

    @property
    def label(self):
        return "LN"


@dataclass(frozen=True)
class StudentT:
    df: float = 2.0

    def __post_init__(self):
        if not self.df > 0:
            raise ValueError(f"Student-t df must be positive, got {self.df}")

    @property
    def label(self):
        return "t"


@dataclass(frozen=True)
class ZeroNoise:
    """Noise-free hook for exact-recovery tests."""

    @property
    def label(self):
        return "none"


@dataclass(frozen=True)
class SimulationModel:
    design: str
    noise: LogNormal | StudentT | ZeroNoise
    n: int
    d: int

    def __post_init__(self):
        if self.design.upper() not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}; expected M1 or M2")
        object.__setattr__(self, "design", self.design.upper())
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")

    @property
    def label(self):
        return f"{self.design}({self.noise.label})"


@dataclass(frozen=True, eq=False)
class GroundTruth:
    beta_star: np.ndarray

    def __post_init__(self):
        b = np.array(self.beta_star, dtype=float)
        if not np.all(np.isin(b, BETA_SUPPORT)):
            raise ValueError("beta_star entries must lie in {-3, ..., 3}")
        b.setflags(write=False)
        object.__setattr__(self, "beta_star", b)


def gen_design(n: int, d: int, which: str, rng) -> np.ndarray:
    """n x d matrix, each entry from 1/2 N(mu1, s1^2) + 1/2 N(mu2, s2^2)."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    mu1, s1, mu2, s2 = DESIGNS[which.upper()]
    g = as_generator(rng)
    first = g.random((n, d)) < 0.5
    z = g.standard_normal((n, d))
    return np.where(first, mu1 + s1 * z, mu2 + s2 * z)


def gen_noise(n: int, kind, rng) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    g = as_generator(rng)
    if isinstance(kind, LogNormal):
        return np.exp(kind.mu + kind.sigma * g.standard_normal(n))
    if isinstance(kind, StudentT):
        if not kind.df > 0:
            raise ValueError("df must be positive")
        # normal / sqrt(chi2_df / df), valid for fractional df
        return g.standard_normal(n) / np.sqrt(g.chisquare(kind.df, n) / kind.df)
    if isinstance(kind, ZeroNoise):
        return np.zeros(n)
    raise TypeError(f"unsupported noise kind {kind!r}")


def gen_beta_star(d: int, rng) -> GroundTruth:
    if d < 1:
        raise ValueError("d must be positive")
    return GroundTruth(as_generator(rng).choice(BETA_SUPPORT, size=d))


def gen_dataset(model: SimulationModel, rng: RngSeed, intercept: bool = False):
    """Return ``(dataset, truth, noise)`` with y = X beta* + noise.

    Design, coefficients and noise come from separate sub-streams of ``rng``,
    so changing the noise law leaves X and beta* unchanged. With
    ``intercept=True`` a constant column is prepended after y is formed;
    ``truth`` always describes the non-intercept coefficients.
    """
    if not isinstance(rng, RngSeed):
        rng = RngSeed(int(rng))
    X = gen_design(model.n, model.d, model.design, rng.generator(_DESIGN))
    truth = gen_beta_star(model.d, rng.generator(_BETA))
    eps = gen_noise(model.n, model.noise, rng.generator(_NOISE))
    data = Dataset(X, X @ truth.beta_star + eps)
    if intercept:
        data = data.with_intercept()
    validate_dataset(data)
    return data, truth, eps
