"""Dataset, subsample selection and seed types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmsub.errors import DatasetError, DimensionMismatchError, NonFiniteError


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``X`` (n x d) and response ``y`` (n,).

    Arrays are copied and marked read-only on construction. Invariants are
    checked by :func:`validate_dataset`, not here, so malformed data can still
    be wrapped and diagnosed.
    """

    X: np.ndarray
    y: np.ndarray
    intercept_included: bool = False

    def __post_init__(self):
        X = _frozen(self.X, float)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1), float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", _frozen(np.ravel(self.y), float))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def with_intercept(self) -> Dataset:
        if self.intercept_included:
            return self
        X = np.column_stack([np.ones(self.n), self.X])
        return Dataset(X, self.y, intercept_included=True)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.intercept_included == other.intercept_included
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


def validate_dataset(data: Dataset) -> None:
    """Raise on the first violated Dataset invariant, return None otherwise."""
    X, y = data.X, data.y
    if X.ndim != 2:
        raise DatasetError(f"X must be 2-d, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DatasetError(f"empty dataset: X shape {X.shape}")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        raise NonFiniteError("X", int(bad[0, 0]), int(bad[0, 1]))
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise NonFiniteError("y", int(bad[0]))


@dataclass(frozen=True, eq=False)
class SubsampleSelection:
    """Ordered row indices (duplicates allowed) with optional importance weights."""

    indices: np.ndarray
    weights: np.ndarray | None = None
    method_tag: str = ""

    def __post_init__(self):
        idx = _frozen(self.indices, np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be 1-d")
        object.__setattr__(self, "indices", idx)
        if self.weights is not None:
            w = _frozen(self.weights, float)
            if w.shape != idx.shape:
                raise ValueError("weights must match indices in length")
            if not np.all(w > 0):
                raise ValueError("importance weights must be positive")
            object.__setattr__(self, "weights", w)

    @property
    def n_sub(self) -> int:
        return len(self.indices)

    def check(self, n: int) -> None:
        if self.n_sub and (self.indices.min() < 0 or self.indices.max() >= n):
            bad = self.indices[(self.indices < 0) | (self.indices >= n)][0]
            raise IndexError(f"index {bad} out of range for {n} rows")

    def __eq__(self, other):
        if not isinstance(other, SubsampleSelection):
            return NotImplemented
        if (self.weights is None) != (other.weights is None):
            return False
        return (
            self.method_tag == other.method_tag
            and np.array_equal(self.indices, other.indices)
            and (self.weights is None or np.array_equal(self.weights, other.weights))
        )

    __hash__ = None


@dataclass(frozen=True)
class RngSeed:
    """Seed plus stream id; sub-keys derive further independent streams.

    Streams are built with ``SeedSequence(seed, spawn_key=(stream_id, *keys))``
    so that identical arguments give identical draws.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *map(int, keys)))
        return np.random.Generator(np.random.PCG64(ss))

    def stream(self, stream_id: int) -> RngSeed:
        return RngSeed(self.seed, stream_id)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngSeed, a plain int seed or a ready Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    return RngSeed(int(rng)).generator()


def select_rows(data: Dataset, sel: SubsampleSelection) -> Dataset:
    """Gather rows of ``data`` in the order of ``sel.indices``, copying duplicates."""
    sel.check(data.n)
    return Dataset(data.X[sel.indices], data.y[sel.indices], data.intercept_included)
