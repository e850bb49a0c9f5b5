import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmsub.data import Dataset, RngSeed, SubsampleSelection, as_generator, select_rows, validate_dataset
from hmsub.errors import DatasetError, DimensionMismatchError, NonFiniteError


def small(n=3, d=2):
    X = np.arange(n * d, dtype=float).reshape(n, d)
    return Dataset(X, np.arange(n, dtype=float) * 10)


def test_select_rows_identity():
    data = small()
    assert select_rows(data, SubsampleSelection([0, 1, 2])) == data


def test_select_rows_duplicates():
    data = small()
    out = select_rows(data, SubsampleSelection([2, 2]))
    assert out.n == 2 and out.d == 2
    assert np.array_equal(out.X[0], data.X[2]) and np.array_equal(out.X[1], data.X[2])
    assert list(out.y) == [20.0, 20.0]


def test_select_rows_out_of_range():
    with pytest.raises(IndexError):
        select_rows(small(), SubsampleSelection([5]))
    with pytest.raises(IndexError):
        select_rows(small(), SubsampleSelection([-1]))


def test_select_rows_keeps_intercept_flag():
    data = small().with_intercept()
    assert select_rows(data, SubsampleSelection([1])).intercept_included


@given(st.integers(1, 8), st.data())
def test_gather_fidelity_and_idempotence(n, draw):
    data = Dataset(np.random.default_rng(n).normal(size=(n, 3)), np.arange(n, dtype=float))
    idx = draw.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=12))
    out = select_rows(data, SubsampleSelection(idx))
    for k, i in enumerate(idx):
        assert out.y[k] == data.y[i]
        assert np.array_equal(out.X[k], data.X[i])
    assert select_rows(out, SubsampleSelection(range(out.n))) == out


def test_validate_ok():
    rng = np.random.default_rng(0)
    assert validate_dataset(Dataset(rng.normal(size=(10, 3)), rng.normal(size=10))) is None


def test_validate_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        validate_dataset(Dataset(np.zeros((10, 3)), np.zeros(9)))


def test_validate_nonfinite_reports_position():
    X = np.zeros((10, 3))
    X[4, 2] = np.nan
    with pytest.raises(NonFiniteError) as info:
        validate_dataset(Dataset(X, np.zeros(10)))
    assert (info.value.row, info.value.col) == (4, 2)
    assert "(4,2)" in str(info.value)


def test_validate_nonfinite_y_and_empty():
    y = np.zeros(4)
    y[3] = np.inf
    with pytest.raises(NonFiniteError, match=r"y at \(3\)"):
        validate_dataset(Dataset(np.zeros((4, 1)), y))
    with pytest.raises(DatasetError):
        validate_dataset(Dataset(np.zeros((0, 2)), np.zeros(0)))


def test_first_violation_wins():
    X = np.full((3, 2), np.nan)
    with pytest.raises(DimensionMismatchError):
        validate_dataset(Dataset(X, np.zeros(2)))


def test_dataset_is_readonly_copy():
    X = np.ones((2, 2))
    data = Dataset(X, [1, 2])
    X[0, 0] = 5
    assert data.X[0, 0] == 1
    with pytest.raises(ValueError):
        data.X[0, 0] = 3


def test_with_intercept():
    data = small().with_intercept()
    assert data.d == 3 and np.all(data.X[:, 0] == 1) and data.intercept_included
    assert data.with_intercept() is data


def test_selection_weights_validated():
    with pytest.raises(ValueError):
        SubsampleSelection([0, 1], [1.0, 0.0])
    with pytest.raises(ValueError):
        SubsampleSelection([0, 1], [1.0])
    sel = SubsampleSelection([0, 1], [1.0, 2.0], "LEV")
    assert sel.n_sub == 2 and sel == SubsampleSelection([0, 1], [1.0, 2.0], "LEV")
    assert sel != SubsampleSelection([0, 1], None, "LEV")


def test_rng_seed_streams():
    a = RngSeed(42, 3).generator(1).random(5)
    b = RngSeed(42, 3).generator(1).random(5)
    c = RngSeed(42, 4).generator(1).random(5)
    d = RngSeed(42, 3).generator(2).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert RngSeed(42).stream(3) == RngSeed(42, 3)


def test_rng_seed_range():
    RngSeed(2**64 - 1, 2**64 - 1)
    with pytest.raises(ValueError):
        RngSeed(-1)
    with pytest.raises(ValueError):
        RngSeed(0, 2**64)


def test_as_generator():
    g = np.random.default_rng(1)
    assert as_generator(g) is g
    assert as_generator(5).random() == RngSeed(5).generator().random()
    assert as_generator(RngSeed(5, 1)).random() == RngSeed(5, 1).generator().random()
