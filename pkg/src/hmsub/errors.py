import numpy as np


class DatasetError(ValueError):
    """A Dataset invariant does not hold."""


class DimensionMismatchError(DatasetError):
    pass


class NonFiniteError(DatasetError):
    def __init__(self, where, row, col=None):
        self.where, self.row, self.col = where, row, col
        loc = f"({row},{col})" if col is not None else f"({row})"
        super().__init__(f"non-finite entry in {where} at {loc}")


class SingularMatrixError(np.linalg.LinAlgError):
    """Normal equations stayed singular after the ridge fallback."""


class DegenerateScaleError(ValueError):
    pass


class ProposalCapExceeded(RuntimeError):
    """The Markov chain hit its proposal budget without filling the subsample."""
