"""Exception types raised across the package."""


class VecchiaError(Exception):
    """Base class for all errors raised by vecchiagp."""


class DimensionMismatch(VecchiaError):
    """Arrays that must share a row count or length do not."""


class LengthMismatch(DimensionMismatch):
    """A vector argument has the wrong length."""


class EmptyData(VecchiaError):
    """A dataset with zero rows was supplied."""


class NonFiniteValue(VecchiaError):
    """NaN or infinity found where finite values are required."""


class LatitudeOutOfRange(VecchiaError):
    """Latitude outside [-90, 90] degrees."""


class UnknownFamily(VecchiaError):
    """Covariance family name not present in the registry."""


class NotPositiveDefinite(VecchiaError):
    """A local covariance matrix failed its Cholesky factorization.

    Attributes
    ----------
    pivot : int
        Zero-based index of the first non-positive pivot.
    observation : int or None
        Index of the observation whose local matrix failed, when the
        failure happened inside an engine run.
    """

    def __init__(self, pivot, observation=None):
        self.pivot = int(pivot)
        self.observation = None if observation is None else int(observation)
        if self.observation is None:
            msg = f"matrix not positive definite at pivot {self.pivot}"
        else:
            msg = (
                f"local covariance for observation {self.observation} "
                f"not positive definite at pivot {self.pivot}"
            )
        super().__init__(msg)


class SingularDesign(VecchiaError):
    """The X'S X matrix is singular; mean parameters cannot be profiled."""


class DegenerateInformation(VecchiaError):
    """No damped Fisher information solve produced an ascent direction."""


class SizeGuardExceeded(VecchiaError):
    """A dense oracle was asked to handle more rows than its guard allows."""


class ParseError(VecchiaError):
    """A data file could not be parsed.

    Carries the one-based line number of the offending row.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingColumn(VecchiaError):
    """A requested column name is absent from the file header."""
