"""Exception hierarchy shared by every module of the package."""


class CucError(Exception):
    """Base class for all package errors."""


class DataError(CucError, ValueError):
    """Input data is malformed, inconsistent or unusable."""


class ParseError(DataError):
    """A CSV or model file could not be parsed."""


class RankDeficiencyError(DataError):
    """The sample covariance matrix is (numerically) singular."""


class StationarityError(DataError):
    """GARCH parameters violate the stationarity / positivity constraints."""


class SchemaError(DataError):
    """A persisted model has an unsupported schema version or layout."""


class ConvergenceError(CucError, RuntimeError):
    """An optimizer failed to meet its stopping rule too often to continue."""
