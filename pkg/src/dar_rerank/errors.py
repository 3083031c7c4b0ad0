"""Exception hierarchy shared by every dar-rerank module."""


class DarRerankError(Exception):
    """Base class for all dar-rerank failures."""

    exit_code = 1


class ConfigError(DarRerankError):
    """Invalid configuration, incompatible checkpoint or head size mismatch."""

    exit_code = 1


class DataError(DarRerankError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class DimensionError(DarRerankError, ValueError):
    """Tensor shapes do not fit the operation."""

    exit_code = 3


class DomainError(DarRerankError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 3


class NumericError(DarRerankError):
    """NaN or Inf reached a loss, gradient or optimizer step."""

    exit_code = 3


class GraphError(DarRerankError):
    """Backward was invoked on a graph that was already released."""

    exit_code = 3
