"""Exception types shared across the package.

The CLI maps these onto exit codes: data/validation failures exit 1,
transport and wire-protocol failures exit 2.
"""


class JobRecError(Exception):
    """Base class for every error this package raises on purpose."""


class CorpusError(JobRecError):
    """Invalid taxonomy or advertisement data."""

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmbeddingError(JobRecError):
    """Invalid vector data or embedding-store violation."""


class CentroidError(JobRecError):
    """Centroid computation failed (missing inputs, cancellation)."""


class IndexFormatError(JobRecError):
    """Index snapshot rejected: bad version, shape, checksum, or parse."""

    def __init__(self, message: str, *, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EvaluationError(JobRecError):
    """Metric preconditions violated (missing gold, short ranking, ...)."""


class ProtocolError(JobRecError):
    """Remote provider/classifier failed or violated its wire contract."""

    def __init__(self, message: str, *, endpoint: str | None = None):
        if endpoint is not None:
            message = f"{endpoint}: {message}"
        super().__init__(message)
        self.endpoint = endpoint
