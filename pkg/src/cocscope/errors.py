"""Exception types shared across pipeline stages."""


class CocscopeError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(CocscopeError):
    """Run configuration failed validation."""


class TransportError(CocscopeError):
    """A network request failed; retriable at the caller's discretion."""

    def __init__(self, message, url=None, app_id=None):
        super().__init__(message)
        self.url = url
        self.app_id = app_id


class NotFoundError(CocscopeError):
    """A referenced record (e.g. app_id) does not exist."""


class ValidationError(CocscopeError):
    """URL validation failed (unreachable, too many redirects, ...)."""

    def __init__(self, message, reason):
        super().__init__(message)
        self.reason = reason


class BackendError(CocscopeError):
    """An inference backend failed on an input."""


class NoTopicsError(CocscopeError):
    """Clustering classified every point as noise; subject is unscoreable."""


class DegenerateCentroidError(CocscopeError):
    """A topic centroid has zero norm; cosine similarity is undefined."""


class DegenerateTableError(CocscopeError):
    """A contingency table has a zero margin; the test is undefined."""


class ConvergenceError(CocscopeError):
    """An iterative fit failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StageError(CocscopeError):
    """A pipeline stage failed; downstream stages are skipped."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage


class DigestMismatchError(CocscopeError):
    """An intermediate file no longer matches its recorded digest."""

    def __init__(self, stage, path):
        super().__init__(f"stage {stage!r}: digest mismatch for {path}")
        self.stage = stage
        self.path = path


class ContractViolation(CocscopeError):
    """A downstream stage observed data violating an upstream guarantee."""
