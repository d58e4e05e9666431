"""Exception taxonomy shared across the package.

Three top-level families map onto CLI exit codes and HTTP statuses:
ConfigError (usage/config, exit 1), DataError (bad input data, exit 2),
BackendError (LLM/embedding backend trouble, exit 3).
"""

from __future__ import annotations


class KgragError(Exception):
    """Base class for all package errors."""


class ConfigError(KgragError):
    """Invalid configuration, manifest, or usage."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class DataError(KgragError):
    """Malformed or missing input data."""


class MalformedLine(DataError):
    """A triple-file row that does not split into three non-empty fields."""

    def __init__(self, row, detail=""):
        self.row = row
        suffix = f": {detail}" if detail else ""
        super().__init__(f"malformed triple at row {row}{suffix}")


class MalformedQALine(DataError):
    """A QA-file row missing the tab, the entity brackets, or answers."""

    def __init__(self, row, detail=""):
        self.row = row
        suffix = f": {detail}" if detail else ""
        super().__init__(f"malformed QA line at row {row}{suffix}")


class EntityNotFound(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"entity not found in graph: {name!r}")


class SampleTooLarge(DataError):
    def __init__(self, requested, available):
        super().__init__(
            f"sample of {requested} requested but only {available} records available"
        )


class BackendError(KgragError):
    """Base class for LLM/embedding backend failures."""


class BackendUnavailable(BackendError):
    pass


class MalformedBackendResponse(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class DimensionMismatch(BackendError):
    """Embedding cache fingerprint does not match the active backend."""


def exit_code_for(exc: BaseException) -> int:
    """CLI exit code for an exception (0 is success, so never returned)."""
    if isinstance(exc, ConfigError):
        return 1
    if isinstance(exc, DataError):
        return 2
    if isinstance(exc, BackendError):
        return 3
    return 1
