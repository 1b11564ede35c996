"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RastroError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RastroError):
    """A value or record violates a domain invariant."""


class RunValidationError(ValidationError):
    """A finished run failed validation but was persisted anyway.

    The run is committed with status ``interrupted`` and the violations
    embedded in its error message; ``code`` is the assigned training code.
    """

    def __init__(self, code: int, violations: list) -> None:
        super().__init__(
            f"training {code} committed as interrupted; "
            f"{len(violations)} validation violation(s)"
        )
        self.code = code
        self.violations = violations


class ClosedRunError(RastroError):
    """Operation attempted on a run context that was already committed."""


class StoreError(RastroError):
    """Base class for persistence failures."""


class RecordNotFoundError(StoreError):
    """No record with the requested code exists."""


class CorruptLineError(StoreError):
    """A stored line could not be parsed.

    Carries the offending file and 1-based line number.
    """

    def __init__(self, path: str, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class SchemaVersionError(StoreError):
    """Stored data was written by a newer, unsupported schema."""


class LockTimeoutError(StoreError):
    """The writer lock could not be acquired in time."""
