"""Exception types shared across the package."""

from __future__ import annotations


class TraceError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(TraceError):
    """A domain object was constructed with an invalid field combination.

    The message always names the violated rule.
    """


class EmptyTensorError(TraceError):
    """An operation that needs at least one element received none."""


class ShapeError(TraceError):
    """Array arguments have incompatible shapes or lengths."""


class CyclicGraphError(TraceError):
    """A graph that must be acyclic contains a cycle."""

    def __init__(self, message: str, member: str | None = None):
        super().__init__(message)
        self.member = member


class NotFoundError(TraceError):
    """A referenced entity (run, trial, node, series, ...) does not exist."""


class NotRecordedError(TraceError):
    """The coordinate exists but nothing was recorded there.

    Distinct from NotFoundError: the entity is known, the data is absent.
    """


class SampleNotRetainedError(TraceError):
    """The requested batch sample was not among the retained rows."""

    def __init__(self, message: str, retained: tuple[int, ...] = ()):
        super().__init__(message)
        self.retained = tuple(retained)


class DuplicateCategoryError(TraceError):
    """A recording category was registered twice within one run."""


class DuplicateStepError(TraceError):
    """A (trial, step) pair was written twice to the same run."""


class AlreadyFinalizedError(TraceError):
    """finalize() was called on a run that is already finalized."""


class VersionError(TraceError):
    """A stored document declares a format version this code does not read."""


class InsufficientDataError(TraceError):
    """A comparison operation has fewer records than it needs."""
