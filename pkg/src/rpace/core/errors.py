from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Sequence


class RpaceError(Exception):
    """Base error; `stage` names the pipeline stage that raised it, when known."""

    def __init__(self, message: str, *, stage: str | None = None) -> None:
        super().__init__(message)
        self.stage = stage

    def describe(self) -> str:
        prefix = f"stage={self.stage} " if self.stage else ""
        return f"{prefix}{type(self).__name__}: {self}"


class InvalidInputError(RpaceError):
    pass


class ValidationError(InvalidInputError):
    def __init__(self, message: str, offenders: Sequence[object] = (), **kw) -> None:
        super().__init__(message, **kw)
        self.offenders = list(offenders)


class ParseError(InvalidInputError):
    def __init__(self, message: str, line: int, **kw) -> None:
        super().__init__(f"line {line}: {message}", **kw)
        self.line = line


class DomainError(RpaceError):
    pass


class CutLocusError(DomainError):
    pass


class OutOfDomainError(DomainError):
    pass


class DegenerateInputError(RpaceError):
    pass


class BandwidthTooSmallError(RpaceError):
    pass


class BandwidthSelectionError(RpaceError):
    pass


class CovarianceUnidentifiableError(RpaceError):
    pass


class OptimizationError(RpaceError):
    def __init__(self, message: str, t: float, last_iterate, **kw) -> None:
        super().__init__(message, **kw)
        self.t = t
        self.last_iterate = last_iterate


class ConditioningError(RpaceError):
    def __init__(self, message: str, subject_id: str, condition_number: float, **kw) -> None:
        super().__init__(message, **kw)
        self.subject_id = subject_id
        self.condition_number = condition_number


class InvariantViolation(RpaceError):
    pass


class EstimationError(RpaceError):
    """Aggregates per-point failures as (index, message) pairs."""

    def __init__(self, message: str, failures: Sequence[tuple[object, str]], **kw) -> None:
        head = "; ".join(f"[{idx}] {msg}" for idx, msg in list(failures)[:5])
        more = f" (+{len(failures) - 5} more)" if len(failures) > 5 else ""
        super().__init__(f"{message}: {head}{more}", **kw)
        self.failures = list(failures)


class StudyFailedError(RpaceError):
    pass


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Label any RpaceError escaping the block with `name` unless already labelled."""
    try:
        yield
    except RpaceError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
