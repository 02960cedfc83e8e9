"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`AttestcastError`. The three middle classes map onto CLI exit codes.
"""

from __future__ import annotations


class AttestcastError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(AttestcastError, ValueError):
    """Invalid configuration or argument value."""

    exit_code = 2


class DataError(AttestcastError, ValueError):
    """Input data violates a schema or panel invariant."""

    exit_code = 3


class NumericalError(AttestcastError, ArithmeticError):
    """Estimation cannot proceed on the given data."""

    exit_code = 4


class ParseError(DataError):
    pass


class DuplicateZipError(DataError):
    pass


class UnknownUnitError(DataError):
    pass


class DuplicateRecordError(DataError):
    pass


class UnmappedZipError(DataError):
    def __init__(self, zips):
        self.zips = sorted(zips)
        shown = ", ".join(self.zips[:20])
        more = f" (+{len(self.zips) - 20} more)" if len(self.zips) > 20 else ""
        super().__init__(f"attestation zips not in zip map: {shown}{more}")


class CalendarGapError(DataError):
    def __init__(self, unit_id, missing):
        self.unit_id = unit_id
        self.missing = list(missing)
        shown = ", ".join(str(d) for d in self.missing[:10])
        more = f" (+{len(self.missing) - 10} more)" if len(self.missing) > 10 else ""
        super().__init__(f"census for unit {unit_id!r} is missing dates: {shown}{more}")


class EmptyIntersectionError(DataError):
    pass


class SeriesTooShortError(DataError):
    pass


class UnbalancedPanelError(DataError):
    pass


class MomentConditionError(DataError):
    pass


class AlignmentError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class ZeroDenominatorError(NumericalError, ZeroDivisionError):
    pass


class NonPositiveArgumentError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    def __init__(self, column, name=None, unit_id=None):
        self.column = column
        self.name = name
        self.unit_id = unit_id
        label = f"{column} ({name})" if name else str(column)
        where = f"unit {unit_id!r}: " if unit_id is not None else ""
        super().__init__(
            f"{where}design matrix is rank deficient; column {label} is a linear "
            "combination of earlier columns. A constant indicator series (e.g. all "
            "zeros for a small unit) causes this; exclude the unit or check log_offset."
        )
