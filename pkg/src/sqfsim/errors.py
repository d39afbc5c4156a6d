"""Exception types raised across the toolkit."""


class SqfError(Exception):
    """Base class for all toolkit errors."""


class PlanParseError(SqfError):
    """Malformed plan document; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PlanStructureError(SqfError):
    """Structurally invalid evaluation tree (arity, references, handles)."""


class FragmentationError(SqfError):
    """Invalid leaf replacement during tree fragmentation."""


class ContractError(SqfError):
    """An operation was called with inputs violating its preconditions."""


class ClockError(SqfError):
    """Non-monotone timestamp passed to a usage-recording operation."""


class OversizeError(SqfError):
    """Cached object larger than the hosting unit's total capacity."""


class PlacementError(SqfError):
    """No cache unit can host a fragment."""


class ConfigError(SqfError):
    """Invalid workload/scenario/network configuration."""


class WorkloadFormatError(SqfError):
    """Malformed workload file; carries the offending record index."""

    def __init__(self, message: str, record: int | None = None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


class DumpFormatError(SqfError):
    """Malformed cache-state dump; carries the offending record index."""

    def __init__(self, message: str, record: int | None = None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
