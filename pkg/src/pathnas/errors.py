"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PathNASError(Exception):
    """Base class for all package errors."""


class StructuralError(PathNASError):
    """Architecture data is internally inconsistent or sized beyond its space."""


class SamplingExhaustedError(PathNASError):
    """Rejection sampling hit its retry cap without producing a valid result."""


class PathOverflowError(PathNASError):
    """Path enumeration exceeded the configured hard limit for one architecture."""


class PathCapacityError(PathNASError):
    """Architecture has more paths than the sequence cap allows."""


class PathAlignmentError(PathNASError):
    """A path cannot be aligned onto the space's operation template."""


class PathLookupError(PathNASError):
    """A path (or token id) is not present in the path table."""


class TableOverflowError(PathNASError):
    """Path table enumeration exceeded the global guard."""

    def __init__(self, count: int, guard: int):
        super().__init__(f"path table enumeration exceeded guard: {count} > {guard}")
        self.count = count
        self.guard = guard


class ParameterError(PathNASError, ValueError):
    """An argument violates an operation's precondition."""


class StateError(PathNASError):
    """Operation called in an invalid order (e.g. gradients before backward)."""


class BudgetExhaustedError(PathNASError):
    """A real evaluation was requested with no budget left."""


class CrossoverFailureError(PathNASError):
    """Crossover could not produce valid offspring within its retry cap."""


class MutationFailureError(PathNASError):
    """No valid mutation exists for the given architecture."""


class OffspringShortfallError(PathNASError):
    """Offspring generation ran out of rounds before reaching its quota."""

    def __init__(self, produced: list, needed: int):
        super().__init__(
            f"only {len(produced)} unique valid offspring produced, needed {needed} "
            f"(shortfall {needed - len(produced)})"
        )
        self.produced = produced
        self.needed = needed
        self.shortfall = needed - len(produced)


class InsufficientPoolError(PathNASError):
    """Candidate pool is smaller than the number of requested selections."""


class OracleFormatError(PathNASError):
    """A tabular oracle file is malformed (carries the offending line number)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(PathNASError):
    """A model checkpoint could not be read or fails its integrity checks."""


class ConfigError(PathNASError):
    """Configuration violates one or more invariants (all are listed)."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))
        self.violations = list(violations)
