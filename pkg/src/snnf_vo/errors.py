"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data and
file-format problems exit 2, numeric failures exit 3.
"""


class SnnfVoError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SnnfVoError):
    """Invalid parameter, threshold, or configuration key."""


class DimensionError(SnnfVoError):
    """Image or plane dimensions are undersized or inconsistent."""


class DomainError(SnnfVoError):
    """Numeric input outside the operation's domain (e.g. inverse depth <= 0)."""


class BehindCameraError(DomainError):
    """3D point at or behind the projective z cutoff."""


class EmptySeedsError(SnnfVoError):
    """A nearest-neighbor field was requested for an empty seed set."""


class EmptyCloudError(SnnfVoError):
    """Edge sampling produced no usable points."""


class NoMatchError(SnnfVoError):
    """Lookup on a field with no seeds."""


class OutOfBoundsError(SnnfVoError):
    """Query pixel outside the field grid."""


class NumericError(SnnfVoError):
    """Non-finite energy or unrecoverable numeric failure during optimization."""


class RankDeficiencyError(NumericError):
    """Too few usable residual rows to constrain a 6-DoF pose update."""


class FormatError(SnnfVoError):
    """Malformed file content. Carries a byte offset or line number when known."""

    def __init__(self, message, *, offset=None, line=None):
        loc = []
        if offset is not None:
            loc.append(f"byte offset {offset}")
        if line is not None:
            loc.append(f"line {line}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class MetricError(SnnfVoError):
    """Evaluation metric undefined for the given inputs."""
