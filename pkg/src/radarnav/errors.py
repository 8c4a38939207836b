"""Exception hierarchy for the toolkit."""


class RadarNavError(Exception):
    """Base class for all package errors."""


class ConfigError(RadarNavError):
    """Invalid or inconsistent configuration."""


class DataFormatError(RadarNavError):
    """Malformed dataset file; carries location info where available."""

    def __init__(self, message, path=None, byte_offset=None, scan_index=None):
        details = []
        if path is not None:
            details.append(f"path={path}")
        if scan_index is not None:
            details.append(f"scan_index={scan_index}")
        if byte_offset is not None:
            details.append(f"byte_offset={byte_offset}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.path = path
        self.byte_offset = byte_offset
        self.scan_index = scan_index


class EstimationError(RadarNavError):
    """A numerical estimation step failed."""


class DegenerateGeometry(EstimationError):
    """Bearing geometry does not constrain all velocity components."""


class InsufficientPoints(EstimationError):
    """Too few measurements for the requested estimate."""


class SingularCovariance(EstimationError):
    """A covariance could not be inverted even after regularization."""


class NotConverged(EstimationError):
    """Iterative solver exhausted its iteration budget.

    The last iterate is attached so callers can inspect or reject it.
    """

    def __init__(self, message, last_result=None):
        super().__init__(message)
        self.last_result = last_result


class NoOverlap(RadarNavError):
    """Two trajectories share no associable timestamps."""
