"""Exception hierarchy shared across the package."""


class PathfinderError(Exception):
    """Base class for all package errors."""


class ConfigError(PathfinderError, ValueError):
    pass


class NetworkParseError(PathfinderError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NetworkValidationError(PathfinderError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid network: " + "; ".join(self.violations))


class DataInconsistencyError(PathfinderError):
    """Surveillance data cannot have been produced by the network."""


class DegenerateCaseError(PathfinderError):
    """A case has no candidate with positive likelihood."""


class CalibrationError(PathfinderError):
    pass
