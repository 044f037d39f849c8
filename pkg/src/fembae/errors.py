"""Exception hierarchy shared by all modules."""


class FembaeError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(FembaeError, ValueError):
    pass


class TopologyError(FembaeError):
    """Cell set is empty, disconnected, or not simply connected."""


class SingularIntegrandError(FembaeError):
    pass


class IncompleteTableError(FembaeError, KeyError):
    """A Green's function offset was requested but never tabulated."""


class GeometryError(FembaeError):
    pass


class MeshingError(FembaeError):
    pass


class MeshParseError(FembaeError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AssemblyError(FembaeError):
    pass


class InterfaceError(FembaeError):
    pass


class NearSingularError(FembaeError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class SolverError(FembaeError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class UnsupportedDomainError(FembaeError, ValueError):
    """Special function requested outside its validated argument range."""


class UndefinedErrorMetric(FembaeError, ZeroDivisionError):
    """Relative error requested against an identically zero reference."""
