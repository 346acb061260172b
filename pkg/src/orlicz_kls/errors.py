"""Exception types raised across the toolkit."""


class OrliczError(Exception):
    """Base class for all toolkit errors."""


class NonConvex(OrliczError):
    pass


class NonIntegrable(OrliczError):
    pass


class BelowMinimum(OrliczError):
    pass


class QuadratureFailure(OrliczError):
    pass


class GridDeficit(OrliczError):
    """Accumulated probability mass fell short of one."""


class EmptyLevelSet(OrliczError):
    pass


class RouteMismatch(OrliczError):
    """Two independent evaluations of E_V disagree beyond tolerance."""


class NotInside(OrliczError):
    pass


class InsufficientSamples(OrliczError):
    pass


class LipschitzViolation(OrliczError):
    pass


class EmptyDomain(OrliczError):
    pass


class DisconnectedDomain(OrliczError):
    pass


class ConvergenceFailure(OrliczError):
    pass


class BarycenterOutside(OrliczError):
    pass


class ConfigError(OrliczError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(ConfigError):
    pass
