"""Exception hierarchy shared by every finslerlab module."""


class FinslerError(Exception):
    """Base class for all engine errors."""


# --- expression language -------------------------------------------------

class ExprSyntaxError(FinslerError):
    def __init__(self, position, expected, found=None):
        self.position = position
        self.expected = expected
        self.found = found
        got = "end of input" if found is None else repr(found)
        super().__init__(f"syntax error at offset {position}: expected {expected}, got {got}")


class UnknownIdentifier(FinslerError):
    def __init__(self, name, position):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at offset {position}")


class IndexOutOfRange(FinslerError):
    def __init__(self, name, n, position):
        self.name = name
        self.n = n
        self.position = position
        super().__init__(f"variable {name!r} at offset {position} exceeds dimension {n}")


class YVariableInVectorField(FinslerError):
    pass


class DomainError(FinslerError, ArithmeticError):
    pass


class GuardViolation(DomainError):
    pass


# --- jets ----------------------------------------------------------------

class TruncationOrderExceeded(FinslerError):
    pass


class OrderOutOfSpec(FinslerError):
    pass


class StencilLeavesDomain(DomainError):
    pass


# --- geometry ------------------------------------------------------------

class NotPositiveDefinite(FinslerError):
    def __init__(self, min_eigenvalue, where=None):
        self.min_eigenvalue = float(min_eigenvalue)
        self.where = where
        msg = f"fundamental tensor not positive definite (smallest eigenvalue {self.min_eigenvalue:.3e})"
        if where is not None:
            msg += f" at {where}"
        super().__init__(msg)


class DegenerateFlag(FinslerError):
    pass


class QuadratureNotConverged(FinslerError):
    pass


class MeanCartanVanishes(FinslerError):
    pass


class FlowLeftDomain(DomainError):
    pass


class ExtrapolationDiverged(FinslerError):
    pass


class InsufficientSamples(FinslerError):
    pass


class NotProjective(FinslerError):
    pass


class NotIInvariant(FinslerError):
    pass


class LeftDomain(DomainError):
    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"trajectory left the domain at t = {self.t:.6g}")


class StepUnderflow(FinslerError):
    pass


class InvalidParameter(FinslerError, ValueError):
    pass


class ConfigError(FinslerError):
    pass
