"""Exception hierarchy shared by all globlin modules.

Every error carries a ``module`` attribute naming the subsystem that raised
it; the command-line front end uses it when emitting JSON diagnostics.
"""


class GloblinError(Exception):
    """Base class for all errors raised by globlin."""

    module = "globlin"

    def __init__(self, detail="", **info):
        super().__init__(detail)
        self.detail = detail
        self.info = info

    @property
    def name(self):
        return type(self).__name__


# linalg -------------------------------------------------------------------


class SingularSystem(GloblinError, ArithmeticError):
    module = "linalg"


class NotHurwitzError(GloblinError, ValueError):
    """The matrix (or linearization) has an eigenvalue with nonnegative real part."""

    module = "linalg"

    @property
    def name(self):
        return "NotHurwitz"


# expression language -------------------------------------------------------


class ExprError(GloblinError):
    module = "expr"


class ExprSyntaxError(ExprError, ValueError):
    """Parse failure at byte ``offset``; ``expected`` describes the wanted token."""

    def __init__(self, detail, offset, expected=""):
        super().__init__(f"{detail} at byte {offset}", offset=offset, expected=expected)
        self.offset = offset
        self.expected = expected

    @property
    def name(self):
        return "SyntaxError"


class UnknownIdentifier(ExprError, ValueError):
    def __init__(self, identifier, offset):
        super().__init__(f"unknown identifier {identifier!r} at byte {offset}")
        self.identifier = identifier
        self.offset = offset


class ArityError(ExprError, ValueError):
    def __init__(self, func, given, offset):
        super().__init__(f"{func}() takes 1 argument, {given} given (byte {offset})")
        self.func = func
        self.offset = offset


class EvalDomainError(ExprError, ArithmeticError):
    def __init__(self, detail, offset=None):
        where = "" if offset is None else f" (node at byte {offset})"
        super().__init__(detail + where, offset=offset)
        self.offset = offset


# ode ------------------------------------------------------------------------


class IntegrationError(GloblinError):
    module = "ode"


class StepLimitExceeded(IntegrationError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class NoCrossing(IntegrationError):
    """No crossing of the target level within the time cap."""


class LeftDomain(IntegrationError):
    """Trajectory left the working domain before the requested time."""


class NotAnEquilibrium(GloblinError, ValueError):
    module = "ode"


# lyapunov -------------------------------------------------------------------


class ValidationFailed(GloblinError):
    module = "lyapunov"

    def __init__(self, detail, report=None):
        super().__init__(detail)
        self.report = report


class DegenerateLevel(GloblinError, ValueError):
    module = "lyapunov"


# conjugacy ------------------------------------------------------------------


class ConjugacyError(GloblinError):
    module = "conjugacy"


class AtEquilibrium(ConjugacyError):
    pass


class NotOnLevelSet(ConjugacyError, ValueError):
    pass


class NoRayCrossing(ConjugacyError):
    pass


class MultipleCrossings(ConjugacyError):
    pass


class NotStarShaped(ConjugacyError):
    def __init__(self, detail, report=None):
        super().__init__(detail)
        self.report = report


class TimeCapExceeded(ConjugacyError):
    pass


class OutOfDomain(ConjugacyError, ValueError):
    pass


# morse ----------------------------------------------------------------------


class GradientVanishes(GloblinError):
    module = "morse"


# zoo ------------------------------------------------------------------------


class UnknownSystem(GloblinError, KeyError):
    module = "zoo"

    def __str__(self):
        return self.detail
