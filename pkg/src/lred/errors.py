"""Exception hierarchy.

Every pipeline error can carry the name of the reduction-diagram square it
was raised from, so CLI diagnostics say *where* a reduction broke.
"""


class LredError(Exception):
    """Base class for all engine errors."""

    square = None

    def __init__(self, message, square=None, **details):
        super().__init__(message)
        if square is not None:
            self.square = square
        self.details = details

    def __str__(self):
        msg = super().__str__()
        if self.square:
            return f"[{self.square}] {msg}"
        return msg


# --- symkernel -------------------------------------------------------------

class ExpressionSyntaxError(LredError):
    def __init__(self, message, text="", position=0, expected=()):
        super().__init__(message)
        self.text = text
        self.position = position
        self.expected = tuple(expected)

    def __str__(self):
        caret = " " * self.position + "^"
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        return f"{self.args[0]} at position {self.position}{exp}\n  {self.text}\n  {caret}"


class UnknownSymbol(LredError):
    pass


class DivisionByZeroExpr(LredError):
    pass


class CyclicSubstitution(LredError):
    pass


class NonTerminatingRule(LredError):
    pass


class UnboundSymbol(LredError):
    pass


class UnboundFunction(LredError):
    pass


class NumericDomain(LredError):
    pass


# --- fields ----------------------------------------------------------------

class AdmissibilityError(LredError):
    square = "load"


class OrderOverflow(LredError):
    pass


class ClosureError(LredError):
    square = "load"


# --- kinematic / dynamic ---------------------------------------------------

class ChartDegenerate(LredError):
    pass


class RankJump(LredError):
    square = "kinematic"


class EmptyKinematic(LredError):
    """Structural finding: the isotropy constraints are inconsistent."""

    square = "kinematic"

    def __init__(self, message, certificate=None, **kw):
        super().__init__(message, **kw)
        self.certificate = certificate


class InsufficientInvariants(LredError):
    square = "kinematic"


class InsufficientFrame(LredError):
    square = "dynamic:frame"


class FactorizationFailure(LredError):
    square = "dynamic:factor"


class IndependenceFailure(LredError):
    square = "dynamic:descend"


class NotTangent(LredError):
    square = "residual"


class IntegrationFailure(LredError):
    pass


# --- cli -------------------------------------------------------------------

class SchemaError(LredError):
    square = "load"
