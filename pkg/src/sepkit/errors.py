"""Exception hierarchy for sepkit."""


class SepkitError(Exception):
    """Base class for all sepkit errors."""


class ShapeError(SepkitError, ValueError):
    pass


class SignalTooShort(SepkitError, ValueError):
    pass


class UnsupportedSize(SepkitError, ValueError):
    pass


class DegenerateWindow(SepkitError, ValueError):
    pass


class MissingPhase(SepkitError, ValueError):
    pass


class DegenerateReference(SepkitError, ValueError):
    pass


class DegenerateSource(SepkitError, ValueError):
    pass


class NumericalFailure(SepkitError, ArithmeticError):
    pass


class InsufficientData(SepkitError, ValueError):
    pass


class TooManySources(SepkitError, ValueError):
    pass


class MalformedFile(SepkitError, ValueError):
    pass


class Diverged(SepkitError, ArithmeticError):
    pass
