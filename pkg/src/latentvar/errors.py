class LatentVarError(Exception):
    """Base class for all package errors."""


class OutOfImage(LatentVarError, ValueError):
    pass


class NonInvertible(LatentVarError, ValueError):
    pass


class HistoryTooShort(LatentVarError, ValueError):
    pass


class SingularDerivative(LatentVarError, ArithmeticError):
    pass


class FitFailed(LatentVarError, RuntimeError):
    pass


class Diverged(LatentVarError, RuntimeError):
    pass


class DegenerateData(LatentVarError, ValueError):
    pass


class Unstable(LatentVarError, RuntimeError):
    pass


class NoEdges(LatentVarError, ValueError):
    pass


class NoNonEdges(LatentVarError, ValueError):
    pass


class ZeroSignal(LatentVarError, ValueError):
    pass


class TooShort(LatentVarError, ValueError):
    pass
