"""Exception types raised across the package.

Every error derives from :class:`CovXRError`; the ones that describe bad
caller input also derive from :class:`ValueError` so generic handlers keep
working.
"""


class CovXRError(Exception):
    """Base class for all package errors."""


# dataset
class MissingFile(CovXRError, FileNotFoundError):
    pass


class MalformedRow(CovXRError, ValueError):
    pass


class InvalidLabel(CovXRError, ValueError):
    pass


class EmptyClass(CovXRError, ValueError):
    pass


class UnreadableImage(CovXRError, OSError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        msg = f"cannot read image {self.path}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


# preprocess
class UnsupportedChannelCount(CovXRError, ValueError):
    pass


class DegenerateCrop(CovXRError, ValueError):
    pass


class WrongChannelOrder(CovXRError, ValueError):
    pass


# model
class UnknownBackbone(CovXRError, ValueError):
    pass


class WeightLoadFailure(CovXRError, RuntimeError):
    pass


class ShapeMismatch(CovXRError, ValueError):
    pass


class LengthMismatch(CovXRError, ValueError):
    pass


class SerializationFailure(CovXRError, RuntimeError):
    pass


class IncompatibleSpec(CovXRError, ValueError):
    pass


# train / eval
class EmptySet(CovXRError, ValueError):
    pass


class OverlappingSets(CovXRError, ValueError):
    pass


class MissingClass(CovXRError, ValueError):
    pass


class NoPositives(CovXRError, ZeroDivisionError):
    pass


class NoNegatives(CovXRError, ZeroDivisionError):
    pass


class BothZero(CovXRError, ZeroDivisionError):
    pass


class EmptyMatrix(CovXRError, ZeroDivisionError):
    pass


# saliency / report
class NonDifferentiableModel(CovXRError, TypeError):
    pass


class UnwritableDirectory(CovXRError, OSError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        msg = f"cannot write to {self.path}"
        super().__init__(f"{msg}: {reason}" if reason else msg)
