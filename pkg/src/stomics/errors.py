"""Exception hierarchy.

Every error carries a ``category`` that the command line maps to an exit code:
``config`` (2), ``io`` (3), ``data`` (4), ``numerical`` (5).
"""


class StoError(Exception):
    category = "data"


class ConfigError(StoError, ValueError):
    category = "config"


class InvalidConfig(ConfigError):
    pass


class DataError(StoError, ValueError):
    category = "data"


class NumericalError(StoError, ArithmeticError):
    category = "numerical"


# -- NIfTI ------------------------------------------------------------------

class NiftiError(DataError):
    pass


class MalformedHeader(NiftiError):
    pass


class UnsupportedDatatype(NiftiError):
    pass


class TruncatedData(NiftiError):
    pass


class NonFiniteData(NiftiError):
    pass


# -- shapes and indices ------------------------------------------------------

class ShapeMismatch(DataError):
    pass


class ExtentMismatch(ShapeMismatch):
    pass


class LengthMismatch(ShapeMismatch):
    pass


class EmptyOutput(ShapeMismatch):
    pass


class IndexOutOfBounds(DataError, IndexError):
    pass


# -- statistics / preprocessing ---------------------------------------------

class SequenceTooShort(DataError):
    pass


class DegenerateSeries(DataError):
    pass


class InvalidTarget(DataError):
    pass


class EmptyRoi(DataError):
    pass


class SingleClass(DataError):
    pass


class ClassTooSmall(DataError):
    pass


# -- training ----------------------------------------------------------------

class DivergedLoss(NumericalError):
    pass


class NonDeterministicFragment(NumericalError):
    pass


EXIT_CODES = {"config": 2, "io": 3, "data": 4, "numerical": 5}
