"""Exception hierarchy shared by every orthoconv module."""


class OrthoConvError(ValueError):
    """Base class for invalid input to an orthoconv operation."""


class InvalidArchitecture(OrthoConvError):
    pass


class EvenKernel(InvalidArchitecture):
    pass


class NonPositiveDim(InvalidArchitecture):
    pass


class BadDimensionality(InvalidArchitecture):
    pass


class NoOrthogonalLayer(OrthoConvError):
    pass


class ShapeMismatch(OrthoConvError):
    pass


class DimensionMismatch(OrthoConvError):
    pass


class EmptyVector(OrthoConvError):
    pass


class KernelTooLarge(OrthoConvError):
    pass


class SignalTooSmall(OrthoConvError):
    pass


class UnsupportedStride(OrthoConvError):
    pass


class StrideNotOne(UnsupportedStride):
    pass


class MatrixTooLarge(OrthoConvError):
    pass


class WrongCase(OrthoConvError):
    pass


class WrongPadding(OrthoConvError):
    pass


class InvalidRuns(OrthoConvError):
    pass


class ZeroOperator(OrthoConvError):
    pass


class ContractViolation(RuntimeError):
    """A numeric contract (theorem identity, bound) failed at its tolerance."""
