"""Exception hierarchy.

Every error raised on purpose by the package derives from ``QcircError``.
``InputError`` subclasses map to CLI exit code 2 and ``NumericalError``
subclasses map to exit code 1.
"""

from __future__ import annotations

from typing import Optional


class QcircError(Exception):
    exit_code = 1


class InputError(QcircError):
    exit_code = 2


class NumericalError(QcircError):
    exit_code = 1


class _Located(InputError):
    """Input error that may carry a (line, col) position in the source text."""

    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        self.line = line
        self.col = col
        if line is not None:
            msg = f"{msg} (line {line}, col {col})"
        super().__init__(msg)


class NetlistSyntaxError(_Located):
    pass


class UnknownComponentKind(_Located):
    pass


class DuplicateBranchId(_Located):
    pass


class NonPositiveValue(_Located):
    pass


class DisconnectedGraph(InputError):
    pass


class NoGroundNode(InputError):
    pass


class SelfLoopBranch(InputError):
    pass


class InvalidUserTree(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class FluxOnUndeclaredLoop(InputError):
    pass


class TimeDependentFlux(InputError):
    pass


class DimensionTooSmall(InputError):
    pass


class CutoffTooSmall(InputError):
    pass


class NonHermitianInput(InputError):
    pass


class DimensionExceeded(InputError):
    pass


class NonQubitDimensions(InputError):
    pass


class NonCommutingLadderH0(InputError):
    pass


class InvalidState(InputError):
    pass


class SingularCapacitanceMatrix(NumericalError):
    pass


class NonOrthonormalBasis(NumericalError):
    pass


class NonPositiveDefiniteInductorBlock(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


class PositivityLost(NumericalError):
    pass


class DivergentEffectiveInductance(NumericalError):
    pass


class FitFailed(NumericalError):
    pass


class NonConvergedPoint(NumericalError):
    pass
