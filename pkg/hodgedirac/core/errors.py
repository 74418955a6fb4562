from typing import Iterable


class HodgeDiracError(Exception):
    pass


class LinalgError(HodgeDiracError):
    pass


class SingularSystem(LinalgError):
    pass


class NotPositiveDefinite(LinalgError):
    pass


class NotSymmetric(LinalgError):
    pass


class MeshError(HodgeDiracError):
    pass


class DegenerateTriangle(MeshError):
    pass


class InvalidMesh(MeshError):
    pass


class MeshFormatError(MeshError):
    pass


class SolverFailure(HodgeDiracError):
    pass


class HarmonicDimensionMismatch(SolverFailure):
    pass


class EmptyComplement(HodgeDiracError):
    pass


class ExpressionError(HodgeDiracError):
    pass


class ParseError(ExpressionError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class EvaluationError(ExpressionError):
    pass
