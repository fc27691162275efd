"""Exact covariant formality engine on R^d with polynomial data."""

from formality.errors import (
    CapacityError,
    ConsistencyError,
    FormalityError,
    PreconditionError,
    StructuralError,
    ValidationError,
)
from formality.graded import (
    CoeffPoly,
    FiberPolyOp,
    FiberPolyVec,
    FormSection,
    add,
    apply_op,
    grade_of,
    multiplication,
    wedge_mul,
)
from formality.kernels import BACKEND

__version__ = "0.1.0"
