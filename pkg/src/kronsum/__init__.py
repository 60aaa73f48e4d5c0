"""Krylov approximation of ``f(A) b`` for Kronecker sums ``A = M2 (x) I + I (x) M1``."""

from .errors import (
    ContourError,
    DefectiveMatrixError,
    DimensionError,
    DomainError,
    KronsumError,
    MatrixMarketError,
    MemoryCapError,
    NoValidRegimeError,
    SingularEquationError,
)
from .kronfun import (
    FactoredVector,
    exp_structured,
    kron_exact,
    multiterm_structured,
    sincos_structured,
    structured_fAb,
)
from .krylov import krylov_basis, standard_fAb
from .la_core import KronSumOp, LowRankRHS, tridiag, unvec, vec
from .smallfun import (
    COS,
    EXP,
    INV_SQRT,
    INVERSE,
    LOG_RATIO,
    SIN,
    SQRT,
    ScalarFunction,
    frommer_phi,
    function_by_name,
)

__version__ = "0.1.0"
