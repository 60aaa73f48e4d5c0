"""Vec/Kronecker primitives and the matrix-free Kronecker-sum operator.

Conventions
-----------
``vec`` stacks columns (Fortran order).  With that convention the Kronecker
sum

    A = M2 (x) I + I (x) M1,        M1: n1 x n1,  M2: n2 x n2,

acts on ``vec(X)`` for an ``n1 x n2`` matrix ``X`` as::

    A vec(X) = vec(M1 X + X M2^T)

so ``M1`` is always the *inner* (left, row) factor and ``M2`` the outer one.
Multi-term sums written ``M1 (+) M2 (+) M3`` elsewhere put the outermost
factor first; see :func:`kronsum.kronfun.multiterm_structured`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import DimensionError, MemoryCapError

__all__ = [
    "vec",
    "unvec",
    "kron_dense",
    "KronSumOp",
    "LowRankRHS",
    "kron_sum_apply",
    "kron_sum_spectrum",
    "kron_sum_dense",
    "tridiag",
    "is_symmetric",
    "as_operator",
    "MAX_DENSE_DIM",
]

# explicit formation of A is an oracle-only path
MAX_DENSE_DIM = 10_000
_MAX_DENSE_ENTRIES = 10**8


def vec(X):
    """Stack the columns of ``X`` into a single vector."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise DimensionError(f"vec expects a 2-D array, got ndim={X.ndim}")
    return X.reshape(-1, order="F")


def unvec(v, n1, n2):
    """Inverse of :func:`vec`: reshape a length ``n1*n2`` vector to ``n1 x n2``."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != n1 * n2:
        raise DimensionError(f"cannot unvec a vector of shape {v.shape} to {n1}x{n2}")
    return v.reshape((n1, n2), order="F")


def kron_dense(X, Y):
    """Dense Kronecker product ``X (x) Y``.

    Raises
    ------
    MemoryCapError
        If the result would hold more than 1e8 entries.
    """
    X = _dense(X)
    Y = _dense(Y)
    rows = X.shape[0] * Y.shape[0]
    cols = X.shape[1] * Y.shape[1]
    if rows * cols > _MAX_DENSE_ENTRIES:
        raise MemoryCapError(f"kron_dense result would be {rows}x{cols}")
    return np.kron(X, Y)


def _dense(M):
    if sp.issparse(M):
        return M.toarray()
    if isinstance(M, LinearOperator):
        return M @ np.eye(M.shape[1])
    return np.atleast_2d(np.asarray(M))


def as_operator(M):
    """Wrap arrays, sparse matrices and callables as a ``LinearOperator``.

    A bare callable is assumed square; its size is inferred lazily and must
    be supplied as ``(fn, n)``.
    """
    if isinstance(M, LinearOperator):
        return M
    if isinstance(M, tuple) and callable(M[0]):
        fn, n = M
        return LinearOperator((n, n), matvec=fn, dtype=float)
    if sp.issparse(M):
        return aslinearoperator(M.tocsr())
    return aslinearoperator(np.atleast_2d(np.asarray(M)))


def is_symmetric(M, rtol=1e-13):
    """Return True when ``M`` equals its transpose up to ``rtol * max|M|``.

    Linear operators that are not :class:`KronSumOp` report their
    ``symmetric`` attribute if they have one, else False.
    """
    if isinstance(M, KronSumOp):
        return M.symmetric
    if isinstance(M, LinearOperator):
        return bool(getattr(M, "symmetric", False))
    if sp.issparse(M):
        M = M.tocsr()
        if M.shape[0] != M.shape[1]:
            return False
        diff = abs(M - M.T)
        scale = abs(M).max() if M.nnz else 0.0
        return (diff.max() if diff.nnz else 0.0) <= rtol * scale
    M = np.atleast_2d(np.asarray(M))
    if M.shape[0] != M.shape[1]:
        return False
    scale = np.abs(M).max() if M.size else 0.0
    return bool(np.abs(M - M.T).max() <= rtol * scale) if M.size else True


class KronSumOp(LinearOperator):
    """Matrix-free Kronecker sum ``A = M2 (x) I + I (x) M1``.

    The factors are stored as given (dense, sparse or ``LinearOperator``);
    ``A`` itself is never formed.

    Parameters
    ----------
    m1 : array_like, sparse matrix or LinearOperator, shape (n1, n1)
    m2 : array_like, sparse matrix or LinearOperator, shape (n2, n2)
    """

    def __init__(self, m1, m2):
        m1 = _as_factor(m1)
        m2 = _as_factor(m2)
        for name, M in (("m1", m1), ("m2", m2)):
            if M.shape[0] != M.shape[1]:
                raise DimensionError(f"{name} must be square, got {M.shape}")
        self.m1 = m1
        self.m2 = m2
        self.n1 = m1.shape[0]
        self.n2 = m2.shape[0]
        dtype = np.result_type(m1.dtype, m2.dtype)
        super().__init__(dtype=dtype, shape=(self.n1 * self.n2, self.n1 * self.n2))
        self.symmetric = is_symmetric(m1) and is_symmetric(m2)

    def apply_matrix(self, X):
        """Return ``M1 X + X M2^T`` for an ``n1 x n2`` matrix ``X``."""
        if X.shape != (self.n1, self.n2):
            raise DimensionError(f"expected {self.n1}x{self.n2} matrix, got {X.shape}")
        return self.m1 @ X + (self.m2 @ X.T).T

    def _matvec(self, v):
        v = np.asarray(v).reshape(-1)
        if v.size != self.shape[1]:
            raise DimensionError(f"vector length {v.size} != {self.shape[1]}")
        return vec(self.apply_matrix(unvec(v, self.n1, self.n2)))

    def _rmatvec(self, v):
        X = unvec(np.asarray(v).reshape(-1), self.n1, self.n2)
        return vec(_transpose_apply(self.m1, X) + _transpose_apply(self.m2, X.T).T)

    def _adjoint(self):
        return KronSumOp(_adjoint_factor(self.m1), _adjoint_factor(self.m2))

    def to_dense(self):
        """Form ``A`` explicitly (oracle use only, capped at ``MAX_DENSE_DIM``)."""
        return kron_sum_dense(self.m1, self.m2)


def _as_factor(M):
    if isinstance(M, LinearOperator) or sp.issparse(M):
        return M
    return np.atleast_2d(np.asarray(M))


def _transpose_apply(M, X):
    if isinstance(M, LinearOperator):
        return M.H @ X
    return M.T @ X


def _adjoint_factor(M):
    if isinstance(M, LinearOperator):
        return M.H
    return M.conj().T


def kron_sum_apply(op, v):
    """Apply ``A = M2 (x) I + I (x) M1`` to ``v`` without forming ``A``."""
    if not isinstance(op, KronSumOp):
        raise TypeError("kron_sum_apply expects a KronSumOp")
    return op.matvec(v).reshape(-1)


def kron_sum_dense(m1, m2):
    """Explicit ``M2 (x) I + I (x) M1`` for small problems."""
    M1 = _dense(m1)
    M2 = _dense(m2)
    n1, n2 = M1.shape[0], M2.shape[0]
    if n1 * n2 > MAX_DENSE_DIM:
        raise MemoryCapError(
            f"dense Kronecker sum of dimension {n1 * n2} exceeds {MAX_DENSE_DIM}"
        )
    return np.kron(M2, np.eye(n1)) + np.kron(np.eye(n2), M1)


def kron_sum_spectrum(eigs1, eigs2):
    """All pairwise sums ``eigs1[i] + eigs2[j]`` in vec order ``j*n1 + i``."""
    eigs1 = np.asarray(eigs1).reshape(-1)
    eigs2 = np.asarray(eigs2).reshape(-1)
    return vec(eigs1[:, None] + eigs2[None, :])


def tridiag(n, sub, diag, sup, format="csc"):
    """Toeplitz tridiagonal matrix with constant sub-, main and super-diagonal."""
    if n < 1:
        raise DimensionError("tridiag needs n >= 1")
    return sp.diags(
        [np.full(n - 1, sub, dtype=float), np.full(n, diag, dtype=float),
         np.full(n - 1, sup, dtype=float)],
        [-1, 0, 1],
        shape=(n, n),
        format=format,
    )


@dataclass(frozen=True)
class LowRankRHS:
    """Right-hand side ``b = vec(B1 B2^T)`` kept in factored form.

    ``b1`` has shape ``(n1, rank)`` and ``b2`` shape ``(n2, rank)``; 1-D
    inputs are promoted to a single column.
    """

    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        b1 = np.asarray(self.b1, dtype=float)
        b2 = np.asarray(self.b2, dtype=float)
        if b1.ndim == 1:
            b1 = b1[:, None]
        if b2.ndim == 1:
            b2 = b2[:, None]
        if b1.shape[1] != b2.shape[1] or b1.shape[1] < 1:
            raise DimensionError(f"factor ranks differ: {b1.shape} vs {b2.shape}")
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)

    @property
    def rank(self):
        return self.b1.shape[1]

    @property
    def shape(self):
        return self.b1.shape[0], self.b2.shape[0]

    def terms(self):
        """Yield the rank-one pairs ``(b1[:, k], b2[:, k])``."""
        for k in range(self.rank):
            yield self.b1[:, k], self.b2[:, k]

    def full(self):
        return vec(self.b1 @ self.b2.T)
