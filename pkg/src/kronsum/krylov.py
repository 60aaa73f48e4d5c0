"""Krylov basis construction and the unstructured baseline ``x_m``.

All recurrences use classical Gram-Schmidt applied twice (CGS2) unless
``reorth="none"`` is requested.  A breakdown (invariant subspace) is a
success: the projected problem is then exact.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, splu

from .errors import DimensionError, MemoryCapError, SingularEquationError
from .la_core import KronSumOp, as_operator, is_symmetric
from .smallfun import funm_dense

__all__ = [
    "KrylovBasis",
    "HistoryEntry",
    "ConvHistory",
    "arnoldi",
    "lanczos",
    "extended_krylov",
    "krylov_basis",
    "standard_fAb",
    "direct_solver",
    "BREAKDOWN_TOL",
    "DEFAULT_MEMORY_CAP",
]

BREAKDOWN_TOL = 1e-14
DEFAULT_MEMORY_CAP = 10**8


@dataclass
class KrylovBasis:
    """Orthonormal Krylov basis with its projected matrix.

    Attributes
    ----------
    V : ndarray, shape (n, m) or (n, m + 1)
        Basis vectors; the extra column, when present, is ``v_{m+1}``.
    Hbar : ndarray, shape (m + 1, m)
        Arnoldi matrix; ``Hbar[:m]`` is ``H_m`` and ``Hbar[m, m-1]`` is the
        residual coefficient ``h``.  For extended spaces ``Hbar[:m]`` is the
        explicit projection ``V^T A V`` and the last row is zero.
    beta : float
        ``||b||``, so that ``V^T b = beta * e_1``.
    breakdown : bool
        True when an invariant subspace was found.
    kind : {"arnoldi", "lanczos", "extended"}
    step_times : ndarray
        Cumulative wall time after each basis vector.
    """

    V: np.ndarray
    Hbar: np.ndarray
    beta: float
    breakdown: bool = False
    kind: str = "arnoldi"
    step_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    orthogonality_loss: bool = False

    @property
    def m(self):
        return self.Hbar.shape[1]

    @property
    def basis(self):
        return self.V[:, : self.m]

    @property
    def H(self):
        return self.Hbar[: self.m, : self.m]

    @property
    def h(self):
        return float(self.Hbar[self.m, self.m - 1]) if self.m else 0.0

    @property
    def next_vector(self):
        return self.V[:, self.m] if self.V.shape[1] > self.m else None

    @property
    def rhs(self):
        """``V^T b`` as a length-``m`` vector."""
        e = np.zeros(self.m)
        e[0] = self.beta
        return e

    def leading(self, j):
        """The basis restricted to its first ``j`` vectors."""
        if not 1 <= j <= self.m:
            raise ValueError(f"j must be in [1, {self.m}], got {j}")
        if j == self.m:
            return self
        if self.kind == "extended":
            Hbar = np.zeros((j + 1, j))
            Hbar[:j] = self.Hbar[:j, :j]
            V = self.V[:, :j]
        else:
            Hbar = self.Hbar[: j + 1, :j]
            V = self.V[:, : j + 1]
        return KrylovBasis(V, Hbar, self.beta, False, self.kind, self.step_times[:j])


def _start(b):
    b = np.asarray(b, dtype=float).reshape(-1)
    beta = np.linalg.norm(b)
    if beta == 0:
        raise ValueError("starting vector b must be nonzero")
    return b, beta


def _cgs2(V, w, passes=2):
    coeffs = np.zeros(V.shape[1])
    if V.shape[1] == 0:
        return w, coeffs
    for _ in range(passes):
        c = V.T @ w
        w = w - V @ c
        coeffs += c
    return w, coeffs


def arnoldi(A, b, m_max, reorth="full"):
    """Arnoldi process for ``K_m(A, b)``.

    Parameters
    ----------
    A : matrix, sparse matrix or LinearOperator
    b : ndarray
    m_max : int
        Maximum basis dimension.
    reorth : {"full", "none"}
        ``"full"`` orthogonalizes twice (CGS2); ``"none"`` does one modified
        Gram-Schmidt sweep.

    Returns
    -------
    KrylovBasis
    """
    A = as_operator(A)
    b, beta = _start(b)
    n = b.size
    if A.shape != (n, n):
        raise DimensionError(f"operator shape {A.shape} does not match b of length {n}")
    m_max = min(int(m_max), n)
    V = np.zeros((n, m_max + 1))
    Hbar = np.zeros((m_max + 1, m_max))
    times = np.zeros(m_max)
    V[:, 0] = b / beta
    t0 = time.perf_counter()
    for k in range(m_max):
        w = A.matvec(V[:, k]).reshape(-1)
        wnorm = np.linalg.norm(w)
        if reorth == "full":
            w, c = _cgs2(V[:, : k + 1], w)
            Hbar[: k + 1, k] = c
        else:
            for i in range(k + 1):
                Hbar[i, k] = V[:, i] @ w
                w = w - Hbar[i, k] * V[:, i]
        h = np.linalg.norm(w)
        times[k] = time.perf_counter() - t0
        if h <= BREAKDOWN_TOL * wnorm or h == 0:
            Hbar = Hbar[: k + 2, : k + 1].copy()
            Hbar[k + 1, k] = 0.0
            return KrylovBasis(V[:, : k + 1], Hbar, beta, True, "arnoldi", times[: k + 1])
        Hbar[k + 1, k] = h
        V[:, k + 1] = w / h
    return KrylovBasis(V, Hbar, beta, False, "arnoldi", times)


def lanczos(A, b, m_max, reorth="full"):
    """Symmetric Lanczos process; the caller asserts ``A`` is symmetric.

    Same contract as :func:`arnoldi` with an exactly symmetric tridiagonal
    ``H``.  Without reorthogonalization a loss of orthogonality above 1e-8
    triggers a ``RuntimeWarning`` and sets ``orthogonality_loss``.
    """
    A = as_operator(A)
    b, beta = _start(b)
    n = b.size
    if A.shape != (n, n):
        raise DimensionError(f"operator shape {A.shape} does not match b of length {n}")
    m_max = min(int(m_max), n)
    V = np.zeros((n, m_max + 1))
    alpha = np.zeros(m_max)
    betas = np.zeros(m_max)
    times = np.zeros(m_max)
    V[:, 0] = b / beta
    t0 = time.perf_counter()
    k_end, broke = m_max, False
    for k in range(m_max):
        w = A.matvec(V[:, k]).reshape(-1)
        wnorm = np.linalg.norm(w)
        if k > 0:
            w = w - betas[k - 1] * V[:, k - 1]
        alpha[k] = V[:, k] @ w
        w = w - alpha[k] * V[:, k]
        if reorth == "full":
            w, _ = _cgs2(V[:, : k + 1], w)
        h = np.linalg.norm(w)
        times[k] = time.perf_counter() - t0
        if h <= BREAKDOWN_TOL * wnorm or h == 0:
            k_end, broke = k + 1, True
            break
        betas[k] = h
        V[:, k + 1] = w / h
    m = k_end
    Hbar = np.zeros((m + 1, m))
    idx = np.arange(m)
    Hbar[idx, idx] = alpha[:m]
    Hbar[idx[1:], idx[:-1]] = betas[: m - 1]
    Hbar[idx[:-1], idx[1:]] = betas[: m - 1]
    if not broke:
        Hbar[m, m - 1] = betas[m - 1]
    V = V[:, :m] if broke else V[:, : m + 1]
    basis = KrylovBasis(V, Hbar, beta, broke, "lanczos", times[:m])
    if reorth != "full":
        Q = basis.basis
        loss = np.abs(Q.T @ Q - np.eye(m)).max()
        if loss > 1e-8:
            basis.orthogonality_loss = True
            warnings.warn(
                f"Lanczos basis lost orthogonality ({loss:.1e}); use reorth='full'",
                RuntimeWarning,
                stacklevel=2,
            )
    return basis


def direct_solver(M):
    """Return ``v -> M^{-1} v`` using one sparse LU factorization."""
    if isinstance(M, LinearOperator):
        raise TypeError("extended Krylov needs an explicit matrix to factorize")
    Ms = sp.csc_matrix(M, dtype=float)
    try:
        lu = splu(Ms)
    except RuntimeError as exc:
        raise SingularEquationError(f"matrix is singular: {exc}") from None
    diag_u = np.abs(lu.U.diagonal())
    if diag_u.min(initial=np.inf) <= 1e-14 * max(diag_u.max(initial=0.0), 1e-300):
        raise SingularEquationError("matrix is numerically singular")
    return lu.solve


def extended_krylov(A, solve, b, m_blocks):
    """Orthonormal basis of ``K(A, b) + K(A^{-1}, A^{-1} b)``.

    Each block adds one vector from each direction, so the dimension is
    ``2 * m_blocks`` barring deflation.  ``H = V^T A V`` is formed
    explicitly.

    Parameters
    ----------
    A : matrix or LinearOperator
    solve : callable or None
        Applies ``A^{-1}``; if None, ``A`` is factorized with sparse LU.
    b : ndarray
    m_blocks : int
    """
    if solve is None:
        solve = direct_solver(A)
    Aop = as_operator(A)
    b, beta = _start(b)
    n = b.size
    cols = [b / beta]
    t0 = time.perf_counter()
    times = [0.0]
    plus_src = cols[0]
    minus_src = cols[0]
    plus_alive = minus_alive = True
    broke = False
    for block in range(int(m_blocks)):
        new_plus = None
        candidates = []
        if block > 0 and plus_alive:
            candidates.append(("plus", Aop.matvec(plus_src).reshape(-1)))
        if minus_alive:
            candidates.append(("minus", np.asarray(solve(minus_src)).reshape(-1)))
        for tag, w in candidates:
            if len(cols) >= n:
                break
            wnorm = np.linalg.norm(w)
            w, _ = _cgs2(np.column_stack(cols), w)
            h = np.linalg.norm(w)
            if h <= BREAKDOWN_TOL * wnorm or h == 0:
                if tag == "plus":
                    plus_alive = False
                else:
                    minus_alive = False
                continue
            v = w / h
            cols.append(v)
            times.append(time.perf_counter() - t0)
            if tag == "plus":
                new_plus = v
            else:
                minus_src = v
        if new_plus is not None:
            plus_src = new_plus
        elif block == 0:
            plus_src = cols[0]
        if (not plus_alive and not minus_alive) or len(cols) >= n:
            broke = True
            break
    V = np.column_stack(cols)
    m = V.shape[1]
    AV = np.column_stack([Aop.matvec(V[:, j]).reshape(-1) for j in range(m)])
    Hbar = np.zeros((m + 1, m))
    Hbar[:m] = V.T @ AV
    return KrylovBasis(V, Hbar, beta, broke, "extended", np.asarray(times))


def krylov_basis(M, b, m, space="krylov", symmetric=None, solve=None, reorth="full"):
    """Dispatch to :func:`lanczos`, :func:`arnoldi` or :func:`extended_krylov`.

    For ``space="extended"``, ``m`` is the target dimension (``m // 2``
    blocks, at least one).
    """
    if space == "extended":
        return extended_krylov(M, solve, b, max(1, (int(m) + 1) // 2))
    if space != "krylov":
        raise ValueError(f"unknown space {space!r}")
    if symmetric is None:
        symmetric = is_symmetric(M)
    return (lanczos if symmetric else arnoldi)(M, b, m, reorth=reorth)


@dataclass
class HistoryEntry:
    m: int
    estimate: float
    time: float
    error: float | None = None
    iterate: object = None


class ConvHistory:
    """Convergence record with strictly increasing subspace dimensions."""

    def __init__(self):
        self.entries = []

    def append(self, entry):
        if self.entries and entry.m <= self.entries[-1].m:
            raise ValueError("history dimensions must be strictly increasing")
        self.entries.append(entry)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def ms(self):
        return [e.m for e in self.entries]

    @property
    def estimates(self):
        return [e.estimate for e in self.entries]

    @property
    def errors(self):
        return [e.error for e in self.entries]

    def at(self, m):
        for e in self.entries:
            if e.m == m:
                return e
        raise KeyError(m)


def checkpoints(m_max, stride, ms=None):
    if ms is not None:
        out = sorted({int(m) for m in ms if m >= 1})
    else:
        out = list(range(stride, m_max + 1, stride))
        if not out or out[-1] != m_max:
            out.append(m_max)
    return out


def standard_fAb(op, b, f, m, stride=4, ms=None, tol=None, exact=None,
                 memory_cap=DEFAULT_MEMORY_CAP, keep_iterates=False, reorth="full",
                 relative_error=False):
    """Unstructured approximation ``x_m = V_m f(H_m) V_m^T b``.

    Parameters
    ----------
    op : KronSumOp or operator
    b : ndarray
    f : ScalarFunction
    m : int
        Largest subspace dimension.
    stride : int
        Checkpoint spacing when ``ms`` is not given.
    ms : iterable of int, optional
        Explicit checkpoints.
    tol : float, optional
        Stop at the first checkpoint whose relative iterate difference is
        at most ``tol``.
    exact : ndarray, optional
        Reference solution; errors are recorded in the history.

    Returns
    -------
    x : ndarray
    history : ConvHistory

    Raises
    ------
    MemoryCapError
        If storing the basis needs more than ``memory_cap`` scalars.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    N = b.size
    marks = checkpoints(m, stride, ms)
    m_top = marks[-1]
    if N * (m_top + 1) > memory_cap:
        raise MemoryCapError(
            f"the basis of K_{m_top}(A, b) needs {N * (m_top + 1):.3g} scalars "
            f"(cap {memory_cap:.3g}); this is the regime the structured method "
            "exists for: use kronsum.kronfun.structured_fAb instead"
        )
    symmetric = op.symmetric if isinstance(op, KronSumOp) else is_symmetric(op)
    basis = (lanczos if symmetric else arnoldi)(op, b, m_top, reorth=reorth)
    history = ConvHistory()
    x_old = None
    bnorm_exact = np.linalg.norm(exact) if exact is not None else None
    x = None
    for mk in marks:
        t1 = time.perf_counter()
        j = min(mk, basis.m)
        sub = basis.leading(j)
        y = funm_dense(sub.H, f) @ sub.rhs
        x = sub.basis @ y
        if np.iscomplexobj(x):
            x = x.real
        elapsed = (basis.step_times[j - 1] if j else 0.0) + time.perf_counter() - t1
        xn = np.linalg.norm(x)
        est = 1.0 if x_old is None else (np.linalg.norm(x - x_old) / xn if xn else np.inf)
        err = None
        if exact is not None:
            err = np.linalg.norm(exact - x)
            if relative_error:
                err /= bnorm_exact
        history.append(HistoryEntry(mk, est, elapsed, err,
                                    x.copy() if keep_iterates else None))
        x_old = x
        if tol is not None and est <= tol:
            break
    return x, history
