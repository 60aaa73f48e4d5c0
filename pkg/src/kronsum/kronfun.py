"""Structure-exploiting approximation of ``f(A) b`` for Kronecker sums.

With ``A = M2 (x) I + I (x) M1`` and ``b = vec(b1 b2^T)`` two small Krylov
spaces ``K_m(M1, b1)`` (basis ``Q``, projection ``T1``) and ``K_m(M2, b2)``
(basis ``P``, projection ``T2``) replace the single space ``K_m(A, b)``.
The approximation is

    x_m = vec(Q Z P^T),   vec(Z) = f(T2 (x) I + I (x) T1) vec(b1hat b2hat^T),

and is kept in factored form throughout.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg as sla

from .errors import DefectiveMatrixError, DimensionError, MemoryCapError
from .krylov import (
    DEFAULT_MEMORY_CAP,
    ConvHistory,
    HistoryEntry,
    KrylovBasis,
    checkpoints,
    krylov_basis,
)
from .la_core import KronSumOp, unvec, vec
from .smallfun import EXP, ScalarFunction, eigen_general, funm_dense

__all__ = [
    "FactoredVector",
    "StructuredResult",
    "build_bases",
    "eval_projected",
    "structured_fAb",
    "structured_fAb_lowrank",
    "exp_structured",
    "sincos_structured",
    "diff_estimate",
    "multiterm_structured",
    "kron_exact",
    "EXPLICIT_MAX_M",
]

# explicit f(T_m) costs O(m^6)
EXPLICIT_MAX_M = 60


@dataclass(frozen=True)
class FactoredVector:
    """The vector ``vec(left @ mid @ right.T)`` kept as three factors."""

    left: np.ndarray
    mid: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.left)
        R = np.asarray(self.right)
        L = L.reshape(-1, 1) if L.ndim == 1 else L
        R = R.reshape(-1, 1) if R.ndim == 1 else R
        M = np.atleast_2d(np.asarray(self.mid))
        if M.shape != (L.shape[1], R.shape[1]):
            raise DimensionError(
                f"mid has shape {M.shape}, expected {(L.shape[1], R.shape[1])}"
            )
        object.__setattr__(self, "left", L)
        object.__setattr__(self, "mid", M)
        object.__setattr__(self, "right", R)

    @classmethod
    def rank1(cls, x1, x2, scale=1.0):
        return cls(np.asarray(x1).reshape(-1, 1), np.array([[scale]]),
                   np.asarray(x2).reshape(-1, 1))

    @property
    def shape(self):
        return self.left.shape[0], self.right.shape[0]

    @property
    def size(self):
        n1, n2 = self.shape
        return n1 * n2

    @property
    def real(self):
        return FactoredVector(self.left.real, self.mid.real, self.right.real)

    def matrix(self):
        return self.left @ self.mid @ self.right.T

    def materialize(self):
        return vec(self.matrix())

    def entry(self, i, j):
        """Entry ``(i, j)`` of the matrix form, i.e. ``x[j * n1 + i]``."""
        return self.left[i] @ self.mid @ self.right[j]

    def core(self):
        """Small matrix ``C`` with ``||x|| = ||C||_F``, from thin QR of the factors."""
        _, RL = np.linalg.qr(self.left)
        _, RR = np.linalg.qr(self.right)
        return RL @ self.mid @ RR.T

    def norm(self):
        return float(np.linalg.norm(self.core()))

    def __add__(self, other):
        if not isinstance(other, FactoredVector):
            return NotImplemented
        if self.shape != other.shape:
            raise DimensionError(f"shapes differ: {self.shape} vs {other.shape}")
        return FactoredVector(
            np.hstack([self.left, other.left]),
            sla.block_diag(self.mid, other.mid),
            np.hstack([self.right, other.right]),
        )

    def __neg__(self):
        return FactoredVector(self.left, -self.mid, self.right)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return FactoredVector(self.left, c * self.mid, self.right)

    __rmul__ = __mul__


def diff_estimate(current, previous):
    """Relative iterate difference ``||x_m - x_old|| / ||x_m||``.

    A missing previous iterate counts as zero, giving 1.
    """
    if previous is None:
        return 1.0
    cur = current.norm()
    if cur == 0:
        raise ZeroDivisionError("current iterate has zero norm")
    if _same_bases(current, previous):
        # both iterates live in nested spaces: compare small cores directly
        return _nested_diff(current, previous) / cur
    return (current - previous).norm() / cur


def _same_bases(a, b):
    return (a.left.shape[1] >= b.left.shape[1] and a.right.shape[1] >= b.right.shape[1]
            and np.array_equal(a.left[:, : b.left.shape[1]], b.left)
            and np.array_equal(a.right[:, : b.right.shape[1]], b.right))


def _nested_diff(a, b):
    k1, k2 = b.mid.shape
    D = a.mid.astype(np.result_type(a.mid, b.mid), copy=True)
    D[:k1, :k2] -= b.mid
    return float(np.linalg.norm(FactoredVector(a.left, D, a.right).core()))


@dataclass
class StructuredResult:
    """Outcome of a structured evaluation.

    Attributes
    ----------
    approx : FactoredVector
    history : ConvHistory
    bases : tuple of KrylovBasis
    path : str
        ``"diag"``, ``"explicit"``, ``"exp-fast"``, ``"sincos"``,
        ``"sylvester"`` or ``"multiterm"``.
    converged : bool
    """

    approx: FactoredVector
    history: ConvHistory
    bases: tuple
    path: str
    converged: bool
    extras: dict = field(default_factory=dict)


def _same_problem(M1, b1, M2, b2):
    if M1 is not M2:
        return False
    return np.array_equal(np.asarray(b1), np.asarray(b2))


def build_bases(M1, b1, M2, b2, m1, m2=None, space="krylov", solves=(None, None)):
    """Krylov bases for both factors; shared when the factors coincide."""
    m2 = m1 if m2 is None else m2
    B1 = krylov_basis(M1, b1, m1, space=space, solve=solves[0])
    if _same_problem(M1, b1, M2, b2) and m2 <= m1:
        B2 = B1 if m2 == m1 else B1.leading(min(m2, B1.m))
    else:
        B2 = krylov_basis(M2, b2, m2, space=space, solve=solves[1])
    return B1, B2


def eval_projected(T1, T2, b1hat, b2hat, f, path="auto"):
    """Small core ``Z`` with ``vec(Z) = f(T2 (x) I + I (x) T1) vec(b1hat b2hat^T)``.

    Parameters
    ----------
    path : {"auto", "diag", "explicit"}
        ``"diag"`` diagonalizes ``T1`` and ``T2`` separately (O(m^3));
        ``"explicit"`` forms the ``m1*m2`` square Kronecker sum and is limited
        to ``m <= 60``.  ``"auto"`` prefers the diagonal route and falls back
        when the eigenvectors are badly conditioned.

    Returns
    -------
    Z : ndarray
    path : str
        The route actually taken.
    """
    T1 = np.atleast_2d(np.asarray(T1))
    T2 = np.atleast_2d(np.asarray(T2))
    b1hat = np.asarray(b1hat).reshape(-1)
    b2hat = np.asarray(b2hat).reshape(-1)
    m1, m2 = T1.shape[0], T2.shape[0]
    if b1hat.size != m1 or b2hat.size != m2:
        raise DimensionError("projected right-hand sides do not match T1, T2")
    real = np.isrealobj(T1) and np.isrealobj(T2)
    if path in ("auto", "diag"):
        try:
            d1 = eigen_general(T1)
            d2 = eigen_general(T2)
        except DefectiveMatrixError:
            if path == "diag":
                raise
            d1 = d2 = None
        if d1 is not None and (path == "diag" or not (d1.unsafe or d2.unsafe)):
            sums = d1.values[:, None] + d2.values[None, :]
            f.check_domain(sums)
            c1 = d1.inverse @ b1hat
            c2 = d2.inverse @ b2hat
            G = f(sums) * np.outer(c1, c2)
            Z = d1.vectors @ G @ d2.vectors.T
            if real and np.iscomplexobj(Z):
                Z = Z.real
            return Z, "diag"
    if max(m1, m2) > EXPLICIT_MAX_M:
        raise DefectiveMatrixError(
            f"projected matrices are not safely diagonalizable and m = {max(m1, m2)} "
            f"exceeds the explicit-path limit {EXPLICIT_MAX_M}"
        )
    Tm = np.kron(T2, np.eye(m1)) + np.kron(np.eye(m2), T1)
    z = funm_dense(Tm, f) @ vec(np.outer(b1hat, b2hat))
    Z = unvec(z, m1, m2)
    if real and np.iscomplexobj(Z):
        Z = Z.real
    return Z, "explicit"


def _drive(marks, make, tol, exact, relative_error, keep_iterates, times):
    """Shared checkpoint loop: evaluate, estimate, record, stop on ``tol``."""
    history = ConvHistory()
    prev = None
    approx = None
    converged = False
    exact_norm = np.linalg.norm(exact) if exact is not None else None
    for mk in marks:
        t1 = time.perf_counter()
        approx = make(mk)
        t_eval = time.perf_counter() - t1
        primary = approx[0] if isinstance(approx, tuple) else approx
        if isinstance(approx, tuple):
            est = max(diff_estimate(a, p) if p is not None else 1.0
                      for a, p in zip(approx, prev or (None,) * len(approx)))
        else:
            est = diff_estimate(approx, prev)
        err = None
        if exact is not None:
            err = float(np.linalg.norm(exact - primary.materialize()))
            if relative_error:
                err /= exact_norm
        history.append(HistoryEntry(mk, est, times(mk) + t_eval, err,
                                    approx if keep_iterates else None))
        prev = approx
        if tol is not None and est <= tol:
            converged = True
            break
    return approx, history, converged


def _basis_time(B1, B2):
    def at(mk):
        t = 0.0
        for B in (B1, B2):
            j = min(mk, B.m)
            if len(B.step_times):
                t += float(B.step_times[min(j, len(B.step_times)) - 1])
        return t
    return at


def structured_fAb(M1, b1, M2, b2, f, m_max=50, tol=1e-8, space="krylov", stride=4,
                   ms=None, m2_max=None, path="auto", exact=None,
                   relative_error=False, keep_iterates=False, bases=None):
    """Structured approximation of ``f(A) vec(b1 b2^T)``.

    Parameters
    ----------
    M1, M2 : matrix, sparse matrix or LinearOperator
        Inner and outer factors of ``A = M2 (x) I + I (x) M1``.
    b1, b2 : ndarray
    f : ScalarFunction
    m_max : int
        Largest dimension of ``K_m(M1, b1)``.
    tol : float or None
        Stop at the first checkpoint whose relative iterate difference is at
        most ``tol``; None runs through all checkpoints.
    space : {"krylov", "extended"}
    stride : int
        Checkpoint spacing (the tables use 4).
    ms : iterable of int, optional
        Explicit checkpoints; overrides ``stride``.
    m2_max : int, optional
        Separate cap for the dimension of ``K_m(M2, b2)``.
    path : {"auto", "diag", "explicit"}
    exact : ndarray, optional
        Reference ``f(A) b`` for error recording.
    bases : tuple of KrylovBasis, optional
        Precomputed bases to reuse.

    Returns
    -------
    StructuredResult
    """
    marks = checkpoints(m_max, stride, ms)
    m2_cap = marks[-1] if m2_max is None else m2_max
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, marks[-1], m2_cap, space=space)
    B1, B2 = bases
    used = set()

    def make(mk):
        s1 = B1.leading(min(mk, B1.m))
        s2 = B2.leading(min(mk, m2_cap, B2.m))
        Z, route = eval_projected(s1.H, s2.H, s1.rhs, s2.rhs, f, path=path)
        used.add(route)
        return FactoredVector(s1.basis, Z, s2.basis)

    approx, history, converged = _drive(marks, make, tol, exact, relative_error,
                                        keep_iterates, _basis_time(B1, B2))
    route = "explicit" if "explicit" in used else "diag"
    return StructuredResult(approx, history, (B1, B2), route, converged)


def structured_fAb_lowrank(M1, M2, rhs, f, m_max=50, **kwargs):
    """Rank-``l`` right-hand side handled as a sum of rank-one problems.

    ``rhs`` is a :class:`~kronsum.la_core.LowRankRHS`; keyword arguments go
    to :func:`structured_fAb`.  Returns the summed :class:`FactoredVector`.
    """
    parts = [structured_fAb(M1, c1, M2, c2, f, m_max=m_max, **kwargs).approx
             for c1, c2 in rhs.terms()]
    return reduce(lambda a, b: a + b, parts)


def _projected_action(B, j, F):
    """``V_j F(T_j) (V_j^T b)`` for the leading ``j`` vectors of ``B``."""
    s = B.leading(min(j, B.m))
    y = F(s.H) @ s.rhs
    x = s.basis @ y
    return x.real if np.iscomplexobj(x) and np.isrealobj(s.H) else x


def exp_structured(M1, b1, M2, b2, m_max=50, tol=1e-8, stride=4, ms=None,
                   space="krylov", exact=None, relative_error=False,
                   keep_iterates=False, bases=None, negate=False):
    """Exponential fast path ``x_m = vec(x1 x2^T)``.

    ``x1 = Q exp(T1) Q^T b1`` and ``x2 = P exp(T2) P^T b2`` are two
    independent small exponentials; nothing of size ``m^2`` is formed.
    With ``negate=True`` the target is ``exp(-A) b``.

    The final factors are exposed as ``result.extras["x1"]`` and
    ``result.extras["x2"]``.
    """
    marks = checkpoints(m_max, stride, ms)
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, marks[-1], space=space)
    B1, B2 = bases
    fexp = EXP.negated() if negate else EXP

    def F(T):
        return funm_dense(T, fexp)

    def make(mk):
        return FactoredVector.rank1(_projected_action(B1, mk, F),
                                    _projected_action(B2, mk, F))

    approx, history, converged = _drive(marks, make, tol, exact, relative_error,
                                        keep_iterates, _basis_time(B1, B2))
    extras = {"x1": approx.left[:, 0], "x2": approx.right[:, 0]}
    return StructuredResult(approx, history, (B1, B2), "exp-fast", converged, extras)


def sincos_structured(M1, b1, M2, b2, m_max=50, which="both", tol=1e-8, stride=4,
                      ms=None, exact=None, keep_iterates=False, bases=None):
    """``sin(A) b`` and/or ``cos(A) b`` through the angle-addition identities.

    With ``A = M2 (x) I + I (x) M1`` and ``B = b1 b2^T``::

        sin(A) vec(B) = vec(sin(M1) B cos(M2)^T + cos(M1) B sin(M2)^T)
        cos(A) vec(B) = vec(cos(M1) B cos(M2)^T - sin(M1) B sin(M2)^T)

    Each is a rank-two :class:`FactoredVector`.  For ``which="both"`` a pair
    ``(sin_result, cos_result)`` is returned; ``exact`` then refers to sin.
    """
    if which not in ("sin", "cos", "both"):
        raise ValueError(f"which must be 'sin', 'cos' or 'both', got {which!r}")
    from .smallfun import COS, SIN

    marks = checkpoints(m_max, stride, ms)
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, marks[-1])
    B1, B2 = bases

    def make(mk):
        s1 = _projected_action(B1, mk, lambda T: funm_dense(T, SIN))
        c1 = _projected_action(B1, mk, lambda T: funm_dense(T, COS))
        s2 = _projected_action(B2, mk, lambda T: funm_dense(T, SIN))
        c2 = _projected_action(B2, mk, lambda T: funm_dense(T, COS))
        sin_v = FactoredVector(np.column_stack([s1, c1]), np.eye(2),
                               np.column_stack([c2, s2]))
        cos_v = FactoredVector(np.column_stack([c1, s1]), np.diag([1.0, -1.0]),
                               np.column_stack([c2, s2]))
        if which == "sin":
            return sin_v
        if which == "cos":
            return cos_v
        return sin_v, cos_v

    approx, history, converged = _drive(marks, make, tol, exact, False,
                                        keep_iterates, _basis_time(B1, B2))
    if which == "both":
        return tuple(StructuredResult(a, history, (B1, B2), "sincos", converged)
                     for a in approx)
    return StructuredResult(approx, history, (B1, B2), "sincos", converged)


def _rest_operator(mats):
    """Kronecker sum ``M_1 (+) ... (+) M_k`` with ``M_1`` outermost."""
    if len(mats) == 1:
        return mats[0]
    return KronSumOp(_rest_operator(mats[1:]), mats[0])


def multiterm_structured(factors, f, m_max=50, tol=1e-8, stride=4, ms=None,
                         memory_cap=DEFAULT_MEMORY_CAP):
    """``f(M_1 (+) M_2 (+) ... (+) M_k) (b_1 (x) ... (x) b_k)``.

    ``M_1 (+) M_2 (+) M_3 = M_1 (x) I (x) I + I (x) M_2 (x) I + I (x) I (x) M_3``.
    The sum is split as ``M_1 (x) I + I (x) (M_2 (+) ... (+) M_k)`` and the
    two-term method runs with the trailing sum applied matrix-free.  For the
    exponential each factor is handled on its own.

    Parameters
    ----------
    factors : sequence of (M_i, b_i)

    Returns
    -------
    StructuredResult
        ``approx.left`` lives on the trailing factors, ``approx.right`` on
        ``M_1``.
    """
    factors = list(factors)
    if len(factors) < 2:
        raise ValueError("need at least two factors")
    mats = [M for M, _ in factors]
    vecs = [np.asarray(b, dtype=float).reshape(-1) for _, b in factors]
    n_rest = int(np.prod([M.shape[0] for M in mats[1:]]))
    if n_rest * (m_max + 1) > memory_cap:
        raise MemoryCapError(
            f"trailing Kronecker sum of dimension {n_rest} with m = {m_max} exceeds "
            f"the memory cap {memory_cap:.3g}"
        )
    if f.kind == "exp":
        marks = checkpoints(m_max, stride, ms)
        bases = [krylov_basis(M, b, marks[-1]) for M, b in zip(mats, vecs)]
        F = lambda T: funm_dense(T, f)  # noqa: E731

        def make(mk):
            xs = [_projected_action(B, mk, F) for B in bases]
            return FactoredVector.rank1(reduce(np.kron, xs[1:]), xs[0])

        def times(mk):
            return sum(float(B.step_times[min(mk, B.m) - 1]) for B in bases)

        approx, history, converged = _drive(marks, make, tol, None, False, False, times)
        return StructuredResult(approx, history, tuple(bases), "multiterm", converged)
    rest = _rest_operator(mats[1:])
    b_rest = reduce(np.kron, vecs[1:])
    res = structured_fAb(rest, b_rest, mats[0], vecs[0], f, m_max=m_max, tol=tol,
                         stride=stride, ms=ms)
    res.path = "multiterm"
    return res


def kron_exact(M1, b1, M2, b2, f):
    """Reference ``f(A) vec(b1 b2^T)`` from full eigendecompositions of the factors.

    Exact up to rounding for diagonalizable factors; the exponential of
    non-normal factors uses ``exp(A) = exp(M2) (x) exp(M1)`` instead.
    Dense factors up to a few thousand rows only.
    """
    D1 = M1.toarray() if hasattr(M1, "toarray") else np.asarray(M1, dtype=float)
    D2 = M2.toarray() if hasattr(M2, "toarray") else np.asarray(M2, dtype=float)
    b1 = np.asarray(b1, dtype=float).reshape(-1)
    b2 = np.asarray(b2, dtype=float).reshape(-1)
    if f.kind == "exp" and not (_is_sym(D1) and _is_sym(D2)):
        fe = EXP.negated() if f.negate else EXP
        return vec(np.outer(funm_dense(D1, fe) @ b1, funm_dense(D2, fe) @ b2))
    Z, _ = eval_projected(D1, D2, b1, b2, f, path="diag")
    return vec(Z)


def _is_sym(D):
    return np.abs(D - D.T).max(initial=0.0) <= 1e-13 * np.abs(D).max(initial=0.0)
