"""Sylvester and Lyapunov solves: the ``f(A) = A^{-1}`` case.

``A vec(X) = vec(b1 b2^T)`` is the Sylvester equation

    M1 X + X M2^T = b1 b2^T,

which is solved by Galerkin projection onto ``K_m(M1, b1)`` and
``K_m(M2, b2)``.  The small projected equation is solved densely, and one
pair of bases serves every shift ``z`` in ``(M1 - z I) X + X M2^T = b1 b2^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DefectiveMatrixError, SingularEquationError
from .kronfun import FactoredVector, StructuredResult, _basis_time, _drive, build_bases
from .krylov import KrylovBasis, checkpoints
from .la_core import as_operator
from .smallfun import eigen_general

__all__ = [
    "SylvesterSolution",
    "sylvester_small",
    "galerkin_sylvester",
    "galerkin_lyapunov",
    "inverse_structured",
    "ShiftedSolver",
    "shifted_solve",
]

# relative gap below which the Sylvester operator counts as singular
_SINGULAR_GAP = 1e-13


def _check_spectra(lam1, lam2, z=0.0):
    """Raise if some ``lam1[i] + lam2[j] - z`` vanishes relative to the spectra."""
    gaps = np.abs(lam1[:, None] + lam2[None, :] - z)
    scale = max(np.abs(lam1).max(initial=0.0) + np.abs(lam2).max(initial=0.0), abs(z), 1e-300)
    if gaps.min(initial=np.inf) <= _SINGULAR_GAP * scale:
        raise SingularEquationError(
            "spectra of the two coefficient matrices overlap (min |l_i + m_j - z| = "
            f"{gaps.min():.2e}); the Sylvester operator is singular"
        )


def sylvester_small(A, B, C):
    """Dense solve of ``A X + X B^T = C`` (Bartels-Stewart via Schur forms).

    Raises
    ------
    SingularEquationError
        If the spectra of ``A`` and ``-B`` intersect.
    """
    A = np.atleast_2d(np.asarray(A))
    B = np.atleast_2d(np.asarray(B))
    C = np.atleast_2d(np.asarray(C))
    _check_spectra(np.linalg.eigvals(A), np.linalg.eigvals(B))
    return sla.solve_sylvester(A, B.T, C)


@dataclass
class SylvesterSolution:
    """Galerkin solution ``X_m = Q Y P^T`` of ``M1 X + X M2^T = b1 b2^T``.

    Attributes
    ----------
    X : FactoredVector
        ``vec(X_m)`` in factored form.
    Y : ndarray
        Solution of the projected equation.
    residual_norm : float
        ``||M1 X_m + X_m M2^T - b1 b2^T||_F`` computed from low-rank terms.
    galerkin_residual : float
        ``||Q^T R_m P||_F``; zero up to rounding by construction.
    bases : tuple of KrylovBasis
    """

    X: FactoredVector
    Y: np.ndarray
    residual_norm: float
    galerkin_residual: float
    bases: tuple

    def dense(self):
        return self.X.matrix()


def _residual_terms(M, B):
    """``W = M V - V T`` for the leading basis ``V`` and projection ``T`` of ``B``."""
    V = B.basis
    MV = np.column_stack([as_operator(M).matvec(V[:, j]).reshape(-1) for j in range(B.m)])
    return MV - V @ B.H


def _galerkin(M1, B1, M2, B2, z=0.0, split="full_on_M1"):
    """Solve the projected shifted equation on the given bases; return SylvesterSolution."""
    z1, z2 = (z, 0.0) if split == "full_on_M1" else (z / 2, z / 2)
    T1 = B1.H - z1 * np.eye(B1.m)
    T2 = B2.H - z2 * np.eye(B2.m)
    C = np.outer(B1.rhs, B2.rhs)
    try:
        Y = sylvester_small(T1, T2, C)
    except SingularEquationError as exc:
        raise SingularEquationError(f"projected equation is singular: {exc}") from None
    E = T1 @ Y + Y @ T2.T - C
    W1 = _residual_terms(M1, B1)
    W2 = _residual_terms(M2, B2)
    Q, P = B1.basis, B2.basis
    # R = W1 Y P^T + Q Y W2^T + Q E P^T
    Z = np.zeros_like(Y)
    R = FactoredVector(np.hstack([W1, Q]), np.block([[Y, Z], [E, Y]]), np.hstack([P, W2]))
    G = (Q.T @ W1) @ Y + E + Y @ (W2.T @ P)
    X = FactoredVector(Q, Y, P)
    return SylvesterSolution(X, Y, R.norm(), float(np.linalg.norm(G)), (B1, B2))


def galerkin_sylvester(M1, b1, M2, b2, m, space="krylov", bases=None):
    """Galerkin solution of ``M1 X + X M2^T = b1 b2^T`` in ``K_m(M1,b1), K_m(M2,b2)``.

    The projected equation is ``T1 Y + Y T2^T = b1hat b2hat^T``.

    Returns
    -------
    SylvesterSolution
    """
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, m, space=space)
    B1, B2 = bases
    B1 = B1.leading(min(m, B1.m))
    B2 = B2.leading(min(m, B2.m))
    return _galerkin(M1, B1, M2, B2)


def galerkin_lyapunov(M1, b1, m, space="krylov", bases=None):
    """Galerkin solution of ``M1 X + X M1^T = b1 b1^T``; ``X_m = P Y P^T``."""
    if bases is None:
        from .krylov import krylov_basis

        B = krylov_basis(M1, b1, m, space=space)
        bases = (B, B)
    return galerkin_sylvester(M1, b1, M1, b1, m, bases=bases)


def inverse_structured(M1, b1, M2, b2, m_max=50, tol=1e-8, stride=4, ms=None,
                       space="krylov", exact=None, relative_error=False,
                       keep_iterates=False, bases=None):
    """``A^{-1} b`` through the projected Sylvester equation.

    Same contract as :func:`kronsum.kronfun.structured_fAb` with
    ``f = INVERSE``; the small problem is solved by Bartels-Stewart instead
    of diagonalization.  Each history entry keeps the Sylvester residual in
    ``result.extras["residuals"]``.
    """
    marks = checkpoints(m_max, stride, ms)
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, marks[-1], space=space)
    B1, B2 = bases
    residuals = []

    def make(mk):
        s1 = B1.leading(min(mk, B1.m))
        s2 = B2.leading(min(mk, B2.m))
        sol = _galerkin(M1, s1, M2, s2)
        residuals.append((mk, sol.residual_norm, sol.galerkin_residual))
        return sol.X

    approx, history, converged = _drive(marks, make, tol, exact, relative_error,
                                        keep_iterates, _basis_time(B1, B2))
    return StructuredResult(approx, history, (B1, B2), "sylvester", converged,
                            {"residuals": residuals})


class ShiftedSolver:
    """Projected solves of ``(M1 - z I) X + X M2^T = b1 b2^T`` for many ``z``.

    The Krylov spaces are shift invariant, so one pair of bases and one
    eigendecomposition of each projected matrix serve every shift.  Solves
    for different ``z`` are independent and read-only.

    Parameters
    ----------
    B1, B2 : KrylovBasis
    split : {"full_on_M1", "half_half"}
        Whether ``z`` shifts ``M1`` alone or ``z/2`` goes to each factor.
        Both give the same ``X``; half-half is the symmetric choice when
        ``M1 = M2``.
    """

    def __init__(self, B1: KrylovBasis, B2: KrylovBasis, split="full_on_M1"):
        if split not in ("full_on_M1", "half_half"):
            raise ValueError(f"unknown shift split {split!r}")
        self.B1, self.B2, self.split = B1, B2, split
        self.C = np.outer(B1.rhs, B2.rhs)
        try:
            d1, d2 = eigen_general(B1.H), eigen_general(B2.H)
            self._diag = None if (d1.unsafe or d2.unsafe) else (d1, d2)
        except DefectiveMatrixError:
            self._diag = None
        if self._diag is not None:
            d1, d2 = self._diag
            self._G = np.outer(d1.inverse @ B1.rhs, d2.inverse @ B2.rhs)
            self.eigenvalues = (d1.values, d2.values)
        else:
            self.eigenvalues = (np.linalg.eigvals(B1.H), np.linalg.eigvals(B2.H))

    def core(self, z):
        """Projected solution ``Y(z)`` (complex iff ``z`` or the spectra are)."""
        z1, z2 = (z, 0.0) if self.split == "full_on_M1" else (z / 2, z / 2)
        lam1, lam2 = self.eigenvalues
        _check_spectra(lam1 - z1, lam2 - z2)
        if self._diag is not None:
            d1, d2 = self._diag
            Y = d1.vectors @ (self._G / (lam1[:, None] + lam2[None, :] - z)) @ d2.vectors.T
        else:
            T1 = self.B1.H - z1 * np.eye(self.B1.m)
            T2 = self.B2.H - z2 * np.eye(self.B2.m)
            Y = sla.solve_sylvester(T1, T2.T, self.C.astype(np.result_type(T1, z)))
        if np.isrealobj(z) and np.isrealobj(self.B1.H) and np.iscomplexobj(Y):
            Y = Y.real
        return Y

    def solve(self, z):
        return FactoredVector(self.B1.basis, self.core(z), self.B2.basis)


def shifted_solve(M1, b1, M2, b2, z, m, shift_split=None, bases=None):
    """Galerkin approximation of ``(A - z I)^{-1} vec(b1 b2^T)``.

    Parameters
    ----------
    z : complex or float
    m : int
    shift_split : {"full_on_M1", "half_half"}, optional
        Default: half-half when ``M1`` and ``M2`` are the same symmetric
        factor with the same vector, full shift on ``M1`` otherwise.

    Returns
    -------
    FactoredVector
    """
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, m)
    shared = bases[0] is bases[1]
    B1, B2 = (B.leading(min(m, B.m)) for B in bases)
    if shift_split is None:
        shift_split = "half_half" if (shared and B1.kind == "lanczos") else "full_on_M1"
    return ShiftedSolver(B1, B2, shift_split).solve(z)
