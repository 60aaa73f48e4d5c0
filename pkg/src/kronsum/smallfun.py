"""Functions of small dense matrices and the scalar special functions.

Projected problems (``f(H_m)``, ``exp(T_1)``, ...) are at most a few hundred
wide, so everything here is dense.  Scalar functions are described by
:class:`ScalarFunction`; the module-level constants (:data:`EXP`,
:data:`SQRT`, ...) cover the common cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy import special

from .errors import DefectiveMatrixError, DomainError

__all__ = [
    "ScalarFunction",
    "EXP",
    "SQRT",
    "INV_SQRT",
    "INVERSE",
    "SIN",
    "COS",
    "LOG_RATIO",
    "frommer_phi",
    "custom",
    "function_by_name",
    "SpectralDecomp",
    "funm_sym",
    "funm_dense",
    "expm",
    "sinm",
    "cosm",
    "eigen_general",
    "lower_incomplete_gamma",
    "log_lower_incomplete_gamma",
    "dense_fAb",
]

_POSITIVE_KINDS = frozenset({"sqrt", "invsqrt", "frommer", "logratio"})
UNSAFE_CONDITION = 1e8


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function ``f`` to be lifted to matrices.

    Parameters
    ----------
    kind : str
        One of ``exp, sqrt, invsqrt, inverse, sin, cos, frommer, logratio,
        custom``.
    param : float, optional
        ``s`` for ``frommer``: ``f(z) = (exp(s*sqrt(z)) - 1)/z``.
    func : callable, optional
        Elementwise map for ``custom``.
    negate : bool
        Evaluate ``f(-z)`` instead of ``f(z)``, i.e. ``f(-A)``.
    """

    kind: str
    param: float | None = None
    func: Callable | None = field(default=None, compare=False)
    negate: bool = False
    label: str = ""

    def __post_init__(self):
        known = _POSITIVE_KINDS | {"exp", "inverse", "sin", "cos", "custom"}
        if self.kind not in known:
            raise ValueError(f"unknown function kind {self.kind!r}")
        if self.kind == "frommer" and not (self.param is not None and self.param > 0):
            raise ValueError("frommer function needs s > 0")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom function needs func")

    @property
    def name(self):
        if self.label:
            return self.label
        base = f"frommer({self.param:g})" if self.kind == "frommer" else self.kind
        return f"{base}(-z)" if self.negate else base

    @property
    def needs_positive(self):
        return self.kind in _POSITIVE_KINDS

    def negated(self):
        return ScalarFunction(self.kind, self.param, self.func, not self.negate, self.label)

    def check_domain(self, values):
        """Raise :class:`DomainError` if ``f`` is undefined at any of ``values``."""
        z = np.asarray(values)
        if self.negate:
            z = -z
        if self.needs_positive:
            bad = np.real(z) <= 0
            if np.any(bad):
                raise DomainError(
                    f"{self.name} requires positive real part; offending eigenvalue "
                    f"{z[bad].flat[0]!r}"
                )
        elif self.kind == "inverse":
            if np.any(z == 0):
                raise DomainError("inverse is undefined at eigenvalue 0")

    def __call__(self, z):
        z = np.asarray(z)
        if self.negate:
            z = -z
        k = self.kind
        if k == "exp":
            return np.exp(z)
        if k == "sqrt":
            return np.sqrt(z)
        if k == "invsqrt":
            return 1.0 / np.sqrt(z)
        if k == "inverse":
            return 1.0 / z
        if k == "sin":
            return np.sin(z)
        if k == "cos":
            return np.cos(z)
        if k == "frommer":
            # expm1 keeps full accuracy when s*sqrt(z) is tiny
            return np.expm1(self.param * np.sqrt(z)) / z
        if k == "logratio":
            return np.log1p(z) / z
        return np.asarray(self.func(z))


EXP = ScalarFunction("exp")
SQRT = ScalarFunction("sqrt")
INV_SQRT = ScalarFunction("invsqrt")
INVERSE = ScalarFunction("inverse")
SIN = ScalarFunction("sin")
COS = ScalarFunction("cos")
LOG_RATIO = ScalarFunction("logratio")


def frommer_phi(s):
    """``f(z) = (exp(s*sqrt(z)) - 1)/z``."""
    return ScalarFunction("frommer", param=float(s))


def custom(func, label="custom"):
    return ScalarFunction("custom", func=func, label=label)


def function_by_name(text):
    """Parse ``exp``, ``sqrt``, ``frommer:1e-3``, ``-exp`` (negated) etc."""
    text = text.strip().lower()
    negate = text.startswith("-")
    text = text.lstrip("-")
    name, _, arg = text.partition(":")
    aliases = {"inv_sqrt": "invsqrt", "log_ratio": "logratio", "inv": "inverse"}
    name = aliases.get(name, name)
    if name == "frommer":
        f = frommer_phi(float(arg) if arg else 1e-3)
    elif name == "custom":
        raise ValueError("custom functions cannot be given by name")
    else:
        f = ScalarFunction(name)
    return f.negated() if negate else f


@dataclass(frozen=True)
class SpectralDecomp:
    """``T = X diag(values) X^{-1}`` with ``condition = cond(X)``."""

    values: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray
    condition: float

    @property
    def unsafe(self):
        return self.condition > UNSAFE_CONDITION

    def reconstruct(self):
        return (self.vectors * self.values) @ self.inverse


def _symmetric(T, rtol=1e-13):
    scale = np.abs(T).max() if T.size else 0.0
    return np.isrealobj(T) and np.abs(T - T.T).max(initial=0.0) <= rtol * scale


def eigen_general(T):
    """Eigendecomposition with a conditioning estimate of the eigenvector matrix.

    Symmetric input goes through ``eigh`` and is perfectly conditioned.

    Raises
    ------
    DefectiveMatrixError
        When the eigenvector matrix is numerically singular; use the explicit
        Kronecker path (or :func:`expm` for the exponential) instead.
    """
    T = np.atleast_2d(np.asarray(T))
    if T.shape[0] != T.shape[1]:
        raise ValueError(f"square matrix expected, got {T.shape}")
    if _symmetric(T):
        lam, Q = np.linalg.eigh((T + T.T) / 2)
        return SpectralDecomp(lam, Q, Q.T, float(np.linalg.cond(Q)) if Q.size else 1.0)
    lam, X = sla.eig(T)
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > 1e14:
        raise DefectiveMatrixError(
            "matrix is defective to working precision (cond(X) = "
            f"{cond:.2e}); evaluate f on the explicit Kronecker sum instead"
        )
    Xinv = np.linalg.solve(X, np.eye(X.shape[0]))
    if np.all(np.abs(lam.imag) == 0):
        lam, X, Xinv = lam.real, X.real, Xinv.real
    return SpectralDecomp(lam, X, Xinv, float(cond))


def funm_sym(T, f):
    """``f(T)`` for symmetric ``T`` via ``Q f(Lambda) Q^T``."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    lam, Q = np.linalg.eigh((T + T.T) / 2)
    f.check_domain(lam)
    return (Q * f(lam)) @ Q.T


def expm(T):
    """Matrix exponential (scaling and squaring, Pade approximant).

    Raises
    ------
    OverflowError
        If the result is not finite.
    """
    T = np.atleast_2d(np.asarray(T))
    with np.errstate(over="ignore", invalid="ignore"):
        E = sla.expm(T)
    if not np.all(np.isfinite(E)):
        raise OverflowError("matrix exponential overflows; norm of T is too large")
    return E


def sinm(T):
    T = np.atleast_2d(np.asarray(T))
    if np.isrealobj(T):
        return expm(1j * T).imag
    return sla.sinm(T)


def cosm(T):
    T = np.atleast_2d(np.asarray(T))
    if np.isrealobj(T):
        return expm(1j * T).real
    return sla.cosm(T)


def funm_dense(T, f):
    """``f(T)`` for a general small dense matrix.

    Symmetric matrices use :func:`funm_sym`.  Otherwise dedicated routines
    handle ``exp``, ``sin``, ``cos``, ``sqrt`` and ``inverse``; anything else
    goes through the eigendecomposition and fails if it is unsafe.
    """
    T = np.atleast_2d(np.asarray(T))
    if _symmetric(T):
        return funm_sym(T, f)
    sign = -1.0 if f.negate else 1.0
    k = f.kind
    if k == "exp":
        return expm(sign * T)
    if k == "sin":
        return sign * sinm(T)
    if k == "cos":
        return cosm(T)
    if k in ("sqrt", "invsqrt", "inverse"):
        f.check_domain(np.linalg.eigvals(T))
        S = sign * T
        if k == "inverse":
            return np.linalg.inv(S)
        R = sla.sqrtm(S)
        return R if k == "sqrt" else np.linalg.inv(R)
    dec = eigen_general(T)
    if dec.unsafe:
        raise DefectiveMatrixError(
            f"eigenvector condition {dec.condition:.2e} exceeds {UNSAFE_CONDITION:.0e}"
        )
    f.check_domain(dec.values)
    F = (dec.vectors * f(dec.values)) @ dec.inverse
    if np.isrealobj(T) and np.iscomplexobj(F):
        F = F.real
    return F


def dense_fAb(A, b, f):
    """Reference ``f(A) b`` for an explicitly formed (small) matrix."""
    return funm_dense(A, f) @ np.asarray(b)


def lower_incomplete_gamma(n, x):
    """``gamma(n, x) = int_0^x t^(n-1) e^(-t) dt`` (not regularized)."""
    return float(np.exp(log_lower_incomplete_gamma(n, x)))


def log_lower_incomplete_gamma(n, x):
    """Natural log of :func:`lower_incomplete_gamma`; ``-inf`` at ``x = 0``."""
    if n <= 0 or x < 0:
        raise ValueError("need n > 0 and x >= 0")
    if x == 0:
        return -np.inf
    p = special.gammainc(n, x)
    if p > 0:
        return float(np.log(p) + special.gammaln(n))
    # regularized value underflowed: leading series term x^n e^-x / n
    return float(n * np.log(x) - x - np.log(n))
