"""Quadrature evaluation of Laplace-Stieltjes and Cauchy-Stieltjes functions.

Laplace-Stieltjes functions ``f(x) = int_0^inf exp(-tau x) d alpha(tau)``
become sums of exponentials ``sum_k w_k exp(-tau_k A) b``; each term is a
rank-one product through the exponential fast path.  Cauchy-Stieltjes
functions ``f(z) = int dgamma(omega) / (z - omega)`` become sums of shifted
solves.  In both cases one Krylov basis per factor serves every node.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import ContourError, DimensionError, DomainError
from .kronfun import FactoredVector, build_bases
from .smallfun import ScalarFunction, expm
from .sylv import ShiftedSolver

__all__ = [
    "StieltjesMeasure",
    "QuadRule",
    "laplace_point",
    "laplace_ramp",
    "laplace_capped_ramp",
    "laplace_power",
    "cauchy_inv_sqrt",
    "cauchy_log_ratio",
    "cauchy_exp_sqrt",
    "laplace_rule",
    "cauchy_rule",
    "laplace_quad_eval",
    "cauchy_quad_eval",
    "contour_eval",
    "reference_value",
    "quad_error_eps",
    "quad_error_eps_interval",
    "pairwise_sum",
]

_KINDS = ("laplace_point", "laplace_density", "cauchy_density")


@dataclass(frozen=True)
class StieltjesMeasure:
    """A Laplace- or Cauchy-Stieltjes representation of a scalar function.

    Parameters
    ----------
    kind : {"laplace_point", "laplace_density", "cauchy_density"}
    tau0 : float
        Location of the point mass (``laplace_point``).
    gamma : float
        Laplace densities ``weight * tau^(-gamma)`` use ``0 <= gamma < 1``;
        larger exponents make ``int exp(-tau x) d alpha`` diverge at 0.
    weight : float
        Constant factor of the Laplace density or the point mass.
    density : callable, optional
        Custom Laplace density ``w(tau)`` (overrides ``gamma``), or the
        Cauchy density ``g(omega)`` on ``(-inf, cutoff]``.
    support : float
        Upper end of the Laplace support (``inf`` by default).
    cutoff : float
        Right end ``c <= 0`` of the Cauchy support.
    sqrt_endpoint : bool
        The Cauchy density behaves like ``(c - omega)^(-1/2)`` at the
        cutoff; quadrature then substitutes ``omega = c - t^2``.
    f : callable, optional
        Closed form of the represented function, for validation.
    """

    kind: str
    tau0: float = 1.0
    gamma: float = 0.0
    weight: float = 1.0
    density: Callable | None = field(default=None, compare=False)
    support: float = np.inf
    cutoff: float = 0.0
    sqrt_endpoint: bool = False
    f: Callable | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "laplace_density" and self.density is None:
            if not 0 <= self.gamma < 1:
                raise DomainError(
                    f"density tau^(-{self.gamma:g}) is not integrable at 0; "
                    "need 0 <= gamma < 1"
                )
        if self.kind == "laplace_point" and self.tau0 <= 0:
            raise ValueError("point mass must sit at tau0 > 0")
        if self.kind == "cauchy_density":
            if self.density is None:
                raise ValueError("Cauchy measure needs a density")
            if self.cutoff > 0:
                raise ValueError("Cauchy support must end at cutoff <= 0")

    @property
    def is_laplace(self):
        return self.kind.startswith("laplace")

    def laplace_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.density is not None:
            return self.density(tau)
        return self.weight * tau ** (-self.gamma)


def laplace_point(tau0=1.0):
    """Point mass at ``tau0``: ``f(x) = exp(-tau0 x)``."""
    return StieltjesMeasure("laplace_point", tau0=tau0,
                            f=lambda x: np.exp(-tau0 * np.asarray(x)), name="point")


def laplace_ramp():
    """``d alpha = d tau`` on ``[0, inf)``: ``f(x) = 1/x``."""
    return StieltjesMeasure("laplace_density", gamma=0.0,
                            f=lambda x: 1.0 / np.asarray(x), name="ramp")


def laplace_capped_ramp():
    """``d alpha = d tau`` on ``[0, 1]``: ``f(x) = (1 - exp(-x))/x``."""
    return StieltjesMeasure("laplace_density", gamma=0.0, support=1.0,
                            f=lambda x: -np.expm1(-np.asarray(x)) / np.asarray(x),
                            name="capped-ramp")


def laplace_power(sigma):
    """``x^(-sigma) = int tau^(sigma-1) exp(-tau x) d tau / Gamma(sigma)``, ``0 < sigma <= 1``."""
    if not 0 < sigma <= 1:
        raise DomainError("Laplace power representation needs 0 < sigma <= 1")
    return StieltjesMeasure("laplace_density", gamma=1.0 - sigma,
                            weight=1.0 / special.gamma(sigma),
                            f=lambda x: np.asarray(x, dtype=float) ** (-sigma),
                            name=f"power({sigma:g})")


def cauchy_inv_sqrt():
    """``z^(-1/2) = int_{-inf}^0 (z - w)^(-1) / (pi sqrt(-w)) dw``."""
    return StieltjesMeasure("cauchy_density", cutoff=0.0, sqrt_endpoint=True,
                            density=lambda w: 1.0 / (np.pi * np.sqrt(-np.asarray(w))),
                            f=lambda z: 1.0 / np.sqrt(z), name="inv-sqrt")


def cauchy_log_ratio():
    """``log(1 + z)/z = int_{-inf}^{-1} (z - w)^(-1) / (-w) dw``."""
    return StieltjesMeasure("cauchy_density", cutoff=-1.0,
                            density=lambda w: -1.0 / np.asarray(w),
                            f=lambda z: np.log1p(z) / z, name="log-ratio")


def cauchy_exp_sqrt(t=1.0):
    """``(1 - exp(-t sqrt(z)))/z`` with density ``sin(t sqrt(-w)) / (-pi w)``."""
    def g(w):
        s = np.sqrt(-np.asarray(w))
        return np.sin(t * s) / (np.pi * s * s)

    return StieltjesMeasure("cauchy_density", cutoff=0.0, sqrt_endpoint=True, density=g,
                            f=lambda z: -np.expm1(-t * np.sqrt(z)) / z,
                            name=f"exp-sqrt({t:g})")


@dataclass(frozen=True)
class QuadRule:
    """Nodes and weights of a quadrature rule for a Stieltjes integral."""

    nodes: np.ndarray
    weights: np.ndarray
    family: str

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.size < 1 or nodes.size != weights.size:
            raise DimensionError("rule needs q >= 1 matching nodes and weights")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def q(self):
        return self.nodes.size


def laplace_rule(measure, q, scale=1.0):
    """Quadrature for ``int_0^T exp(-tau s) d alpha(tau)``.

    Infinite support uses generalized Gauss-Laguerre in ``t = scale * tau``
    with the ``t^(-gamma)`` singularity absorbed into the weight function;
    the rule is exact for ``s = scale``.  Finite support uses Gauss-Legendre.
    """
    if not measure.is_laplace:
        raise ValueError("laplace_rule needs a Laplace measure")
    if measure.kind == "laplace_point":
        return QuadRule([measure.tau0], [measure.weight], "point")
    if np.isfinite(measure.support):
        u, v = special.roots_legendre(q)
        tau = measure.support * (u + 1) / 2
        w = v * measure.support / 2 * measure.laplace_density(tau)
        return QuadRule(tau, w, "gauss-legendre")
    if measure.density is not None:
        t, W = special.roots_laguerre(q)
        tau = t / scale
        w = W * np.exp(t) / scale * measure.laplace_density(tau)
        return QuadRule(tau, w, "gauss-laguerre")
    g = measure.gamma
    t, W = special.roots_genlaguerre(q, -g)
    tau = t / scale
    w = W * np.exp(t) * scale ** (g - 1) * measure.weight
    return QuadRule(tau, w, "gauss-laguerre")


def cauchy_rule(measure, q, scale=1.0):
    """Quadrature for ``int_{-inf}^c g(w) / (s - w) dw``.

    Gauss-Legendre on ``u`` in (0, 1) with ``w = c - scale (1 - u)/u``, or
    ``w = c - t^2``, ``t = sqrt(scale) (1 - u)/u`` for square-root endpoint
    singularities.
    """
    if measure.kind != "cauchy_density":
        raise ValueError("cauchy_rule needs a Cauchy measure")
    x, v = special.roots_legendre(q)
    u = (x + 1) / 2
    v = v / 2
    c = measure.cutoff
    if measure.sqrt_endpoint:
        t = np.sqrt(scale) * (1 - u) / u
        omega = c - t * t
        w = v * measure.density(omega) * 2 * t * np.sqrt(scale) / u**2
        return QuadRule(omega, w, "gauss-legendre-sqrt")
    omega = c - scale * (1 - u) / u
    w = v * measure.density(omega) * scale / u**2
    return QuadRule(omega, w, "gauss-legendre")


def pairwise_sum(terms):
    """Sum arrays in a fixed pairwise tree over ascending index."""
    terms = list(terms)
    if not terms:
        raise ValueError("nothing to sum")
    while len(terms) > 1:
        nxt = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def _map_nodes(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _projected(M1, b1, M2, b2, m, bases):
    """Leading bases of dimension ``m`` and whether both factors share one."""
    if bases is None:
        bases = build_bases(M1, b1, M2, b2, m)
    B1, B2 = (B.leading(min(m, B.m)) for B in bases)
    return B1, B2, bases[0] is bases[1]


def _sum_range(B1, B2, shift=0.0):
    """Geometric mean of the extreme projected eigenvalue sums minus ``shift``."""
    l1 = np.linalg.eigvals(B1.H).real
    l2 = np.linalg.eigvals(B2.H).real
    lo = l1.min() + l2.min() - shift
    hi = l1.max() + l2.max() - shift
    return lo, hi


def _exp_columns(B, taus):
    """Columns ``exp(-tau_k T) bhat`` for all nodes."""
    T = B.H
    if np.allclose(T, T.T, rtol=0, atol=1e-13 * max(np.abs(T).max(), 1e-300)):
        lam, U = np.linalg.eigh((T + T.T) / 2)
        c = U.T @ B.rhs
        return U @ (np.exp(-np.outer(lam, taus)) * c[:, None])
    return np.column_stack([expm(-tau * T) @ B.rhs for tau in taus])


def laplace_quad_eval(measure, M1, b1, M2, b2, q, m, scale=None, bases=None, rule=None):
    """``sum_k w_k exp(-tau_k A) b`` as a rank-``q`` factored vector.

    Parameters
    ----------
    measure : StieltjesMeasure
        Laplace kind.
    q : int
        Node count (ignored for a point mass or an explicit ``rule``).
    m : int
        Krylov dimension per factor.
    scale : float, optional
        Laguerre scaling; by default the geometric mean of the smallest and
        largest projected eigenvalue sums.
    rule : QuadRule, optional

    Raises
    ------
    DomainError
        If the projected spectrum of ``A`` is not in the right half-plane.
    """
    B1, B2, _ = _projected(M1, b1, M2, b2, m, bases)
    lo, hi = _sum_range(B1, B2)
    if lo <= 0:
        raise DomainError(
            f"projected spectrum of A reaches {lo:.3g} <= 0; the Laplace integral diverges"
        )
    if rule is None:
        rule = laplace_rule(measure, q, np.sqrt(lo * hi) if scale is None else scale)
    Y1 = _exp_columns(B1, rule.nodes)
    Y2 = _exp_columns(B2, rule.nodes)
    return FactoredVector(B1.basis @ Y1, np.diag(rule.weights), B2.basis @ Y2)


def cauchy_quad_eval(measure, M1, b1, M2, b2, q, m, scale=None, bases=None,
                     shift_split=None, workers=None, rule=None):
    """``sum_k w_k (A - w_k I)^{-1} b`` from shifted solves on one basis pair.

    Node solves may run on ``workers`` threads; the weighted cores are then
    added in a fixed pairwise order, so the result does not depend on
    scheduling.
    """
    B1, B2, shared = _projected(M1, b1, M2, b2, m, bases)
    c = measure.cutoff
    lo, hi = _sum_range(B1, B2, shift=c)
    if lo <= 0:
        raise DomainError("A - w I is singular for some node w <= cutoff")
    if rule is None:
        rule = cauchy_rule(measure, q, np.sqrt(lo * hi) if scale is None else scale)
    if shift_split is None:
        shift_split = "half_half" if shared and B1.kind == "lanczos" else "full_on_M1"
    solver = ShiftedSolver(B1, B2, shift_split)
    cores = _map_nodes(lambda k: rule.weights[k] * solver.core(rule.nodes[k]),
                       range(rule.q), workers)
    return FactoredVector(B1.basis, pairwise_sum(cores), B2.basis)


def contour_eval(f, M1, b1, M2, b2, center, radius, q, m, bases=None, workers=None):
    """Trapezoidal rule for ``f(A) b = (1/2 pi i) oint f(z) (zI - A)^{-1} b dz``.

    The circle ``|z - center| = radius`` is traversed counterclockwise with
    ``q`` equispaced nodes; the projected spectrum must lie strictly inside.

    Raises
    ------
    ContourError
        If some projected eigenvalue of ``A`` lies on or outside the circle.
    """
    B1, B2, _ = _projected(M1, b1, M2, b2, m, bases)
    solver = ShiftedSolver(B1, B2)
    lam1, lam2 = solver.eigenvalues
    dist = np.abs(lam1[:, None] + lam2[None, :] - center).max()
    if dist >= radius * (1 - 1e-12):
        raise ContourError(
            f"projected eigenvalue at distance {dist:.4g} from the center is not "
            f"enclosed by radius {radius:.4g}"
        )
    theta = 2 * np.pi * np.arange(q) / q
    zs = center + radius * np.exp(1j * theta)
    fz = f(zs) if isinstance(f, ScalarFunction) else np.asarray([f(z) for z in zs])
    fz = np.broadcast_to(np.asarray(fz, dtype=complex), zs.shape)
    # (zI - A)^{-1} = -(A - zI)^{-1}
    cores = _map_nodes(lambda k: -fz[k] * radius * np.exp(1j * theta[k]) / q
                       * solver.core(zs[k]), range(q), workers)
    Y = pairwise_sum(cores)
    if np.isrealobj(B1.H) and np.isrealobj(B2.H) and np.isreal(center):
        Y = Y.real
    return FactoredVector(B1.basis, Y, B2.basis)


def reference_value(measure, s):
    """``f(s)`` by adaptive quadrature of the Stieltjes integral (reference only)."""
    s = float(s)
    if measure.kind == "laplace_point":
        return measure.weight * np.exp(-measure.tau0 * s)
    if measure.kind == "laplace_density":
        T = measure.support
        if measure.density is None and measure.gamma > 0:
            g = measure.gamma
            head = integrate.quad(lambda t: np.exp(-t * s), 0, min(1.0, T),
                                  weight="alg", wvar=(-g, 0))[0]
            tail = 0.0
            if T > 1:
                tail = integrate.quad(lambda t: t ** (-g) * np.exp(-t * s), 1, T, limit=200)[0]
            return measure.weight * (head + tail)
        return integrate.quad(lambda t: measure.laplace_density(t) * np.exp(-t * s),
                              0, T, limit=200)[0]
    c = measure.cutoff
    if measure.sqrt_endpoint:
        val = integrate.quad(lambda t: 2 * t * measure.density(c - t * t) / (s - c + t * t),
                             0, np.inf, limit=500)[0]
    else:
        val = integrate.quad(lambda w: measure.density(w) / (s - w), -np.inf, c, limit=500)[0]
    return val


def _rule_value(measure, rule, s):
    if measure.is_laplace:
        return float(rule.weights @ np.exp(-rule.nodes * s))
    return float(rule.weights @ (1.0 / (s - rule.nodes)))


def quad_error_eps(measure, rule, eigs1, eigs2=None):
    """Largest scalar quadrature error over all sums ``lambda_i + mu_j``.

    For normal ``A`` this bounds ``||f(A) b - quad(A) b|| / ||b||``.
    """
    eigs1 = np.asarray(eigs1, dtype=float).reshape(-1)
    eigs2 = eigs1 if eigs2 is None else np.asarray(eigs2, dtype=float).reshape(-1)
    grid = np.unique(np.round((eigs1[:, None] + eigs2[None, :]).ravel(), 14))
    return max(abs(reference_value(measure, s) - _rule_value(measure, rule, s)) for s in grid)


def quad_error_eps_interval(measure, rule, lam_min, lam_max, samples=400):
    """Interval form: ``max |f(s) - quad(s)|`` over ``s`` in ``[2 lam_min, 2 lam_max]``.

    Applies when ``M1 = M2`` is Hermitian with spectrum in
    ``[lam_min, lam_max]``; the maximum is sampled on a log-spaced grid.
    """
    if not 0 < lam_min <= lam_max:
        raise ValueError("need 0 < lam_min <= lam_max")
    grid = np.geomspace(2 * lam_min, 2 * lam_max, samples)
    return max(abs(reference_value(measure, s) - _rule_value(measure, rule, s)) for s in grid)
