"""Executable convergence bounds, used as envelopes for measured errors.

All products of powers and exponentials are formed in log space and
exponentiated once at the end, since ``(e rho tau / m)^m`` overflows and
``exp(-2m/sqrt(kappa_hat))`` underflows for table-range parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NoValidRegimeError
from .smallfun import log_lower_incomplete_gamma

__all__ = [
    "SpectralParams",
    "BoundEntry",
    "BoundReport",
    "hl_exp_bound",
    "rate_ratio",
    "ls_bound",
    "cs_bound",
    "cs_constant",
    "asymptotic_rates",
    "exp_split_bound",
    "incomplete_gamma_bound",
]


@dataclass(frozen=True)
class SpectralParams:
    """Spectral interval ``[lambda_min, lambda_max]`` of a symmetric factor ``M1``."""

    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 < lambda_min <= lambda_max")

    @classmethod
    def from_eigenvalues(cls, eigs):
        eigs = np.asarray(eigs, dtype=float)
        return cls(float(eigs.min()), float(eigs.max()))

    @property
    def rho(self):
        return (self.lambda_max - self.lambda_min) / 4

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min

    @property
    def kappa_hat(self):
        """Condition number of ``M1 + lambda_min I``: ``(l_max + l_min)/(2 l_min)``."""
        return (self.lambda_max + self.lambda_min) / (2 * self.lambda_min)

    def kappa_hat_omega(self, omega):
        """``(l_max + l_min - w/2)/(2 l_min - w/2)`` for a shift ``w <= 0``."""
        return (self.lambda_max + self.lambda_min - omega / 2) / (2 * self.lambda_min - omega / 2)


def _factor(kappa):
    s = math.sqrt(kappa)
    return (s - 1) / (s + 1)


@dataclass
class BoundEntry:
    m: int
    value: float
    tag: str
    valid: bool
    terms: dict = field(default_factory=dict)


@dataclass
class BoundReport:
    """Per-``m`` bound values."""

    entries: list

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def ms(self):
        return np.array([e.m for e in self.entries])

    @property
    def values(self):
        return np.array([e.value for e in self.entries])

    def at(self, m):
        for e in self.entries:
            if e.m == m:
                return e
        raise KeyError(m)


def hl_exp_bound(m, rho, tau, regime=None):
    """Error bound for the Lanczos approximation of ``exp(-tau A) v``, ``||v|| = 1``.

    ``A`` is symmetric positive semidefinite with spectrum in ``[0, 4 rho]``.
    With ``x = rho tau``:

    * regime ``"i"``: ``10 exp(-m^2/(5x))`` for ``x >= 1`` and
      ``sqrt(4x) <= m <= 2x``;
    * regime ``"ii"``: ``10 x^(-1) exp(-x) (e x / m)^m`` for ``m >= 2x``.

    Regime boundaries are closed.  Without ``regime`` the smaller of the
    applicable bounds is returned.

    Returns
    -------
    value : float
    regime : str

    Raises
    ------
    NoValidRegimeError
        If ``m`` lies in neither regime (or in not the requested one).
    """
    if m < 1 or rho < 0 or tau < 0:
        raise ValueError("need m >= 1, rho >= 0, tau >= 0")
    x = rho * tau
    if x == 0:
        return 0.0, "ii"
    options = {}
    if x >= 1 and math.sqrt(4 * x) <= m <= 2 * x:
        options["i"] = math.log(10) - m * m / (5 * x)
    if m >= 2 * x:
        options["ii"] = math.log(10) - math.log(x) - x + m * (1 + math.log(x) - math.log(m))
    if regime is not None:
        if regime not in options:
            raise NoValidRegimeError(f"m = {m} is outside regime {regime} for rho*tau = {x:g}")
        return math.exp(options[regime]), regime
    if not options:
        raise NoValidRegimeError(
            f"m = {m} is outside both regimes for rho*tau = {x:g} "
            f"(need m >= {math.sqrt(4 * x):.4g} with rho*tau >= 1)"
        )
    tag = min(options, key=options.get)
    return math.exp(options[tag]), tag


def rate_ratio(rho, m):
    """Ratio ``exp(rho/2) / 2^(m-1)`` of the structured to the standard regime-ii bound.

    Below 1 the structured approximation has the smaller bound.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    return math.exp(rho / 2 - (m - 1) * math.log(2))


def _ls_entry(m, p, gamma, weight):
    kh = p.kappa_hat
    r = _factor(kh)
    lmin, rho = p.lambda_min, p.rho
    sk = math.sqrt(kh)
    log_lyap = math.log((sk + 1) / (lmin * sk)) + m * math.log(r) if r > 0 else -math.inf
    rate = math.exp(-2 * m / sk)
    if gamma == 0:
        value = 2 * weight * math.exp(log_lyap)
        return BoundEntry(m, value, "gamma0", True, {"I2": value / 2, "rate": rate})
    if m <= gamma:
        raise ValueError(f"the incomplete-gamma term needs m > gamma (m = {m}, gamma = {gamma})")
    if rho == 0:
        # single eigenvalue: the Krylov space is exact after one step
        return BoundEntry(m, 0.0, "exact", True, {"I1": 0.0, "I2": 0.0, "rate": rate})
    a = 2 * lmin + rho
    n = math.ceil(m - gamma)
    x = a / (2 * rho) * m
    log_t1 = (-math.log(rho) + m * (1 + math.log(rho) - math.log(m))
              - (m - gamma) * math.log(a) + log_lower_incomplete_gamma(n, x))
    log_t2 = ((gamma - 0.5) * math.log(2 * rho / m) + 0.5 * math.log(math.pi / (2 * lmin))
              - 2 * m * math.sqrt(2 * lmin / (5 * rho)))
    i1_gamma = 10 * weight * math.exp(log_t1)
    i1_gauss = 10 * weight * math.exp(log_t2)
    i2 = weight * math.exp(gamma * math.log(4 * rho / (m * m)) + log_lyap)
    i1 = i1_gamma + i1_gauss
    total = 2 * (i1 + i2)
    terms = {"I1_gamma": i1_gamma, "I1_gauss": i1_gauss, "I1": i1, "I2": i2, "rate": rate}
    return BoundEntry(m, total, "split", True, terms)


def ls_bound(m, params, gamma, weight=1.0):
    """Error bound for Laplace-Stieltjes functions with ``d alpha = weight tau^(-gamma) d tau``.

    Applies to the structured Krylov approximation with ``M1 = M2``
    symmetric positive definite and ``||b1|| = 1``.

    For ``gamma = 0`` the bound is
    ``2 (sqrt(kh) + 1)/(l_min sqrt(kh)) ((sqrt(kh) - 1)/(sqrt(kh) + 1))^m``.
    For ``gamma > 0`` the ``tau`` integral is split at ``m^2/(4 rho)`` into
    ``I1 + I2`` and the total is ``2 (I1 + I2)``; ``I1`` has an
    incomplete-gamma term and a Gaussian-integral term.  The incomplete
    gamma is taken at order ``ceil(m - gamma)``.

    Parameters
    ----------
    m : int or iterable of int
    params : SpectralParams
    gamma : float
    weight : float
        Constant factor of the density (``1/sqrt(pi)`` for ``x^(-1/2)``).

    Returns
    -------
    BoundReport
        Entries carry ``I1``, ``I2`` and the asymptotic rate
        ``exp(-2m/sqrt(kh))`` in ``terms``.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    ms = [int(m)] if np.isscalar(m) else [int(k) for k in m]
    return BoundReport([_ls_entry(k, params, gamma, weight) for k in ms])


def cs_constant(params, f_tag, measure=None):
    """Constant multiplying ``2 ((sqrt(kh) - 1)/(sqrt(kh) + 1))^m`` in the Cauchy-Stieltjes bound.

    ``"inv_sqrt"`` and ``"log_ratio"`` use the closed constants
    ``2 + 4/l_min`` and ``4``.  ``"custom_integral"`` integrates
    ``(sqrt(kh_w) + 1)/((l_min - w/2) sqrt(kh_w))`` against the density of
    ``measure`` numerically.
    """
    if f_tag == "inv_sqrt":
        return 2 + 4 / params.lambda_min
    if f_tag == "log_ratio":
        return 4.0
    if f_tag != "custom_integral":
        raise ValueError(f"unknown f_tag {f_tag!r}")
    if measure is None or measure.kind != "cauchy_density":
        raise ValueError("custom_integral needs a Cauchy measure")
    lmin = params.lambda_min

    def h(w):
        sk = math.sqrt(params.kappa_hat_omega(w))
        return (sk + 1) / ((lmin - w / 2) * sk)

    c = measure.cutoff
    if measure.sqrt_endpoint:
        val, err = integrate.quad(lambda t: 2 * t * h(c - t * t) * measure.density(c - t * t),
                                  0, np.inf, limit=500)
    else:
        val, err = integrate.quad(lambda w: h(w) * measure.density(w), -np.inf, c, limit=500)
    if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1.0):
        raise ValueError("the Cauchy-Stieltjes bound integral does not converge")
    return float(val)


def cs_bound(m, params, f_tag, measure=None):
    """Cauchy-Stieltjes error bound ``2 r^m C`` with ``r = (sqrt(kh) - 1)/(sqrt(kh) + 1)``.

    ``m`` may be an integer or an iterable; see :func:`cs_constant` for ``C``.
    """
    C = cs_constant(params, f_tag, measure)
    r = _factor(params.kappa_hat)

    def one(k):
        return 2 * C * math.exp(k * math.log(r)) if r > 0 else 0.0

    if np.isscalar(m):
        return one(int(m))
    return np.array([one(int(k)) for k in m])


def asymptotic_rates(params, space="krylov", method="structured"):
    """Predicted per-step contraction factor.

    ``space="krylov"``: ``(sqrt(k) - 1)/(sqrt(k) + 1)`` with ``k = kappa``
    for the standard method and ``k = kappa_hat`` for the structured one.
    ``space="extended"``: ``(kappa^(1/4) - 1)/(kappa^(1/4) + 1)``, a
    prediction only.
    """
    if space == "extended":
        q = params.kappa ** 0.25
        return (q - 1) / (q + 1)
    if space != "krylov":
        raise ValueError(f"unknown space {space!r}")
    if method == "standard":
        return _factor(params.kappa)
    if method == "structured":
        return _factor(params.kappa_hat)
    raise ValueError(f"unknown method {method!r}")


def exp_split_bound(x1, x1m, x2, x2m):
    """``||x1|| ||x2 - x2m|| + ||x1 - x1m|| ||x2m||``.

    Bounds ``||vec(x1 x2^T) - vec(x1m x2m^T)||`` for the exponential fast
    path from the errors of its two factors.
    """
    x1, x1m, x2, x2m = (np.asarray(v).reshape(-1) for v in (x1, x1m, x2, x2m))
    return float(np.linalg.norm(x1) * np.linalg.norm(x2 - x2m)
                 + np.linalg.norm(x1 - x1m) * np.linalg.norm(x2m))


def incomplete_gamma_bound(n, x, alpha):
    """Upper bound ``(x^n / n) e^(-x) / (1 - alpha)`` on ``gamma(n, x)`` for ``0 < x <= alpha n``."""
    if not 0 < alpha < 1 or not 0 < x <= alpha * n * (1 + 1e-12):
        raise ValueError("need 0 < alpha < 1 and 0 < x <= alpha n")
    return math.exp(n * math.log(x) - math.log(n) - x - math.log(1 - alpha))
