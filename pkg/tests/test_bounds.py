import math

import numpy as np
import pytest
import scipy.sparse as sp

from kronsum.bounds import (
    SpectralParams,
    asymptotic_rates,
    cs_bound,
    cs_constant,
    exp_split_bound,
    hl_exp_bound,
    incomplete_gamma_bound,
    ls_bound,
    rate_ratio,
)
from kronsum.errors import NoValidRegimeError
from kronsum.kronfun import kron_exact, structured_fAb
from kronsum.krylov import lanczos
from kronsum.la_core import tridiag
from kronsum.smallfun import EXP, INV_SQRT, expm, lower_incomplete_gamma
from kronsum.stieltjes import cauchy_inv_sqrt

ROUNDING_FLOOR = 1e-14


def test_spectral_params():
    p = SpectralParams(10.0, 1000.0)
    assert p.kappa_hat == pytest.approx(50.5)
    assert p.kappa == 100.0 and p.rho == pytest.approx(247.5)
    assert p.kappa_hat <= p.kappa
    assert p.kappa_hat_omega(0.0) == p.kappa_hat
    with pytest.raises(ValueError):
        SpectralParams(0.0, 1.0)
    assert SpectralParams.from_eigenvalues([3.0, 1.0, 2.0]) == SpectralParams(1.0, 3.0)


def test_hl_examples():
    v, tag = hl_exp_bound(4, 4.0, 1.0)
    assert v == pytest.approx(10 * math.exp(-0.8), rel=1e-14) and tag == "i"
    v, tag = hl_exp_bound(2, 1.0, 1.0, regime="ii")
    assert v == pytest.approx(10 / math.e * (math.e / 2) ** 2, rel=1e-14)
    assert v == pytest.approx(6.7957, abs=1e-4)
    v, tag = hl_exp_bound(2, 1.0, 1.0)
    assert v <= 6.7957 and tag in ("i", "ii")
    with pytest.raises(NoValidRegimeError):
        hl_exp_bound(1, 1.0, 1.0)
    with pytest.raises(NoValidRegimeError):
        hl_exp_bound(30, 4.0, 1.0, regime="i")


def test_hl_log_space_no_overflow():
    v, tag = hl_exp_bound(2000, 100.0, 5.0)
    assert tag == "ii" and v == 0.0 or np.isfinite(v)


@pytest.mark.parametrize("tau", [2.0, 5.0, 12.0])
def test_hl_envelope(tau):
    n = 300
    A = tridiag(n, -1, 2, -1)
    rho = 1.0  # spectrum in (0, 4)
    v = np.random.default_rng(0).uniform(size=n)
    v /= np.linalg.norm(v)
    ref = expm(-tau * A.toarray()) @ v
    B = lanczos(A, v, 40)
    checked = 0
    for m in range(1, 41):
        try:
            bound, _ = hl_exp_bound(m, rho, tau)
        except NoValidRegimeError:
            continue
        s = B.leading(m)
        x = s.basis @ (expm(-tau * s.H) @ s.rhs)
        # unit-norm v: errors bottom out near 1e-15 while the bound keeps falling
        assert np.linalg.norm(ref - x) <= bound + ROUNDING_FLOOR
        checked += 1
    assert checked > 20


def test_rate_ratio():
    assert rate_ratio(0.0, 1) == 1.0
    assert rate_ratio(2.0, 3) == pytest.approx(math.e / 4)
    rho = 2 * 3 * math.log(2)  # boundary at m = 4
    assert rate_ratio(rho, 4) == pytest.approx(1.0)
    assert rate_ratio(rho * 0.99, 4) < 1 < rate_ratio(rho * 1.01, 4)


def test_ls_bound_gamma_zero_spot_value():
    p = SpectralParams(10.0, 1000.0)
    kh = 50.5
    r = (math.sqrt(kh) - 1) / (math.sqrt(kh) + 1)
    want = 2 * (math.sqrt(kh) + 1) / (10 * math.sqrt(kh)) * r**12
    assert ls_bound(12, p, 0.0)[0].value == pytest.approx(want, rel=1e-13)


def test_ls_bound_terms_and_errors():
    p = SpectralParams(10.0, 1000.0)
    rep = ls_bound([10, 20, 40], p, 0.5)
    assert len(rep) == 3 and list(rep.ms) == [10, 20, 40]
    for e in rep:
        assert e.value == pytest.approx(2 * (e.terms["I1"] + e.terms["I2"]))
        assert e.value >= 0 and e.terms["rate"] == pytest.approx(math.exp(-2 * e.m / math.sqrt(50.5)))
    with pytest.raises(ValueError):
        ls_bound(0, p, 0.5)
    with pytest.raises(ValueError):
        ls_bound(5, p, -1.0)


def test_ls_bound_asymptotic_slope():
    p = SpectralParams(10.0, 1000.0)
    ms = np.arange(200, 401, 20)
    vals = ls_bound(ms, p, 0.5).values
    assert np.all(np.diff(vals) < 0)
    slope = np.polyfit(ms, np.log(vals), 1)[0]
    target = -2 / math.sqrt(p.kappa_hat)
    assert target * 2 <= slope <= target / 2


def test_cs_constants():
    assert cs_constant(SpectralParams(2.0, 9.0), "inv_sqrt") == 4.0
    assert cs_constant(SpectralParams(2.0, 9.0), "log_ratio") == 4.0
    with pytest.raises(ValueError):
        cs_constant(SpectralParams(2.0, 9.0), "bogus")


@pytest.mark.parametrize("lmin", [0.1, 1.0, 10.0])
def test_cs_custom_constant_below_closed(lmin):
    p = SpectralParams(lmin, 100 * lmin)
    custom = cs_constant(p, "custom_integral", cauchy_inv_sqrt())
    assert 0 < custom <= cs_constant(p, "inv_sqrt")


def test_cs_bound_envelope():
    n = 60
    lam = np.geomspace(1.0, 50.0, n)
    M = sp.diags(lam).tocsr()
    b = np.ones(n) / math.sqrt(n)
    exact = kron_exact(M, b, M, b, INV_SQRT)
    res = structured_fAb(M, b, M, b, INV_SQRT, m_max=30, stride=2, tol=None, exact=exact)
    p = SpectralParams(lam[0], lam[-1])
    bounds = cs_bound(res.history.ms, p, "custom_integral", cauchy_inv_sqrt())
    assert np.all(np.asarray(res.history.errors) <= bounds)
    assert cs_bound(4, p, "inv_sqrt") == pytest.approx(bounds[1] / cs_constant(
        p, "custom_integral", cauchy_inv_sqrt()) * (2 + 4 / lam[0]))


def test_asymptotic_rates():
    p = SpectralParams(1.0, 100.0)
    assert asymptotic_rates(p, method="standard") == pytest.approx(9 / 11)
    assert asymptotic_rates(p) == pytest.approx((math.sqrt(50.5) - 1) / (math.sqrt(50.5) + 1))
    assert asymptotic_rates(p) < asymptotic_rates(p, method="standard")
    assert asymptotic_rates(p, "extended") == pytest.approx(
        (math.sqrt(10) - 1) / (math.sqrt(10) + 1))
    with pytest.raises(ValueError):
        asymptotic_rates(p, "rational")


def test_exp_split_bound(rng):
    x1, x2 = rng.standard_normal(5), rng.standard_normal(4)
    y1, y2 = x1 + 1e-3 * rng.standard_normal(5), x2 + 1e-3 * rng.standard_normal(4)
    err = np.linalg.norm(np.kron(x2, x1) - np.kron(y2, y1))
    assert err <= exp_split_bound(x1, y1, x2, y2)
    assert exp_split_bound(x1, x1, x2, x2) == 0.0


@pytest.mark.parametrize("n", range(5, 51, 3))
def test_incomplete_gamma_bound(n):
    for alpha in np.arange(1, 10) / 10:
        assert lower_incomplete_gamma(n, alpha * n) <= incomplete_gamma_bound(n, alpha * n, alpha)
    with pytest.raises(ValueError):
        incomplete_gamma_bound(5, 10.0, 0.5)
