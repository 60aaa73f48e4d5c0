import math

import numpy as np
import pytest

from kronsum.errors import DefectiveMatrixError, DomainError
from kronsum.smallfun import (
    COS,
    EXP,
    INV_SQRT,
    INVERSE,
    LOG_RATIO,
    SIN,
    SQRT,
    ScalarFunction,
    custom,
    dense_fAb,
    eigen_general,
    expm,
    frommer_phi,
    function_by_name,
    funm_dense,
    funm_sym,
    log_lower_incomplete_gamma,
    lower_incomplete_gamma,
)

from conftest import random_spd, random_sym


def test_scalar_values():
    assert EXP(0.0) == 1.0
    assert SQRT(4.0) == 2.0
    assert INV_SQRT(4.0) == 0.5
    assert INVERSE(4.0) == 0.25
    assert LOG_RATIO(1.0) == pytest.approx(math.log(2), rel=1e-15)
    assert SIN(0.0) == 0.0 and COS(0.0) == 1.0
    assert EXP.negated()(1.0) == pytest.approx(math.exp(-1))


def test_frommer_small_argument_accuracy():
    f = frommer_phi(1e-3)
    z = 1e-6
    exact = math.expm1(1e-3 * math.sqrt(z)) / z
    assert f(z) == pytest.approx(exact, rel=1e-14)
    assert f(4.0) == pytest.approx((math.exp(2e-3) - 1) / 4, rel=1e-13)
    with pytest.raises(ValueError):
        frommer_phi(0.0)


def test_function_by_name():
    assert function_by_name("sqrt") == SQRT
    assert function_by_name("-exp") == EXP.negated()
    assert function_by_name("frommer:1e-3").param == 1e-3
    assert function_by_name("inv_sqrt") == INV_SQRT
    with pytest.raises(ValueError):
        function_by_name("nope")


def test_domain_checks():
    with pytest.raises(DomainError, match="-1"):
        SQRT.check_domain([2.0, -1.0])
    with pytest.raises(DomainError):
        INVERSE.check_domain([0.0])
    EXP.check_domain([-5.0])
    with pytest.raises(DomainError):
        funm_sym(np.diag([1.0, -2.0]), SQRT)


def test_funm_sym_examples():
    assert np.array_equal(funm_sym(np.zeros((3, 3)), EXP), np.eye(3))
    assert np.allclose(funm_sym(np.diag([4.0, 9.0]), SQRT), np.diag([2.0, 3.0]), atol=1e-15)


def test_funm_sym_sqrt_squares_back(rng):
    T = random_spd(rng, 6)
    R = funm_sym(T, SQRT)
    assert np.allclose(R @ R, T, atol=1e-13)


def test_expm_examples():
    assert np.array_equal(expm(np.zeros((2, 2))), np.eye(2))
    assert np.allclose(expm([[0.0, 1.0], [0.0, 0.0]]), [[1, 1], [0, 1]], atol=1e-15)
    assert np.allclose(expm(np.diag([1.0, 2.0])), np.diag([math.e, math.e**2]), rtol=1e-14)
    with pytest.raises(OverflowError):
        expm(np.array([[1e4]]))


def test_expm_nonsymmetric_matches_eigen(rng):
    T = rng.standard_normal((6, 6))
    lam, X = np.linalg.eig(T)
    ref = (X * np.exp(lam)) @ np.linalg.inv(X)
    assert np.allclose(expm(T), ref.real, rtol=1e-11, atol=1e-12)


def test_eigen_general():
    d = eigen_general(random_sym(np.random.default_rng(0), 5))
    assert d.condition <= 1 + 1e-10 and not d.unsafe
    rot = eigen_general(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert np.allclose(np.sort_complex(rot.values), [-1j, 1j])
    with pytest.raises(DefectiveMatrixError):
        eigen_general(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_eigen_reconstruction(rng):
    T = rng.standard_normal((6, 6))
    d = eigen_general(T)
    err = np.abs(d.reconstruct() - T).max()
    assert err <= 1e-10 * d.condition * np.abs(T).max()


@pytest.mark.parametrize("f", [EXP, SIN, COS, SQRT, INVERSE, INV_SQRT, LOG_RATIO])
def test_funm_dense_nonsymmetric(f, rng):
    T = random_spd(rng, 5, shift=3.0) + 0.1 * rng.standard_normal((5, 5))
    lam, X = np.linalg.eig(T)
    ref = ((X * f(lam.astype(complex))) @ np.linalg.inv(X)).real
    assert np.allclose(funm_dense(T, f), ref, rtol=1e-10, atol=1e-12)


def test_dense_fab_custom():
    one = custom(lambda z: np.ones_like(z))
    b = np.arange(4.0)
    assert np.allclose(dense_fAb(np.diag([1.0, 2, 3, 4]), b, one), b)
    with pytest.raises(ValueError):
        ScalarFunction("custom")


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_incomplete_gamma_order_one(x):
    assert lower_incomplete_gamma(1, x) == pytest.approx(1 - math.exp(-x), rel=1e-12)


def test_incomplete_gamma_values():
    assert lower_incomplete_gamma(2, 1) == pytest.approx(1 - 2 / math.e, rel=1e-12)
    for n in range(1, 8):
        assert lower_incomplete_gamma(n, 200.0) == pytest.approx(math.factorial(n - 1), rel=1e-12)
    assert log_lower_incomplete_gamma(3, 0.0) == -math.inf
    # deep underflow of the regularized value
    assert np.isfinite(log_lower_incomplete_gamma(400, 1e-3))


@pytest.mark.parametrize("n", range(5, 51, 5))
@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_incomplete_gamma_bound(n, alpha):
    x = alpha * n
    lhs = log_lower_incomplete_gamma(n, x)
    rhs = n * math.log(x) - math.log(n) - x - math.log(1 - alpha)
    assert lhs <= rhs + 1e-12
