import math
from functools import reduce

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from kronsum.errors import DimensionError, DomainError, MemoryCapError
from kronsum.kronfun import (
    FactoredVector,
    diff_estimate,
    eval_projected,
    exp_structured,
    kron_exact,
    multiterm_structured,
    sincos_structured,
    structured_fAb,
    structured_fAb_lowrank,
)
from kronsum.la_core import LowRankRHS, kron_sum_dense, tridiag, vec
from kronsum.smallfun import COS, EXP, INVERSE, SIN, SQRT, dense_fAb, expm, frommer_phi

from conftest import random_spd, random_sym


def _rand_fv(r, n1, n2, k1, k2):
    return FactoredVector(r.standard_normal((n1, k1)), r.standard_normal((k1, k2)),
                          r.standard_normal((n2, k2)))


def test_factored_vector_basics(rng):
    x = _rand_fv(rng, 5, 4, 2, 3)
    assert x.shape == (5, 4) and x.size == 20
    X = x.matrix()
    assert np.allclose(x.materialize(), vec(X))
    assert x.entry(3, 2) == pytest.approx(X[3, 2])
    y = _rand_fv(rng, 5, 4, 1, 1)
    assert np.allclose((x + y).materialize(), x.materialize() + y.materialize())
    assert np.allclose((x - y).materialize(), x.materialize() - y.materialize())
    assert np.allclose((2.5 * x).materialize(), 2.5 * x.materialize())
    with pytest.raises(DimensionError):
        FactoredVector(np.ones((3, 2)), np.ones((1, 1)), np.ones((4, 1)))
    with pytest.raises(DimensionError):
        x + _rand_fv(rng, 4, 4, 1, 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), k1=st.integers(1, 4), k2=st.integers(1, 4))
def test_norm_matches_materialized(seed, k1, k2):
    r = np.random.default_rng(seed)
    x = _rand_fv(r, 9, 7, k1, k2)
    ref = np.linalg.norm(x.materialize())
    assert x.norm() == pytest.approx(ref, rel=1e-12)


def test_diff_estimate(rng):
    x = _rand_fv(rng, 6, 5, 2, 2)
    assert diff_estimate(x, x) == 0.0
    assert diff_estimate(x, None) == 1.0
    y = _rand_fv(rng, 6, 5, 3, 1)
    ref = np.linalg.norm(x.materialize() - y.materialize()) / np.linalg.norm(x.materialize())
    assert diff_estimate(x, y) == pytest.approx(ref, rel=1e-12)
    # nested bases: previous iterate uses leading columns of the current ones
    prev = FactoredVector(x.left[:, :1], rng.standard_normal((1, 1)), x.right[:, :1])
    ref = (np.linalg.norm(x.materialize() - prev.materialize())
           / np.linalg.norm(x.materialize()))
    assert diff_estimate(x, prev) == pytest.approx(ref, rel=1e-12)


def test_eval_projected_diagonal():
    l1, l2 = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0])
    b1, b2 = np.array([1.0, -1.0, 2.0]), np.array([0.5, 3.0])
    Z, route = eval_projected(np.diag(l1), np.diag(l2), b1, b2, SQRT)
    assert route == "diag"
    assert np.allclose(Z, np.sqrt(l1[:, None] + l2[None, :]) * np.outer(b1, b2), rtol=1e-14)


@pytest.mark.parametrize("f", [EXP, SQRT, INVERSE, SIN, COS])
def test_eval_projected_paths_agree(f, rng):
    T1, T2 = random_spd(rng, 8), random_spd(rng, 8)
    b1, b2 = rng.standard_normal(8), rng.standard_normal(8)
    Zd, _ = eval_projected(T1, T2, b1, b2, f, path="diag")
    Ze, route = eval_projected(T1, T2, b1, b2, f, path="explicit")
    assert route == "explicit"
    assert np.abs(Zd - Ze).max() <= 1e-11 * max(np.abs(Ze).max(), 1)


def test_eval_projected_exp_matches_fast_path(rng):
    T1, T2 = random_sym(rng, 7), random_sym(rng, 7)
    b1, b2 = rng.standard_normal(7), rng.standard_normal(7)
    Z, _ = eval_projected(T1, T2, b1, b2, EXP)
    fast = np.outer(expm(T1) @ b1, expm(T2) @ b2)
    assert np.abs(Z - fast).max() <= 1e-12 * np.abs(fast).max()


def test_sign_normalization_fails_loudly():
    M = tridiag(10, 1, -2, 1)
    with pytest.raises(DomainError):
        structured_fAb(M, np.ones(10), M, np.ones(10), SQRT, m_max=4)


@pytest.mark.parametrize("f", [EXP, SQRT, INVERSE, SIN, COS])
def test_exact_at_full_dimension(f):
    r = np.random.default_rng(7)
    n = 10
    M1, M2 = random_spd(r, n), random_spd(r, n)
    b1, b2 = r.standard_normal(n), r.standard_normal(n)
    ref = dense_fAb(kron_sum_dense(M1, M2), np.kron(b2, b1), f)
    for path in ("diag", "explicit"):
        res = structured_fAb(M1, b1, M2, b2, f, m_max=n, tol=None, ms=[n], path=path)
        x = res.approx.materialize()
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_kron_exact_matches_dense(rng):
    M1 = random_spd(rng, 5)
    M2 = random_spd(rng, 4) + 0.2 * rng.standard_normal((4, 4))
    b1, b2 = rng.standard_normal(5), rng.standard_normal(4)
    for f in (EXP, EXP.negated(), SQRT):
        ref = dense_fAb(kron_sum_dense(M1, M2), np.kron(b2, b1), f)
        assert np.allclose(kron_exact(M1, b1, M2, b2, f), ref, rtol=1e-10)


def test_rectangular_problem(rng):
    M1, M2 = random_spd(rng, 9), random_spd(rng, 5)
    b1, b2 = rng.standard_normal(9), rng.standard_normal(5)
    res = structured_fAb(M1, b1, M2, b2, SQRT, m_max=9, tol=None)
    ref = kron_exact(M1, b1, M2, b2, SQRT)
    assert np.linalg.norm(res.approx.materialize() - ref) <= 1e-10 * np.linalg.norm(ref)


def test_extended_space(rng):
    n = 60
    M = tridiag(n, -1, 2, -1)
    b = np.ones(n)
    ref = kron_exact(M, b, M, b, SQRT)
    res = structured_fAb(M, b, M, b, SQRT, m_max=16, tol=None, space="extended",
                         exact=ref, stride=4)
    errs = res.history.errors
    assert errs[-1] < errs[0] and errs[-1] <= 1e-3 * np.linalg.norm(ref)


def test_history_and_tolerance():
    n = 50
    M = tridiag(n, -1, 2, -1)
    b = np.ones(n)
    res = structured_fAb(M, b, M, b, frommer_phi(1e-3), m_max=48, tol=1e-6)
    assert res.converged and res.history.estimates[-1] <= 1e-6
    assert res.history.ms == sorted(set(res.history.ms))
    assert res.history.estimates[0] == 1.0


def test_lowrank_rhs(rng):
    M1, M2 = random_spd(rng, 8), random_spd(rng, 6)
    rhs = LowRankRHS(rng.standard_normal((8, 2)), rng.standard_normal((6, 2)))
    x = structured_fAb_lowrank(M1, M2, rhs, SQRT, m_max=8, tol=None)
    ref = dense_fAb(kron_sum_dense(M1, M2), rhs.full(), SQRT)
    assert np.linalg.norm(x.materialize() - ref) <= 1e-10 * np.linalg.norm(ref)


def test_exp_structured_trivial():
    b1, b2 = np.array([1.0, 2.0, 3.0]), np.array([4.0, -1.0])
    Z1, Z2 = sp.csr_matrix((3, 3)), sp.csr_matrix((2, 2))
    res = exp_structured(Z1, b1, Z2, b2, m_max=3, tol=None)
    assert np.allclose(res.approx.materialize(), vec(np.outer(b1, b2)))
    assert res.path == "exp-fast"
    res = exp_structured(np.array([[0.3]]), [2.0], np.array([[-1.1]]), [5.0], m_max=1)
    assert res.approx.materialize()[0] == pytest.approx(math.exp(0.3 - 1.1) * 10, rel=1e-14)


def test_exp_structured_rank_one_and_negate(rng):
    M1, M2 = random_spd(rng, 7), random_spd(rng, 5)
    b1, b2 = rng.standard_normal(7), rng.standard_normal(5)
    for neg in (False, True):
        res = exp_structured(M1, b1, M2, b2, m_max=7, tol=None, negate=neg)
        assert res.approx.mid.shape == (1, 1)
        f = EXP.negated() if neg else EXP
        ref = dense_fAb(kron_sum_dense(M1, M2), np.kron(b2, b1), f)
        assert np.allclose(res.approx.materialize(), ref, rtol=1e-10)
        assert np.allclose(res.extras["x1"], dense_fAb(M1, b1, f), rtol=1e-10)


def test_sincos(rng):
    b1, b2 = rng.standard_normal(4), rng.standard_normal(3)
    zs, zc = sincos_structured(np.zeros((4, 4)), b1, np.zeros((3, 3)), b2, m_max=3)
    assert np.allclose(zs.approx.materialize(), 0)
    assert np.allclose(zc.approx.materialize(), vec(np.outer(b1, b2)))
    M1, M2 = random_sym(rng, 6), random_sym(rng, 5)
    b1, b2 = rng.standard_normal(6), rng.standard_normal(5)
    A = kron_sum_dense(M1, M2)
    for which, f in (("sin", SIN), ("cos", COS)):
        res = sincos_structured(M1, b1, M2, b2, m_max=6, which=which, tol=None)
        assert res.approx.mid.shape == (2, 2)
        ref = dense_fAb(A, np.kron(b2, b1), f)
        assert np.allclose(res.approx.materialize(), ref, atol=1e-11)
    with pytest.raises(ValueError):
        sincos_structured(M1, b1, M2, b2, which="tan")


def test_multiterm_trivial():
    fs = [(np.array([[a]]), [1.0]) for a in (0.1, -0.4, 0.7)]
    res = multiterm_structured(fs, EXP, m_max=1)
    assert res.approx.materialize()[0] == pytest.approx(math.exp(0.4), rel=1e-14)
    bs = [np.array([1.0, 2.0]), np.array([3.0, -1.0, 0.5]), np.array([2.0, 4.0])]
    fs = [(np.zeros((len(b), len(b))), b) for b in bs]
    for f in (EXP, COS):
        res = multiterm_structured(fs, f, m_max=3, tol=None)
        assert np.allclose(res.approx.materialize(), reduce(np.kron, bs), atol=1e-13)


def _dense_sum(mats):
    n = [M.shape[0] for M in mats]
    A = 0
    for k, M in enumerate(mats):
        left = np.eye(int(np.prod(n[:k])))
        right = np.eye(int(np.prod(n[k + 1:])))
        A = A + np.kron(np.kron(left, M), right)
    return A


@pytest.mark.parametrize("f", [EXP, SQRT])
def test_multiterm_dense_oracle(f):
    r = np.random.default_rng(3)
    mats = [random_spd(r, 5) for _ in range(3)]
    bs = [r.standard_normal(5) for _ in range(3)]
    ref = dense_fAb(_dense_sum(mats), reduce(np.kron, bs), f)
    res = multiterm_structured(list(zip(mats, bs)), f, m_max=25, tol=None)
    assert np.linalg.norm(res.approx.materialize() - ref) <= 1e-8 * np.linalg.norm(ref)


def test_multiterm_memory_cap():
    fs = [(sp.eye(100), np.ones(100))] * 3
    with pytest.raises(MemoryCapError):
        multiterm_structured(fs, SQRT, m_max=10, memory_cap=1e4)
