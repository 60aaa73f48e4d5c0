import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from kronsum.errors import DimensionError, MemoryCapError, SingularEquationError
from kronsum.kronfun import kron_exact
from kronsum.krylov import (
    ConvHistory,
    HistoryEntry,
    arnoldi,
    checkpoints,
    direct_solver,
    extended_krylov,
    krylov_basis,
    lanczos,
    standard_fAb,
)
from kronsum.la_core import KronSumOp, kron_sum_dense, tridiag
from kronsum.smallfun import EXP, INV_SQRT, SQRT, custom, dense_fAb

from conftest import random_spd


def _check_relation(A, B, tol=1e-10):
    V = B.basis
    assert np.abs(V.T @ V - np.eye(B.m)).max() <= tol
    R = A @ V - V @ B.H
    if B.next_vector is not None:
        R = R - B.h * np.outer(B.next_vector, np.eye(B.m)[-1])
    assert np.abs(R).max() <= tol * np.abs(A).max()


def test_arnoldi_relation(rng):
    A = rng.standard_normal((30, 30))
    B = arnoldi(A, rng.standard_normal(30), 12)
    assert B.m == 12 and not B.breakdown
    _check_relation(A, B)


def test_lanczos_relation_and_tridiagonal(rng):
    A = random_spd(rng, 40)
    B = lanczos(A, rng.standard_normal(40), 15)
    _check_relation(A, B)
    H = B.H
    assert np.abs(np.triu(H, 2)).max() == 0 and np.allclose(H, H.T, atol=1e-12)
    Ba = arnoldi(A, B.V[:, 0], 15)
    assert np.abs(np.triu(Ba.H, 2)).max() <= 1e-12 * np.abs(A).max()


def test_lanczos_matches_arnoldi_up_to_sign(rng):
    A = random_spd(rng, 25)
    b = rng.standard_normal(25)
    L, R = lanczos(A, b, 10), arnoldi(A, b, 10)
    signs = np.sign(np.sum(L.basis * R.basis, axis=0))
    assert np.abs(L.basis - R.basis * signs).max() <= 1e-10


def test_eigenvector_breakdown():
    A = np.diag([1.0, 2.0, 3.0])
    for build in (arnoldi, lanczos):
        B = build(A, np.array([0.0, 2.0, 0.0]), 3)
        assert B.breakdown and B.m == 1
        assert np.allclose(B.H, [[2.0]])


def test_lanczos_without_reorth_flags_loss():
    lam = np.geomspace(1e-3, 1e3, 400)
    A = sp.diags(lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        B = lanczos(A, np.ones(400), 120, reorth="none")
    assert B.orthogonality_loss


def test_bad_inputs():
    with pytest.raises(ValueError):
        arnoldi(np.eye(3), np.zeros(3), 2)
    with pytest.raises(DimensionError):
        lanczos(np.eye(3), np.ones(4), 2)
    with pytest.raises(SingularEquationError):
        direct_solver(sp.csc_matrix((3, 3)))


def test_extended_first_block_contains_both_directions(rng):
    A = random_spd(rng, 20)
    b = rng.standard_normal(20)
    B = extended_krylov(A, direct_solver(A), b, 1)
    V = B.basis
    for w in (b, np.linalg.solve(A, b)):
        assert np.linalg.norm(w - V @ (V.T @ w)) <= 1e-12 * np.linalg.norm(w)


def test_extended_full_space_is_exact(rng):
    A = random_spd(rng, 12)
    b = rng.standard_normal(12)
    B = extended_krylov(A, direct_solver(A), b, 6)
    x = B.basis @ (dense_fAb(B.H, B.rhs, INV_SQRT))
    ref = dense_fAb(A, b, INV_SQRT)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_extended_rate_fourth_root():
    # log-spaced spectrum: no superlinear speed-up from eigenvalue clustering
    kappa = 1e3
    lam = np.geomspace(1.0, kappa, 500)
    A = sp.diags(lam).tocsc()
    b = np.random.default_rng(0).uniform(size=500)
    ref = b / np.sqrt(lam)
    solve = direct_solver(A)
    blocks = list(range(2, 13))
    errs = []
    for k in blocks:
        B = extended_krylov(A, solve, b, k)
        errs.append(np.linalg.norm(ref - B.basis @ dense_fAb(B.H, B.rhs, INV_SQRT)))
    slope = np.polyfit(blocks, np.log(errs), 1)[0]
    q = kappa ** 0.25
    predicted = 2 * math.log((q - 1) / (q + 1))
    assert 2 * predicted <= slope <= predicted / 2


def test_shift_invariance(rng):
    A = random_spd(rng, 30)
    b = rng.standard_normal(30)
    V1 = krylov_basis(A, b, 8).basis
    V2 = krylov_basis(A - 3.7 * np.eye(30), b, 8).basis
    # sine of the largest principal angle
    assert np.linalg.norm(V2 - V1 @ (V1.T @ V2), 2) <= 1e-8


def test_checkpoints_and_history():
    assert checkpoints(10, 4) == [4, 8, 10]
    assert checkpoints(8, 4) == [4, 8]
    assert checkpoints(99, 4, ms=[3, 1, 3, 0]) == [1, 3]
    h = ConvHistory()
    h.append(HistoryEntry(2, 1.0, 0.0))
    with pytest.raises(ValueError):
        h.append(HistoryEntry(2, 0.5, 0.0))
    assert h.at(2).estimate == 1.0


def test_standard_constant_function_returns_b(rng):
    M = random_spd(rng, 4)
    b = rng.standard_normal(16)
    x, _ = standard_fAb(KronSumOp(M, M), b, custom(lambda z: np.ones_like(z)), 3)
    assert np.allclose(x, b, atol=1e-13)


def test_standard_full_dimension_exact(rng):
    M1, M2 = random_spd(rng, 6), random_spd(rng, 6)
    b = rng.standard_normal(36)
    x, hist = standard_fAb(KronSumOp(M1, M2), b, EXP, 36, stride=36)
    ref = dense_fAb(kron_sum_dense(M1, M2), b, EXP)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_standard_table_value():
    M = tridiag(50, -1, 2, -1)
    b = np.ones(50)
    exact = kron_exact(M, b, M, b, SQRT)
    _, hist = standard_fAb(KronSumOp(M, M), np.ones(2500), SQRT, 20, ms=[20], exact=exact)
    assert hist.at(20).error == pytest.approx(1.4240e-01, rel=0.005)


def test_standard_memory_cap():
    op = KronSumOp(sp.eye(100), sp.eye(100))
    with pytest.raises(MemoryCapError, match="structured"):
        standard_fAb(op, np.ones(10000), EXP, 50, memory_cap=1e5)
