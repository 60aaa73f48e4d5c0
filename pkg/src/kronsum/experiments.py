"""Built-in benchmark experiments and the one-off ``apply`` driver.

Every experiment returns a :class:`BenchResult` whose rows become CSV lines.
Random vectors come from ``numpy.random.default_rng(seed)`` with uniform
(0, 1) entries, so rows are reproducible given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bounds import SpectralParams, exp_split_bound, ls_bound
from .graphs import basis_timing, gen_pref_graph
from .kronfun import exp_structured, kron_exact, structured_fAb
from .krylov import standard_fAb
from .la_core import KronSumOp, tridiag
from .smallfun import EXP, INV_SQRT, SQRT, expm, frommer_phi

__all__ = ["BenchResult", "BENCHES", "run_bench", "compare_methods", "seeded_uniform",
           "convection_diffusion"]

STANDARD_COLUMNS = ["m", "standard_error", "structured_error", "standard_diff",
                    "structured_diff", "standard_time", "structured_time"]


@dataclass
class BenchResult:
    """Rows of one experiment plus the metadata written to the CSV header."""

    name: str
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)
    converged: bool = True


def seeded_uniform(n, seed):
    """Uniform (0, 1) vector from a seeded PCG64 generator."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, n)


def convection_diffusion(n, nu=100.0):
    """Central differences for ``u'' - nu u'`` on ``[0, 1]``, multiplied by ``h^2``.

    ``h = 1/(n+1)``; the stencil is ``(1 + nu h/2, -2, 1 - nu h/2)``.
    """
    h = 1.0 / (n + 1)
    return tridiag(n, 1 + nu * h / 2, -2.0, 1 - nu * h / 2)


def compare_methods(M1, b1, M2, b2, f, ms, exact=None, relative=False, standard=True,
                    tol=1e-8):
    """Run the standard and the structured method on the same checkpoints.

    Returns rows keyed by :data:`STANDARD_COLUMNS` and a convergence flag:
    the last structured difference estimate is at most ``tol``.
    """
    res = structured_fAb(M1, b1, M2, b2, f, m_max=max(ms), tol=None, ms=ms, exact=exact,
                         relative_error=relative)
    std = None
    if standard:
        b = np.kron(np.asarray(b2, float), np.asarray(b1, float))
        _, std = standard_fAb(KronSumOp(M1, M2), b, f, max(ms), ms=ms, exact=exact,
                              relative_error=relative)
    rows = []
    for e in res.history:
        s = std.at(e.m) if std is not None else None
        rows.append({
            "m": e.m,
            "standard_error": s.error if s is not None else None,
            "structured_error": e.error,
            "standard_diff": s.estimate if s is not None else None,
            "structured_diff": e.estimate,
            "standard_time": s.time if s is not None else None,
            "structured_time": e.time,
        })
    return rows, res.history[-1].estimate <= tol


def _sqrt_table(b2_kind, n=50, seed=0, m_max=50, stride=5, **_):
    M = tridiag(n, -1, 2, -1)
    b1 = np.ones(n)
    b2 = np.ones(n) if b2_kind == "ones" else seeded_uniform(n, seed)
    exact = kron_exact(M, b1, M, b2, SQRT)
    ms = list(range(stride, m_max + 1, stride))
    rows, ok = compare_methods(M, b1, M, b2, SQRT, ms, exact=exact)
    meta = {"function": "sqrt", "factors": f"tridiag(-1,2,-1) n={n}",
            "b1": "ones", "b2": b2_kind, "seed": seed, "errors": "absolute"}
    return rows, ok, meta


def bench_table_sqrt1(**kw):
    return _sqrt_table("uniform", **kw)


def bench_table_sqrt2(**kw):
    return _sqrt_table("ones", **kw)


def _frommer(n, m_max, with_errors, s=1e-3, stride=4, **_):
    M = tridiag(n, -1, 2, -1)
    b = np.ones(n)
    f = frommer_phi(s)
    exact = kron_exact(M, b, M, b, f) if with_errors else None
    ms = list(range(stride, m_max + 1, stride))
    rows, ok = compare_methods(M, b, M, b, f, ms, exact=exact, relative=True)
    meta = {"function": f"frommer(s={s:g})", "factors": f"tridiag(-1,2,-1) n={n}",
            "b1": "ones", "b2": "ones", "errors": "relative" if with_errors else "none"}
    return rows, ok, meta


def bench_frommer_50(n=50, m_max=48, **kw):
    return _frommer(n, m_max, True, **kw)


def bench_frommer_100(n=100, m_max=60, **kw):
    return _frommer(n, m_max, False, **kw)


def _exp_bench(M1, M2, label, n, seed, m_max, stride):
    b1 = np.ones(n)
    b2 = seeded_uniform(n, seed)
    exact = kron_exact(M1, b1, M2, b2, EXP)
    x1 = expm(M1.toarray()) @ b1
    x2 = expm(M2.toarray()) @ b2
    ms = list(range(stride, m_max + 1, stride))
    res = exp_structured(M1, b1, M2, b2, m_max=m_max, tol=None, ms=ms, exact=exact,
                         keep_iterates=True)
    _, std = standard_fAb(KronSumOp(M1, M2), np.kron(b2, b1), EXP, m_max, ms=ms, exact=exact)
    rows = []
    for e in res.history:
        x1m, x2m = e.iterate.left[:, 0], e.iterate.right[:, 0]
        s = std.at(e.m)
        rows.append({
            "m": e.m,
            "standard_error": s.error,
            "structured_error": e.error,
            "x1_error": float(np.linalg.norm(x1 - x1m)),
            "x2_error": float(np.linalg.norm(x2 - x2m)),
            "split_bound": exp_split_bound(x1, x1m, x2, x2m),
            "standard_diff": s.estimate,
            "structured_diff": e.estimate,
            "standard_time": s.time,
            "structured_time": e.time,
        })
    meta = {"function": "exp", "factors": label, "b1": "ones", "b2": "uniform(0,1)",
            "seed": seed, "errors": "absolute"}
    return rows, res.history[-1].estimate <= 1e-8, meta


EXP_COLUMNS = ["m", "standard_error", "structured_error", "x1_error", "x2_error",
               "split_bound", "standard_diff", "structured_diff", "standard_time",
               "structured_time"]


def bench_exp_sym(n=70, seed=0, m_max=40, stride=2, **_):
    M1 = tridiag(n, 1, -2, 1)
    M2 = tridiag(n, 2, -3, 2)
    return _exp_bench(M1, M2, f"tridiag(1,-2,1) (+) tridiag(2,-3,2) n={n}", n, seed,
                      m_max, stride)


def bench_exp_nonsym(n=70, seed=0, m_max=40, stride=2, **_):
    M1 = convection_diffusion(n)
    M2 = tridiag(n, 1, -2, 1)
    return _exp_bench(M1, M2, f"h^2 (u_xx - 100 u_x) (+) tridiag(1,-2,1) n={n}", n, seed,
                      m_max, stride)


def bench_graph_timing(n=2000, m=30, d=2, seed=0, repeat=1, **_):
    G = gen_pref_graph(n, d, seed)
    t = basis_timing(G, m, repeat=repeat)
    rows = [{"n": n, "m": m, "edges": G.num_edges, "time_factor": t["time_factor"],
             "time_kron": t["time_kron"], "ratio": t["ratio"]}]
    meta = {"graph": f"preferential attachment n={n} d={d}", "seed": seed}
    return rows, True, meta


def ls_diag_problem(n=500, lo=10.0, hi=1000.0):
    lam = np.logspace(math.log10(lo), math.log10(hi), n)
    return sp.diags(lam).tocsr(), np.ones(n) / math.sqrt(n), lam


def bench_ls_diag_500(n=500, m_max=80, stride=2, **_):
    M, b, lam = ls_diag_problem(n)
    exact = kron_exact(M, b, M, b, INV_SQRT)
    ms = list(range(stride, m_max + 1, stride))
    rows, ok = compare_methods(M, b, M, b, INV_SQRT, ms, exact=exact, standard=False)
    params = SpectralParams(float(lam.min()), float(lam.max()))
    # x^(-1/2) = int exp(-tau x) tau^(-1/2) d tau / sqrt(pi)
    report = ls_bound(ms, params, gamma=0.5, weight=1 / math.sqrt(math.pi))
    out = []
    for r, bnd in zip(rows, report):
        out.append({"m": r["m"], "structured_error": r["structured_error"],
                    "ls_bound": bnd.value, "I1": bnd.terms["I1"], "I2": bnd.terms["I2"],
                    "rate": bnd.terms["rate"], "structured_diff": r["structured_diff"],
                    "structured_time": r["structured_time"]})
    meta = {"function": "invsqrt", "factors": f"diag(logspace(10,1000)) n={n}",
            "b1": "ones/sqrt(n)", "b2": "ones/sqrt(n)", "gamma": 0.5,
            "kappa_hat": params.kappa_hat}
    return out, ok, meta


LS_COLUMNS = ["m", "structured_error", "ls_bound", "I1", "I2", "rate", "structured_diff",
              "structured_time"]

BENCHES = {
    "table-sqrt1": (bench_table_sqrt1, STANDARD_COLUMNS),
    "table-sqrt2": (bench_table_sqrt2, STANDARD_COLUMNS),
    "frommer-50": (bench_frommer_50, STANDARD_COLUMNS),
    "frommer-100": (bench_frommer_100, STANDARD_COLUMNS),
    "exp-sym": (bench_exp_sym, EXP_COLUMNS),
    "exp-nonsym": (bench_exp_nonsym, EXP_COLUMNS),
    "graph-timing": (bench_graph_timing,
                     ["n", "m", "edges", "time_factor", "time_kron", "ratio"]),
    "ls-diag-500": (bench_ls_diag_500, LS_COLUMNS),
}


def run_bench(name, **options):
    """Run a built-in experiment; ``options`` override its defaults (n, seed, m_max, ...)."""
    if name not in BENCHES:
        raise KeyError(f"unknown experiment {name!r}; choose from {', '.join(BENCHES)}")
    fn, columns = BENCHES[name]
    rows, ok, meta = fn(**{k: v for k, v in options.items() if v is not None})
    meta = {"experiment": name, **meta, **{k: v for k, v in options.items() if v is not None}}
    return BenchResult(name, columns, rows, meta, ok)
