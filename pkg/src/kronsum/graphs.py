"""Preferential-attachment graphs and total communicability of Cartesian products.

The adjacency matrix of the Cartesian product ``G1 x G2`` is the Kronecker
sum of the factor adjacencies, so ``exp(A) 1`` for the product is the
outer product of the two factor vectors ``exp(A_i) 1``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .kronfun import exp_structured
from .krylov import lanczos
from .la_core import KronSumOp

__all__ = [
    "Graph",
    "gen_pref_graph",
    "adjacency",
    "total_communicability",
    "basis_timing",
]


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    ``edges`` is a ``(k, 2)`` integer array with ``u < v`` per row, sorted
    lexicographically; self-loops and duplicates are rejected.
    """

    n: int
    edges: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if E.size and (E.min() < 0 or E.max() >= self.n):
            raise ValueError("edge endpoint outside 0..n-1")
        if np.any(E[:, 0] == E[:, 1]):
            raise ValueError("self-loops are not allowed")
        E = np.sort(E, axis=1)
        E = E[np.lexsort((E[:, 1], E[:, 0]))]
        if len(E) > 1 and np.any(np.all(E[1:] == E[:-1], axis=1)):
            raise ValueError("duplicate edges are not allowed")
        object.__setattr__(self, "edges", E)

    @classmethod
    def from_networkx(cls, G):
        nodes = sorted(G.nodes())
        index = {v: i for i, v in enumerate(nodes)}
        edges = [(index[u], index[v]) for u, v in G.edges()]
        return cls(len(nodes), np.array(edges, dtype=np.int64).reshape(-1, 2))

    @property
    def num_edges(self):
        return len(self.edges)

    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.n)


def gen_pref_graph(n, d=2, seed=None):
    """Barabasi-Albert graph: each new node attaches ``d`` edges by degree.

    Deterministic for a given ``seed``.

    Raises
    ------
    ValueError
        If ``d < 1`` or ``n < d + 1``.
    """
    if d < 1:
        raise ValueError("need d >= 1")
    if n < d + 1:
        raise ValueError(f"need n >= d + 1 = {d + 1}, got n = {n}")
    return Graph.from_networkx(nx.barabasi_albert_graph(n, d, seed=seed))


def adjacency(G, format="csr"):
    """Symmetric 0/1 adjacency matrix."""
    E = G.edges
    rows = np.concatenate([E[:, 0], E[:, 1]])
    cols = np.concatenate([E[:, 1], E[:, 0]])
    A = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(G.n, G.n))
    return A.asformat(format)


def total_communicability(G, m=30, tol=None, stride=4):
    """Total communicability ``exp(A) 1`` of ``G x G`` in factored form.

    Returns
    -------
    FactoredVector
        Rank one: the score of product node ``(i, j)`` is ``x[i] * x[j]``
        with ``x = approx.left[:, 0]`` and vec index ``j * n + i``.
    """
    A = adjacency(G)
    ones = np.ones(G.n)
    res = exp_structured(A, ones, A, ones, m_max=m, tol=tol, stride=stride)
    return res.approx


def basis_timing(G, m=30, repeat=1):
    """Wall time to build ``K_m(A_G, 1)`` versus ``K_m(A_G (+) A_G, 1)``.

    Both bases use Lanczos with full reorthogonalization; the large one
    applies the Kronecker sum matrix-free.  Returns a dict with the two
    best-of-``repeat`` times and their ratio.
    """
    A = adjacency(G)
    op = KronSumOp(A, A)

    def best(fn):
        out = np.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            out = min(out, time.perf_counter() - t0)
        return out

    t_small = best(lambda: lanczos(A, np.ones(G.n), m))
    t_large = best(lambda: lanczos(op, np.ones(G.n * G.n), m))
    return {"n": G.n, "m": m, "time_factor": t_small, "time_kron": t_large,
            "ratio": t_large / t_small}

