"""Command-line harness: one-off evaluations, built-in benchmarks, graphs.

Exit codes: 0 when every requested run converged, 1 on non-convergence,
2 on input errors.  ``KRONSUM_NUM_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import KronsumError, MatrixMarketError
from .experiments import BENCHES, STANDARD_COLUMNS, convection_diffusion, run_bench
from .graphs import adjacency, gen_pref_graph, total_communicability
from .kronfun import kron_exact, structured_fAb
from .krylov import standard_fAb
from .la_core import KronSumOp, tridiag
from .mmio import mm_read, mm_write
from .smallfun import function_by_name

log = logging.getLogger("kronsum")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT = 0, 1, 2
ORACLE_MAX_N = 2000


class InputError(Exception):
    """Bad configuration or unreadable input."""


@dataclass
class ExperimentConfig:
    """Settings of an ``apply`` run; flags override config-file values."""

    function: str = "exp"
    m1: str = "tridiag:-1,2,-1"
    m2: str = ""
    n: int = 50
    n2: int = 0
    b1: str = "ones"
    b2: str = "ones"
    space: str = "krylov"
    method: str = "structured"
    m_max: int = 50
    tol: float = 1e-8
    stride: int = 4
    output: str = ""
    seed: int = 0
    exact: str = "auto"

    def validate(self):
        if self.space not in ("krylov", "extended"):
            raise InputError(f"space must be krylov or extended, got {self.space!r}")
        if self.method not in ("structured", "standard", "both"):
            raise InputError(f"method must be structured, standard or both, got {self.method!r}")
        if self.exact not in ("auto", "yes", "no"):
            raise InputError(f"exact must be auto, yes or no, got {self.exact!r}")
        if self.n < 1 or self.m_max < 1 or self.stride < 1:
            raise InputError("n, m_max and stride must be positive")
        for src in (self.m1, self.m2, self.b1, self.b2):
            path = _source_path(src)
            if path is not None and not Path(path).is_file():
                raise InputError(f"file not found: {path}")
        try:
            function_by_name(self.function)
        except ValueError as exc:
            raise InputError(str(exc)) from None


_FIELD_TYPES = {k: type(v) for k, v in asdict(ExperimentConfig()).items()}


def read_config(path):
    """Parse a line-oriented ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELD_TYPES:
            raise InputError(f"{path}:{lineno}: expected key=value with a known key")
        try:
            out[key] = _FIELD_TYPES[key](value.strip())
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad value for {key}") from None
    return out


def _source_path(src):
    if src.startswith("mm:"):
        return src[3:]
    if src.endswith((".mtx", ".txt")):
        return src
    return None


def _floats(arg, count, what):
    try:
        vals = [float(x) for x in arg.split(",")] if arg else []
    except ValueError:
        raise InputError(f"bad numbers in {what}: {arg!r}") from None
    if len(vals) != count:
        raise InputError(f"{what} needs {count} comma-separated numbers")
    return vals


def load_matrix(src, n, seed=0):
    """Build a factor from ``tridiag:a,b,c``, ``convdiff:nu``, ``diag-logspace:lo,hi``,
    ``pref:d`` or a Matrix Market path (``mm:path`` or ``*.mtx``)."""
    path = _source_path(src)
    if path is not None:
        return mm_read(path)
    kind, _, arg = src.partition(":")
    if kind == "tridiag":
        return tridiag(n, *_floats(arg, 3, "tridiag"))
    if kind == "convdiff":
        return convection_diffusion(n, *(_floats(arg, 1, "convdiff") if arg else []))
    if kind == "diag-logspace":
        import scipy.sparse as sp

        lo, hi = _floats(arg, 2, "diag-logspace")
        return sp.diags(np.geomspace(lo, hi, n)).tocsr()
    if kind == "pref":
        d = int(arg) if arg else 2
        return adjacency(gen_pref_graph(n, d, seed))
    raise InputError(f"unknown matrix source {src!r}")


def load_vector(src, n, rng):
    """``ones``, ``random`` (seeded uniform (0, 1)), ``unit`` (normalized ones) or a file."""
    if src == "ones":
        return np.ones(n)
    if src == "unit":
        return np.ones(n) / np.sqrt(n)
    if src == "random":
        return rng.uniform(0.0, 1.0, n)
    path = _source_path(src) or src
    if not Path(path).is_file():
        raise InputError(f"unknown vector source {src!r}")
    v = mm_read(path) if path.endswith(".mtx") else np.loadtxt(path)
    v = np.asarray(v.toarray() if hasattr(v, "toarray") else v, dtype=float).reshape(-1)
    if v.size != n:
        raise InputError(f"vector in {path} has length {v.size}, expected {n}")
    return v


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(stream, columns, rows, meta):
    """Metadata as ``# key: value`` lines, then a header row and the data."""
    stream.write(f"# kronsum {__version__}\n")
    for k, v in meta.items():
        stream.write(f"# {k}: {v}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])


def _emit(path, columns, rows, meta):
    if path:
        with open(path, "w", newline="") as fh:
            write_csv(fh, columns, rows, meta)
    else:
        write_csv(sys.stdout, columns, rows, meta)


def run_apply(cfg):
    """Evaluate one configured problem; returns ``(rows, meta, converged)``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n2 = cfg.n2 or cfg.n
    M1 = load_matrix(cfg.m1, cfg.n, cfg.seed)
    src2 = cfg.m2 or cfg.m1
    same = src2 == cfg.m1 and n2 == cfg.n
    M2 = M1 if same else load_matrix(src2, n2, cfg.seed)
    b1 = load_vector(cfg.b1, M1.shape[0], rng)
    b2 = b1 if (same and cfg.b2 == cfg.b1 and cfg.b1 != "random") else \
        load_vector(cfg.b2, M2.shape[0], rng)
    f = function_by_name(cfg.function)
    want_exact = cfg.exact == "yes" or (
        cfg.exact == "auto" and max(M1.shape[0], M2.shape[0]) <= ORACLE_MAX_N)
    exact = kron_exact(M1, b1, M2, b2, f) if want_exact else None
    rows = {}
    converged = True
    if cfg.method in ("structured", "both"):
        res = structured_fAb(M1, b1, M2, b2, f, m_max=cfg.m_max, tol=cfg.tol,
                             space=cfg.space, stride=cfg.stride, exact=exact)
        converged &= res.converged
        for e in res.history:
            rows.setdefault(e.m, {"m": e.m}).update(
                structured_error=e.error, structured_diff=e.estimate, structured_time=e.time)
    if cfg.method in ("standard", "both"):
        b = np.kron(b2, b1)
        _, hist = standard_fAb(KronSumOp(M1, M2), b, f, cfg.m_max, stride=cfg.stride,
                               tol=cfg.tol, exact=exact)
        converged &= hist[-1].estimate <= cfg.tol
        for e in hist:
            rows.setdefault(e.m, {"m": e.m}).update(
                standard_error=e.error, standard_diff=e.estimate, standard_time=e.time)
    settings = {k: v for k, v in asdict(cfg).items() if k != "output"}
    meta = {"command": "apply", **settings, "converged": converged}
    return [rows[m] for m in sorted(rows)], meta, converged


def _build_parser():
    p = argparse.ArgumentParser(
        prog="kronsum",
        description="Krylov evaluation of f(A)b for Kronecker sums A = M2 (x) I + I (x) M1.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("apply", help="evaluate f(A)b for one configured problem")
    a.add_argument("--config", help="key=value file; flags override its entries")
    a.add_argument("--function", help="exp, sqrt, invsqrt, inverse, sin, cos, logratio, "
                                      "frommer:<s>; prefix '-' for f(-A)")
    a.add_argument("--m1", help="tridiag:a,b,c | convdiff:nu | diag-logspace:lo,hi | "
                                "pref:d | mm:path")
    a.add_argument("--m2", help="outer factor (default: same as --m1)")
    a.add_argument("--n", type=int, help="size of M1")
    a.add_argument("--n2", type=int, help="size of M2 (default: --n)")
    a.add_argument("--b1", help="ones | unit | random | file")
    a.add_argument("--b2", help="ones | unit | random | file")
    a.add_argument("--space", choices=["krylov", "extended"])
    a.add_argument("--method", choices=["structured", "standard", "both"])
    a.add_argument("--m-max", dest="m_max", type=int)
    a.add_argument("--tol", type=float)
    a.add_argument("--stride", type=int, help="checkpoint spacing in m")
    a.add_argument("--exact", choices=["auto", "yes", "no"],
                   help="compute the dense reference for error columns")
    a.add_argument("--seed", type=int)
    a.add_argument("-o", "--output", help="CSV path (default: stdout)")

    b = sub.add_parser("bench", help="run built-in experiments")
    b.add_argument("names", nargs="*", help="experiment names (see --list)")
    b.add_argument("--list", action="store_true", help="list experiments and exit")
    b.add_argument("--n", type=int)
    b.add_argument("--m-max", dest="m_max", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("-o", "--output-dir", dest="output_dir",
                   help="write <name>.csv here (default: stdout)")

    g = sub.add_parser("graph", help="preferential-attachment graph and communicability")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--d", type=int, default=2, help="edges per new node")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--m", type=int, default=30, help="Krylov dimension")
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--top", type=int, default=10, help="report the top product nodes")
    g.add_argument("--write-mtx", dest="write_mtx", help="also write the adjacency matrix")
    g.add_argument("-o", "--output", help="CSV of factor scores (default: stdout)")
    return p


def _cmd_apply(args):
    cfg = read_config(args.config) if args.config else {}
    for key in _FIELD_TYPES:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    config = ExperimentConfig(**cfg)
    rows, meta, ok = run_apply(config)
    _emit(config.output, STANDARD_COLUMNS, rows, meta)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _cmd_bench(args):
    if args.list or not args.names:
        for name in BENCHES:
            print(name)
        return EXIT_OK
    unknown = [n for n in args.names if n not in BENCHES]
    if unknown:
        raise InputError(f"unknown experiment(s): {', '.join(unknown)}")
    ok = True
    for name in args.names:
        log.info("running %s", name)
        try:
            res = run_bench(name, n=args.n, m_max=args.m_max, seed=args.seed)
        except KronsumError as exc:
            raise type(exc)(f"{name}: {exc}") from exc
        ok &= res.converged
        path = str(Path(args.output_dir) / f"{name}.csv") if args.output_dir else ""
        if path:
            Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        _emit(path, res.columns, res.rows, {**res.meta, "converged": res.converged})
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def _cmd_graph(args):
    G = gen_pref_graph(args.n, args.d, args.seed)
    if args.write_mtx:
        mm_write(args.write_mtx, adjacency(G), symmetric=True,
                 comment=f" preferential attachment n={args.n} d={args.d} seed={args.seed}")
    x = total_communicability(G, m=args.m, tol=args.tol)
    scores = x.left[:, 0] * x.mid[0, 0]
    factor = x.right[:, 0]
    deg = G.degrees()
    rows = [{"node": i, "degree": int(deg[i]), "score_left": scores[i], "score_right": factor[i]}
            for i in range(G.n)]
    order = np.argsort(-scores, kind="stable")[: max(args.top, 0)]
    top = ", ".join(f"({i},{i})={scores[i] * factor[i]:.6g}" for i in order)
    meta = {"command": "graph", "n": G.n, "d": args.d, "seed": args.seed,
            "edges": G.num_edges, "m": args.m,
            "score": "product node (i, j) scores score_left[i] * score_right[j]",
            "top_diagonal_nodes": top}
    _emit(args.output, ["node", "degree", "score_left", "score_right"], rows, meta)
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    threads = os.environ.get("KRONSUM_NUM_THREADS")
    limit = nullcontext()
    if threads:
        try:
            limit = threadpool_limits(limits=int(threads))
        except ValueError:
            print(f"kronsum: KRONSUM_NUM_THREADS must be an integer, got {threads!r}",
                  file=sys.stderr)
            return EXIT_INPUT
    handlers = {"apply": _cmd_apply, "bench": _cmd_bench, "graph": _cmd_graph}
    try:
        with limit:
            return handlers[args.command](args)
    except (InputError, MatrixMarketError, OSError) as exc:
        print(f"kronsum: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (KronsumError, ValueError) as exc:
        print(f"kronsum: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
