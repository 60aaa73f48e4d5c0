"""Matrix Market reader and writer for real sparse and dense matrices.

Values are written with 17 significant digits so that a write-read round
trip reproduces every double exactly.  Parse errors carry the 1-based line
number of the offending line.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import MatrixMarketError

__all__ = ["mm_read", "mm_write"]

_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _parse_header(line):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", 1)
    obj, fmt, fld, sym = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", 1)
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r} (real matrices only)", 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1)
    if fmt == "array" and fld == "pattern":
        raise MatrixMarketError("pattern field requires coordinate format", 1)
    return fmt, fld, sym


def _data_lines(lines, start):
    """Yield ``(lineno, tokens)`` for non-comment, non-blank lines."""
    for i in range(start, len(lines)):
        s = lines[i].strip()
        if s and not s.startswith("%"):
            yield i + 1, s.split()


def _number(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise MatrixMarketError(f"cannot parse value {tok!r}", lineno) from None


def _index(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise MatrixMarketError(f"cannot parse index {tok!r}", lineno) from None


def mm_read(path):
    """Read a Matrix Market file.

    Coordinate files give a CSR matrix with duplicates summed; array files
    give a dense ndarray.  Symmetric and skew-symmetric storage is expanded.

    Raises
    ------
    MatrixMarketError
        On a malformed header, size line or entry, or an out-of-range index.
    """
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    fmt, fld, sym = _parse_header(lines[0])
    rows = _data_lines(lines, 1)
    try:
        lineno, size = next(rows)
    except StopIteration:
        raise MatrixMarketError("missing size line", len(lines)) from None
    want = 3 if fmt == "coordinate" else 2
    if len(size) != want:
        raise MatrixMarketError(f"size line needs {want} integers", lineno)
    dims = [_index(t, lineno) for t in size]
    if any(d < 0 for d in dims):
        raise MatrixMarketError("negative size", lineno)
    nr, nc = dims[0], dims[1]
    if sym != "general" and nr != nc:
        raise MatrixMarketError(f"{sym} matrix must be square", lineno)
    if fmt == "array":
        return _read_array(rows, nr, nc, sym, lines)
    return _read_coordinate(rows, nr, nc, dims[2], fld, sym, lines)


def _read_coordinate(rows, nr, nc, nnz, fld, sym, lines):
    I = np.empty(nnz, dtype=np.int64)
    J = np.empty(nnz, dtype=np.int64)
    V = np.empty(nnz)
    want = 2 if fld == "pattern" else 3
    k = 0
    for lineno, tok in rows:
        if k >= nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", lineno)
        if len(tok) != want:
            raise MatrixMarketError(f"expected {want} fields, got {len(tok)}", lineno)
        i, j = _index(tok[0], lineno), _index(tok[1], lineno)
        if not (1 <= i <= nr and 1 <= j <= nc):
            raise MatrixMarketError(f"index ({i}, {j}) outside {nr}x{nc}", lineno)
        if sym != "general" and i < j:
            raise MatrixMarketError(f"{sym} storage expects the lower triangle", lineno)
        if sym == "skew-symmetric" and i == j:
            raise MatrixMarketError("skew-symmetric storage has no diagonal", lineno)
        I[k], J[k] = i - 1, j - 1
        V[k] = 1.0 if fld == "pattern" else _number(tok[2], lineno)
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {k}", len(lines))
    if sym != "general":
        off = I != J
        sign = -1.0 if sym == "skew-symmetric" else 1.0
        I, J, V = (np.concatenate([I, J[off]]), np.concatenate([J, I[off]]),
                   np.concatenate([V, sign * V[off]]))
    return sp.coo_matrix((V, (I, J)), shape=(nr, nc)).tocsr()


def _read_array(rows, nr, nc, sym, lines):
    if sym == "general":
        cells = [(i, j) for j in range(nc) for i in range(nr)]
    else:
        lo = 0 if sym == "symmetric" else 1
        cells = [(i, j) for j in range(nc) for i in range(j + lo, nr)]
    A = np.zeros((nr, nc))
    k = 0
    for lineno, tok in rows:
        if len(tok) != 1:
            raise MatrixMarketError(f"expected 1 field, got {len(tok)}", lineno)
        if k >= len(cells):
            raise MatrixMarketError(f"more than the declared {len(cells)} values", lineno)
        i, j = cells[k]
        A[i, j] = _number(tok[0], lineno)
        k += 1
    if k != len(cells):
        raise MatrixMarketError(f"expected {len(cells)} values, found {k}", len(lines))
    if sym == "symmetric":
        A = A + np.tril(A, -1).T
    elif sym == "skew-symmetric":
        A = A - A.T
    return A


def mm_write(path, M, symmetric=False, comment=""):
    """Write ``M`` in Matrix Market format with 17 significant digits.

    Sparse input is written in coordinate format, dense input as an array.
    With ``symmetric=True`` only the lower triangle is stored; ``M`` must
    then be exactly symmetric.
    """
    is_sparse = sp.issparse(M)
    if not is_sparse:
        M = np.atleast_2d(np.asarray(M, dtype=float))
    nr, nc = M.shape
    if symmetric:
        diff = (M - M.T)
        if (abs(diff).max() if is_sparse else np.abs(diff).max(initial=0.0)) != 0:
            raise ValueError("matrix is not exactly symmetric")
    sym = "symmetric" if symmetric else "general"
    out = []
    if is_sparse:
        C = sp.coo_matrix(M)
        C.sum_duplicates()
        keep = C.row >= C.col if symmetric else np.ones(C.nnz, dtype=bool)
        r, c, v = C.row[keep], C.col[keep], C.data[keep]
        order = np.lexsort((r, c))
        out.append(f"%%MatrixMarket matrix coordinate real {sym}")
        out.extend(f"%{line}" for line in comment.splitlines())
        out.append(f"{nr} {nc} {r.size}")
        out.extend(f"{r[k] + 1} {c[k] + 1} {v[k]:.17g}" for k in order)
    else:
        out.append(f"%%MatrixMarket matrix array real {sym}")
        out.extend(f"%{line}" for line in comment.splitlines())
        out.append(f"{nr} {nc}")
        for j in range(nc):
            for i in range(j if symmetric else 0, nr):
                out.append(f"{M[i, j]:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")
