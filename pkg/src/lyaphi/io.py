"""Matrix Market files, CSV reports and run-config files."""
import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from lyaphi import __version__
from lyaphi.errors import LyaphiError

MAX_DIM = 2 ** 31 - 1
REPORT_COLUMNS = ("method", "N", "h", "error", "seconds", "max_rank", "s", "m")


class MatrixMarketError(LyaphiError, ValueError):
    def __init__(self, msg, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<mtx>'}:{line}: " if line is not None else ""
        super().__init__(where + msg)


def atomic_write_text(path, text):
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    x = float(x)
    if x == int(x) and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def mm_format(value, comment=None):
    """Matrix Market text: coordinate for sparse input, column-major array for dense."""
    out = io.StringIO()
    if sp.issparse(value):
        A = sp.coo_matrix(value)
        order = np.lexsort((A.row, A.col))
        out.write("%%MatrixMarket matrix coordinate real general\n")
        _write_comment(out, comment)
        out.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            out.write(f"{i + 1} {j + 1} {_num(v)}\n")
    else:
        X = np.asarray(value, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out.write("%%MatrixMarket matrix array real general\n")
        _write_comment(out, comment)
        out.write(f"{X.shape[0]} {X.shape[1]}\n")
        for v in X.reshape(-1, order="F"):
            out.write(_num(v) + "\n")
    return out.getvalue()


def _write_comment(out, comment):
    if comment:
        for line in str(comment).splitlines():
            out.write(f"% {line}\n")


def mm_write(path, value, comment=None):
    atomic_write_text(path, mm_format(value, comment))


def mm_read(path):
    """Read a real Matrix Market file: coordinate -> CSR matrix, array -> ndarray."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return mm_parse(fh.read(), str(path))


def mm_parse(text, source=None):
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1, source)
    banner = lines[0].split()
    if len(banner) != 5 or banner[0].lower() != "%%matrixmarket" or banner[1].lower() != "matrix":
        raise MatrixMarketError(f"malformed banner {lines[0]!r}", 1, source)
    fmt, field, symm = (b.lower() for b in banner[2:])
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1, source)
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"field {field!r} is not real", 1, source)
    if symm not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {symm!r}", 1, source)

    body = [(k + 1, ln) for k, ln in enumerate(lines) if k > 0 and ln.strip()
            and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError("missing size line", len(lines), source)
    size_line, size = body[0]
    dims = _ints(size, size_line, source)
    want = 3 if fmt == "coordinate" else 2
    if len(dims) != want:
        raise MatrixMarketError(f"size line needs {want} integers", size_line, source)
    nrows, ncols = dims[0], dims[1]
    if not (0 <= nrows <= MAX_DIM and 0 <= ncols <= MAX_DIM):
        raise MatrixMarketError(f"dimension out of range: {nrows} x {ncols}", size_line, source)
    if symm != "general" and nrows != ncols:
        raise MatrixMarketError("symmetric storage needs a square matrix", size_line, source)
    entries = body[1:]
    if fmt == "coordinate":
        return _parse_coordinate(entries, nrows, ncols, dims[2], symm, size_line, source)
    return _parse_array(entries, nrows, ncols, symm, size_line, source)


def _ints(line, lineno, source):
    try:
        return [int(t) for t in line.split()]
    except ValueError:
        raise MatrixMarketError(f"expected integers, got {line.strip()!r}", lineno, source)


def _float(tok, lineno, source):
    try:
        v = float(tok)
    except ValueError:
        raise MatrixMarketError(f"not a real number: {tok!r}", lineno, source)
    if not np.isfinite(v):
        raise MatrixMarketError(f"non-finite value {tok!r}", lineno, source)
    return v


def _parse_coordinate(entries, nrows, ncols, nnz, symm, size_line, source):
    if nnz < 0 or nnz > MAX_DIM:
        raise MatrixMarketError(f"entry count out of range: {nnz}", size_line, source)
    if len(entries) != nnz:
        last = entries[-1][0] if entries else size_line
        raise MatrixMarketError(f"expected {nnz} entries, found {len(entries)}", last, source)
    rows, cols, vals = [], [], []
    for lineno, ln in entries:
        toks = ln.split()
        if len(toks) != 3:
            raise MatrixMarketError("coordinate entry needs 'i j value'", lineno, source)
        i, j = _ints(" ".join(toks[:2]), lineno, source)
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) outside {nrows} x {ncols}", lineno, source)
        v = _float(toks[2], lineno, source)
        if symm != "general" and j > i:
            raise MatrixMarketError("symmetric storage expects the lower triangle", lineno, source)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if symm != "general" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v if symm == "symmetric" else -v)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(nrows, ncols), dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _parse_array(entries, nrows, ncols, symm, size_line, source):
    if symm == "general":
        count = nrows * ncols
    elif symm == "symmetric":
        count = nrows * (nrows + 1) // 2
    else:
        count = nrows * (nrows - 1) // 2
    if len(entries) != count:
        last = entries[-1][0] if entries else size_line
        raise MatrixMarketError(f"expected {count} values, found {len(entries)}", last, source)
    vals = []
    for lineno, ln in entries:
        toks = ln.split()
        if len(toks) != 1:
            raise MatrixMarketError("array entry needs one value", lineno, source)
        vals.append(_float(toks[0], lineno, source))
    if symm == "general":
        return np.array(vals, dtype=float).reshape((nrows, ncols), order="F")
    X = np.zeros((nrows, ncols))
    it = iter(vals)
    for j in range(ncols):
        for i in range(j if symm == "symmetric" else j + 1, nrows):
            v = next(it)
            X[i, j] = v
            X[j, i] = v if symm == "symmetric" else -v
    return X


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(config):
    """One-line header naming the tool version and the resolved config hash."""
    return f"lyaphi {__version__} config {config_hash(config)}"


def _fmt_field(col, v):
    if v is None or v == "":
        return ""
    if col == "error":
        return f"{float(v):.4e}"
    if col == "seconds":
        return f"{float(v):.3f}"
    if col == "h":
        return repr(float(v))
    return str(v)


def csv_text(rows, comment=None):
    out = io.StringIO()
    if comment:
        for line in str(comment).splitlines():
            out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        if not isinstance(row, dict):
            row = dict(zip(REPORT_COLUMNS, row))
        w.writerow([_fmt_field(c, row.get(c)) for c in REPORT_COLUMNS])
    return out.getvalue()


def csv_report(rows, path, comment=None):
    """Write report rows (dicts or sequences in column order) as UTF-8 CSV."""
    atomic_write_text(path, csv_text(rows, comment))


CONFIG_SCHEMA = {
    "problem": str, "scheme": str, "n": int, "alpha": float, "h": float,
    "t_end": float, "t0": float, "tol_compress": float, "seed": int,
    "rank_cap": int, "snapshot_stride": int, "p": int, "q": int,
    "A": str, "B": str, "C": str, "L0": str, "reference": str,
}

CONFIG_DEFAULTS = {
    "problem": "heat2d", "scheme": "expeul", "n": 10, "alpha": 1.0, "h": 0.01,
    "t_end": 1.0, "t0": 0.0, "tol_compress": 1e-12, "seed": 0, "rank_cap": 4096,
    "snapshot_stride": 0, "p": 5, "q": 1, "reference": "none",
}


class ConfigError(LyaphiError, ValueError):
    pass


def parse_config(text):
    """``key = value`` lines (``#`` comments) typed by :data:`CONFIG_SCHEMA`."""
    out = {}
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {k}: expected 'key = value', got {raw!r}")
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"line {k}: unknown key {key!r}")
        try:
            typ = CONFIG_SCHEMA[key]
            out[key] = typ(float(val)) if typ is int and "e" in val.lower() else typ(val)
        except ValueError:
            raise ConfigError(f"line {k}: bad value for {key}: {val!r}")
    return out


def read_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(config):
    return "".join(f"{k} = {config[k]}\n" for k in sorted(config))
