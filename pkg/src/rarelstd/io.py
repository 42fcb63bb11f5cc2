"""CSV export with a provenance header.

Every file starts with ``#`` lines giving the package version, the
configuration as sorted JSON, the seed and one line per column; a plain CSV
table follows.  Floats are written with 17 significant digits and
non-finite values as ``inf``, ``-inf`` or ``nan``, so a round trip through
:func:`read_csv` is exact.  Nothing time- or host-dependent is written, which
keeps repeated runs byte-identical.
"""

import csv
import io
import json
import math
import os

import numpy as np

from . import __version__


def fmt(x):
    """Format one cell: 17 significant digits for floats, ``str`` otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if not math.isfinite(obj) else float(obj)
    if hasattr(obj, "value"):  # enums
        return obj.value
    return obj


def header_lines(config=None, seed=None, columns=(), extra=None):
    """Provenance block as a list of ``#``-prefixed lines."""
    lines = [f"# rarelstd {__version__}"]
    if config is not None:
        lines.append("# config: " + json.dumps(_jsonable(config), sort_keys=True))
    if seed is not None:
        lines.append(f"# seed: {seed}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {fmt(value)}")
    for name, desc in columns:
        lines.append(f"# column {name}: {desc}")
    return lines


def write_csv(path, columns, rows, config=None, seed=None, extra=None):
    """Write ``rows`` under a provenance header.

    Parameters
    ----------
    path : str, path-like or writable text file
        Parent directories of a path are created.
    columns : sequence of (name, description)
    rows : iterable of sequences
    extra : dict, optional
        Additional ``# key: value`` header lines, in insertion order.
    """
    buf = io.StringIO()
    for line in header_lines(config, seed, columns, extra):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in columns])
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    if hasattr(path, "write"):
        path.write(buf.getvalue())
        return
    os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """Return ``(meta, header, rows)``; ``meta`` maps header keys to strings."""
    meta = {}
    body = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                meta[key.strip()] = value.strip()
            else:
                body.append(line)
    table = list(csv.reader(body))
    return meta, table[0], table[1:]


def matrix_rows(A):
    """``(i, j, A[i, j])`` for every entry, row-major."""
    A = np.asarray(A)
    return [(i, j, A[i, j]) for i in range(A.shape[0]) for j in range(A.shape[1])]


MATRIX_COLUMNS = [("i", "row index (0-based)"), ("j", "column index (0-based)"),
                  ("value", "matrix entry")]


def write_matrix(path, A, **kw):
    write_csv(path, MATRIX_COLUMNS, matrix_rows(A), **kw)


def write_value(path, u, **kw):
    cols = [("state", "state index (0-based)"), ("value", "exact value u(state)")]
    write_csv(path, cols, enumerate(np.asarray(u)), **kw)


def write_estimate(path, result, n, **kw):
    """EstimateResult as ``state, estimate, defined``; the failure kind goes in the header."""
    cols = [
        ("state", "state index (0-based)"),
        ("estimate", "estimated value, nan where undefined"),
        ("defined", "1 if the entry is an estimate or a known boundary value"),
    ]
    u = np.full(n, np.nan) if result.u is None else result.u
    extra = dict(kw.pop("extra", None) or {})
    extra["failure"] = result.failure.value
    rows = ((i, u[i], bool(result.defined[i])) for i in range(n))
    write_csv(path, cols, rows, extra=extra, **kw)


def write_variance(path, report, **kw):
    cols = [
        ("state", "state index (0-based)"),
        ("sigma_sq", "asymptotic variance of sqrt(M)(estimate - u)"),
        ("rel_avar", "sigma_sq / u^2"),
    ]
    rows = zip(range(len(report.sigma_sq)), report.sigma_sq, report.rel_avar)
    write_csv(path, cols, rows, extra={"tau": report.tau, **(kw.pop("extra", None) or {})}, **kw)


def write_scalars(path, pairs, **kw):
    """Two-column ``name, value`` table."""
    cols = [("name", "quantity"), ("value", "value")]
    write_csv(path, cols, pairs, **kw)


def assumption_rows(report):
    return [
        ("alpha", report.alpha),
        ("c", report.c),
        ("beta", report.beta),
        ("C", report.C_fit),
        ("bound", report.bound),
        ("bound_zero_reward", report.bound_zero_reward),
        ("connected", report.connected),
        ("tau", report.tau),
        ("n", report.n),
    ]
