"""Reading and writing compositional data and result tables.

CSV input is comma separated with an optional single header line, detected
by a non-numeric first token.  LF and CRLF line endings are both accepted;
output always uses LF.  Numbers are written with 17 significant digits so
they survive a round trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import NaturalParams, validate_simplex
from .errors import CCError
from .inference import GlmModel

SMOOTH_WEIGHT = 1e-3


def fmt(v) -> str:
    """Full round-trip text for a number."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    # adding 0.0 turns -0.0 into 0.0
    return f"{float(v) + 0.0:.17g}"


def parse_number(token: str) -> float:
    """Parse a decimal or a fraction such as ``1/3``."""
    s = token.strip()
    if not s:
        raise ValueError("empty field")
    if "/" in s:
        return float(Fraction(s))
    return float(s)


def parse_vector(text: str) -> np.ndarray:
    """Parse ``"a,b,c"`` into a float vector."""
    parts = text.split(",")
    try:
        vals = [parse_number(p) for p in parts]
    except (ValueError, ZeroDivisionError) as exc:
        raise CCError(f"cannot parse {text!r} as a list of numbers: {exc}") from None
    if not all(math.isfinite(v) for v in vals):
        raise CCError(f"non-finite value in {text!r}")
    return np.array(vals)


def _is_number(token: str) -> bool:
    try:
        parse_number(token)
    except (ValueError, ZeroDivisionError):
        return False
    return True


def _read_text(source) -> str:
    """``source`` is a path or an open text stream."""
    if hasattr(source, "read"):
        return source.read()
    with open(source, encoding="utf-8", newline="") as fh:
        return fh.read()


def _records(text: str):
    """Yield ``(line_number, fields)`` for non-blank lines."""
    reader = csv.reader(io.StringIO(text, newline=""))
    for fields in reader:
        if not fields or all(not f.strip() for f in fields):
            continue
        yield reader.line_num, fields


@dataclass
class CompositionTable:
    """Parsed composition rows with a record of every rejected line.

    ``index`` gives, for each accepted row, its position among all data
    lines (header excluded), so a predictor file can be aligned with it.
    """

    header: list[str] | None
    rows: np.ndarray
    rejected: list[tuple[int, str]] = field(default_factory=list)
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def K(self) -> int:
        return self.rows.shape[1] if self.rows.ndim == 2 else 0

    def summary(self) -> str:
        return f"{self.n} rows accepted, {len(self.rejected)} rejected"


def smooth(rows: np.ndarray, weight: float = SMOOTH_WEIGHT) -> np.ndarray:
    """Mix each composition with the uniform one, pulling zeros off the boundary."""
    K = rows.shape[1]
    return (1.0 - weight) * rows + weight / K


def read_compositions(source, smooth_zeros: bool = False) -> CompositionTable:
    """Parse a composition CSV.

    The first non-blank line decides the column count (and is the header
    if its first token is not a number).  Lines with the wrong number of
    fields, unparsable numbers or invalid simplex points are rejected with
    their line number and the reason; nothing is dropped silently.
    """
    header = None
    K = None
    rows, index, rejected = [], [], []
    ordinal = 0
    for line, fields in _records(_read_text(source)):
        if K is None:
            K = len(fields)
            if not _is_number(fields[0]):
                header = [f.strip() for f in fields]
                continue
        pos = ordinal
        ordinal += 1
        if len(fields) != K:
            rejected.append((line, f"expected {K} fields, found {len(fields)}"))
            continue
        try:
            x = np.array([parse_number(f) for f in fields])
            x = validate_simplex(x)
        except (ValueError, ZeroDivisionError) as exc:
            rejected.append((line, str(exc)))
            continue
        rows.append(x)
        index.append(pos)
    if K is not None and K < 2:
        raise CCError("compositions need at least two columns")
    arr = np.array(rows) if rows else np.zeros((0, K or 0))
    if smooth_zeros and arr.size:
        arr = smooth(arr)
    return CompositionTable(header, arr, rejected, np.array(index, dtype=int))


def read_matrix(source) -> tuple[list[str] | None, np.ndarray]:
    """Parse a numeric CSV (predictors); any malformed line is an error."""
    header = None
    width = None
    rows = []
    for line, fields in _records(_read_text(source)):
        if width is None:
            width = len(fields)
            if not _is_number(fields[0]):
                header = [f.strip() for f in fields]
                continue
        if len(fields) != width:
            raise CCError(f"line {line}: expected {width} fields, found {len(fields)}")
        try:
            vals = [parse_number(f) for f in fields]
        except (ValueError, ZeroDivisionError) as exc:
            raise CCError(f"line {line}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise CCError(f"line {line}: non-finite value")
        rows.append(vals)
    if not rows:
        raise CCError("no numeric rows found")
    return header, np.array(rows)


def _open_out(dest):
    if dest is None or hasattr(dest, "write"):
        return None
    return open(dest, "w", encoding="utf-8", newline="")


def write_table(dest, header, rows) -> None:
    """Write rows of numbers/strings as CSV (``dest`` is a path or a text stream)."""
    fh = _open_out(dest)
    out = fh or dest
    try:
        w = csv.writer(out, lineterminator="\n")
        if header:
            w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    finally:
        if fh:
            fh.close()


def write_points(dest, points: np.ndarray) -> None:
    K = points.shape[1]
    write_table(dest, [f"x{i + 1}" for i in range(K)], points)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_jsonl(dest, records) -> None:
    """One JSON object per line, keys in the order given."""
    fh = _open_out(dest)
    out = fh or dest
    try:
        for rec in records:
            out.write(json.dumps(_jsonable(rec)) + "\n")
    finally:
        if fh:
            fh.close()


def write_records(dest, rows, fmt_name: str = "csv") -> None:
    """Write result rows that carry ``FIELDS`` and ``as_tuple`` (bias, benchmark)."""
    rows = list(rows)
    if fmt_name == "jsonl":
        write_jsonl(dest, (dict(zip(r.FIELDS, r.as_tuple())) for r in rows))
    elif fmt_name == "csv":
        fields = rows[0].FIELDS if rows else ()
        write_table(dest, list(fields), (r.as_tuple() for r in rows))
    else:
        raise CCError(f"unknown output format {fmt_name!r}")


REPORT_FIELDS = ("kind", "converged", "iterations", "log_likelihood", "grad_norm")


def report_record(report) -> dict:
    """Flatten a fit report; field order is ``REPORT_FIELDS`` then parameters."""
    rec = {k: getattr(report, k) for k in REPORT_FIELDS}
    params = report.params
    if isinstance(params, NaturalParams):
        rec["eta"] = params.eta
    else:
        w, b = params.raw_coefficients()
        rec["weights"] = w
        rec["bias"] = b
        rec["l2"] = params.l2_coefficient
    if report.fitted_mean is not None:
        rec["fitted_mean"] = report.fitted_mean
    rec["trace"] = [list(t) for t in report.trace]
    return rec


def write_report(dest, report, fmt_name: str = "csv") -> None:
    """Write a fit report as ``key,value...`` CSV lines or one JSON line."""
    rec = report_record(report)
    if fmt_name == "jsonl":
        write_jsonl(dest, [rec])
        return
    if fmt_name != "csv":
        raise CCError(f"unknown output format {fmt_name!r}")
    lines = []
    for k, v in rec.items():
        if k == "trace":
            continue
        arr = np.asarray(v)
        if arr.ndim == 0:
            lines.append([k, v if isinstance(v, str) else fmt(v)])
        elif arr.ndim == 1:
            lines.append([k] + [fmt(x) for x in arr])
        else:
            for i, row in enumerate(arr):
                lines.append([f"{k}_{i + 1}"] + [fmt(x) for x in row])
    write_table(dest, None, lines)


def model_record(model) -> dict:
    return {
        "weights": model.weights,
        "bias": model.bias,
        "l2": model.l2_coefficient,
        "z_mean": model.z_mean,
        "z_scale": model.z_scale,
    }


def load_model(path):
    """Read a regression model written by the CLI (one JSON object)."""
    with open(path, encoding="utf-8") as fh:
        rec = json.loads(fh.readline())
    z_mean = None if rec.get("z_mean") is None else np.array(rec["z_mean"])
    z_scale = None if rec.get("z_scale") is None else np.array(rec["z_scale"])
    return GlmModel(np.array(rec["weights"]), np.array(rec["bias"]), rec["l2"], z_mean, z_scale)
