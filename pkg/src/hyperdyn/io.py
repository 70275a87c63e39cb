"""Text formats: model files, matrices, words, partitions and CSV exports.

Every writer takes a ``header`` mapping that is emitted first as ``# key: value``
lines (CSV and plain text) so that outputs record the tool version, argv and
seed.  Floats are written with ``repr`` so partitions and matrices round-trip
exactly.
"""

from __future__ import annotations

import io as _io
import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from . import __version__
from .errors import ParseError, ValidationError
from .maps import SystemModel, cat_map, horseshoe
from .partition import Partition

__all__ = [
    "BUILTINS",
    "MODEL_KEYS",
    "make_header",
    "parse_model_text",
    "load_model",
    "read_matrix",
    "write_matrix",
    "read_words",
    "write_words",
    "read_partition",
    "write_partition",
    "read_orbit",
    "write_orbit",
    "write_shadow_errors",
    "write_manifold",
    "dump_json",
]

BUILTINS = {
    "horseshoe": "affine_horseshoe",
    "affine_horseshoe": "affine_horseshoe",
    "catmap": "cat_map",
    "cat_map": "cat_map",
}

# file key -> HyperbolicityData field
MODEL_KEYS = {
    "lambda": "lam",
    "lam": "lam",
    "c": "c",
    "mu": "mu_adapt",
    "mu_adapt": "mu_adapt",
    "C0": "C0",
    "C1": "C1",
    "K_lip": "K_lip",
    "L": "L",
    "L_inv": "L_inv",
    "beta_holder": "beta_holder",
    "delta0": "delta0",
}


def make_header(argv: Sequence[str] | None = None, seed: int | None = None, **extra) -> dict:
    h = {"tool": "hyperdyn", "version": __version__,
         "argv": list(argv) if argv is not None else [], "seed": seed}
    h.update(extra)
    return h


def _write_header(fh: TextIO, header: Mapping | None):
    if not header:
        return
    for k, v in header.items():
        fh.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")


def _number(text: str, line: int, key: str):
    text = text.strip()
    try:
        if "/" in text:
            return Fraction(text)
        v = float(text)
        return int(v) if text.lstrip("+-").isdigit() else v
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"not a number: {text!r}", line=line, key=key) from None


def parse_model_text(text: str) -> SystemModel:
    """Build a model from ``key = value`` lines.

    ``kind`` selects the builtin (``horseshoe`` or ``catmap``); ``matrix``
    gives the four integer entries of a toral automorphism row by row; the
    remaining keys override hyperbolicity data (``lambda``, ``c``, ``mu``,
    ``C0``, ``C1``, ``K_lip``, ``L``, ``L_inv``, ``beta_holder``,
    ``delta0``).  Rationals such as ``1/3`` are kept exact.  ``#`` starts a
    comment.
    """
    kind = None
    matrix = None
    name = None
    overrides: dict = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ParseError("duplicate key", line=lineno, key=key)
        seen.add(key)
        if key == "kind":
            if value not in BUILTINS:
                raise ParseError(f"unknown kind {value!r}", line=lineno, key=key)
            kind = BUILTINS[value]
        elif key == "name":
            name = value
        elif key == "matrix":
            parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
            try:
                entries = [int(p) for p in parts]
            except ValueError:
                raise ParseError("matrix entries must be integers", line=lineno, key=key) from None
            if len(entries) != 4:
                raise ParseError("matrix needs 4 entries", line=lineno, key=key)
            matrix = ((entries[0], entries[1]), (entries[2], entries[3]))
        elif key in MODEL_KEYS:
            overrides[MODEL_KEYS[key]] = _number(value, lineno, key)
        else:
            raise ParseError("unknown key", line=lineno, key=key)
    if kind is None:
        kind = "cat_map" if matrix is not None else None
    if kind is None:
        raise ParseError("missing key", key="kind")
    if kind == "affine_horseshoe":
        if matrix is not None:
            raise ParseError("the horseshoe takes no matrix", key="matrix")
        model = horseshoe(**overrides)
    else:
        model = cat_map(matrix or ((2, 1), (1, 1)), **overrides)
    if name:
        object.__setattr__(model, "name", name)
    return model


def load_model(spec: str | Path) -> SystemModel:
    """Builtin name (``horseshoe``, ``catmap``) or path to a model file.

    Raises
    ------
    ParseError
        For unreadable files and malformed lines, with line and key.
    ValidationError
        When the merged hyperbolicity data violate their invariants.
    """
    s = str(spec)
    if s in BUILTINS:
        return horseshoe() if BUILTINS[s] == "affine_horseshoe" else cat_map()
    try:
        text = Path(s).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read model {s!r}: {exc.strerror}") from None
    return parse_model_text(text)


def _lines(source) -> Iterable[tuple[int, str]]:
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def read_matrix(source) -> np.ndarray:
    """Dense integer matrix, one whitespace-separated row per line."""
    rows = []
    for i, line in _lines(source):
        try:
            rows.append([int(v) for v in line.replace(",", " ").split()])
        except ValueError:
            raise ParseError("matrix entries must be integers", line=i) from None
    if not rows:
        raise ParseError("empty matrix file")
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ParseError(f"matrix must be square ({n} rows)")
    return np.array(rows, dtype=np.int64)


def write_matrix(fh: TextIO, A, header: Mapping | None = None):
    _write_header(fh, header)
    for row in np.asarray(A):
        fh.write(" ".join(str(int(v)) for v in row) + "\n")


def _parse_symbols(tok: str, line: int) -> tuple[int, ...]:
    try:
        if "," in tok:
            return tuple(int(v) for v in tok.split(",") if v)
        return tuple(int(c) for c in tok)
    except ValueError:
        raise ParseError(f"bad symbol string {tok!r}", line=line) from None


def read_words(source):
    """Word file: ``<symbols> offset=<k> [periodic]`` per line.

    Symbols are a digit string (alphabets up to 10) or comma-separated.
    """
    from .symbolic import SymbolWindow

    out = []
    for i, line in _lines(source):
        toks = line.split()
        syms = _parse_symbols(toks[0], i)
        offset, periodic = 0, False
        for t in toks[1:]:
            if t.startswith("offset="):
                try:
                    offset = int(t[len("offset="):])
                except ValueError:
                    raise ParseError("offset must be an integer", line=i, key="offset") from None
            elif t == "periodic":
                periodic = True
            else:
                raise ParseError(f"unexpected token {t!r}", line=i)
        out.append(SymbolWindow(syms, offset, periodic))
    return out


def write_words(fh: TextIO, words, header: Mapping | None = None):
    _write_header(fh, header)
    for w in words:
        big = any(s > 9 for s in w.symbols)
        syms = "".join(map(str, w.symbols))
        if big:
            # trailing comma keeps a single large symbol from reading as digits
            syms = ",".join(map(str, w.symbols)) + ("," if len(w.symbols) == 1 else "")
        fh.write(f"{syms} offset={w.offset}" + (" periodic" if w.periodic else "") + "\n")


def write_partition(fh: TextIO, part: Partition, header: Mapping | None = None):
    """CSV ``id,word,s_lo,s_hi,u_lo,u_hi``; the word centre and model go in the header."""
    h = dict(header or {})
    h.update({"model": part.model, "center": part.center, "rounds": part.rounds})
    _write_header(fh, h)
    fh.write("id,word,s_lo,s_hi,u_lo,u_hi\n")
    for i in range(part.m):
        word = "".join(str(int(v)) for v in part.words[i]) if part.words is not None else ""
        vals = (float(part.s_lo[i]), float(part.s_hi[i]), float(part.u_lo[i]), float(part.u_hi[i]))
        fh.write(f"{i},{word}," + ",".join(repr(v) for v in vals) + "\n")


def _read_header(lines: list[str]) -> dict:
    h = {}
    for line in lines:
        if line.startswith("# ") and ": " in line:
            k, v = line[2:].split(": ", 1)
            try:
                h[k] = json.loads(v)
            except json.JSONDecodeError:
                h[k] = v
    return h


def read_partition(source) -> Partition:
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    lines = text.splitlines()
    header = _read_header([l for l in lines if l.startswith("#")])
    body = [(i, l) for i, l in enumerate(lines, 1) if l.strip() and not l.startswith("#")]
    if not body or body[0][1].strip() != "id,word,s_lo,s_hi,u_lo,u_hi":
        raise ParseError("missing partition column header")
    cols: list[list[float]] = [[], [], [], []]
    words = []
    for i, line in body[1:]:
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError("expected 6 columns", line=i)
        try:
            vals = [float(v) for v in parts[2:]]
        except ValueError:
            raise ParseError("bad number", line=i) from None
        for c, v in zip(cols, vals):
            c.append(v)
        words.append(parts[1])
    w = None
    if words and all(words):
        w = np.array([[int(ch) for ch in s] for s in words], dtype=np.uint8)
    return Partition(*(np.array(c) for c in cols), header.get("model", ""), w,
                     int(header.get("center", 0)), int(header.get("rounds", 0)))


def read_orbit(source, model: SystemModel):
    """CSV rows ``index,x,y`` (header row optional) as a list of points."""
    pts = []
    for i, line in _lines(source):
        parts = line.split(",")
        if parts[0].strip() == "index":
            continue
        if len(parts) != 3:
            raise ParseError("expected index,x,y", line=i)
        try:
            pts.append(model.point(float(parts[1]), float(parts[2])))
        except ValueError:
            raise ParseError("bad coordinate", line=i) from None
    if not pts:
        raise ParseError("empty orbit file")
    return pts


def write_orbit(fh: TextIO, points, header: Mapping | None = None):
    _write_header(fh, header)
    fh.write("index,x,y\n")
    for i, p in enumerate(points):
        fh.write(f"{i},{p.x!r},{p.y!r}\n")


def write_shadow_errors(fh: TextIO, result, header: Mapping | None = None):
    h = dict(header or {})
    h.update({"achieved_beta": result.achieved_beta, "predicted_beta": result.predicted_beta,
              "alpha": result.alpha, "start": [result.start.x, result.start.y],
              "flags": list(result.flags)})
    _write_header(fh, h)
    fh.write("index,error\n")
    for i, e in enumerate(result.per_step_errors):
        fh.write(f"{i},{e!r}\n")


def write_manifold(fh: TextIO, graph, header: Mapping | None = None):
    """Chart samples ``s,u`` with ambient ``x,y``; the header records frame and delta."""
    h = dict(header or {})
    fr = graph.chart.frame
    h.update({"kind": graph.kind, "base": [graph.chart.base.x, graph.chart.base.y],
              "e_s": list(fr.e_s), "e_u": list(fr.e_u), "delta": graph.chart.delta})
    _write_header(fh, h)
    fh.write("s,u,x,y\n")
    s, u = graph.chart_coords()
    X, Y = graph.ambient()
    for row in zip(s, u, X, Y):
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dump_json(obj, header: Mapping | None = None) -> str:
    doc = {"header": dict(header)} if header else {}
    doc.update(obj)
    return json.dumps(doc, sort_keys=True, indent=2, default=_jsonable) + "\n"


def to_text(writer, *args, **kwargs) -> str:
    buf = _io.StringIO()
    writer(buf, *args, **kwargs)
    return buf.getvalue()


__all__.append("to_text")
