"""JSON documents describing systems, matrices and fan/vase specifications.

Every document is a JSON object with a ``format_version`` (currently 1)
and a ``kind``:

``state_space``
    ``a``, ``b``, ``c``, ``d`` as row-major nested arrays of reals.
``second_order``
    ``m``, ``c_damp``, ``k``, ``b_in``, ``h1``, ``h2`` for
    ``M q'' + C q' + K q = B u`` with output ``y = H1 q' + H2 q``.
``scalar_rational``
    ``numerator`` and ``denominator`` coefficient lists, highest power
    first (``num``/``den`` are accepted as short names).
``matrix``
    ``entries``: rows of numbers or ``[re, im]`` pairs.
``fan_vase``
    ``pieces`` (objects with ``alpha``, ``beta``, ``gamma``, ``phase``,
    ``gain``), optional ``breakpoints`` and ``at_breakpoints``.

Errors are reported as :class:`DocumentError` carrying a JSON path such
as ``$.h1[2]``.
"""

from dataclasses import dataclass
import io
import json
import math

import numpy as np
import scipy.signal

from .errors import DocumentError
from .lti import StateSpace
from .stability import FanVasePoint, FanVaseSpec

__all__ = [
    "FORMAT_VERSION",
    "SystemDocument",
    "load_json",
    "parse_system",
    "parse_matrix",
    "parse_fan_vase",
    "second_order_realization",
    "system_to_document",
]

FORMAT_VERSION = 1
_SYSTEM_KINDS = ("state_space", "second_order", "scalar_rational")


@dataclass(frozen=True)
class SystemDocument:
    kind: str
    system: StateSpace
    label: str = ""
    format_version: int = FORMAT_VERSION


def load_json(source):
    """Read a JSON object from a path, a text stream or an already-parsed dict."""
    if isinstance(source, dict):
        return source
    name = getattr(source, "name", str(source))
    try:
        if isinstance(source, io.IOBase) or hasattr(source, "read"):
            doc = json.load(source)
        else:
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
    except OSError as exc:
        raise DocumentError(f"cannot read {name}: {exc.strerror or exc}", "$") from exc
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{name}: invalid JSON ({exc.msg} at line {exc.lineno})",
                            "$") from exc
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object", "$")
    return doc


def _version(doc):
    v = doc.get("format_version", FORMAT_VERSION)
    if v != FORMAT_VERSION:
        raise DocumentError(f"unsupported format_version {v!r}", "$.format_version")
    return v


def _field(doc, key, *aliases):
    for k in (key,) + aliases:
        if k in doc:
            return doc[k], f"$.{k}"
    raise DocumentError(f"missing field {key!r}", f"$.{key}")


def _number(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DocumentError(f"expected a number, got {type(x).__name__}", path)
    if not math.isfinite(x):
        raise DocumentError("numbers must be finite", path)
    return float(x)


def _real_matrix(x, path, allow_empty=False):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return np.array([[_number(x, path)]])
    if not isinstance(x, list):
        raise DocumentError("expected a nested array of numbers", path)
    if not x:
        if allow_empty:
            return np.zeros((0, 0))
        raise DocumentError("matrix must not be empty", path)
    if all(not isinstance(r, list) for r in x):
        # a flat list is one row
        x = [x]
    rows = []
    width = None
    for i, row in enumerate(x):
        p = f"{path}[{i}]"
        if not isinstance(row, list):
            raise DocumentError("expected a row (array)", p)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DocumentError(f"ragged matrix: row has {len(row)} entries, expected {width}", p)
        rows.append([_number(v, f"{p}[{j}]") for j, v in enumerate(row)])
    return np.array(rows, dtype=float).reshape(len(rows), width)


def _shape_check(m, shape, path):
    if m.shape != shape:
        raise DocumentError(f"shape {m.shape} does not match expected {shape}", path)


def _state_space(doc):
    a, pa = _field(doc, "a")
    b, pb = _field(doc, "b")
    c, pc = _field(doc, "c")
    d, pd = _field(doc, "d")
    d = _real_matrix(d, pd)
    a = _real_matrix(a, pa, allow_empty=True)
    ny, nu = d.shape
    nx = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise DocumentError(f"a must be square, got shape {a.shape}", pa)
    b = _real_matrix(b, pb, allow_empty=True).reshape(nx, -1) if nx else np.zeros((0, nu))
    c = _real_matrix(c, pc, allow_empty=True) if nx else np.zeros((ny, 0))
    _shape_check(b, (nx, nu), pb)
    _shape_check(c, (ny, nx), pc)
    return StateSpace(a, b, c, d)


def second_order_realization(m, c_damp, k, b_in, h1, h2):
    """First-order realization of ``(H1 s + H2)(M s^2 + C s + K)^{-1} B``.

    States are ``(q, q')``.
    """
    n = m.shape[0]
    mi_k = np.linalg.solve(m, k)
    mi_c = np.linalg.solve(m, c_damp)
    mi_b = np.linalg.solve(m, b_in)
    a = np.block([[np.zeros((n, n)), np.eye(n)], [-mi_k, -mi_c]])
    b = np.vstack([np.zeros((n, b_in.shape[1])), mi_b])
    c = np.hstack([h2, h1])
    d = np.zeros((h1.shape[0], b_in.shape[1]))
    return StateSpace(a, b, c, d)


def _second_order(doc):
    mats = {}
    for key in ("m", "c_damp", "k", "b_in", "h1", "h2"):
        val, p = _field(doc, key)
        mats[key] = (_real_matrix(val, p), p)
    m, pm = mats["m"]
    n = m.shape[0]
    for key in ("m", "c_damp", "k"):
        _shape_check(mats[key][0], (n, n), mats[key][1])
    if np.max(np.abs(m - m.T)) > 1e-12 * (1.0 + np.max(np.abs(m))):
        raise DocumentError("mass matrix must be symmetric", pm)
    if np.linalg.eigvalsh(m)[0] <= 0:
        raise DocumentError("mass matrix must be positive definite", pm)
    b_in, pb = mats["b_in"]
    if b_in.shape[0] != n:
        raise DocumentError(f"b_in needs {n} rows, got {b_in.shape[0]}", pb)
    h1, p1 = mats["h1"]
    h2, p2 = mats["h2"]
    if h1.shape[1] != n:
        raise DocumentError(f"h1 needs {n} columns, got {h1.shape[1]}", p1)
    _shape_check(h2, h1.shape, p2)
    return second_order_realization(m, mats["c_damp"][0], mats["k"][0], b_in, h1, h2)


def _coefficients(x, path):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        x = [x]
    if not isinstance(x, list) or not x:
        raise DocumentError("expected a non-empty list of coefficients", path)
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(x)])


def _scalar_rational(doc):
    num, pn = _field(doc, "numerator", "num")
    den, pd = _field(doc, "denominator", "den")
    num = np.trim_zeros(_coefficients(num, pn), "f")
    den = np.trim_zeros(_coefficients(den, pd), "f")
    if den.size == 0:
        raise DocumentError("denominator is identically zero", pd)
    if num.size > den.size:
        raise DocumentError("transfer function must be proper", pn)
    if num.size == 0:
        num = np.zeros(1)
    a, b, c, d = scipy.signal.tf2ss(num, den)
    return StateSpace(a, b, c, d)


def parse_system(source):
    """Validated :class:`SystemDocument` from a path, stream or dict."""
    doc = load_json(source)
    version = _version(doc)
    kind, _ = _field(doc, "kind")
    if kind not in _SYSTEM_KINDS:
        raise DocumentError(f"unknown system kind {kind!r}; expected one of {_SYSTEM_KINDS}",
                            "$.kind")
    label = doc.get("label", "")
    if not isinstance(label, str):
        raise DocumentError("label must be a string", "$.label")
    build = {"state_space": _state_space, "second_order": _second_order,
             "scalar_rational": _scalar_rational}[kind]
    try:
        sys = build(doc)
    except DocumentError:
        raise
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise DocumentError(str(exc), "$") from exc
    return SystemDocument(kind, sys, label, version)


def _entry(v, path):
    if isinstance(v, list):
        if len(v) != 2:
            raise DocumentError("complex entries are [re, im] pairs", path)
        return complex(_number(v[0], f"{path}[0]"), _number(v[1], f"{path}[1]"))
    return complex(_number(v, path))


def parse_matrix(source):
    """Square complex matrix from a ``matrix`` document."""
    doc = load_json(source)
    _version(doc)
    kind = doc.get("kind", "matrix")
    if kind != "matrix":
        raise DocumentError(f"expected kind 'matrix', got {kind!r}", "$.kind")
    rows, path = _field(doc, "entries")
    if not isinstance(rows, list) or not rows:
        raise DocumentError("entries must be a non-empty array of rows", path)
    out = []
    for i, row in enumerate(rows):
        p = f"{path}[{i}]"
        if not isinstance(row, list) or len(row) != len(rows):
            raise DocumentError(f"matrix must be square with {len(rows)} columns", p)
        out.append([_entry(v, f"{p}[{j}]") for j, v in enumerate(row)])
    return np.array(out, dtype=complex)


def _bool(x, path):
    if not isinstance(x, bool):
        raise DocumentError("expected true or false", path)
    return x


def parse_fan_vase(source):
    """:class:`FanVaseSpec` from a ``fan_vase`` document."""
    doc = load_json(source)
    _version(doc)
    kind = doc.get("kind", "fan_vase")
    if kind != "fan_vase":
        raise DocumentError(f"expected kind 'fan_vase', got {kind!r}", "$.kind")
    pieces, path = _field(doc, "pieces")
    if not isinstance(pieces, list) or not pieces:
        raise DocumentError("pieces must be a non-empty array", path)
    pts = []
    for i, pc in enumerate(pieces):
        p = f"{path}[{i}]"
        if not isinstance(pc, dict):
            raise DocumentError("each piece must be an object", p)
        kw = {}
        for key in ("alpha", "beta", "gamma"):
            if key in pc:
                kw[key] = _number(pc[key], f"{p}.{key}")
        for key, name in (("phase", "phase_enabled"), ("gain", "gain_enabled"),
                          ("phase_closed", "phase_closed"), ("gain_closed", "gain_closed")):
            if key in pc:
                kw[name] = _bool(pc[key], f"{p}.{key}")
        try:
            pts.append(FanVasePoint(**kw))
        except ValueError as exc:
            raise DocumentError(str(exc), p) from exc
    bps = doc.get("breakpoints", [])
    if not isinstance(bps, list):
        raise DocumentError("breakpoints must be an array", "$.breakpoints")
    bps = tuple(_number(v, f"$.breakpoints[{i}]") for i, v in enumerate(bps))
    rule = doc.get("at_breakpoints", "both")
    try:
        return FanVaseSpec(tuple(pts), bps, rule)
    except ValueError as exc:
        raise DocumentError(str(exc), "$") from exc


def system_to_document(sys, label=""):
    """``state_space`` document for `sys` (inverse of :func:`parse_system`)."""
    return {"format_version": FORMAT_VERSION, "kind": "state_space", "label": label,
            "a": sys.a.tolist(), "b": sys.b.tolist(), "c": sys.c.tolist(),
            "d": sys.d.tolist()}
