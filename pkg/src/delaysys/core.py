"""Retarded time-delay system data model.

A system is written as

    x'(t) = sum_i A_i x(t - hA_i) + sum_i B_i u(t - hB_i)
     y(t) = sum_i C_i x(t - hC_i) + sum_i D_i u(t - hD_i)

with one delay list per coefficient family.  Every family always carries a
term at delay zero (a zero matrix is inserted when none is given).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np

__all__ = [
    "RtdsError",
    "DelayedMatrixSum",
    "Rtds",
    "QuadOptions",
    "make_rtds",
    "random_rtds",
    "load_rtds",
    "save_rtds",
    "rtds_to_dict",
    "rtds_from_dict",
]


class RtdsError(ValueError):
    """Invalid system data: bad shapes, delays or file contents."""


def _as_matrix(m, what: str) -> np.ndarray:
    arr = np.array(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a bare vector is read as a single row, like [2 0.2] in C = [2 0.2]
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise RtdsError(f"{what}: expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RtdsError(f"{what}: matrix entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DelayedMatrixSum:
    """Ordered terms ``(delay, matrix)`` of a delayed coefficient sum.

    Delays are strictly increasing, start at 0, and all matrices share one
    shape.  Use :meth:`from_terms` to build one from unsorted input.
    """

    delays: Tuple[float, ...]
    matrices: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.delays) == 0 or len(self.delays) != len(self.matrices):
            raise RtdsError("a delayed sum needs at least one (delay, matrix) term")
        if self.delays[0] != 0.0:
            raise RtdsError("the first delay of a delayed sum must be 0")
        for d0, d1 in zip(self.delays, self.delays[1:]):
            if not d1 > d0:
                raise RtdsError("delays must be strictly increasing")
        shape = self.matrices[0].shape
        if any(m.shape != shape for m in self.matrices):
            raise RtdsError("all matrices of a delayed sum must share one shape")

    @classmethod
    def from_terms(cls, terms: Iterable, shape: Optional[Tuple[int, int]] = None,
                   what: str = "matrix") -> "DelayedMatrixSum":
        """Validate, sort and complete a list of ``(delay, matrix)`` pairs.

        An empty list yields a zero matrix of `shape` at delay 0.
        """
        pairs = []
        for delay, mat in terms:
            delay = float(delay)
            if not math.isfinite(delay):
                raise RtdsError(f"{what}: delay {delay} is not finite")
            if delay < 0:
                raise RtdsError(f"{what}: negative delay {delay}")
            pairs.append((delay, _as_matrix(mat, what)))
        if not pairs:
            if shape is None:
                raise RtdsError(f"{what}: empty term list and no shape to infer")
            pairs = [(0.0, _as_matrix(np.zeros(shape), what))]
        pairs.sort(key=lambda p: p[0])
        delays = [p[0] for p in pairs]
        if len(set(delays)) != len(delays):
            raise RtdsError(f"{what}: duplicate delay in {delays}")
        if delays[0] != 0.0:
            zero = _as_matrix(np.zeros(pairs[0][1].shape), what)
            pairs.insert(0, (0.0, zero))
        shapes = {p[1].shape for p in pairs}
        if len(shapes) != 1:
            raise RtdsError(f"{what}: matrices have mismatched shapes {sorted(shapes)}")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrices[0].shape

    @property
    def count(self) -> int:
        """Number of delayed terms, excluding the zero-delay one."""
        return len(self.delays) - 1

    @property
    def max_delay(self) -> float:
        return self.delays[-1]

    def terms(self):
        return list(zip(self.delays, self.matrices))

    def total(self) -> np.ndarray:
        """Sum of all coefficient matrices (the value at zero frequency)."""
        return np.sum(self.matrices, axis=0)

    def is_zero(self) -> bool:
        return all(not np.any(m) for m in self.matrices)

    def map(self, fn) -> "DelayedMatrixSum":
        return DelayedMatrixSum(self.delays, tuple(_as_matrix(fn(m), "matrix") for m in self.matrices))

    def __eq__(self, other):
        if not isinstance(other, DelayedMatrixSum):
            return NotImplemented
        return (self.delays == other.delays
                and all(np.array_equal(a, b) for a, b in zip(self.matrices, other.matrices)))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Rtds:
    """A retarded time-delay system.

    Build one with :func:`make_rtds`; direct construction expects already
    validated :class:`DelayedMatrixSum` members.
    """

    a: DelayedMatrixSum
    b: DelayedMatrixSum
    c: DelayedMatrixSum
    d: DelayedMatrixSum
    name: Optional[str] = None

    def __post_init__(self):
        n, n2 = self.a.shape
        if n != n2:
            raise RtdsError(f"A must be square, got {self.a.shape}")
        if self.b.shape[0] != n:
            raise RtdsError(f"B has {self.b.shape[0]} rows, expected {n}")
        if self.c.shape[1] != n:
            raise RtdsError(f"C has {self.c.shape[1]} columns, expected {n}")
        if self.d.shape != (self.c.shape[0], self.b.shape[1]):
            raise RtdsError(f"D has shape {self.d.shape}, expected {(self.c.shape[0], self.b.shape[1])}")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b.shape[1]

    @property
    def n_y(self) -> int:
        return self.c.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int]:
        """``(n, n_y, n_u)``."""
        return (self.n, self.n_y, self.n_u)

    @property
    def delay_counts(self) -> Tuple[int, int, int, int]:
        """``(m_A, m_B, m_C, m_D)``, the number of nonzero delays per family."""
        return (self.a.count, self.b.count, self.c.count, self.d.count)

    @property
    def max_delay(self) -> float:
        return max(s.max_delay for s in (self.a, self.b, self.c, self.d))

    def is_delay_free(self) -> bool:
        return self.max_delay == 0.0

    def renamed(self, name: Optional[str]) -> "Rtds":
        return Rtds(self.a, self.b, self.c, self.d, name)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form (name excluded)."""
        doc = rtds_to_dict(self)
        doc["name"] = None
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Rtds):
            return NotImplemented
        return (self.name == other.name and self.a == other.a and self.b == other.b
                and self.c == other.c and self.d == other.d)

    __hash__ = None

    def __repr__(self):
        n, ny, nu = self.dims
        return (f"Rtds(name={self.name!r}, n={n}, n_y={ny}, n_u={nu}, "
                f"delays A={list(self.a.delays)} B={list(self.b.delays)} "
                f"C={list(self.c.delays)} D={list(self.d.delays)})")


@dataclass(frozen=True)
class QuadOptions:
    """Quadrature and solver settings shared by the analysis routines.

    `freq_interval` restricts all frequency integrals to ``(lo, hi)`` on the
    positive axis (mirrored to the negative axis); ``hi`` may be ``inf``.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-6
    sparse: bool = False
    freq_interval: Tuple[float, float] = (0.0, math.inf)
    max_panels: int = 10_000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise RtdsError("tolerances must be positive")
        lo, hi = self.freq_interval
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and lo >= 0):
            raise RtdsError(f"frequency interval lower bound must be finite and >= 0, got {lo}")
        if not hi > lo:
            raise RtdsError(f"frequency interval must satisfy lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "freq_interval", (lo, hi))
        if self.max_panels < 1:
            raise RtdsError("max_panels must be positive")


def _terms_or_empty(terms) -> list:
    if terms is None:
        return []
    return list(terms)


def make_rtds(a_terms, b_terms, c_terms, d_terms=None, name: Optional[str] = None) -> Rtds:
    """Build and validate a delay system from ``(delay, matrix)`` lists.

    Empty or omitted lists become a zero matrix at delay 0 whose shape is
    inferred from the other families.

    Examples
    --------
    >>> sys = make_rtds([(0, [[-2, -1], [-1.5, -0.5]]), (1, [[0, 0.5], [1, 0]])],
    ...                 [(0, [[1], [-1]])], [(0, [[2, 0.2]])])
    >>> sys.dims, sys.delay_counts
    ((2, 1, 1), (1, 0, 0, 0))
    """
    a_terms, b_terms = _terms_or_empty(a_terms), _terms_or_empty(b_terms)
    c_terms, d_terms = _terms_or_empty(c_terms), _terms_or_empty(d_terms)
    if not a_terms:
        raise RtdsError("A needs at least one term")
    a = DelayedMatrixSum.from_terms(a_terms, what="A")
    n = a.shape[0]

    def inferred(terms):
        return _as_matrix(terms[0][1], "matrix").shape if terms else None

    b_shape, c_shape, d_shape = inferred(b_terms), inferred(c_terms), inferred(d_terms)
    n_u = b_shape[1] if b_shape else (d_shape[1] if d_shape else None)
    n_y = c_shape[0] if c_shape else (d_shape[0] if d_shape else None)
    if n_u is None or n_y is None:
        raise RtdsError("cannot infer input/output sizes: supply B and C (or D)")
    b = DelayedMatrixSum.from_terms(b_terms, (n, n_u), "B")
    c = DelayedMatrixSum.from_terms(c_terms, (n_y, n), "C")
    d = DelayedMatrixSum.from_terms(d_terms, (n_y, n_u), "D")
    return Rtds(a, b, c, d, name)


def random_rtds(n: int, seed: int, n_io: int = 3, n_delays: int = 3,
                bound: float = 3.0) -> Rtds:
    """Random dense delay system for computational-cost studies.

    Uses numpy's PCG64 generator seeded with `seed`.  Input and output sizes
    are `n_io`; A, B and C each get `n_delays` delays drawn independently
    per family from U(0, 1); every matrix entry is drawn from
    U(-bound, bound), and ``bound * I`` is subtracted from A_0.  D is zero.

    The shift pushes A_0 towards stability but does not guarantee it for
    larger `n`.
    """
    if n < 1:
        raise RtdsError(f"state dimension must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))

    def family(rows, cols):
        # open interval (0, 1): redraw the (measure-zero) exact zero
        delays = rng.uniform(0.0, 1.0, size=n_delays)
        while np.any(delays == 0.0) or len(set(delays)) != n_delays:
            delays = rng.uniform(0.0, 1.0, size=n_delays)
        mats = rng.uniform(-bound, bound, size=(n_delays + 1, rows, cols))
        return [(0.0, mats[0])] + [(float(h), m) for h, m in zip(delays, mats[1:])]

    a_terms = family(n, n)
    a_terms[0] = (0.0, a_terms[0][1] - bound * np.eye(n))
    b_terms = family(n, n_io)
    c_terms = family(n_io, n)
    return make_rtds(a_terms, b_terms, c_terms, None, name=f"random_n{n}_s{seed}")


# ---------------------------------------------------------------- file format

def _sum_to_list(s: DelayedMatrixSum) -> list:
    return [{"delay": h, "matrix": m.tolist()} for h, m in zip(s.delays, s.matrices)]


def rtds_to_dict(sys: Rtds) -> dict:
    return {
        "name": sys.name,
        "a": _sum_to_list(sys.a),
        "b": _sum_to_list(sys.b),
        "c": _sum_to_list(sys.c),
        "d": _sum_to_list(sys.d),
    }


def _terms_from_json(doc: dict, key: str) -> list:
    raw = doc.get(key)
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise RtdsError(f"field {key!r} must be a list of {{delay, matrix}} objects")
    out = []
    for k, item in enumerate(raw):
        if not isinstance(item, dict) or set(item) != {"delay", "matrix"}:
            raise RtdsError(f"{key}[{k}] must be an object with exactly 'delay' and 'matrix'")
        delay, mat = item["delay"], item["matrix"]
        if isinstance(delay, bool) or not isinstance(delay, (int, float)):
            raise RtdsError(f"{key}[{k}].delay must be a number")
        if (not isinstance(mat, list) or not mat
                or not all(isinstance(row, list) and row for row in mat)):
            raise RtdsError(f"{key}[{k}].matrix must be a nonempty list of rows")
        if len({len(row) for row in mat}) != 1:
            raise RtdsError(f"{key}[{k}].matrix has ragged rows")
        for row in mat:
            for v in row:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise RtdsError(f"{key}[{k}].matrix entries must be numbers")
        out.append((delay, mat))
    return out


def rtds_from_dict(doc) -> Rtds:
    if not isinstance(doc, dict):
        raise RtdsError("system file must contain a JSON object")
    unknown = set(doc) - {"name", "a", "b", "c", "d"}
    if unknown:
        raise RtdsError(f"unknown fields in system file: {sorted(unknown)}")
    for key in ("a", "b", "c"):
        if key not in doc:
            raise RtdsError(f"system file is missing field {key!r}")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise RtdsError("field 'name' must be a string or null")
    return make_rtds(*(_terms_from_json(doc, k) for k in "abcd"), name=name)


def save_rtds(sys: Rtds, path) -> None:
    """Write `sys` as JSON.  Python's float repr round-trips exactly."""
    Path(path).write_text(json.dumps(rtds_to_dict(sys), indent=1) + "\n", encoding="utf-8")


def load_rtds(path) -> Rtds:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RtdsError(f"{path}: not valid JSON ({exc})") from None
    return rtds_from_dict(doc)

