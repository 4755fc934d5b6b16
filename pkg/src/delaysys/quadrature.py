"""Adaptive Gauss-Kronrod (7/15) quadrature for matrix-valued integrands.

The engine bisects the panel with the largest error estimate until the
summed estimate drops below ``max(abs_tol, rel_tol * ||Q||_F)``.  Intervals
of the form ``(lo, inf)`` are mapped onto ``[0, 1)`` with
``w = lo + t / (1 - t)``.
"""

from __future__ import annotations

import heapq
import math
import threading
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

__all__ = ["QuadResult", "QuadratureError", "integrate_matrix", "evaluation_count"]

# Kronrod abscissae on [-1, 1] (nonnegative half) and weights; the Gauss
# 7-point rule uses every second abscissa, starting from index 1.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-node rule, ordered left to right
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS = np.zeros(15)
_GAUSS[1:7:2] = _WG[:3]
_GAUSS[7] = _WG[3]
_GAUSS[9:15:2] = _WG[2::-1]
_EPS = np.finfo(float).eps

DEFAULT_INITIAL_PANELS = 10


class QuadratureError(ArithmeticError):
    """Integrand returned a non-finite value."""

    def __init__(self, omega, msg=None):
        self.omega = float(omega)
        super().__init__(msg or f"integrand is not finite at omega={self.omega!r}")


class _Tally:
    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, k):
        with self._lock:
            self.count += k


_TALLY = _Tally()


def evaluation_count() -> int:
    """Total integrand evaluations performed by this process so far."""
    return _TALLY.count


@dataclass
class QuadResult:
    value: np.ndarray
    abs_error_estimate: float
    evaluations: int
    converged: bool
    panels: int = 0


def _panel(fn, a, b, shape, estimator="kronrod"):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = fn(mid + half * _NODES)
    k15 = half * np.tensordot(_KRONROD, vals, axes=1)
    g7 = half * np.tensordot(_GAUSS, vals, axes=1)
    if estimator == "kronrod":
        return k15.reshape(shape), _fnorm(k15 - g7)
    return k15.reshape(shape), _quadpack_estimate(vals, k15, g7, half)


def _quadpack_estimate(vals, k15, g7, half):
    # |K - G| alone can vanish by accident on oscillatory panels, so it is
    # weighed against the spread of f over the panel
    err = _fnorm(k15 - g7)
    w = np.abs(_KRONROD).reshape((-1,) + (1,) * (vals.ndim - 1))
    resabs = _fnorm(abs(half) * np.sum(w * np.abs(vals), axis=0))
    mean = k15 / (2.0 * half) if half else k15
    resasc = _fnorm(abs(half) * np.sum(w * np.abs(vals - mean), axis=0))
    if resasc > 0 and err > 0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    if resabs > np.finfo(float).tiny / (50 * _EPS):
        err = max(50 * _EPS * resabs, err)
    return err


def integrate_matrix(f: Callable, interval: Tuple[float, float], abs_tol: float = 1e-10,
                     rel_tol: float = 1e-6, max_panels: int = 10_000,
                     vectorized: bool = False,
                     initial_panels: int = DEFAULT_INITIAL_PANELS,
                     breakpoints=None, scale: float = 1.0,
                     estimator: str = "kronrod") -> QuadResult:
    """Integrate a matrix-valued function over ``(lo, hi)``.

    Parameters
    ----------
    f
        Integrand.  With ``vectorized=False`` it maps one float to an array;
        with ``vectorized=True`` it maps a 1-D array of k points to an array
        of shape ``(k, ...)``.
    interval
        ``(lo, hi)`` with ``lo`` finite and ``hi`` possibly ``inf``.
    abs_tol, rel_tol
        Stop once the summed error estimate is at most
        ``max(abs_tol, rel_tol * ||Q||_F)``.
    initial_panels
        Number of equal panels the (possibly mapped) interval starts with.
        Ignored when `breakpoints` is given.
    breakpoints
        Interior points of ``(lo, hi)`` that become the initial panel edges.
    scale
        For ``hi = inf`` the map is ``w = lo + scale * t / (1 - t)``.
    max_panels
        Subdivision budget.  When exhausted the result comes back with
        ``converged=False``; the caller decides whether that is fatal.
    estimator
        Panel error estimate.  ``'kronrod'`` is ``||K15 - G7||_F``.
        ``'quadpack'`` is the QUADPACK qk15 heuristic
        ``resasc * min(1, (200 ||K15 - G7|| / resasc)^1.5)`` with a round-off
        floor; it is more pessimistic and less easily fooled by oscillatory
        integrands, at the price of more evaluations.  Neither is safe on a
        panel that spans many periods.

    Raises
    ------
    QuadratureError
        If the integrand yields NaN or Inf; carries the offending point.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not math.isfinite(lo):
        raise ValueError("lower limit must be finite")
    if not hi > lo:
        raise ValueError(f"need lo < hi, got ({lo}, {hi})")
    if estimator not in ("kronrod", "quadpack"):
        raise ValueError(f"unknown estimator {estimator!r}")

    def raw(xs):
        if vectorized:
            vals = np.asarray(f(xs))
        else:
            vals = np.array([np.asarray(f(x)) for x in xs])
        _TALLY.add(len(xs))
        return vals

    if math.isinf(hi):
        def fn(ts):
            s = 1.0 - ts
            ws = lo + scale * ts / s
            vals = raw(ws)
            jac = (scale / s ** 2).reshape((-1,) + (1,) * (vals.ndim - 1))
            return _check(vals * jac, ws)
        a, b = 0.0, 1.0
    else:
        def fn(xs):
            return _check(raw(xs), xs)
        a, b = lo, hi

    if breakpoints is not None:
        inner = sorted(float(x) for x in breakpoints if lo < x < hi)
        if math.isinf(hi):
            inner = [(x - lo) / (scale + x - lo) for x in inner]
        edges = np.array([a] + inner + [b])
        initial_panels = len(edges) - 1
    else:
        edges = np.linspace(a, b, initial_panels + 1)
    # the shape is fixed by the first panel
    shape = None
    heap = []
    total = None
    err_total = 0.0
    evaluations = 0
    for k in range(initial_panels):
        val, err = _panel(fn, edges[k], edges[k + 1], shape, estimator)
        shape = val.shape
        evaluations += 15
        total = val.copy() if total is None else total + val
        err_total += err
        heapq.heappush(heap, (-err, k, edges[k], edges[k + 1], val))
    counter = initial_panels
    frozen = []

    converged = False
    while True:
        tol = max(abs_tol, rel_tol * _fnorm(total))
        if err_total <= tol:
            # the running total drifts by cancellation; confirm with a fresh sum
            err_total = sum(-p[0] for p in heap) + sum(-p[0] for p in frozen)
            if err_total <= tol:
                converged = True
                break
        if not heap or len(heap) + len(frozen) >= max_panels:
            break
        neg_err, _, pa, pb, pval = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        if not (pa < pm < pb):
            # cannot be split further in floating point; keep its error
            frozen.append((neg_err, counter, pa, pb, pval))
            counter += 1
            continue
        lval, lerr = _panel(fn, pa, pm, shape, estimator)
        rval, rerr = _panel(fn, pm, pb, shape, estimator)
        evaluations += 30
        total = total - pval + lval + rval
        err_total = err_total + neg_err + lerr + rerr
        heapq.heappush(heap, (-lerr, counter, pa, pm, lval))
        heapq.heappush(heap, (-rerr, counter + 1, pm, pb, rval))
        counter += 2
        if counter % 512 == 0:
            err_total = sum(-p[0] for p in heap) + sum(-p[0] for p in frozen)

    # final sum in panel order so the result does not depend on heap history
    panels = sorted(heap + frozen, key=lambda p: p[2])
    value = np.sum([p[4] for p in panels], axis=0)
    err_total = float(sum(-p[0] for p in panels))
    converged = err_total <= max(abs_tol, rel_tol * _fnorm(value))
    return QuadResult(value, err_total, evaluations, converged, len(panels))


def _fnorm(x) -> float:
    # Frobenius norm without overflow in the squares
    big = float(np.max(np.abs(x))) if np.size(x) else 0.0
    if big == 0.0 or not math.isfinite(big):
        return big
    return big * float(np.linalg.norm(x / big))


def _check(vals, xs):
    if not np.all(np.isfinite(vals)):
        flat = vals.reshape(len(xs), -1)
        bad = int(np.argmax(~np.all(np.isfinite(flat), axis=1)))
        raise QuadratureError(xs[bad])
    return vals
