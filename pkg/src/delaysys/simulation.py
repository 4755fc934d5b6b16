"""Step responses of delay systems by the method of steps.

Dormand-Prince 5(4) with adaptive step size.  Delayed states are read from
the stored trajectory through cubic Hermite interpolation on each accepted
step, so the step size never exceeds the smallest positive state delay.
Step endpoints are forced onto the points where the solution is known to
lose smoothness: the input switch-on times ``hB_i`` and their shifts by
sums of up to `breakpoint_order` state delays.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .core import Rtds
from .freqresp import _opened

__all__ = [
    "SimulationError",
    "TimeResponse",
    "step_response",
    "settled_step_response",
    "breakpoints",
    "write_step_csv",
]

DEFAULT_POINTS = 501
MAX_STEPS = 2_000_000

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class SimulationError(ArithmeticError):
    pass


@dataclass
class TimeResponse:
    """Sampled step response.

    ``outputs[k, i, j]`` is output i at ``times[k]`` for a unit step on
    input j.
    """

    times: np.ndarray
    outputs: np.ndarray
    system_name: str = ""
    steps: int = 0


def breakpoints(sys: Rtds, t_final: float, order: int = 3) -> List[float]:
    """Sorted points in ``(0, t_final)`` where the trajectory may be nonsmooth."""
    state_delays = [h for h in sys.a.delays if h > 0]
    starts = {0.0} | {h for h in sys.b.delays}
    pts = set()
    for k in range(order + 1):
        for combo in itertools.combinations_with_replacement(state_delays, k):
            shift = sum(combo)
            for s in starts:
                t = s + shift
                if 0.0 < t < t_final:
                    pts.add(t)
    return sorted(pts)


class _History:
    """Accepted steps with endpoint values and derivatives."""

    def __init__(self, x0, f0):
        self.t0: List[float] = []
        self.t1: List[float] = []
        self.x0, self.x1, self.f0, self.f1 = [], [], [], []
        self.zero = np.zeros_like(x0)

    def add(self, t0, t1, x0, x1, f0, f1):
        self.t0.append(t0)
        self.t1.append(t1)
        self.x0.append(x0)
        self.x1.append(x1)
        self.f0.append(f0)
        self.f1.append(f1)

    def __call__(self, tau):
        if tau <= 0.0 or not self.t0:
            return self.zero
        k = bisect.bisect_right(self.t0, tau) - 1
        k = min(max(k, 0), len(self.t0) - 1)
        t0, t1 = self.t0[k], self.t1[k]
        if tau > t1:
            # only reachable through rounding at the current step start
            return self.x1[k]
        h = t1 - t0
        s = (tau - t0) / h
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * self.x0[k] + (s3 - 2 * s2 + s) * h * self.f0[k]
                + (-2 * s3 + 3 * s2) * self.x1[k] + (s3 - s2) * h * self.f1[k])

    def sample(self, taus):
        return np.array([self(t) for t in taus])


def _integrate(sys: Rtds, t_final: float, rel_tol: float, abs_tol: float,
               breakpoint_order: int, max_steps: int):
    n, n_u = sys.n, sys.n_u
    a_terms = list(zip(sys.a.delays, sys.a.matrices))
    b_terms = list(zip(sys.b.delays, sys.b.matrices))
    a0 = sys.a.matrices[0]
    delayed_a = [(h, m) for h, m in a_terms if h > 0]
    h_min = min((h for h, _ in delayed_a), default=math.inf)
    x = np.zeros((n, n_u))
    hist = _History(x, x)

    def rhs(t, xt, inputs):
        out = a0 @ xt + inputs
        for h, m in delayed_a:
            out = out + m @ hist(t - h)
        return out

    def input_term(t_mid):
        # u(t - h) = 1 on (h, inf); decided once per step because every
        # switch-on time is a forced step endpoint
        acc = np.zeros((n, n_u))
        for h, m in b_terms:
            if t_mid > h:
                acc = acc + m
        return acc

    stops = breakpoints(sys, t_final, breakpoint_order) + [t_final]
    t = 0.0
    dt = min(0.01 * t_final, h_min, stops[0])
    steps = 0
    stop_idx = 0
    while t < t_final:
        if steps >= max_steps:
            raise SimulationError(
                f"step limit {max_steps} reached at t={t:.6g} (dt={dt:.3g}); the system may be stiff")
        while stops[stop_idx] <= t:
            stop_idx += 1
        target = stops[stop_idx]
        dt = min(dt, h_min, target - t)
        last = (t + dt >= target * (1 - 1e-14))
        if last:
            dt = target - t
        if dt < 1e-13 * max(1.0, t_final):
            raise SimulationError(f"step size underflow at t={t:.6g}; the system may be stiff")
        inputs = input_term(t + 0.5 * dt)
        k = [rhs(t, x, inputs)]
        for i in range(1, 7):
            xi = x + dt * sum(c * kk for c, kk in zip(_A[i], k) if c != 0.0)
            k.append(rhs(t + _C[i] * dt, xi, inputs))
        x_new = x + dt * sum(c * kk for c, kk in zip(_B5, k) if c != 0.0)
        err_vec = dt * sum(c * kk for c, kk in zip(_E, k))
        scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2))) if err_vec.size else 0.0
        steps += 1
        if err <= 1.0:
            t_new = target if last else t + dt
            hist.add(t, t_new, x, x_new, k[0], k[6])
            t, x = t_new, x_new
            factor = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
        dt = dt * factor
    return hist, steps


def step_response(sys: Rtds, t_final: float, rel_tol: float = 1e-8, abs_tol: float = 1e-10,
                  times: Optional[Sequence[float]] = None, points: int = DEFAULT_POINTS,
                  breakpoint_order: int = 3, max_steps: int = MAX_STEPS) -> TimeResponse:
    """Unit-step response of every input channel from zero initial history.

    Parameters
    ----------
    t_final
        End of the simulation window.
    times
        Sample times in ``[0, t_final]``; default ``points`` uniform samples.
    breakpoint_order
        Largest number of state delays added to an input switch-on time when
        forcing step endpoints.

    Raises
    ------
    SimulationError
        On step-size underflow or when `max_steps` is exceeded.
    """
    if not t_final > 0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    if times is None:
        times = np.linspace(0.0, t_final, points)
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or times[-1] > t_final * (1 + 1e-12)
                       or np.any(np.diff(times) <= 0)):
        raise ValueError("sample times must be increasing within [0, t_final]")
    hist, steps = _integrate(sys, t_final, rel_tol, abs_tol, breakpoint_order, max_steps)

    outputs = np.zeros((len(times), sys.n_y, sys.n_u))
    for h, m in zip(sys.c.delays, sys.c.matrices):
        if m.any():
            outputs += np.einsum("ij,kjl->kil", m, hist.sample(times - h))
    for h, m in zip(sys.d.delays, sys.d.matrices):
        outputs += (times >= h)[:, None, None] * m
    return TimeResponse(times, outputs, sys.name or "", steps)


def settled_step_response(sys: Rtds, t_start: Optional[float] = None, t_max: float = 2000.0,
                          settle_tol: float = 1e-4, **kw) -> TimeResponse:
    """Step response over a window long enough for the output to settle.

    Starting at `t_start` (default ``max(10, 20 * max delay)``) the window
    doubles until the response moves by less than
    ``settle_tol * max(1, max|y|)`` over its last 10%, or until `t_max`.
    """
    t_final = t_start or max(10.0, 20.0 * sys.max_delay)
    while True:
        resp = step_response(sys, t_final, **kw)
        tail = resp.outputs[resp.times >= 0.9 * t_final]
        spread = float(np.max(tail.max(axis=0) - tail.min(axis=0))) if tail.size else 0.0
        level = max(1.0, float(np.abs(resp.outputs).max()))
        if spread <= settle_tol * level or t_final >= t_max:
            return resp
        t_final = min(2.0 * t_final, t_max)


def _fmt(x):
    return f"{float(x):.17g}"


def write_step_csv(responses: Sequence[TimeResponse], path) -> None:
    """Write one or more step responses.

    One response: ``t,y_1_1,y_2_1,...`` with channels column-major over
    (output, input).  Several responses: the same columns preceded by a
    ``system`` column holding each response's name (long format, so the
    systems may use different time grids).
    """
    responses = list(responses)
    n_y, n_u = responses[0].outputs.shape[1:]
    labels = [(i, j) for j in range(n_u) for i in range(n_y)]
    header = ["t"] + [f"y_{i + 1}_{j + 1}" for i, j in labels]
    multi = len(responses) > 1
    with _opened(path) as fh:
        w = csv.writer(fh)
        w.writerow((["system"] if multi else []) + header)
        for k, resp in enumerate(responses):
            if resp.outputs.shape[1:] != (n_y, n_u):
                raise ValueError("all responses must have the same input/output dimensions")
            name = resp.system_name or f"sys{k + 1}"
            for t, y in zip(resp.times, resp.outputs):
                row = [_fmt(t)] + [_fmt(y[i, j]) for i, j in labels]
                w.writerow(([name] if multi else []) + row)
