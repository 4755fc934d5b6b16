"""Benchmark systems, registry and the random-system timing study.

Only the hot shower and the heated rod are generated here.  The remaining
registry entries describe systems whose matrices are published elsewhere;
they are loaded from JSON files in the system file format, looked up as
``<id>.json`` in the directory named by ``DELAYSYS_BENCH_DIR`` unless a
path is passed explicitly.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import gramians, h2_norm
from .balancing import balanced_truncation
from .core import QuadOptions, Rtds, RtdsError, load_rtds, make_rtds, random_rtds
from .freqresp import _fmt, _opened

__all__ = [
    "BenchmarkEntry",
    "BenchmarkDataMissing",
    "hot_shower",
    "hot_shower_h2",
    "heated_rod",
    "heated_rod_safe_gain",
    "two_resonance",
    "registry",
    "get_entry",
    "load_benchmark",
    "run_benchmark",
    "SWEEP_SIZES_H2",
    "SWEEP_SIZES_GRAM",
    "timing_sweep",
    "write_timing_csv",
    "scaling_exponent",
]


class BenchmarkDataMissing(RtdsError):
    pass


def hot_shower_h2(a: float, b: float, c: float, h: float) -> float:
    """Closed-form H2 norm of x' = -a x(t-h) + b u, y = c x (needs 0 <= a h < pi/2)."""
    return math.sqrt((c * b) ** 2 / (2 * a) * math.cos(a * h) / (1 - math.sin(a * h)))


def hot_shower(a: float = 1.0, b: float = 1.0, c: float = 1.0, h: float = 0.5) -> Tuple[Rtds, float]:
    """Scalar system with one state delay and its analytic H2 norm.

    The system is exponentially stable, and the closed form valid, for
    ``a > 0`` and ``0 < a h < pi/2``.
    """
    if not h > 0:
        raise RtdsError(f"delay h must be positive, got {h}")
    if not (a > 0 and a * h < math.pi / 2):
        raise RtdsError(f"need a > 0 and a*h < pi/2 for a stable hot shower, got a={a}, h={h}")
    sys = make_rtds([(0.0, [[0.0]]), (h, [[-a]])], [(0.0, [[b]])], [(0.0, [[c]])],
                    name=f"hot_shower_h{h:g}")
    return sys, hot_shower_h2(a, b, c, h)


def heated_rod_safe_gain(n: int) -> float:
    """Largest |feedback_gain| for which :func:`heated_rod` is stable for every delay.

    A_0 is symmetric with largest eigenvalue ``-lam`` and ``||A_1||_2 <=
    |gain|``, so ``|gain| < lam`` gives delay-independent stability.
    """
    return 4.0 * (n + 1) ** 2 * math.sin(math.pi / (2 * (n + 1))) ** 2


def heated_rod(n: int = 100, feedback_gain: float = -5.0, delay: float = 1.0,
               name: Optional[str] = None) -> Rtds:
    """Finite-difference heated rod with distributed delayed feedback.

    ``u_t = u_xx + g sin(pi x) u(x, t - delay) + b(x) v(t)`` on (0, 1) with
    Dirichlet ends, discretized on `n` interior points.  A_0 is the scaled
    tridiagonal Laplacian, A_1 the diagonal feedback profile, B heats
    uniformly and C measures the mean temperature.  Stable for
    ``|feedback_gain| < heated_rod_safe_gain(n)`` (about pi^2).
    """
    if n < 2:
        raise RtdsError(f"heated rod needs n >= 2, got {n}")
    if not delay > 0:
        raise RtdsError(f"delay must be positive, got {delay}")
    k = (n + 1) ** 2
    a0 = k * (np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1))
    xi = np.arange(1, n + 1) / (n + 1)
    a1 = np.diag(feedback_gain * np.sin(np.pi * xi))
    b = np.ones((n, 1))
    c = np.ones((1, n)) / (n + 1)
    return make_rtds([(0.0, a0), (delay, a1)], [(0.0, b)], [(0.0, c)],
                     name=name or f"heated_rod_n{n}")


def two_resonance(delay: float = 0.1) -> Rtds:
    """Four-state system with lightly damped resonances near 1 and 30 rad/s.

    The low resonance carries most of the energy; a weak delayed coupling
    (logarithmic-norm bound keeps it stable for any delay) makes it a
    genuine delay system.
    """
    def mode(w, sigma):
        return np.array([[-sigma, w], [-w, -sigma]])

    a0 = np.zeros((4, 4))
    a0[:2, :2] = mode(1.0, 0.2)
    a0[2:, 2:] = mode(30.0, 1.5)
    coupling = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
    a1 = 0.05 * coupling
    b = np.array([[1.0], [0.0], [1.0], [0.0]])
    c = np.array([[0.0, 1.0, 0.0, 1.0]])
    return make_rtds([(0.0, a0), (delay, a1)], [(0.0, b)], [(0.0, c)], name="two_resonance")


@dataclass(frozen=True)
class BenchmarkEntry:
    """One registered benchmark.

    `dims` is ``(n, n_y, n_u)``; for second-order models `n` is the
    mechanical dimension and files may hold either that or the first-order
    dimension ``2 n``.
    """

    id: str
    collection: str
    source: str
    dims: Tuple[int, int, int]
    delay_counts: Tuple[int, int, int, int]
    max_delay: Optional[float]
    description: str
    second_order: bool = False
    generator: Optional[Callable[..., Rtds]] = None
    analytic_h2: Optional[Callable[..., float]] = None

    def accepts(self, sys: Rtds) -> bool:
        n_ok = sys.n == self.dims[0] or (self.second_order and sys.n == 2 * self.dims[0])
        delay_ok = self.max_delay is None or math.isclose(sys.max_delay, self.max_delay)
        return (n_ok and sys.dims[1:] == self.dims[1:]
                and sys.delay_counts == self.delay_counts and delay_ok)


def _hs_generator(a=1.0, b=1.0, c=1.0, h=0.5):
    return hot_shower(a, b, c, h)[0]


_REGISTRY = [
    BenchmarkEntry("HS", "h2", "generated", (1, 1, 1), (1, 0, 0, 0), None,
                   "hot shower, first-order model with user-defined delay",
                   generator=_hs_generator, analytic_h2=hot_shower_h2),
    BenchmarkEntry("Ex2b", "h2", "file", (3, 1, 1), (2, 0, 0, 0), 1.0,
                   "third-order synthetic model with two state delays"),
    BenchmarkEntry("Ex3", "h2", "file", (9, 1, 1), (2, 0, 0, 0), 3.0,
                   "ninth-order discretized PDE model with two state delays"),
    BenchmarkEntry("HE", "h2", "file", (5, 1, 5), (7, 0, 0, 0), 40.0,
                   "heat exchanger with state feedback and PI control"),
    BenchmarkEntry("HR2", "both", "generated", (100, 1, 1), (1, 0, 0, 0), 1.0,
                   "heated rod, 100 states, single delay",
                   generator=lambda **kw: heated_rod(100, name="HR2", **kw)),
    BenchmarkEntry("HR4", "h2", "generated", (10000, 1, 1), (1, 0, 0, 0), 1.0,
                   "heated rod, 10000 states, single delay",
                   generator=lambda **kw: heated_rod(10000, name="HR4", **kw)),
    BenchmarkEntry("MS", "reduction", "file", (1000, 1, 1), (1, 0, 0, 0), 2.0,
                   "coupled mass-spring-damper chain with delayed feedback", second_order=True),
    BenchmarkEntry("P8V", "reduction", "file", (23, 1, 1), (1, 0, 0, 0), 0.005,
                   "platoon of eight vehicles"),
    BenchmarkEntry("Ex1", "reduction", "file", (6, 1, 1), (1, 0, 1, 0), 1.6,
                   "sixth-order synthetic model with one state and one output delay"),
    BenchmarkEntry("SOSPD", "reduction", "file", (2000, 1, 1), (1, 0, 0, 0), 1.0,
                   "second-order system with proportional damping", second_order=True),
]


def registry() -> List[BenchmarkEntry]:
    return list(_REGISTRY)


def get_entry(bench_id: str) -> BenchmarkEntry:
    for e in _REGISTRY:
        if e.id.lower() == bench_id.lower():
            return e
    known = ", ".join(e.id for e in _REGISTRY)
    raise RtdsError(f"unknown benchmark {bench_id!r}; known: {known}")


def load_benchmark(bench_id: str, data_file=None, **params) -> Rtds:
    """Generate or load a registered benchmark system and check its registered dimensions."""
    entry = get_entry(bench_id)
    if entry.source == "generated":
        try:
            sys = entry.generator(**params)
        except TypeError as exc:
            raise RtdsError(f"{entry.id}: invalid generator parameters {sorted(params)} ({exc})") from None
    else:
        if data_file is None:
            base = os.environ.get("DELAYSYS_BENCH_DIR")
            data_file = Path(base) / f"{entry.id}.json" if base else None
        if data_file is None or not Path(data_file).is_file():
            raise BenchmarkDataMissing(
                f"benchmark {entry.id} ({entry.collection} collection) is not generated: supply data file "
                f"{entry.id}.json in the system file format via --data or DELAYSYS_BENCH_DIR")
        sys = load_rtds(data_file)
    if not entry.accepts(sys):
        raise RtdsError(
            f"{entry.id}: system has dims {sys.dims}, delay counts {sys.delay_counts}, "
            f"max delay {sys.max_delay}; expected {entry.dims}, {entry.delay_counts}, {entry.max_delay}")
    return sys


def run_benchmark(bench_id: str, task: str = "h2", opts: Optional[QuadOptions] = None,
                  data_file=None, **params) -> dict:
    """Run ``'h2'`` or ``'reduce:K'`` on a registered benchmark.

    Returns a report dict with the system's dimensions, the task output,
    wall time and quadrature diagnostics.  For ``reduce`` the reduced system
    is under ``'reduced_system'`` (an :class:`Rtds`).
    """
    opts = opts or QuadOptions()
    sys = load_benchmark(bench_id, data_file, **params)
    entry = get_entry(bench_id)
    report = {"id": entry.id, "name": sys.name, "dims": list(sys.dims),
              "delay_counts": list(sys.delay_counts), "max_delay": sys.max_delay,
              "task": task}
    start = time.perf_counter()
    if task == "h2":
        value, diag = h2_norm(sys, opts, full_output=True)
        report["h2"] = value
        report["diagnostics"] = diag
        if entry.analytic_h2 is not None:
            kw = {k: params[k] for k in ("a", "b", "c", "h") if k in params}
            kw = {"a": 1.0, "b": 1.0, "c": 1.0, "h": 0.5, **kw}
            exact = entry.analytic_h2(**kw)
            report["analytic_h2"] = exact
            report["relative_error"] = abs(value - exact) / exact
    elif task.startswith("reduce"):
        try:
            order = int(task.split(":", 1)[1])
        except (IndexError, ValueError):
            raise RtdsError(f"reduce task needs an order, e.g. 'reduce:10', got {task!r}") from None
        reduced, info = balanced_truncation(sys, order, opts)
        report["order"] = order
        report["hsv"] = info.hsv.tolist()
        report["reduced_system"] = reduced
        report["diagnostics"] = info.gramians.diagnostics
    else:
        raise RtdsError(f"unknown task {task!r}; use 'h2' or 'reduce:K'")
    report["wall_time"] = time.perf_counter() - start
    return report


# ------------------------------------------------------------ timing study

SWEEP_SIZES_H2 = list(range(1, 11)) + list(range(20, 101, 10)) + list(range(200, 501, 100))
SWEEP_SIZES_GRAM = list(range(1, 11)) + list(range(20, 101, 10)) + list(range(200, 401, 100))


def timing_sweep(task: str = "h2", sizes: Optional[Iterable[int]] = None, seeds: int = 5,
                 opts: Optional[QuadOptions] = None, progress: Optional[Callable] = None) -> List[dict]:
    """Time ``h2`` or ``gram`` (both gramians) on random systems.

    For each size, `seeds` systems ``random_rtds(n, seed)`` are timed.  Runs
    whose quadrature fails to converge are still timed and counted under
    ``'failures'``.  Returns one row per size with mean and standard
    deviation (population) of the wall times.
    """
    if task not in ("h2", "gram"):
        raise ValueError(f"task must be 'h2' or 'gram', got {task!r}")
    if sizes is None:
        sizes = SWEEP_SIZES_H2 if task == "h2" else SWEEP_SIZES_GRAM
    opts = opts or QuadOptions()
    rows = []
    for n in sizes:
        times, failures, evals = [], 0, []
        for seed in range(seeds):
            sys = random_rtds(n, seed)
            start = time.perf_counter()
            try:
                if task == "h2":
                    _, diag = h2_norm(sys, opts, full_output=True)
                    evals.append(diag["evaluations"])
                else:
                    evals.append(gramians(sys, "co", opts).diagnostics["evaluations"])
            except ArithmeticError:
                failures += 1
            times.append(time.perf_counter() - start)
        row = {"n": n, "runs": seeds, "mean_time": float(np.mean(times)),
               "std_time": float(np.std(times)), "failures": failures,
               "mean_evaluations": float(np.mean(evals)) if evals else float("nan")}
        rows.append(row)
        if progress:
            progress(row)
    return rows


def write_timing_csv(rows: Sequence[dict], path) -> None:
    """CSV ``n,runs,mean_time,std_time,relative_time,failures,mean_evaluations``.

    ``relative_time`` is the mean time divided by that of the first row,
    which is the hardware-independent quantity to compare.
    """
    base = rows[0]["mean_time"] if rows else 1.0
    with _opened(path) as fh:
        w = csv.writer(fh)
        w.writerow(["n", "runs", "mean_time", "std_time", "relative_time", "failures", "mean_evaluations"])
        for r in rows:
            w.writerow([r["n"], r["runs"], _fmt(r["mean_time"]), _fmt(r["std_time"]),
                        _fmt(r["mean_time"] / base if base > 0 else float("nan")),
                        r["failures"], _fmt(r["mean_evaluations"])])


def scaling_exponent(rows: Sequence[dict], min_n: int = 10) -> float:
    """Least-squares slope of log(mean time) against log(n) for n >= `min_n`."""
    pts = [(r["n"], r["mean_time"]) for r in rows if r["n"] >= min_n and r["mean_time"] > 0]
    if len(pts) < 2:
        return float("nan")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])
