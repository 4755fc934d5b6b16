"""Frequency-domain evaluation of delay systems.

With ``s = jw`` the delayed sums become ``A(s) = sum_i A_i exp(-s hA_i)``
(likewise B, C, D) and the transfer matrix is
``G(s) = C(s) (sI - A(s))^{-1} B(s) + D(s)``.
"""

from __future__ import annotations

import contextlib
import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .core import DelayedMatrixSum, Rtds

__all__ = [
    "SingularResolventError",
    "FreqSample",
    "FreqResponse",
    "eval_sum",
    "eval_sum_batch",
    "transfer",
    "g_ab",
    "g_ca",
    "default_grid",
    "freq_grid",
    "sigma_data",
    "bode_data",
    "write_freqresp_csv",
    "write_sigma_csv",
    "write_bode_csv",
]

DEFAULT_POINTS = 400


class SingularResolventError(ArithmeticError):
    """``jwI - A(jw)`` is singular at the reported frequency."""

    def __init__(self, omega, detail=""):
        self.omega = float(omega)
        msg = f"singular resolvent jwI - A(jw) at omega={self.omega!r}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


def eval_sum(m: DelayedMatrixSum, omega: float) -> np.ndarray:
    """Return ``sum_i M_i exp(-j omega h_i)`` as a complex matrix."""
    out = np.zeros(m.shape, dtype=complex)
    for h, mat in zip(m.delays, m.matrices):
        out += mat * np.exp(-1j * omega * h)
    return out


def eval_sum_batch(m: DelayedMatrixSum, omegas) -> np.ndarray:
    """Vectorized :func:`eval_sum`; returns shape ``(len(omegas), *m.shape)``."""
    omegas = np.asarray(omegas, dtype=float)
    phases = np.exp(-1j * np.outer(omegas, m.delays))
    return np.einsum("kt,tij->kij", phases, np.asarray(m.matrices))


def _resolvent_matrix(sys: Rtds, omega: float) -> np.ndarray:
    return 1j * omega * np.eye(sys.n) - eval_sum(sys.a, omega)


def _lu(sys: Rtds, omega: float):
    mat = _resolvent_matrix(sys, omega)
    with warnings.catch_warnings():
        # exact singularity is reported below as SingularResolventError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(mat, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.size and (diag.min() == 0.0 or diag.min() <= 1e3 * np.finfo(float).eps * diag.max()):
        raise SingularResolventError(omega)
    return lu, piv


def g_ab(sys: Rtds, omega: float) -> np.ndarray:
    """``(jwI - A(jw))^{-1} B(jw)``, shape ``(n, n_u)``."""
    lu, piv = _lu(sys, omega)
    return scipy.linalg.lu_solve((lu, piv), eval_sum(sys.b, omega), check_finite=False)


def g_ca(sys: Rtds, omega: float) -> np.ndarray:
    """``C(jw) (jwI - A(jw))^{-1}``, shape ``(n_y, n)``."""
    lu, piv = _lu(sys, omega)
    # X R = C  <=>  R^T X^T = C^T  (plain transpose, no conjugation)
    xt = scipy.linalg.lu_solve((lu, piv), eval_sum(sys.c, omega).T, trans=1, check_finite=False)
    return xt.T


def transfer(sys: Rtds, omega: float) -> np.ndarray:
    """Transfer matrix ``G(jw)`` including the feedthrough ``D(jw)``."""
    return eval_sum(sys.c, omega) @ g_ab(sys, omega) + eval_sum(sys.d, omega)


@dataclass(frozen=True)
class FreqSample:
    omega: float
    g: np.ndarray


@dataclass(frozen=True)
class FreqResponse:
    samples: List[FreqSample]
    system_name: str = ""

    def __post_init__(self):
        om = self.omegas
        if len(om) > 1 and not np.all(np.diff(om) > 0):
            raise ValueError("frequency samples must be strictly increasing")

    @property
    def omegas(self) -> np.ndarray:
        return np.array([s.omega for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        """Stacked ``G(jw)`` of shape ``(len, n_y, n_u)``."""
        return np.array([s.g for s in self.samples])


def default_grid(wmin: float = 1e-2, wmax: float = 1e2, points: int = DEFAULT_POINTS) -> np.ndarray:
    return np.logspace(np.log10(wmin), np.log10(wmax), points)


def _thread_count(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("DELAYSYS_THREADS", os.cpu_count() or 1))
    return max(1, threads)


def freq_grid(sys: Rtds, omegas: Sequence[float], threads: Optional[int] = None) -> FreqResponse:
    """Sample ``G(jw)`` on a strictly increasing grid."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or omegas.size == 0:
        raise ValueError("need a nonempty 1-D frequency grid")
    if omegas.size > 1 and not np.all(np.diff(omegas) > 0):
        raise ValueError("frequency grid must be strictly increasing")
    if not np.all(np.isfinite(omegas)):
        raise ValueError("frequency grid must be finite")
    nthreads = _thread_count(threads)
    if nthreads > 1 and omegas.size > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            values = list(pool.map(lambda w: transfer(sys, w), omegas))
    else:
        values = [transfer(sys, w) for w in omegas]
    return FreqResponse([FreqSample(float(w), g) for w, g in zip(omegas, values)],
                        sys.name or "")


def sigma_data(fr: FreqResponse) -> np.ndarray:
    """Singular values per frequency, descending; shape ``(len, min(n_y, n_u))``."""
    return np.linalg.svd(fr.values, compute_uv=False)


def bode_data(fr: FreqResponse):
    """Magnitude in dB and phase in degrees per channel.

    Phase is unwrapped along the grid independently for each (output,
    input) channel, which assumes jumps of less than 180 degrees between
    neighbouring grid points.  Returns ``(mag_db, phase_deg)``, each of shape
    ``(len, n_y, n_u)``.
    """
    g = fr.values
    with np.errstate(divide="ignore"):
        mag_db = 20.0 * np.log10(np.abs(g))
    phase = np.degrees(np.unwrap(np.angle(g), axis=0))
    return mag_db, phase


def _channel_labels(n_y, n_u):
    # column-major over (i, j): i varies fastest
    return [(i, j) for j in range(n_u) for i in range(n_y)]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


@contextlib.contextmanager
def _opened(path):
    # a path, or an already open text stream such as sys.stdout
    if hasattr(path, "write"):
        yield path
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _responses(fr) -> List[FreqResponse]:
    return [fr] if isinstance(fr, FreqResponse) else list(fr)


def _write(responses, path, header, rows_of) -> None:
    # several responses go to one file in long format behind a system column
    responses = _responses(responses)
    multi = len(responses) > 1
    shape = responses[0].values.shape[1:]
    with _opened(path) as fh:
        w = csv.writer(fh)
        w.writerow((["system"] if multi else []) + header(shape))
        for k, fr in enumerate(responses):
            if fr.values.shape[1:] != shape:
                raise ValueError("all responses must have the same input/output dimensions")
            name = fr.system_name or f"sys{k + 1}"
            for row in rows_of(fr):
                w.writerow(([name] if multi else []) + row)


def _pair_header(first, second):
    def header(shape):
        out = ["omega"]
        for i, j in _channel_labels(*shape):
            out += [f"{first}_{i + 1}_{j + 1}", f"{second}_{i + 1}_{j + 1}"]
        return out
    return header


def write_freqresp_csv(responses, path) -> None:
    """CSV ``omega,re_1_1,im_1_1,re_2_1,...`` with 1-based channel indices.

    `responses` is one FreqResponse or a sequence of them; several are
    written in long format with a leading ``system`` column.
    """
    def rows(fr):
        g = fr.values
        labels = _channel_labels(*g.shape[1:])
        for k, om in enumerate(fr.omegas):
            row = [_fmt(om)]
            for i, j in labels:
                row += [_fmt(g[k, i, j].real), _fmt(g[k, i, j].imag)]
            yield row

    _write(responses, path, _pair_header("re", "im"), rows)


def write_sigma_csv(responses, path) -> None:
    """CSV ``omega,sv_1,sv_2,...`` with singular values in descending order."""
    def header(shape):
        return ["omega"] + [f"sv_{k + 1}" for k in range(min(shape))]

    def rows(fr):
        for om, sv in zip(fr.omegas, sigma_data(fr)):
            yield [_fmt(om)] + [_fmt(v) for v in sv]

    _write(responses, path, header, rows)


def write_bode_csv(responses, path) -> None:
    """CSV ``omega,mag_db_1_1,phase_deg_1_1,...`` (column-major channels)."""
    def rows(fr):
        mag, phase = bode_data(fr)
        labels = _channel_labels(*mag.shape[1:])
        for k, om in enumerate(fr.omegas):
            row = [_fmt(om)]
            for i, j in labels:
                row += [_fmt(mag[k, i, j]), _fmt(phase[k, i, j])]
            yield row

    _write(responses, path, _pair_header("mag_db", "phase_deg"), rows)
