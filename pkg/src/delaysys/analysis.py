"""H2 norm and (position) gramians of delay systems by frequency quadrature.

All three quantities are integrals over the whole frequency axis of a
Hermitian matrix function whose real part is even in w.  They are folded
onto ``[0, inf)``:

    W_c    = 1/pi int_0^inf Re(G_AB(jw) G_AB(jw)^H) dw
    W_o    = 1/pi int_0^inf Re(G_CA(jw)^H G_CA(jw)) dw
    ||G||^2 = 1/pi int_0^inf trace(G(jw)^H G(jw)) dw

with ``G_AB = (jwI - A(jw))^{-1} B(jw)`` and ``G_CA = C(jw)(jwI - A(jw))^{-1}``.

High frequencies
----------------
Delayed B or C factors make the integrands oscillate like ``cos(dw)/w^2``
forever, which adaptive quadrature resolves only at great cost.  Above a
split frequency ``W = 2 sum_i ||A_i||_2`` the resolvent has the convergent
expansion ``(sI - A)^{-1} = 1/s + A/s^2 + ...``; its first two terms give
an exponential sum ``sum M exp(-jdw) w^{-m}`` (m = 2, 3) that is subtracted
from the integrand and integrated in closed form with generalized
exponential integrals.  Only the ``O(w^-4)`` remainder goes through the
quadrature engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
import scipy.special

from .core import DelayedMatrixSum, QuadOptions, Rtds
from .freqresp import SingularResolventError, eval_sum, eval_sum_batch
from .quadrature import _fnorm, integrate_matrix

__all__ = [
    "IllPosedNormError",
    "QuadratureConvergenceError",
    "GramianPair",
    "h2_norm",
    "gramians",
    "trace_integrand",
    "integrand_values",
]


class IllPosedNormError(ValueError):
    """The H2 norm is infinite because the system has feedthrough."""


class QuadratureConvergenceError(ArithmeticError):
    def __init__(self, what, diagnostics):
        self.diagnostics = diagnostics
        super().__init__(
            f"{what}: quadrature did not converge "
            f"(error estimate {diagnostics['abs_error_estimate']:.3g} after "
            f"{diagnostics['evaluations']} evaluations); the system may not be "
            "exponentially stable, or the tolerances are too tight")


@dataclass
class GramianPair:
    """Controllability/observability gramians over `freq_interval`.

    Either gramian is ``None`` when it was not requested.
    """

    wc: Optional[np.ndarray]
    wo: Optional[np.ndarray]
    freq_interval: Tuple[float, float] = (0.0, math.inf)
    abs_tol: float = 1e-10
    rel_tol: float = 1e-6
    diagnostics: dict = field(default_factory=dict)


# ------------------------------------------------------------ exponential sums
# An exponential sum is a dict {delay: matrix} standing for
# sum_d M_d exp(-s d).

def _expsum(m: DelayedMatrixSum) -> dict:
    return {h: np.asarray(mat) for h, mat in zip(m.delays, m.matrices)}


def _mul(p: dict, q: dict) -> dict:
    out = {}
    for hp, mp in p.items():
        for hq, mq in q.items():
            key = hp + hq
            prod = mp @ mq
            out[key] = out[key] + prod if key in out else prod
    return out


def _transpose(p: dict) -> dict:
    return {h: m.T for h, m in p.items()}


def _eval_expsum(p: dict, ws) -> np.ndarray:
    delays = np.array(list(p))
    mats = np.array(list(p.values()))
    phases = np.exp(-1j * np.outer(ws, delays))
    return np.einsum("kt,tij->kij", phases, mats)


def _exp_integral(delta: float, m: int, a: float, b: float) -> complex:
    """``int_a^b exp(-j delta w) w^-m dw`` for ``0 < a < b <= inf``, m >= 2."""
    if delta == 0.0:
        upper = 0.0 if math.isinf(b) else b ** (1 - m)
        return (a ** (1 - m) - upper) / (m - 1)
    if delta < 0:
        return _exp_integral(-delta, m, a, b).conjugate()

    def antideriv(x):
        # x^(1-m) E_m(j delta x), E_m from E_1 by upward recurrence
        z = 1j * delta * x
        e = scipy.special.exp1(z)
        for k in range(2, m + 1):
            e = (np.exp(-z) - z * e) / (k - 1)
        return x ** (1 - m) * e

    upper = 0.0 if math.isinf(b) else antideriv(b)
    return complex(antideriv(a) - upper)


# ------------------------------------------------------------------ integrands

class _Integrand:
    """Per-frequency integrand for one of the modes 'c', 'o', 'h2'."""

    def __init__(self, sys: Rtds, mode: str, sparse: bool):
        self.sys = sys
        self.mode = mode
        self.sparse = sparse
        a, b, c = _expsum(sys.a), _expsum(sys.b), _expsum(sys.c)
        # leading resolvent-expansion factors X_1, X_2 with integrand
        # Re(X X^H) (trace of it for h2) and X = X_1/s + X_2/s^2 + ...
        if mode == "c":
            self.series = [b, _mul(a, b)]
        elif mode == "o":
            # Re(Y^H Y) = Re(W W^H) with W = Y^T
            self.series = [_transpose(c), _transpose(_mul(c, a))]
        elif mode == "h2":
            self.series = [_mul(c, b), _mul(_mul(c, a), b)]
        else:
            raise ValueError(f"unknown integrand mode {mode!r}")
        if sparse:
            self._sparse_a = [(h, scipy.sparse.csc_matrix(m)) for h, m in zip(sys.a.delays, sys.a.matrices)]
            self._eye = scipy.sparse.identity(sys.n, dtype=complex, format="csc")

    @property
    def shape(self):
        if self.mode == "h2":
            return (1, 1)
        return (self.sys.n, self.sys.n)

    # exact integrand ------------------------------------------------------
    def __call__(self, ws) -> np.ndarray:
        ws = np.asarray(ws, dtype=float)
        if self.sparse:
            return np.array([self._sparse_point(w) for w in ws])
        return self._dense_batch(ws)

    def _finish(self, x):
        # x: (k, rows, cols) complex; returns Re(x x^H) or its trace
        # overflow becomes inf, which the quadrature reports with its frequency
        with np.errstate(over="ignore", invalid="ignore"):
            if self.mode == "h2":
                return np.sum(x.real ** 2 + x.imag ** 2, axis=(1, 2)).reshape(-1, 1, 1)
            return np.einsum("kij,klj->kil", x, x.conj()).real

    def _dense_batch(self, ws):
        sys = self.sys
        res = 1j * ws[:, None, None] * np.eye(sys.n) - eval_sum_batch(sys.a, ws)
        try:
            if self.mode == "o":
                x = np.linalg.solve(res.transpose(0, 2, 1), eval_sum_batch(sys.c, ws).transpose(0, 2, 1))
            else:
                x = np.linalg.solve(res, eval_sum_batch(sys.b, ws))
        except np.linalg.LinAlgError:
            for w, r in zip(ws, res):
                if np.linalg.matrix_rank(r) < sys.n:
                    raise SingularResolventError(w) from None
            raise
        if self.mode == "h2":
            x = eval_sum_batch(sys.c, ws) @ x
        return self._finish(x)

    def _sparse_point(self, w):
        sys = self.sys
        mat = (1j * w) * self._eye
        for h, am in self._sparse_a:
            mat = mat - np.exp(-1j * w * h) * am
        try:
            lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(mat))
        except RuntimeError as exc:
            raise SingularResolventError(w, str(exc)) from None
        if self.mode == "o":
            x = lu.solve(np.ascontiguousarray(eval_sum(sys.c, w).T), trans="T")
        else:
            x = lu.solve(np.ascontiguousarray(eval_sum(sys.b, w)))
            if self.mode == "h2":
                x = eval_sum(sys.c, w) @ x
        return self._finish(x[None])[0]

    # high-frequency expansion ---------------------------------------------
    def asymptotic(self, ws) -> np.ndarray:
        ws = np.asarray(ws, dtype=float)
        xs = [_eval_expsum(s, ws) for s in self.series]
        total = np.zeros((len(ws),) + self._inner_shape(), dtype=complex)
        for (coef, m, ip, iq) in self._pairs_index():
            scale = (coef * ws ** (-float(m)))[:, None, None]
            total += scale * np.einsum("kij,klj->kil", xs[ip], xs[iq].conj())
        if self.mode == "h2":
            return np.trace(total.real, axis1=1, axis2=2).reshape(-1, 1, 1)
        return total.real

    def _pairs_index(self):
        # (j^-p (-j)^-q, p + q, p - 1, q - 1) over complete orders p + q
        order = len(self.series)
        for p in range(1, order + 1):
            for q in range(1, order + 1):
                if p + q <= order + 1:
                    yield (1j) ** (-p) * (-1j) ** (-q), p + q, p - 1, q - 1

    def _inner_shape(self):
        first = next(iter(self.series[0].values()))
        return (first.shape[0], first.shape[0])

    def asymptotic_integral(self, a: float, b: float) -> np.ndarray:
        """Closed-form integral of :meth:`asymptotic` over ``(a, b)``, a > 0."""
        acc = np.zeros(self._inner_shape())
        cache = {}
        for coef, m, ip, iq in self._pairs_index():
            for dp, mp in self.series[ip].items():
                for dq, mq in self.series[iq].items():
                    key = (dp - dq, m)
                    if key not in cache:
                        cache[key] = _exp_integral(dp - dq, m, a, b)
                    acc += (coef * cache[key]).real * (mp @ mq.T)
        if self.mode == "h2":
            return np.array([[np.trace(acc)]])
        return acc


def integrand_values(sys: Rtds, omegas, mode: str = "h2", sparse: bool = False) -> np.ndarray:
    """Unscaled integrand values at `omegas`, shape ``(k, p, q)``.

    `mode` is ``'c'`` (controllability), ``'o'`` (observability) or ``'h2'``.
    """
    return _Integrand(sys, mode, sparse)(np.atleast_1d(omegas))


def trace_integrand(sys: Rtds, omega: float, sparse: bool = False) -> float:
    """``trace(G(jw)^H G(jw))`` at one frequency (feedthrough ignored)."""
    return float(integrand_values(sys, [omega], "h2", sparse)[0, 0, 0])


# ----------------------------------------------------------------- integrals

def _norm2(m: np.ndarray) -> float:
    if m.shape[0] <= 300:
        return float(np.linalg.norm(m, 2))
    # power iteration on M^T M; a slight underestimate is absorbed by the
    # factor 2 margin on the split frequency
    v = np.random.default_rng(0).standard_normal(m.shape[1])
    est = 0.0
    for _ in range(30):
        w = m.T @ (m @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = math.sqrt(nrm / np.linalg.norm(v))
        v = w / nrm
    return est


def _split_frequency(sys: Rtds) -> float:
    rho = sum(_norm2(np.asarray(m)) for m in sys.a.matrices)
    return 2.0 * rho if rho > 0 else 1.0


def _decades(lo: float, hi: float, top: float, count: int = 8):
    pts = [top * 10.0 ** (-k) for k in range(count + 1)]
    return [p for p in pts if lo < p < hi]


def _integrate(integrand: _Integrand, opts: QuadOptions):
    """Return ``(value, diagnostics)`` for int over opts.freq_interval."""
    lo, hi = opts.freq_interval
    split = max(lo, _split_frequency(integrand.sys))
    diag = {"evaluations": 0, "panels": 0, "abs_error_estimate": 0.0,
            "converged": True, "split_frequency": split}

    # the two numeric pieces share the error budget
    rel_tol = 0.5 * opts.rel_tol

    def run(f, interval, abs_tol, **kw):
        r = integrate_matrix(f, interval, abs_tol=abs_tol, rel_tol=rel_tol,
                             max_panels=opts.max_panels, vectorized=True, **kw)
        diag["evaluations"] += r.evaluations
        diag["panels"] += r.panels
        diag["abs_error_estimate"] += r.abs_error_estimate
        diag["converged"] = diag["converged"] and r.converged
        return r.value

    low_hi = min(hi, split)
    value = 0.0
    if lo < low_hi:
        value = run(integrand, (lo, low_hi), 0.5 * opts.abs_tol,
                    breakpoints=_decades(lo, low_hi, split))
    if hi > split:
        tail = integrand.asymptotic_integral(split, hi)

        def remainder(ws):
            return integrand(ws) - integrand.asymptotic(ws)

        # tolerance relative to the already known part of the result;
        # geometric panels keep a single panel from spanning many
        # oscillation periods, where the Gauss-Kronrod estimate is unreliable
        tol = max(0.5 * opts.abs_tol, rel_tol * _fnorm(value + tail))
        edges = [e for e in split * 4.0 ** np.arange(1, 16) if e < hi]
        # the remainder oscillates with the delay sums, where |K - G| can
        # vanish by accident; the QUADPACK estimate guards against that
        kw = {"scale": split} if math.isinf(hi) else {}
        rest = run(remainder, (split, hi), tol, breakpoints=edges, estimator="quadpack", **kw)
        value = value + tail + rest
    return value, diag


def h2_norm(sys: Rtds, opts: Optional[QuadOptions] = None, full_output: bool = False):
    """H2 norm of an exponentially stable delay system.

    Stability is assumed, not checked.  With a frequency interval other than
    ``(0, inf)`` in `opts` this is the frequency-limited norm over
    ``(-hi, -lo) U (lo, hi)``.

    Returns the norm, or ``(norm, diagnostics)`` when `full_output` is set.

    Raises
    ------
    IllPosedNormError
        If any D term is nonzero.
    QuadratureConvergenceError
        If the integral does not converge within ``opts.max_panels``.
    """
    opts = opts or QuadOptions()
    if not sys.d.is_zero():
        raise IllPosedNormError("H2 norm is infinite: the D (feedthrough) terms must be zero")
    value, diag = _integrate(_Integrand(sys, "h2", opts.sparse), opts)
    if not diag["converged"]:
        raise QuadratureConvergenceError("h2_norm", diag)
    norm = math.sqrt(max(float(value[0, 0]) / math.pi, 0.0))
    return (norm, diag) if full_output else norm


def _symmetrize(m):
    return 0.5 * (m + m.T)


def gramians(sys: Rtds, which: str = "both", opts: Optional[QuadOptions] = None) -> GramianPair:
    """Controllability and/or observability gramian.

    Parameters
    ----------
    which
        ``'c'``/``'controllability'``, ``'o'``/``'observability'`` or
        ``'co'``/``'both'``.
    """
    opts = opts or QuadOptions()
    key = {"c": "c", "controllability": "c", "o": "o", "observability": "o",
           "co": "co", "both": "co", "oc": "co"}.get(which)
    if key is None:
        raise ValueError(f"which must be 'c', 'o' or 'co', got {which!r}")
    wc = wo = None
    diagnostics = {}
    for mode in key:
        value, diag = _integrate(_Integrand(sys, mode, opts.sparse), opts)
        if not diag["converged"]:
            raise QuadratureConvergenceError(f"gramian '{mode}'", diag)
        diagnostics[mode] = diag
        gram = _symmetrize(value / math.pi)
        if mode == "c":
            wc = gram
        else:
            wo = gram
    diagnostics["evaluations"] = sum(d["evaluations"] for d in diagnostics.values())
    return GramianPair(wc, wo, opts.freq_interval, opts.abs_tol, opts.rel_tol, diagnostics)
