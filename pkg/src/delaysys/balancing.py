"""Balanced realization and (frequency-limited) balanced truncation."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .analysis import GramianPair, gramians
from .core import DelayedMatrixSum, QuadOptions, Rtds, RtdsError

__all__ = [
    "BalancingError",
    "InfoMismatchError",
    "BalancingInfo",
    "square_root_balancing",
    "transform",
    "balanced_realization",
    "balanced_truncation",
    "truncate",
    "energy_fractions",
    "write_hsv_csv",
    "save_info",
    "load_info",
]


class BalancingError(ArithmeticError):
    pass


class InfoMismatchError(ValueError):
    """A precomputed BalancingInfo does not belong to the system/options given."""


@dataclass
class BalancingInfo:
    """Everything needed to re-truncate a system without new quadrature.

    ``t`` maps balanced to original coordinates (x = t z); ``t_inv`` is its
    left inverse.  Both have ``rank`` balanced columns/rows, which equals
    ``n`` unless numerically negligible singular values were dropped.
    """

    t: np.ndarray
    t_inv: np.ndarray
    hsv: np.ndarray
    gramians: GramianPair
    freq_interval: Tuple[float, float]
    fingerprint: str

    @property
    def rank(self) -> int:
        return self.t.shape[1]

    def energy_fractions(self) -> np.ndarray:
        return energy_fractions(self.hsv)


def energy_fractions(hsv) -> np.ndarray:
    """``hsv_i / sum(hsv)``; all zeros for an all-zero input."""
    hsv = np.asarray(hsv, dtype=float)
    total = hsv.sum()
    return hsv / total if total > 0 else np.zeros_like(hsv)


def _factor(w: np.ndarray) -> np.ndarray:
    """Return L with ``w = L L^T``; eigen-factor for semidefinite `w`."""
    try:
        return np.linalg.cholesky(w)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(w)
        # eigenvalues at round-off level carry no information
        floor = len(vals) * np.finfo(float).eps * max(vals.max(), 0.0)
        return vecs * np.sqrt(np.where(vals > floor, vals, 0.0))


def square_root_balancing(wc: np.ndarray, wo: np.ndarray, rank_deficient: str = "warn"):
    """Square-root balancing transformation from two gramians.

    With ``Wc = Lc Lc^T``, ``Wo = Lo Lo^T`` and ``Lo^T Lc = U S V^T``:
    ``T = Lc V S^-1/2`` and ``T^-1 = S^-1/2 U^T Lo^T``.  Singular vector
    signs are fixed so that the first nonzero entry of every column of V is
    positive.

    Singular values below ``n * eps * s_1`` cannot be balanced.  With
    ``rank_deficient='warn'`` the transformation is cut to the numerical
    rank and a warning is issued; with ``'raise'`` a BalancingError is raised.

    Returns ``(t, t_inv, hsv)``; `hsv` always has length n.
    """
    n = wc.shape[0]
    lc = _factor(wc)
    lo = _factor(wo)
    u, s, vt = np.linalg.svd(lo.T @ lc)
    v = vt.T
    for k in range(n):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-14 * np.abs(col).max()) if col.any() else []
        if len(nz) and col[nz[0]] < 0:
            v[:, k] = -col
            u[:, k] = -u[:, k]
    hsv = np.clip(s, 0.0, None)
    if hsv[0] <= 0.0:
        raise BalancingError("both gramians (or their product) are zero; nothing to balance")
    rank = int(np.sum(hsv > n * np.finfo(float).eps * hsv[0]))
    if rank < n:
        msg = (f"balancing is rank deficient: {n - rank} of {n} singular values are "
               f"below {n * np.finfo(float).eps * hsv[0]:.3g}")
        if rank_deficient == "raise":
            raise BalancingError(msg)
        warnings.warn(msg + f"; truncating the transformation to rank {rank}", RuntimeWarning,
                      stacklevel=3)
    root = 1.0 / np.sqrt(hsv[:rank])
    t = lc @ v[:, :rank] * root
    t_inv = (root[:, None] * u[:, :rank].T) @ lo.T
    return t, t_inv, hsv


def transform(sys: Rtds, t: np.ndarray, t_inv: np.ndarray, name: Optional[str] = None) -> Rtds:
    """Apply ``x = t z``: A_i -> t_inv A_i t, B_i -> t_inv B_i, C_i -> C_i t.

    Delays and D are unchanged.  `t` may be rectangular (n x r) for a
    projection.
    """
    def conj(s: DelayedMatrixSum, fn):
        return DelayedMatrixSum(s.delays, tuple(_frozen(fn(m)) for m in s.matrices))

    a = conj(sys.a, lambda m: t_inv @ m @ t)
    b = conj(sys.b, lambda m: t_inv @ m)
    c = conj(sys.c, lambda m: m @ t)
    return Rtds(a, b, c, sys.d, sys.name if name is None else name)


def _frozen(m):
    m = np.ascontiguousarray(m, dtype=float)
    m.setflags(write=False)
    return m


def balanced_realization(sys: Rtds, opts: Optional[QuadOptions] = None,
                         rank_deficient: str = "warn") -> Tuple[Rtds, BalancingInfo]:
    """Gramians by quadrature, then square-root balancing of `sys`.

    Returns the balanced system and the reusable :class:`BalancingInfo`.
    """
    opts = opts or QuadOptions()
    pair = gramians(sys, "co", opts)
    t, t_inv, hsv = square_root_balancing(pair.wc, pair.wo, rank_deficient)
    info = BalancingInfo(t, t_inv, hsv, pair, opts.freq_interval, sys.fingerprint())
    return transform(sys, t, t_inv), info


def truncate(sys: Rtds, order: int) -> Rtds:
    """Keep the leading `order` states of a (balanced) system."""
    if not 1 <= order <= sys.n:
        raise RtdsError(f"order must be in [1, {sys.n}], got {order}")
    keep = slice(0, order)
    a = sys.a.map(lambda m: m[keep, keep])
    b = sys.b.map(lambda m: m[keep, :])
    c = sys.c.map(lambda m: m[:, keep])
    return Rtds(a, b, c, sys.d, sys.name)


def _check_info(sys: Rtds, info: BalancingInfo, opts: Optional[QuadOptions]):
    if info.t.shape[0] != sys.n:
        raise InfoMismatchError(f"info is for a system with n={info.t.shape[0]}, got n={sys.n}")
    if info.fingerprint != sys.fingerprint():
        raise InfoMismatchError("info was computed for a different system")
    if opts is not None and tuple(opts.freq_interval) != tuple(info.freq_interval):
        raise InfoMismatchError(
            f"info frequency interval {info.freq_interval} differs from requested {opts.freq_interval}")


def balanced_truncation(sys: Rtds, order: int, opts: Optional[QuadOptions] = None,
                        info: Optional[BalancingInfo] = None,
                        rank_deficient: str = "warn") -> Tuple[Rtds, BalancingInfo]:
    """Reduce `sys` to `order` states by balanced truncation.

    A frequency interval in `opts` other than ``(0, inf)`` gives the
    frequency-limited variant.  When `info` is supplied no gramians are
    computed; it must come from the same system and frequency interval.
    """
    if not 1 <= order <= sys.n:
        raise RtdsError(f"order must be in [1, {sys.n}], got {order}")
    if info is None:
        balanced, info = balanced_realization(sys, opts, rank_deficient)
    else:
        _check_info(sys, info, opts)
        balanced = transform(sys, info.t, info.t_inv)
    if order > info.rank:
        raise RtdsError(f"order {order} exceeds the numerical rank {info.rank} of the balancing")
    return truncate(balanced, order), info


# ------------------------------------------------------------------ export

def write_hsv_csv(info: BalancingInfo, path) -> None:
    """CSV ``index,hsv,energy_fraction`` (1-based index)."""
    frac = info.energy_fractions()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "hsv", "energy_fraction"])
        for k, (s, e) in enumerate(zip(info.hsv, frac), start=1):
            w.writerow([k, f"{float(s):.17g}", f"{float(e):.17g}"])


def _interval_to_json(iv):
    return [iv[0], None if math.isinf(iv[1]) else iv[1]]


def _interval_from_json(iv):
    return (float(iv[0]), math.inf if iv[1] is None else float(iv[1]))


def save_info(info: BalancingInfo, path) -> None:
    g = info.gramians
    doc = {
        "fingerprint": info.fingerprint,
        "freq_interval": _interval_to_json(info.freq_interval),
        "hsv": info.hsv.tolist(),
        "t": info.t.tolist(),
        "t_inv": info.t_inv.tolist(),
        "wc": g.wc.tolist(),
        "wo": g.wo.tolist(),
        "abs_tol": g.abs_tol,
        "rel_tol": g.rel_tol,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_info(path) -> BalancingInfo:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        iv = _interval_from_json(doc["freq_interval"])
        pair = GramianPair(np.array(doc["wc"], dtype=float), np.array(doc["wo"], dtype=float),
                           iv, float(doc["abs_tol"]), float(doc["rel_tol"]))
        t = np.array(doc["t"], dtype=float)
        t_inv = np.array(doc["t_inv"], dtype=float)
        hsv = np.array(doc["hsv"], dtype=float)
        fingerprint = str(doc["fingerprint"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RtdsError(f"{path}: not a valid balancing info file ({exc})") from None
    if t.ndim != 2 or t_inv.shape != (t.shape[1], t.shape[0]):
        raise RtdsError(f"{path}: inconsistent transformation shapes")
    return BalancingInfo(t, t_inv, hsv, pair, iv, fingerprint)
