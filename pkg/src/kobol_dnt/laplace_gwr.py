"""Gaver-Wynn-Rho inversion of Laplace transforms on the positive real axis.

With ``tau = ln2/T`` and samples ``F(k*tau)``, ``k = 1..2M``, the Gaver
functionals

    G_n = tau * (2n)!/(n!(n-1)!) * sum_{j=0}^{n} binom(n, j) (-1)^j F((n+j)*tau),  n = 1..M,

converge slowly to ``f(T)``; Wynn's rho algorithm accelerates them.  The
result is the highest even-order entry ``rho_k^{(0)}`` that the ``M``
functionals support (``k = M-2`` for even ``M``).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DntError, PipelineError

__all__ = [
    "GwrConfig",
    "nodes",
    "gaver_functionals",
    "wynn_rho",
    "invert",
    "price_with_shift",
    "closed_form_suite",
    "GwrWarning",
]

_IMAG_TOL = 1e-10


class GwrWarning(UserWarning):
    """Raised for rho breakdowns, discarded imaginary parts and overflow-prone shifts."""


@dataclass(frozen=True)
class GwrConfig:
    """Inversion settings.

    Parameters
    ----------
    T : float
        Time at which the original is reconstructed.
    M : int
        Number of Gaver functionals; ``2M`` transform samples are used.
    r0 : float
        Shift of the spectral parameter, unwound by ``exp(r0*T)``.
    """

    T: float
    M: int = 8
    r0: float = 0.0

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if not math.isfinite(self.r0):
            raise ValueError("r0 must be finite")
        if abs(self.r0) * self.T > 10:
            warnings.warn(f"|r0|*T = {abs(self.r0) * self.T:.1f} > 10 risks overflow", GwrWarning, stacklevel=2)


def nodes(cfg: GwrConfig) -> np.ndarray:
    """``k*ln2/T`` for ``k = 1..2M``."""
    return np.arange(1, 2 * cfg.M + 1) * (math.log(2.0) / cfg.T)


def gaver_functionals(samples, cfg: GwrConfig) -> np.ndarray:
    """Gaver functionals ``G_1..G_M`` from samples at :func:`nodes` (leading axis)."""
    F = np.asarray(samples)
    M = cfg.M
    if F.shape[0] != 2 * M:
        raise ValueError(f"expected {2 * M} samples, got {F.shape[0]}")
    tau = math.log(2.0) / cfg.T
    out = []
    for n in range(1, M + 1):
        pref = tau * math.factorial(2 * n) / (math.factorial(n) * math.factorial(n - 1))
        acc = 0
        for j in range(n + 1):
            acc = acc + (-1) ** j * math.comb(n, j) * F[n + j - 1]
        out.append(pref * acc)
    return np.array(out)


def wynn_rho(G) -> tuple[np.ndarray, bool]:
    """Wynn's rho table on ``G``; returns the accelerated value and a breakdown flag.

    The returned value is ``rho^{(0)}_k`` for the largest even ``k < len(G)``.
    On a zero denominator the last finished even-order entry is returned.
    """
    G = np.asarray(G)
    M = G.shape[0]
    prev = np.zeros((M + 1,) + G.shape[1:], dtype=G.dtype)  # rho_{-1}
    cur = G.copy()                                           # rho_0
    best = cur[0]
    for k in range(1, M):
        m = cur.shape[0] - 1
        den = cur[1:m + 1] - cur[:m]
        if np.any(den == 0) or not np.all(np.isfinite(den)):
            return best, True
        nxt = prev[1:m + 1] + k / den
        prev, cur = cur, nxt
        if k % 2 == 0:
            best = cur[0]
    return best, False


def invert(samples, cfg: GwrConfig):
    """Reconstruct ``f(T)`` from transform samples at :func:`nodes`.

    Samples may carry trailing axes (several originals at once).  Imaginary
    parts above ``1e-10`` trigger a :class:`GwrWarning` before being dropped.
    """
    F = np.asarray(samples)
    val, broke = wynn_rho(gaver_functionals(F, cfg))
    if broke:
        warnings.warn("rho breakdown: returning the last stable entry", GwrWarning, stacklevel=2)
    val = np.asarray(val)
    if np.iscomplexobj(val):
        im = float(np.max(np.abs(val.imag))) if val.size else 0.0
        if im > _IMAG_TOL:
            warnings.warn(f"discarding imaginary part {im:.2e} of the inverse", GwrWarning, stacklevel=2)
        val = val.real
    return float(val) if val.ndim == 0 else val


def price_with_shift(transform_at: Callable, r: float, cfg: GwrConfig,
                     executor: Executor | None = None):
    """Assemble ``exp(-r*T) + exp(r0*T) * invert(samples)``.

    ``transform_at(q)`` returns the Laplace-space barrier correction at the
    total spectral parameter ``q = r + r0 + k*ln2/T``.  Errors are re-raised as
    :class:`PipelineError` tagged with the 1-based node index.
    """
    qs = r + cfg.r0 + nodes(cfg)

    def one(k):
        try:
            return transform_at(qs[k])
        except PipelineError:
            raise
        except (DntError, ArithmeticError, np.linalg.LinAlgError) as e:
            raise PipelineError("node", k + 1, e) from e

    if executor is None:
        samples = [one(k) for k in range(len(qs))]
    else:
        samples = list(executor.map(one, range(len(qs))))
    corr = invert(np.array(samples), cfg)
    return math.exp(-r * cfg.T) + math.exp(cfg.r0 * cfg.T) * corr


def closed_form_suite(M: int = 8, T: float = 0.25) -> list[dict]:
    """Inversions of transforms with known originals, with pass flags."""
    cases = [
        ("1/q", lambda q: 1 / q, 1.0, 1e-12),
        ("1/(q+3)", lambda q: 1 / (q + 3), math.exp(-3 * T), 1e-6),
        ("1/q^2", lambda q: 1 / q ** 2, T, 1e-7),
        ("q/(q^2+1)", lambda q: q / (q ** 2 + 1), math.cos(T), 1e-5),
    ]
    cfg = GwrConfig(T=T, M=M)
    qs = nodes(cfg)
    out = []
    for name, F, exact, tol in cases:
        val = invert(F(qs), cfg)
        err = abs(val - exact)
        out.append({"transform": name, "value": val, "exact": exact, "error": err,
                    "tol": tol, "passed": err < tol})
    return out
