"""Perpetual double-barrier problem for a fixed spectral parameter, solved in dual space.

Samples of two functions are carried: ``W_plus`` on the lower grid and
``W_minus`` on the upper grid.  Starting from ``W_plus_1 = -i/xi`` and
``W_minus_1 = i/xi`` the recursion

    W_plus_{j+1}  =  i * K_mp W_minus_j,
    W_minus_{j+1} = -i * K_pm W_plus_j

is summed as ``W = sum_j (-1)^j W_j``.  Kernels are stored so that application
is ``row_vector @ matrix``: ``K_mp`` has shape ``(n_plus, n_minus)`` and maps
samples on the upper grid to samples on the lower grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, GeometryError, NumericalError
from .wiener_hopf import ContourPair, FactorTables

__all__ = [
    "BarrierGeometry",
    "DualState",
    "KernelMatrices",
    "seed",
    "build_kernels",
    "solve_series",
    "solve_direct",
    "evaluate_correction",
    "spectral_radius",
]


@dataclass(frozen=True)
class BarrierGeometry:
    """Log-barriers ``h_minus < h_plus``."""

    h_minus: float
    h_plus: float

    def __post_init__(self):
        if not (math.isfinite(self.h_minus) and math.isfinite(self.h_plus)):
            raise GeometryError("barriers must be finite")
        if not self.h_minus < self.h_plus:
            raise GeometryError(f"barriers out of order: h_minus={self.h_minus} >= h_plus={self.h_plus}")

    @classmethod
    def from_prices(cls, H_minus: float, H_plus: float) -> "BarrierGeometry":
        if not (H_minus > 0 and H_plus > 0):
            raise GeometryError("barrier levels must be positive")
        if not H_minus < H_plus:
            raise GeometryError(f"barriers out of order: {H_minus} >= {H_plus}")
        return cls(math.log(H_minus), math.log(H_plus))

    @property
    def width(self) -> float:
        return self.h_plus - self.h_minus

    def contains(self, x: float) -> bool:
        return self.h_minus < x < self.h_plus

    def shifted(self, c: float) -> "BarrierGeometry":
        return BarrierGeometry(self.h_minus + c, self.h_plus + c)

    def mirrored(self) -> "BarrierGeometry":
        return BarrierGeometry(-self.h_plus, -self.h_minus)


@dataclass(frozen=True, eq=False)
class DualState:
    """Samples of ``W_plus`` (lower grid) and ``W_minus`` (upper grid).

    ``terms`` and ``increments`` are filled by :func:`solve_series`.
    """

    W_plus: np.ndarray
    W_minus: np.ndarray
    terms: int = 0
    increments: tuple = field(default=())

    @property
    def last_increment(self) -> float:
        return self.increments[-1] if self.increments else 0.0


@dataclass(frozen=True, eq=False)
class KernelMatrices:
    """``K_mp``: upper-grid samples to lower-grid samples; ``K_pm``: the converse."""

    K_mp: np.ndarray
    K_pm: np.ndarray


def seed(pair: ContourPair) -> DualState:
    """First terms ``W_plus_1 = -i/xi`` on the lower grid and ``W_minus_1 = i/xi`` on the upper grid."""
    xm = pair.L_minus.points
    xp = pair.L_plus.points
    if np.any(xm == 0) or np.any(xp == 0):
        raise GeometryError("grids must avoid xi = 0")
    return DualState(-1j / xm, 1j / xp)


def build_kernels(p, factors: FactorTables, geometry: BarrierGeometry, pair: ContourPair,
                  collision_floor: float = 1e-8) -> KernelMatrices:
    """Discretised kernels with quadrature weights folded into the source side.

    The upper-grid source factor uses ``(1 - i*mu*xi/q) * phi_minus/phi_plus0``
    instead of the raw ratio ``phi_minus/phi_plus``, which grows on the wings.
    """
    if pair.min_separation < collision_floor:
        raise GeometryError(f"contour collision: separation {pair.min_separation:.3e}")
    q = factors.q
    w = geometry.width
    gp, gm = pair.L_plus, pair.L_minus
    xp, xm = gp.points, gm.points
    src_p = (gp.zeta / (2 * math.pi)) * gp.derivs * np.exp(1j * w * xp) \
        * (1 - 1j * p.mu * xp / q) * factors.phi_minus_on_plus / factors.phi_plus0_on_plus
    src_m = (gm.zeta / (2 * math.pi)) * gm.derivs * np.exp(-1j * w * xm) \
        * factors.phi_plus_on_minus / factors.phi_minus_on_minus
    K_mp = src_p[:, None] / (xp[:, None] - xm[None, :])
    K_pm = src_m[:, None] / (xm[:, None] - xp[None, :])
    if not (np.all(np.isfinite(K_mp)) and np.all(np.isfinite(K_pm))):
        raise NumericalError("non-finite kernel entries")
    return KernelMatrices(K_mp, K_pm)


def _sup(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(np.max(np.abs(a)), np.max(np.abs(b))))


def solve_series(kernels: KernelMatrices, state0: DualState, M0: int = 10,
                 tol: float = 1e-15) -> DualState:
    """Partial sums of the alternating series, stopped at ``tol`` or after ``M0`` steps.

    Stops when the sup-norm of the newest term drops below ``tol`` or when
    ``M0`` terms beyond the first have been added.

    Raises
    ------
    ConvergenceError
        If the last increment still exceeds ``100*tol`` after ``M0`` steps.
    """
    if M0 < 1:
        raise ValueError("M0 must be >= 1")
    Up, Um = -state0.W_plus, -state0.W_minus
    Wp, Wm = Up.copy(), Um.copy()
    incs = []
    for _ in range(M0):
        # (-1)^{j+1} W_{j+1} = -(-1)^j * (+-i) K W_j
        Up, Um = -1j * (Um @ kernels.K_mp), 1j * (Up @ kernels.K_pm)
        Wp += Up
        Wm += Um
        incs.append(_sup(Up, Um))
        if incs[-1] < tol:
            break
    if incs[-1] > 100 * tol:
        raise ConvergenceError(f"series not converged: increment {incs[-1]:.3e} after {len(incs)} steps")
    return DualState(Wp, Wm, terms=len(incs) + 1, increments=tuple(incs))


def solve_direct(kernels: KernelMatrices, state0: DualState, method: str = "solve") -> DualState:
    """Sum the series in closed form through the composed two-step maps.

    Pairs of terms give ``W0 = W_2 - W_1`` and the composed maps
    ``K_pm @ K_mp`` (lower to lower) and ``K_mp @ K_pm`` (upper to upper), so
    ``W = W0 (I - K)^{-1}``.  ``method="inverse"`` forms the inverse explicitly;
    ``method="solve"`` solves the transposed linear systems.
    """
    Kmp, Kpm = kernels.K_mp, kernels.K_pm
    W1p, W1m = state0.W_plus, state0.W_minus
    W2p = 1j * (W1m @ Kmp)
    W2m = -1j * (W1p @ Kpm)
    W0p, W0m = W2p - W1p, W2m - W1m
    Kp = Kpm @ Kmp
    Km = Kmp @ Kpm
    Ip = np.eye(Kp.shape[0])
    Im = np.eye(Km.shape[0])
    try:
        if method == "inverse":
            Wp = W0p @ np.linalg.inv(Ip - Kp)
            Wm = W0m @ np.linalg.inv(Im - Km)
        elif method == "solve":
            Wp = np.linalg.solve((Ip - Kp).T, W0p)
            Wm = np.linalg.solve((Im - Km).T, W0m)
        else:
            raise ValueError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"singular system: {e}") from e
    return DualState(Wp, Wm, terms=0)


def evaluate_correction(state: DualState, factors: FactorTables, geometry: BarrierGeometry,
                        pair: ContourPair, x):
    """Laplace-space barrier correction times ``q`` at log-spot(s) ``x``.

    Returns ``sum`` over the lower grid of ``W_plus*exp(i(x-h_plus)xi)*phi_plus*w``
    plus the corresponding upper-grid sum, each divided by ``2*pi``.  Scalar in,
    scalar out; arrays are evaluated element-wise.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all((xs > geometry.h_minus) & (xs < geometry.h_plus)):
        raise GeometryError("spot outside corridor")
    gp, gm = pair.L_plus, pair.L_minus
    am = state.W_plus * factors.phi_plus_on_minus * gm.weights / (2 * math.pi)
    ap = state.W_minus * factors.phi_minus_on_plus * gp.weights / (2 * math.pi)
    # One spot at a time so that a spot's value does not depend on the batch it
    # is evaluated in; the Laplace inversion amplifies rounding differences.
    out = np.empty(len(xs), dtype=complex)
    for i, xv in enumerate(xs):
        out[i] = np.sum(np.exp(1j * (xv - geometry.h_plus) * gm.points) * am) \
            + np.sum(np.exp(1j * (xv - geometry.h_minus) * gp.points) * ap)
    return complex(out[0]) if np.ndim(x) == 0 else out


def spectral_radius(kernels: KernelMatrices, iters: int = 200, seed_: int = 0) -> float:
    """Power-iteration estimate of the spectral radius of ``K_pm @ K_mp``."""
    K = kernels.K_pm @ kernels.K_mp
    rng = np.random.default_rng(seed_)
    v = rng.standard_normal(K.shape[0]) + 1j * rng.standard_normal(K.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = v @ K
        nrm = np.linalg.norm(u)
        if nrm == 0:
            return 0.0
        lam = nrm
        v = u / nrm
    return float(lam)
