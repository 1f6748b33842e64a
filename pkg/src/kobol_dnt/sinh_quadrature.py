"""Sinh-deformed contours, truncated uniform grids and the simplified trapezoid rule.

A contour is the image of the real line under

    xi(y) = i*omega1 + b*sinh(i*omega + y),

and a grid samples it at y = zeta*k, k = -N..N.  Integrals over the contour
are approximated by ``zeta * sum(f(xi_k) * xi'(y_k))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

__all__ = [
    "SinhContour",
    "DeformedGrid",
    "build_contour",
    "build_grid",
    "default_step",
    "balanced_step",
    "select_truncation",
    "integrate",
]


@dataclass(frozen=True)
class SinhContour:
    """Contour ``xi(y) = i*omega1 + b*sinh(i*omega + y)``.

    Parameters
    ----------
    omega1 : float
        Shift along the imaginary axis.
    b : float
        Scale, must be positive.
    omega : float
        Wing angle, ``|omega| < pi/2``.  Positive values send the wings into
        the upper half-plane, negative values into the lower one.
    """

    omega1: float
    b: float
    omega: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.omega1, self.b, self.omega)):
            raise GeometryError("contour parameters must be finite")
        if self.b <= 0:
            raise GeometryError(f"contour scale b must be positive, got {self.b}")
        if abs(self.omega) >= math.pi / 2:
            raise GeometryError(f"contour angle must satisfy |omega| < pi/2, got {self.omega}")

    @property
    def crossing(self) -> float:
        """Imaginary part ``a`` of the crossing point ``i*a`` with the imaginary axis."""
        return self.omega1 + self.b * math.sin(self.omega)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return 1j * self.omega1 + self.b * np.sinh(1j * self.omega + y)

    def derivative(self, y):
        """d xi / d y."""
        y = np.asarray(y, dtype=float)
        return self.b * np.cosh(1j * self.omega + y)


@dataclass(frozen=True, eq=False)
class DeformedGrid:
    """Uniform grid ``y_k = zeta*k``, ``k = -N..N`` on a :class:`SinhContour`.

    ``points`` and ``derivs`` are read-only arrays of length ``2N+1``.
    """

    contour: SinhContour
    zeta: float
    N: int
    points: np.ndarray
    derivs: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def y(self) -> np.ndarray:
        return self.zeta * np.arange(-self.N, self.N + 1)

    @property
    def Lambda(self) -> float:
        """Truncation half-length in the y-coordinate."""
        return self.N * self.zeta

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights ``zeta * derivs``."""
        return self.zeta * self.derivs


def build_contour(omega1: float, b: float, omega: float) -> SinhContour:
    """Construct a :class:`SinhContour` after validating its parameters."""
    return SinhContour(float(omega1), float(b), float(omega))


def build_grid(contour: SinhContour, zeta: float, N: int) -> DeformedGrid:
    """Sample ``contour`` at ``y = zeta*k`` for ``k = -N..N``."""
    if not (zeta > 0 and math.isfinite(zeta)):
        raise GeometryError(f"grid step must be positive, got {zeta}")
    if int(N) != N or N < 1:
        raise GeometryError(f"grid half-length must be an integer >= 1, got {N}")
    N = int(N)
    y = zeta * np.arange(-N, N + 1)
    pts = contour(y)
    der = contour.derivative(y)
    pts.setflags(write=False)
    der.setflags(write=False)
    return DeformedGrid(contour, float(zeta), N, pts, der)


def default_step(eps: float, d: float = math.pi / 10) -> float:
    """Step from the discretisation-error heuristic ``exp(-2*pi*d/zeta) ~ eps/10``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return 2 * math.pi * d / math.log(10.0 / eps)


def balanced_step(N: int, decay: float, d: float, log_prefactor: float = 0.0) -> float:
    """Step equalising discretisation and truncation errors for a fixed point budget.

    For an integrand whose tail decays like ``exp(log_prefactor - decay*|y|)`` the
    truncation error at ``Lambda = N*zeta`` balances ``exp(-2*pi*d/zeta)`` when
    ``decay*N*zeta**2 - log_prefactor*zeta - 2*pi*d = 0``.
    """
    a = decay * N
    bq = log_prefactor
    return (bq + math.sqrt(bq * bq + 8 * math.pi * d * a)) / (2 * a)


def select_truncation(
    contour: SinhContour,
    offset: float,
    kappa: float = 0.4,
    eps: float = 1e-10,
    zeta: float | None = None,
) -> tuple[float, int]:
    """Truncation from the rule ``exp(-b*offset*kappa*sin|omega|*e^Lambda) < eps``.

    Returns the smallest such ``Lambda >= 0`` and ``N = max(4, ceil(Lambda/zeta))``;
    ``zeta`` defaults to :func:`default_step` at ``eps``.
    """
    if not offset > 0:
        raise GeometryError(f"degenerate geometry: offset must be positive, got {offset}")
    if not 0 < kappa < 0.5:
        raise ValueError("kappa must lie in (0, 0.5)")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    rate = contour.b * offset * kappa * abs(math.sin(contour.omega))
    if rate <= 0:
        raise GeometryError("flat contour: the truncation rule needs omega != 0")
    Lam = max(0.0, math.log(math.log(1.0 / eps) / rate))
    if zeta is None:
        zeta = default_step(eps)
    N = max(4, math.ceil(Lam / zeta - 1e-12))
    return Lam, N


def integrate(grid: DeformedGrid, samples) -> complex:
    """Simplified trapezoid rule ``zeta * sum(samples * derivs)``."""
    s = np.asarray(samples)
    if s.shape[-1] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {s.shape[-1]}")
    return grid.zeta * np.sum(s * grid.derivs, axis=-1)
