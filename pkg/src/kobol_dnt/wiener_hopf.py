"""Wiener-Hopf factors of a KoBoL process with positive drift on sinh-deformed grids.

For ``q > 0`` write ``Phi(eta) = 1 + psi0(eta)/(q - i*mu*eta)``.  With ``mu > 0``
the factors are

    phi_plus0(xi) = exp[ (1/(2*pi*i)) * int_{L-} xi*log Phi(eta) / (eta*(xi - eta)) d eta ],
    phi_minus(xi) = exp[-(1/(2*pi*i)) * int_{L+} xi*log Phi(eta) / (eta*(xi - eta)) d eta ],
    phi_plus(xi)  = q/(q - i*mu*xi) * phi_plus0(xi),

the first for ``xi`` above the lower contour and the second for ``xi`` below
the upper one.  They satisfy ``phi_plus * phi_minus * (1 + psi/q) = 1``, which
is used to fill in each factor on the grid where its integral is not evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, GeometryError, NumericalError
from .levy_model import KoBoLParams, psi, psi0
from .sinh_quadrature import DeformedGrid, build_contour, build_grid

__all__ = [
    "ContourPair",
    "FactorTables",
    "AdmissibilityReport",
    "symbol",
    "log_symbol",
    "phi_plus0_direct",
    "phi_minus_direct",
    "check_admissibility",
    "compute_factors",
    "whf_residual",
    "continuation_residual",
    "phi_plus_general",
    "cross_check_general_formulas",
]

_BRANCH_TOL = 1e-13


def _min_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.min(np.abs(a[:, None] - b[None, :])))


@dataclass(frozen=True, eq=False)
class ContourPair:
    """Main upper/lower grids plus the longer, finer grids used for the factors."""

    L_plus: DeformedGrid
    L_minus: DeformedGrid
    L_plus_fine: DeformedGrid
    L_minus_fine: DeformedGrid
    min_separation: float = 0.0

    def __post_init__(self):
        for name in ("L_plus", "L_plus_fine"):
            if not getattr(self, name).contour.crossing > 0:
                raise GeometryError(f"{name} must cross the imaginary axis above 0")
        for name in ("L_minus", "L_minus_fine"):
            if not getattr(self, name).contour.crossing < 0:
                raise GeometryError(f"{name} must cross the imaginary axis below 0")
        sep = min(
            _min_distance(self.L_plus.points, self.L_minus.points),
            _min_distance(self.L_plus.points, self.L_minus_fine.points),
            _min_distance(self.L_minus.points, self.L_plus_fine.points),
        )
        if not sep > 0:
            raise GeometryError("upper and lower contours intersect")
        object.__setattr__(self, "min_separation", sep)

    @property
    def a_plus(self) -> float:
        return self.L_plus.contour.crossing

    @property
    def a_minus(self) -> float:
        return self.L_minus.contour.crossing


@dataclass(frozen=True, eq=False)
class FactorTables:
    """Factor values for one spectral parameter on both main grids.

    ``*_on_plus`` arrays are sampled on ``L_plus``, ``*_on_minus`` on ``L_minus``.
    ``phi_plus0_on_plus`` and ``phi_minus_on_minus`` come from the integrals;
    the rest follow from the drift split and the factorisation identity.
    """

    q: complex
    phi_plus0_on_plus: np.ndarray
    phi_minus_on_minus: np.ndarray
    phi_plus_on_plus: np.ndarray
    phi_plus_on_minus: np.ndarray
    phi_minus_on_plus: np.ndarray
    phi_plus0_on_minus: np.ndarray
    residual: float


@dataclass(frozen=True)
class AdmissibilityReport:
    q0: float
    a_plus: float
    a_minus: float
    value_at_a_plus: float
    value_at_a_minus: float
    drift_margin: float
    min_distance: float


def symbol(p: KoBoLParams, q, eta):
    """``Phi(eta) = 1 + psi0(eta)/(q - i*mu*eta)``."""
    eta = np.asarray(eta, dtype=complex)
    return 1.0 + psi0(p, eta) / (q - 1j * p.mu * eta)


def _distance_from_negative_axis(z: np.ndarray) -> np.ndarray:
    return np.where(z.real >= 0, np.abs(z), np.abs(z.imag))


def log_symbol(p: KoBoLParams, q, eta):
    """Principal ``log Phi(eta)``; raises when ``Phi`` touches ``(-inf, 0]``."""
    Phi = symbol(p, q, eta)
    d = _distance_from_negative_axis(Phi)
    if np.any(d <= _BRANCH_TOL * np.maximum(1.0, np.abs(Phi))):
        k = int(np.argmin(d))
        raise NumericalError(
            f"log branch violation: Phi = {Phi.ravel()[k]!r} at eta = {np.ravel(eta)[k]!r}")
    return np.log(Phi)


def _cauchy_sum(xi: np.ndarray, grid: DeformedGrid, dens: np.ndarray) -> np.ndarray:
    """``zeta * sum_k dens_k*der_k / (eta_k - xi)`` for every target ``xi``."""
    w = grid.zeta * dens * grid.derivs
    return (w[None, :] / (grid.points[None, :] - xi[:, None])).sum(axis=1)


def phi_plus0_direct(p: KoBoLParams, q, xi, lower: DeformedGrid):
    """``phi_plus0`` at ``xi`` by integrating over ``lower`` (``xi`` must lie above it)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    dens = log_symbol(p, q, lower.points) / lower.points
    return np.exp(1j / (2 * math.pi) * xi * _cauchy_sum(xi, lower, dens))


def phi_minus_direct(p: KoBoLParams, q, xi, upper: DeformedGrid):
    """``phi_minus`` at ``xi`` by integrating over ``upper`` (``xi`` must lie below it)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    dens = log_symbol(p, q, upper.points) / upper.points
    return np.exp(-1j / (2 * math.pi) * xi * _cauchy_sum(xi, upper, dens))


def check_admissibility(p: KoBoLParams, q0: float, pair: ContourPair) -> AdmissibilityReport:
    """Verify the no-cut conditions for the smallest spectral value ``q0``.

    Raises
    ------
    AdmissibilityError
        Naming the first violated condition and the offending point.
    """
    ap, am = pair.a_plus, pair.a_minus
    if not 0 < ap < p.lambda_plus:
        raise AdmissibilityError(
            f"inadmissible contour: condition (1) needs a_plus in (0, {p.lambda_plus}), got {ap}")
    if not p.lambda_minus < am < 0:
        raise AdmissibilityError(
            f"inadmissible contour: condition (2) needs a_minus in ({p.lambda_minus}, 0), got {am}")
    vp = q0 + psi(p, 1j * ap)
    if not vp.real > 0:
        raise AdmissibilityError(
            f"inadmissible contour: condition (1) q0 + psi(i*a_plus) = {vp.real} <= 0 at a_plus = {ap}")
    vm = q0 + psi(p, 1j * am)
    if not vm.real > 0:
        raise AdmissibilityError(
            f"inadmissible contour: condition (2) q0 + psi(i*a_minus) = {vm.real} <= 0 at a_minus = {am}")
    drift = q0 + am * p.mu
    if not drift > 0:
        raise AdmissibilityError(
            f"inadmissible contour: condition (2) q0 + a_minus*mu = {drift} <= 0 at a_minus = {am}")
    dmin = math.inf
    for name in ("L_plus_fine", "L_minus_fine", "L_plus", "L_minus"):
        eta = getattr(pair, name).points
        z = 1.0 + psi(p, eta) / q0
        d = _distance_from_negative_axis(z)
        k = int(np.argmin(d))
        if d[k] <= _BRANCH_TOL * max(1.0, abs(z[k])):
            raise AdmissibilityError(
                f"inadmissible contour: condition (3) q0 + psi(eta) on (-inf, 0] at eta = {eta[k]!r} ({name})")
        dmin = min(dmin, float(d[k]))
    return AdmissibilityReport(float(q0), ap, am, float(vp.real), float(vm.real), float(drift), dmin)


def compute_factors(p: KoBoLParams, q, pair: ContourPair, residual_tol: float = 1e-10) -> FactorTables:
    """Tabulate ``phi_plus0``, ``phi_plus`` and ``phi_minus`` on both main grids."""
    xp = pair.L_plus.points
    xm = pair.L_minus.points
    fp0_p = phi_plus0_direct(p, q, xp, pair.L_minus_fine)
    fm_m = phi_minus_direct(p, q, xm, pair.L_plus_fine)
    Phi_p = symbol(p, q, xp)
    Phi_m = symbol(p, q, xm)
    drift_p = q / (q - 1j * p.mu * xp)
    drift_m = q / (q - 1j * p.mu * xm)
    fm_p = 1.0 / (Phi_p * fp0_p)
    fp0_m = 1.0 / (Phi_m * fm_m)
    fp_p = drift_p * fp0_p
    fp_m = drift_m * fp0_m
    res = max(
        float(np.max(np.abs(fp_p * fm_p * (1 + psi(p, xp) / q) - 1))),
        float(np.max(np.abs(fp_m * fm_m * (1 + psi(p, xm) / q) - 1))),
    )
    arrays = (fp0_p, fm_m, fp_p, fp_m, fm_p, fp0_m)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise NumericalError("non-finite Wiener-Hopf factor values")
    if res > residual_tol:
        raise NumericalError(f"identity residual too large: {res:.3e}")
    for a in arrays:
        a.setflags(write=False)
    return FactorTables(q, fp0_p, fm_m, fp_p, fp_m, fm_p, fp0_m, res)


def whf_residual(p: KoBoLParams, factors: FactorTables, pair: ContourPair) -> float:
    """Max of ``|phi_plus*phi_minus*(1 + psi/q) - 1|`` over both main grids."""
    q = factors.q
    r1 = np.abs(factors.phi_plus_on_plus * factors.phi_minus_on_plus * (1 + psi(p, pair.L_plus.points) / q) - 1)
    r2 = np.abs(factors.phi_plus_on_minus * factors.phi_minus_on_minus * (1 + psi(p, pair.L_minus.points) / q) - 1)
    return float(max(r1.max(), r2.max()))


def _tilted(grid: DeformedGrid, tilt: float) -> DeformedGrid:
    # The steeper contour has a narrower analyticity strip, so halve the step.
    c = grid.contour
    return build_grid(build_contour(c.omega1, c.b, c.omega + math.copysign(tilt, c.omega)),
                      grid.zeta / 2, 2 * grid.N)


def continuation_residual(p: KoBoLParams, factors: FactorTables, pair: ContourPair,
                          tilt: float = math.pi / 12) -> float:
    """Compare cross-filled values with direct integrals on contours turned away by ``tilt``.

    ``phi_plus0`` on ``L_minus`` is integrated over the lower fine contour with
    its wings turned further down by ``tilt``; ``phi_minus`` on ``L_plus`` over
    the upper one turned further up.  The separation then grows with ``|xi|``
    like the grid spacing does.  Returns the largest relative deviation.
    """
    if not 0 < tilt < math.pi / 2 - max(abs(pair.L_plus_fine.contour.omega), abs(pair.L_minus_fine.contour.omega)):
        raise ValueError(f"tilt {tilt} leaves no room below pi/2")
    q = factors.q
    lower = _tilted(pair.L_minus_fine, tilt)
    upper = _tilted(pair.L_plus_fine, tilt)
    d1 = phi_plus0_direct(p, q, pair.L_minus.points, lower)
    d2 = phi_minus_direct(p, q, pair.L_plus.points, upper)
    e1 = np.abs(d1 - factors.phi_plus0_on_minus) / np.maximum(1.0, np.abs(d1))
    e2 = np.abs(d2 - factors.phi_minus_on_plus) / np.maximum(1.0, np.abs(d2))
    return float(max(e1.max(), e2.max()))


def phi_plus_general(p: KoBoLParams, q, xi, line_im: float, zeta: float = 0.05, N: int = 800):
    """``phi_plus`` from the general formula integrated over the line ``Im eta = line_im``.

    Uses ``log(1 + psi(eta)/q)`` directly, so no drift split is involved.  The
    formula is valid only for ``Im xi > line_im``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    line = build_grid(build_contour(line_im, 1.0, 0.0), zeta, N)
    eta = line.points
    z = 1.0 + psi(p, eta) / q
    if np.any(_distance_from_negative_axis(z) <= _BRANCH_TOL):
        raise NumericalError("log branch violation on the flat line")
    dens = np.log(z) / eta
    return np.exp(1j / (2 * math.pi) * xi * _cauchy_sum(xi, line, dens))


def cross_check_general_formulas(p: KoBoLParams, q, pair: ContourPair, factors: FactorTables,
                                 line_im: float | None = None, n_test: int = 5,
                                 seed: int = 0) -> float:
    """Max deviation between tabulated ``phi_plus`` and the general formula.

    Test points are drawn from the central part of ``L_plus``.  By default the
    line passes through the crossing point of ``L_minus``.
    """
    if line_im is None:
        line_im = pair.a_minus
    rng = np.random.default_rng(seed)
    N = pair.L_plus.N
    idx = N + rng.choice(np.arange(-max(1, N // 4), max(1, N // 4) + 1), size=n_test, replace=False)
    xi = pair.L_plus.points[idx]
    gen = phi_plus_general(p, q, xi, line_im)
    return float(np.max(np.abs(gen - factors.phi_plus_on_plus[idx])))
