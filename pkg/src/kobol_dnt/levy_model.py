"""KoBoL (CGMY) characteristic exponent, scope validation and mirror transform.

The exponent is ``psi(xi) = -i*mu*xi + psi0(xi)`` with

    psi0(xi) = c*Gamma(-nu) * [(-lam_m)^nu - (-lam_m - i*xi)^nu + lam_p^nu - (lam_p + i*xi)^nu],

so that ``E[exp(i*xi*X_t)] = exp(-t*psi(xi))``.  It is analytic off the cuts
``i(-inf, lam_m]`` and ``i[lam_p, +inf)``.  Principal powers are used throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gamma

from .errors import OnCutError, ScopeError

__all__ = [
    "KoBoLParams",
    "SinhRegularityInfo",
    "PRESETS",
    "get_preset",
    "psi0",
    "psi",
    "asymptotic_coeff",
    "validate",
    "mirror",
    "martingale_diagnostic",
]

_CUT_TOL = 1e-14


@dataclass(frozen=True)
class KoBoLParams:
    """Symmetric-order KoBoL parameters.

    Parameters
    ----------
    c : float
        Intensity scale (per unit time).
    nu : float
        Order, in (0, 1) for the supported class.
    lambda_minus : float
        Tempering of upward jumps, negative.
    lambda_plus : float
        Tempering of downward jumps, positive.
    mu : float
        Drift of the finite-variation process.
    """

    c: float
    nu: float
    lambda_minus: float
    lambda_plus: float
    mu: float

    def __post_init__(self):
        for name in ("c", "nu", "lambda_minus", "lambda_plus", "mu"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ScopeError(f"parameter {name} must be a finite real, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.c < 0:
            raise ScopeError(f"intensity c must be non-negative, got {self.c}")

    @cached_property
    def gamma_neg_nu(self) -> float:
        """Gamma(-nu), cached per parameter set."""
        return float(gamma(-self.nu))

    @cached_property
    def scale(self) -> float:
        """``c*Gamma(-nu)``; zero when ``c == 0``."""
        return 0.0 if self.c == 0 else self.c * self.gamma_neg_nu

    def as_dict(self) -> dict:
        return {"c": self.c, "nu": self.nu, "lambda_minus": self.lambda_minus,
                "lambda_plus": self.lambda_plus, "mu": self.mu}


@dataclass(frozen=True)
class SinhRegularityInfo:
    """Metadata describing the analyticity domain of a valid model."""

    nu: float
    gamma_minus: float
    gamma_plus: float
    strip: tuple[float, float]


# Calibrated presets (c, nu, lambda_plus, lambda_minus, mu) for EUR/USD options.
PRESETS: dict[str, KoBoLParams] = {
    "AA": KoBoLParams(c=0.881, nu=0.491, lambda_minus=-40.43, lambda_plus=25.71, mu=0.0718),
    "AB": KoBoLParams(c=1.358, nu=0.407, lambda_minus=-52.14, lambda_plus=29.22, mu=0.09218),
    "MA": KoBoLParams(c=0.677, nu=0.544, lambda_minus=-37.69, lambda_plus=23.89, mu=0.0693),
    "MB": KoBoLParams(c=1.125, nu=0.445, lambda_minus=-51.66, lambda_plus=27.93, mu=0.0940),
}


def get_preset(name: str) -> KoBoLParams:
    try:
        return PRESETS[name.upper()]
    except KeyError:
        raise ScopeError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def _check_cuts(p: KoBoLParams, xi: np.ndarray) -> None:
    re = np.abs(xi.real)
    im = xi.imag
    scale = 1.0 + np.abs(xi)
    on_axis = re <= _CUT_TOL * scale
    bad = on_axis & ((im >= p.lambda_plus) | (im <= p.lambda_minus))
    if np.any(bad):
        z = xi[bad].ravel()[0]
        raise OnCutError(f"on-cut evaluation at xi = {z!r}")


def psi0(p: KoBoLParams, xi):
    """Jump part of the characteristic exponent (vectorised)."""
    x = np.asarray(xi, dtype=complex)
    _check_cuts(p, x)
    if p.c == 0:
        out = np.zeros_like(x)
    else:
        nu = p.nu
        lm, lp = p.lambda_minus, p.lambda_plus
        out = p.scale * (((-lm) ** nu - (-lm - 1j * x) ** nu) + (lp ** nu - (lp + 1j * x) ** nu))
    return out if out.ndim else complex(out)


def psi(p: KoBoLParams, xi):
    """Full characteristic exponent ``-i*mu*xi + psi0(xi)``."""
    x = np.asarray(xi, dtype=complex)
    out = -1j * p.mu * x + psi0(p, x)
    return out if np.ndim(out) else complex(out)


def asymptotic_coeff(p: KoBoLParams, phi: float) -> complex:
    """Coefficient ``c_inf(phi)`` with ``psi0(rho*e^{i*phi}) ~ c_inf(phi)*rho^nu``."""
    if abs(phi) >= math.pi / 2:
        raise ValueError(f"asymptotic coefficient needs |phi| < pi/2, got {phi}")
    return complex(-2 * p.scale * math.cos(p.nu * math.pi / 2) * np.exp(1j * p.nu * phi))


def validate(p: KoBoLParams) -> SinhRegularityInfo:
    """Check that ``p`` lies in the supported class and return its metadata."""
    if not 0 < p.nu < 1:
        raise ScopeError(f"order out of scope: nu = {p.nu} not in (0, 1)")
    if p.c <= 0:
        raise ScopeError(f"intensity c must be positive, got {p.c}")
    if not p.lambda_minus < 0 < p.lambda_plus:
        raise ScopeError(
            f"strip empty: need lambda_minus < 0 < lambda_plus, got ({p.lambda_minus}, {p.lambda_plus})")
    if p.mu == 0:
        raise ScopeError("zero drift: mu = 0 is not supported")
    if p.mu < 0:
        raise ScopeError("negative drift: use mirror() and reflect the geometry")
    return SinhRegularityInfo(p.nu, -math.pi / 2, math.pi / 2, (p.lambda_minus, p.lambda_plus))


def mirror(p: KoBoLParams) -> KoBoLParams:
    """Parameters of ``-X``: ``(c, nu, -lambda_plus, -lambda_minus, -mu)``."""
    return KoBoLParams(c=p.c, nu=p.nu, lambda_minus=-p.lambda_plus,
                       lambda_plus=-p.lambda_minus, mu=-p.mu)


def martingale_diagnostic(p: KoBoLParams, carry: float) -> float:
    """``psi(-i) + carry``; zero when ``exp(X_t - carry*t)`` is a martingale.

    Reported only; the drift is never adjusted.
    """
    return float((psi(p, -1j) + carry).real)
