"""Double-no-touch option pricing under KoBoL processes with drift.

The engine combines Gaver-Wynn-Rho Laplace inversion in maturity with a
dual-space solution of the perpetual double-barrier problem on sinh-deformed
contours.
"""
from .errors import (AdmissibilityError, ConfigError, ConvergenceError, DntError, GeometryError,
                     NumericalError, OnCutError, PipelineError, ScopeError)
from .levy_model import PRESETS, KoBoLParams, get_preset, mirror, psi, psi0, validate
from .perpetual_dual import BarrierGeometry
from .pricer import (NumericsConfig, PricingRequest, PricingResult, price, price_curve,
                     price_values, self_consistency)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "ConfigError", "ConvergenceError", "DntError", "GeometryError",
    "NumericalError", "OnCutError", "PipelineError", "ScopeError",
    "PRESETS", "KoBoLParams", "get_preset", "mirror", "psi", "psi0", "validate",
    "BarrierGeometry", "NumericsConfig", "PricingRequest", "PricingResult",
    "price", "price_curve", "price_values", "self_consistency",
]
