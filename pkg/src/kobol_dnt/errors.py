"""Exception hierarchy shared by the pricing engine.

Every error raised deliberately by the engine derives from :class:`DntError`
so callers (and the CLI) can separate numerical failures from programming
errors.  Configuration mistakes derive from :class:`ConfigError`.
"""
from __future__ import annotations


class DntError(Exception):
    """Base class for all engine errors."""


class ConfigError(DntError, ValueError):
    """Invalid user input: malformed numerics, unknown keys, bad geometry."""


class ScopeError(ConfigError):
    """Model parameters outside the supported class (finite variation, non-zero drift)."""


class GeometryError(ConfigError):
    """Degenerate barrier/spot geometry or a malformed contour."""


class OnCutError(DntError, ValueError):
    """The characteristic exponent was evaluated on one of its branch cuts."""


class AdmissibilityError(DntError):
    """A contour violates the no-cut conditions for the chosen spectral parameter."""


class NumericalError(DntError):
    """A numerical stage failed (branch violation, singular system, residual too large)."""


class ConvergenceError(NumericalError):
    """An iteration did not reach its tolerance."""


class PipelineError(DntError):
    """Wraps an error raised inside the per-node pipeline with the stage and node index.

    Attributes
    ----------
    stage : str
        Pipeline stage name (``"admissibility"``, ``"factors"``, ``"kernels"``,
        ``"solve"``, ``"evaluate"``, ``"gwr"``).
    node : int or None
        1-based index of the GWR node, when applicable.
    cause : Exception
        The original exception.
    """

    def __init__(self, stage: str, node: int | None, cause: Exception):
        self.stage = stage
        self.node = node
        self.cause = cause
        where = f"stage {stage}" if node is None else f"stage {stage}, node {node}"
        super().__init__(f"[{where}] {type(cause).__name__}: {cause}")
