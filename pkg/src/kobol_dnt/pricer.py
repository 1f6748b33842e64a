"""End-to-end double-no-touch pricing.

For each GWR node ``q`` the pipeline computes the Wiener-Hopf factors on the
main grids, builds the kernels, solves for the dual-space state and evaluates
the barrier correction at the requested spots.  The price is

    V = exp(-r*T) + exp(r0*T) * GWR[ correction(q)/q ].

Spots on or outside a barrier are knocked out and priced at 0.
"""
from __future__ import annotations

import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError, DntError, GeometryError, PipelineError
from .laplace_gwr import GwrConfig, nodes, price_with_shift
from .levy_model import KoBoLParams, get_preset, mirror, validate
from .perpetual_dual import (BarrierGeometry, build_kernels, evaluate_correction, seed,
                             solve_direct, solve_series)
from .sinh_quadrature import (DeformedGrid, SinhContour, balanced_step, build_contour,
                              build_grid, default_step, select_truncation)
from .wiener_hopf import ContourPair, check_admissibility, compute_factors

__all__ = [
    "GRID_PRESETS",
    "NumericsConfig",
    "PricingRequest",
    "NodeDiagnostics",
    "PricingResult",
    "build_contour_pair",
    "price",
    "price_curve",
    "price_values",
    "self_consistency",
    "SelfConsistencyReport",
    "THREADS_ENV",
]

THREADS_ENV = "KOBOL_DNT_THREADS"

# Resolution (in log-price) to which barrier distances are snapped.
_SNAP_DIGITS = 12
_SNAP = 10.0 ** -_SNAP_DIGITS

# Total point counts (main grid, factor grid) of the reference configurations.
GRID_PRESETS: dict[str, tuple[int, int]] = {
    "base": (276, 502),
    "alt": (306, 557),
    "coarse": (108, 188),
    "coarser": (88, 155),
    "coarsest": (55, 100),
}


@dataclass(frozen=True)
class NumericsConfig:
    """Numerical settings of the pipeline.

    Grid sizes ``n_main``/``n_fine`` are total point counts per contour; the
    half-length is ``n // 2``.  ``None`` selects both step and length from the
    tolerances.  ``offset_fraction`` sets the barrier distance, as a fraction
    of the corridor width, down to which spots are resolved to ``eps``.
    With ``series_fallback`` a node whose series misses the tolerance within
    ``M0`` steps is re-solved by the direct linear system; the node
    diagnostics record which solver produced the sample.
    """

    n_main: int | None = 276
    n_fine: int | None = 502
    b: float = 0.9
    omega: float = math.pi / 4
    omega1: float = 0.0
    kappa: float = 0.4
    eps: float = 1e-10
    eps_fine: float = 1e-13
    strip_halfwidth: float = math.pi / 10
    offset_fraction: float = 0.1
    r0: float = 0.0
    M: int = 8
    M0: int = 10
    series_tol: float = 1e-15
    solver: str = "series"
    series_fallback: bool = True
    workers: int | None = None

    def __post_init__(self):
        for name in ("n_main", "n_fine"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 9):
                raise ConfigError(f"numerics.{name} must be an integer >= 9, got {v}")
        if self.solver not in ("series", "inverse", "solve"):
            raise ConfigError(f"numerics.solver must be series, inverse or solve, got {self.solver!r}")
        if not 0 < self.offset_fraction <= 0.5:
            raise ConfigError("numerics.offset_fraction must lie in (0, 0.5]")
        if not 0 < self.kappa < 0.5:
            raise ConfigError("numerics.kappa must lie in (0, 0.5)")
        if not (0 < self.eps < 1 and 0 < self.eps_fine < 1):
            raise ConfigError("numerics tolerances must lie in (0, 1)")
        if self.M < 1 or self.M0 < 1:
            raise ConfigError("numerics.M and numerics.M0 must be >= 1")
        if not (0 < self.omega < math.pi / 2):
            raise ConfigError("numerics.omega must lie in (0, pi/2)")
        if self.b <= 0:
            raise ConfigError("numerics.b must be positive")

    @classmethod
    def preset(cls, name: str, **kw) -> "NumericsConfig":
        try:
            n_main, n_fine = GRID_PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown grid preset {name!r}; known: {sorted(GRID_PRESETS)}") from None
        return cls(n_main=n_main, n_fine=n_fine, **kw)


@dataclass(frozen=True)
class PricingRequest:
    """A DNT pricing request in log coordinates.

    ``x`` holds log-spots, ``geometry`` the log-barriers.  Use
    :meth:`from_prices` to build one from price levels.
    """

    model: KoBoLParams
    x: tuple
    geometry: BarrierGeometry
    T: float
    r: float = 0.0
    numerics: NumericsConfig = field(default_factory=NumericsConfig)

    def __post_init__(self):
        if isinstance(self.model, str):
            object.__setattr__(self, "model", get_preset(self.model))
        xs = tuple(float(v) for v in np.atleast_1d(self.x))
        if not xs:
            raise ConfigError("at least one spot is required")
        if not all(math.isfinite(v) for v in xs):
            raise ConfigError("spots must be finite")
        object.__setattr__(self, "x", xs)
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError(f"maturity T must be positive, got {self.T}")
        if not math.isfinite(self.r):
            raise ConfigError("rate r must be finite")

    @classmethod
    def from_prices(cls, model, S, H_minus: float, H_plus: float, T: float, r: float = 0.0,
                    numerics: NumericsConfig | None = None) -> "PricingRequest":
        S = np.atleast_1d(np.asarray(S, dtype=float))
        if np.any(S <= 0):
            raise ConfigError("spot levels must be positive")
        geom = BarrierGeometry.from_prices(H_minus, H_plus)
        return cls(model, tuple(math.log(s) for s in S), geom, T, r, numerics or NumericsConfig())

    @property
    def spots(self) -> np.ndarray:
        return np.exp(np.array(self.x))

    def with_numerics(self, **kw) -> "PricingRequest":
        return replace(self, numerics=replace(self.numerics, **kw))


@dataclass(frozen=True)
class NodeDiagnostics:
    node: int
    q: float
    whf_residual: float
    series_terms: int
    series_increment: float
    im_residual: float
    timings: dict
    solver_used: str = "series"


@dataclass(frozen=True)
class PricingResult:
    """Price at one spot plus the per-node diagnostics shared by the request."""

    spot: float
    x: float
    price: float
    knocked_out: bool
    nodes: tuple = ()
    grid_info: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def whf_residual(self) -> float:
        return max((n.whf_residual for n in self.nodes), default=0.0)

    @property
    def series_terms(self) -> int:
        return max((n.series_terms for n in self.nodes), default=0)

    @property
    def im_residual(self) -> float:
        return max((n.im_residual for n in self.nodes), default=0.0)


def _fine_grid(contour: SinhContour, main: DeformedGrid, p: KoBoLParams,
               num: NumericsConfig) -> DeformedGrid:
    # Tail of the factor integrand ~ |xi| * |psi0/(mu*eta)| / |eta| with |eta| ~ (b/2) e^y.
    decay = 2.0 - p.nu
    xi_max = float(np.max(np.abs(main.points)))
    C = 2.0 * abs(p.scale) / abs(p.mu)
    log_pref = math.log(max(C, 1e-300) * xi_max / decay) + (p.nu - 2.0) * math.log(contour.b / 2)
    Lam = max(main.Lambda, (log_pref + math.log(1.0 / num.eps_fine)) / decay)
    # Nearest singularities of the factor integrands sit about min(w, pi/2 - w) away
    # in y.  Steps below the resulting bound leave only the truncation error, which
    # varies smoothly with q; otherwise the budget is balanced at the conservative
    # strip width, because aliasing errors oscillate in q and the rho acceleration
    # amplifies them.
    w = abs(contour.omega)
    zeta_max = default_step(num.eps_fine, max(num.strip_halfwidth, 0.8 * min(w, math.pi / 2 - w)))
    if num.n_fine is None:
        zeta = min(zeta_max, main.zeta)
        N = max(4, math.ceil(Lam / zeta))
    else:
        N = num.n_fine // 2
        zeta = Lam / N
        if zeta > zeta_max:
            zeta = balanced_step(N, decay, num.strip_halfwidth, log_pref)
    return build_grid(contour, zeta, N)


def build_contour_pair(p: KoBoLParams, geometry: BarrierGeometry, num: NumericsConfig) -> ContourPair:
    """Main and factor grids on the contours ``+-i*omega1 + b*sinh(+-i*omega + y)``."""
    up = build_contour(num.omega1, num.b, num.omega)
    lo = build_contour(-num.omega1, num.b, -num.omega)
    offset = num.offset_fraction * geometry.width
    Lam, N_auto = select_truncation(up, offset, num.kappa, num.eps)
    if num.n_main is None:
        zeta, N = default_step(num.eps), N_auto
    else:
        N = num.n_main // 2
        zeta = max(Lam, 1.0) / N
    gp, gm = build_grid(up, zeta, N), build_grid(lo, zeta, N)
    fp = _fine_grid(up, gp, p, num)
    fm = _fine_grid(lo, gm, p, num)
    return ContourPair(gp, gm, fp, fm)


def _workers(num: NumericsConfig) -> int:
    if num.workers is not None:
        return max(1, int(num.workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _run(req: PricingRequest):
    t_start = time.perf_counter()
    num = req.numerics
    p, geom, xs = req.model, req.geometry, np.array(req.x)
    if p.mu < 0:
        p, geom, xs = mirror(p), geom.mirrored(), -xs
    try:
        validate(p)
    except DntError as e:
        raise PipelineError("validate", None, e) from e
    # Work in the frame h_minus = 0 with distances snapped to a fixed grid, so the
    # result is a deterministic function of x - h_minus and h_plus - h_minus.
    # Spots within the snapping resolution of a barrier count as knocked out.
    dist = np.round(xs - geom.h_minus, _SNAP_DIGITS)
    geom = BarrierGeometry(0.0, round(geom.width, _SNAP_DIGITS))
    inside = (dist > 0) & (dist < geom.h_plus)
    prices = np.zeros(len(xs))
    if not inside.any():
        return prices, ~inside, (), {}, time.perf_counter() - t_start
    xin = dist[inside]
    gcfg = GwrConfig(T=req.T, M=num.M, r0=num.r0)
    try:
        pair = build_contour_pair(p, geom, num)
        q0 = float(req.r + num.r0 + nodes(gcfg)[0])
        check_admissibility(p, q0, pair)
    except DntError as e:
        raise PipelineError("admissibility", None, e) from e
    diags: dict[int, NodeDiagnostics] = {}
    lock = threading.Lock()
    qs = req.r + num.r0 + nodes(gcfg)

    def transform_at(q):
        k = int(np.argmin(np.abs(qs - q))) + 1
        tm = {}
        stage = "factors"
        try:
            t0 = time.perf_counter()
            fac = compute_factors(p, q, pair)
            t1 = time.perf_counter()
            tm["factors"] = t1 - t0
            stage = "kernels"
            ker = build_kernels(p, fac, geom, pair)
            t2 = time.perf_counter()
            tm["kernels"] = t2 - t1
            stage = "solve"
            st0 = seed(pair)
            used = num.solver
            if num.solver == "series":
                try:
                    st = solve_series(ker, st0, num.M0, num.series_tol)
                except ConvergenceError:
                    if not num.series_fallback:
                        raise
                    st, used = solve_direct(ker, st0, "solve"), "solve"
            else:
                st = solve_direct(ker, st0, num.solver)
            t3 = time.perf_counter()
            tm["solve"] = t3 - t2
            stage = "evaluate"
            corr = evaluate_correction(st, fac, geom, pair, xin) / q
            tm["evaluate"] = time.perf_counter() - t3
        except DntError as e:
            raise PipelineError(stage, k, e) from e
        d = NodeDiagnostics(k, float(q), fac.residual, st.terms, st.last_increment,
                            float(np.max(np.abs(corr.imag))), tm, used)
        with lock:
            diags[k] = d
        return corr.real

    nw = _workers(num)
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            vals = price_with_shift(transform_at, req.r, gcfg, executor=ex)
    else:
        vals = price_with_shift(transform_at, req.r, gcfg)
    prices[inside] = vals
    info = {"N_main": pair.L_plus.N, "zeta_main": pair.L_plus.zeta, "Lambda_main": pair.L_plus.Lambda,
            "N_fine": pair.L_plus_fine.N, "zeta_fine": pair.L_plus_fine.zeta,
            "Lambda_fine": pair.L_plus_fine.Lambda, "a_plus": pair.a_plus, "a_minus": pair.a_minus,
            "mirrored": req.model.mu < 0}
    node_list = tuple(diags[k] for k in sorted(diags))
    return prices, ~inside, node_list, info, time.perf_counter() - t_start


def price_curve(req: PricingRequest) -> list[PricingResult]:
    """Prices at every spot of ``req``; per-node work is shared across spots."""
    prices, ko, node_list, info, wall = _run(req)
    return [PricingResult(float(math.exp(x)), x, float(v), bool(k), node_list, info, wall)
            for x, v, k in zip(req.x, prices, ko)]


def price(req: PricingRequest) -> PricingResult:
    """Price at the single spot of ``req``."""
    if len(req.x) != 1:
        raise ConfigError("price() takes exactly one spot; use price_curve() for several")
    return price_curve(req)[0]


def price_values(req: PricingRequest) -> np.ndarray:
    """Convenience wrapper returning only the price array."""
    return np.array([r.price for r in price_curve(req)])


@dataclass(frozen=True)
class SelfConsistencyReport:
    spots: tuple
    base: tuple
    rows: tuple  # (label, description, differences per spot, threshold, passed)

    @property
    def passed(self) -> bool:
        return all(r[4] for r in self.rows)


# label: (numerics overrides, threshold family)
_ALT_OMEGA = math.pi / 5
SELF_CONSISTENCY_RUNS = {
    "eps0": ({"n_main": 306, "n_fine": 557, "omega": _ALT_OMEGA, "b": 0.95}, 1e-7,
             "306/557 grids, wings at pi/5, b=0.95"),
    "eps1": ({"r0": 5.0}, 1e-4, "r0 = 5"),
    "eps2": ({"n_main": 108, "n_fine": 188}, 1e-4, "108/188 grids"),
    "eps3": ({"r0": 0.5, "n_main": 88, "n_fine": 155}, 1e-4, "r0 = 0.5, 88/155 grids"),
    "eps4": ({"r0": -0.5, "n_main": 55, "n_fine": 100}, 2e-4, "r0 = -0.5, 55/100 grids"),
    "r0=0.5": ({"r0": 0.5}, 1e-4, "r0 = 0.5"),
    "r0=-0.5": ({"r0": -0.5}, 1e-4, "r0 = -0.5"),
}


def self_consistency(req: PricingRequest, runs: dict | None = None) -> SelfConsistencyReport:
    """Price ``req`` under alternative numerics and report differences to the base run."""
    runs = SELF_CONSISTENCY_RUNS if runs is None else runs
    base = price_values(req)
    rows = []
    for label, (over, thr, desc) in runs.items():
        vals = price_values(req.with_numerics(**over))
        diff = tuple(float(v) for v in vals - base)
        rows.append((label, desc, diff, thr, all(abs(d) < thr for d in diff)))
    return SelfConsistencyReport(tuple(float(s) for s in req.spots), tuple(float(b) for b in base),
                                 tuple(rows))
