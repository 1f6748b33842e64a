"""Double-no-touch pricing under a Markov-modulated KoBoL model.

State ``j`` carries its own KoBoL parameters, discount rate ``r_j`` and payoff
``G_j``; the chain jumps from ``j`` to ``k`` at rate ``lambda_jk``.  With
``Q_j(q) = q + Lambda_j + r_j`` the Laplace transform of the barrier-free part
solves ``Q_j V0_j = G_j + sum_{k != j} lambda_jk V0_k``.  The barrier correction
is the alternating series ``sum_s (-1)^s (V^{+;s} + V^{-;s})`` of single-barrier
problems, each solved by a fixed-point iteration over the coupling term.

Functions are represented by normalised Fourier transforms

    U_plus(xi)  = exp(i*h_plus*xi)  * F[V^{+;s}](xi)  on the two lower contours,
    U_minus(xi) = exp(i*h_minus*xi) * F[V^{-;s}](xi)  on the two upper contours.

The coupling integral for a target on one contour of a pair is taken over the
other contour of the pair; on the outer contour this costs a residue term
``F(xi)/(Q_j + psi_j(xi))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, ConvergenceError, DntError, NumericalError, PipelineError, ScopeError
from .laplace_gwr import GwrConfig, invert, nodes
from .levy_model import KoBoLParams, get_preset, mirror, psi, validate
from .perpetual_dual import BarrierGeometry
from .sinh_quadrature import DeformedGrid, build_contour, build_grid, default_step, select_truncation
from .wiener_hopf import ContourPair, check_admissibility, phi_minus_direct, phi_plus0_direct, symbol

__all__ = [
    "RegimeModel",
    "RegimeNumerics",
    "SpiralGrids",
    "StateFactors",
    "build_spiral_grids",
    "solve_v0",
    "state_factors",
    "barrier_free_price",
    "inner_step_plus",
    "inner_step_minus",
    "perpetual_correction",
    "price_regime_all",
    "price_regime_dnt",
    "regime_from_config",
]


@dataclass(frozen=True)
class RegimeModel:
    """Markov-modulated KoBoL model.

    Parameters
    ----------
    states : tuple of KoBoLParams
    rates : (m, m) array
        Off-diagonal transition rates; the diagonal is ignored.
    r : tuple of float
        Per-state discount rates.
    G : tuple of float
        Per-state payoffs.
    """

    states: tuple
    rates: np.ndarray
    r: tuple
    G: tuple

    def __post_init__(self):
        states = tuple(get_preset(s) if isinstance(s, str) else s for s in self.states)
        m = len(states)
        if m < 1:
            raise ConfigError("at least one state is required")
        rates = np.array(self.rates, dtype=float).reshape(m, m) if m > 1 or np.size(self.rates) else np.zeros((1, 1))
        off = rates - np.diag(np.diag(rates))
        if np.any(off < 0) or not np.all(np.isfinite(off)):
            raise ConfigError("transition rates must be finite and non-negative")
        r = tuple(float(v) for v in self.r)
        G = tuple(float(v) for v in self.G)
        if len(r) != m or len(G) != m:
            raise ConfigError("r and G need one entry per state")
        if any(v < 0 for v in r):
            raise ConfigError("per-state rates must be non-negative")
        if any(not v > 0 for v in G):
            raise ConfigError("per-state payoffs must be positive")
        signs = {np.sign(s.mu) for s in states}
        if 0.0 in signs:
            raise ScopeError("zero drift: mu = 0 is not supported")
        if len(signs) > 1:
            raise ScopeError("mixed drift signs across states are not supported")
        off.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rates", off)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "G", G)

    @property
    def m(self) -> int:
        return len(self.states)

    @property
    def exit_rates(self) -> np.ndarray:
        """``Lambda_j = sum_{k != j} lambda_jk``."""
        return self.rates.sum(axis=1)

    def generator(self) -> np.ndarray:
        """Generator of the chain killed at rate ``r_j``."""
        return self.rates - np.diag(self.exit_rates + np.array(self.r))

    def Q(self, q) -> np.ndarray:
        return q + self.exit_rates + np.array(self.r)

    def mirrored(self) -> "RegimeModel":
        return RegimeModel(tuple(mirror(s) for s in self.states), self.rates, self.r, self.G)

    @classmethod
    def single(cls, p: KoBoLParams, r: float = 0.0, G: float = 1.0) -> "RegimeModel":
        return cls((p,), np.zeros((1, 1)), (r,), (G,))


@dataclass(frozen=True)
class RegimeNumerics:
    """Numerical settings for the regime-switching solver.

    The inner tolerance is tight because the rho acceleration amplifies
    node-to-node noise in the transform samples by several orders of magnitude.
    """

    b: float = 1.0
    omega1: float = 0.0
    omega_inner: float = math.pi / 6
    omega_outer: float = math.pi / 3
    zeta: float = 0.12
    eps: float = 1e-10
    eps_coupling: float = 1e-10
    eps_fine: float = 1e-13
    kappa: float = 0.4
    offset_fraction: float = 0.1
    M: int = 8
    r0: float = 0.0
    inner_tol: float = 1e-14
    inner_max: int = 200
    outer_tol: float = 1e-12
    outer_max: int = 20

    def __post_init__(self):
        if not 0 < self.omega_inner < self.omega_outer < math.pi / 2:
            raise ConfigError("need 0 < omega_inner < omega_outer < pi/2")
        if self.b <= 0 or self.zeta <= 0:
            raise ConfigError("b and zeta must be positive")
        if self.inner_max < 1 or self.outer_max < 1:
            raise ConfigError("iteration limits must be >= 1")


@dataclass(frozen=True, eq=False)
class SpiralGrids:
    """Two upper contours (``up1`` inner, ``up2`` outer), two lower ones and factor grids."""

    up1: DeformedGrid
    up2: DeformedGrid
    lo1: DeformedGrid
    lo2: DeformedGrid
    up_fine: DeformedGrid
    lo_fine: DeformedGrid
    min_separation: float = 0.0

    def __post_init__(self):
        a = [g.contour.crossing for g in (self.lo2, self.lo1, self.up1, self.up2)]
        if not (a[0] < a[1] < 0 < a[2] < a[3]):
            raise NumericalError(f"spiral contours out of order at the crossings: {a}")
        grids = (self.lo2, self.lo1, self.up1, self.up2)
        sep = math.inf
        for i in range(4):
            for j in range(i + 1, 4):
                d = np.abs(grids[i].points[:, None] - grids[j].points[None, :]).min()
                sep = min(sep, float(d))
        if not sep > 0:
            raise NumericalError("contour collision between spiral contours")
        object.__setattr__(self, "min_separation", sep)

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate([self.lo1.points, self.lo2.points])

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([self.up1.points, self.up2.points])

    @property
    def n(self) -> int:
        return self.lo1.size


def build_spiral_grids(model: RegimeModel, geometry: BarrierGeometry, num: RegimeNumerics) -> SpiralGrids:
    """Four contours sharing ``b`` and ``omega1``, sampled with a common step."""
    cu1 = build_contour(num.omega1, num.b, num.omega_inner)
    cu2 = build_contour(num.omega1, num.b, num.omega_outer)
    cl1 = build_contour(-num.omega1, num.b, -num.omega_inner)
    cl2 = build_contour(-num.omega1, num.b, -num.omega_outer)
    lam_exp, _ = select_truncation(cu1, num.offset_fraction * geometry.width, num.kappa, num.eps)
    # Coupling integrands decay only like 1/|eta| in the sinh variable's exponent.
    Lam = max(lam_exp, math.log(1.0 / num.eps_coupling))
    N = max(4, math.ceil(Lam / num.zeta))
    g = {k: build_grid(c, num.zeta, N) for k, c in
         (("up1", cu1), ("up2", cu2), ("lo1", cl1), ("lo2", cl2))}
    xi_max = max(float(np.abs(v.points).max()) for v in g.values())
    nu = max(s.nu for s in model.states)
    C = max(2 * abs(s.scale) / abs(s.mu) for s in model.states)
    decay = 2.0 - nu
    lam_f = (math.log(C * xi_max / decay) + (nu - 2) * math.log(num.b / 2) + math.log(1 / num.eps_fine)) / decay
    lam_f = max(lam_f, Lam)
    zf = min(default_step(num.eps_fine), num.zeta)
    Nf = max(4, math.ceil(lam_f / zf))
    return SpiralGrids(g["up1"], g["up2"], g["lo1"], g["lo2"],
                       build_grid(cu1, zf, Nf), build_grid(cl1, zf, Nf))


def solve_v0(model: RegimeModel, q: float) -> np.ndarray:
    """Laplace transform of the barrier-free value: ``(diag(Q) - rates) V0 = G``."""
    if not q > 0:
        raise ConfigError("q must be positive")
    A = np.diag(model.Q(q)) - model.rates
    try:
        v = np.linalg.solve(A, np.array(model.G))
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"singular system: {e}") from e
    return v


def barrier_free_price(model: RegimeModel, T: float) -> np.ndarray:
    """``exp(T * generator) @ G``; the inverse transform of :func:`solve_v0`."""
    return expm(T * model.generator()) @ np.array(model.G)


@dataclass(frozen=True, eq=False)
class StateFactors:
    """Factor values of one state on the lower (``lo1``+``lo2``) and upper (``up1``+``up2``) points."""

    Q: float
    phi_plus_lo: np.ndarray
    phi_minus_lo: np.ndarray
    phi_plus_up: np.ndarray
    phi_minus_up: np.ndarray
    inv_phi_plus_up: np.ndarray
    psi_lo: np.ndarray
    psi_up: np.ndarray
    residual: float


def state_factors(p: KoBoLParams, Q: float, grids: SpiralGrids) -> StateFactors:
    """Wiener-Hopf factors of one state at ``Q`` on all four contours."""
    lo, up = grids.lower, grids.upper
    fp0_up = phi_plus0_direct(p, Q, up, grids.lo_fine)
    fm_lo = phi_minus_direct(p, Q, lo, grids.up_fine)
    Phi_up, Phi_lo = symbol(p, Q, up), symbol(p, Q, lo)
    fm_up = 1.0 / (Phi_up * fp0_up)
    fp0_lo = 1.0 / (Phi_lo * fm_lo)
    fp_up = Q / (Q - 1j * p.mu * up) * fp0_up
    fp_lo = Q / (Q - 1j * p.mu * lo) * fp0_lo
    inv_fp_up = (1 - 1j * p.mu * up / Q) / fp0_up
    psi_lo, psi_up = psi(p, lo), psi(p, up)
    res = max(float(np.abs(fp_up * fm_up * (1 + psi_up / Q) - 1).max()),
              float(np.abs(fp_lo * fm_lo * (1 + psi_lo / Q) - 1).max()))
    if res > 1e-10:
        raise NumericalError(f"identity residual too large: {res:.3e}")
    return StateFactors(Q, fp_lo, fm_lo, fp_up, fm_up, inv_fp_up, psi_lo, psi_up, res)


def _cauchy(src: DeformedGrid, dens: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row-form matrix of ``(zeta/(2*pi*i)) * dens_k*der_k/(eta_k - xi_t)``."""
    w = src.zeta / (2j * math.pi) * dens * src.derivs
    return w[:, None] / (src.points[:, None] - targets[None, :])


@dataclass(frozen=True, eq=False)
class _StateOps:
    """Row-form operators of one state for one spectral value."""

    barrier_plus: np.ndarray   # (n on up1) -> (2n lower)
    barrier_minus: np.ndarray  # (n on lo1) -> (2n upper)
    couple_plus: np.ndarray    # (2n lower) -> (2n lower)
    couple_minus: np.ndarray   # (2n upper) -> (2n upper)


def _state_ops(p: KoBoLParams, f: StateFactors, grids: SpiralGrids, w: float) -> _StateOps:
    n = grids.n
    lo, up = grids.lower, grids.upper
    Q = f.Q
    # Barrier term of V^{+;s}: integrate U_minus over up1.
    dens = np.exp(1j * w * grids.up1.points) * f.inv_phi_plus_up[:n]
    B_plus = -_cauchy(grids.up1, dens, lo) * f.phi_plus_lo[None, :]
    # Barrier term of V^{-;s}: integrate U_plus over lo1.
    dens = np.exp(-1j * w * grids.lo1.points) / f.phi_minus_lo[:n]
    B_minus = _cauchy(grids.lo1, dens, up) * f.phi_minus_up[None, :]
    # Coupling for V^{+;s}: targets on lo1 use lo2; targets on lo2 use lo1 plus residue.
    C_plus = np.zeros((2 * n, 2 * n), dtype=complex)
    C_plus[n:, :n] = _cauchy(grids.lo2, f.phi_minus_lo[n:], grids.lo1.points) * (f.phi_plus_lo[:n] / Q)[None, :]
    C_plus[:n, n:] = _cauchy(grids.lo1, f.phi_minus_lo[:n], grids.lo2.points) * (f.phi_plus_lo[n:] / Q)[None, :]
    C_plus[n + np.arange(n), n + np.arange(n)] += 1.0 / (Q + f.psi_lo[n:])
    # Coupling for V^{-;s}: targets on up1 use up2; targets on up2 use up1 plus residue.
    C_minus = np.zeros((2 * n, 2 * n), dtype=complex)
    C_minus[n:, :n] = -_cauchy(grids.up2, f.phi_plus_up[n:], grids.up1.points) * (f.phi_minus_up[:n] / Q)[None, :]
    C_minus[:n, n:] = -_cauchy(grids.up1, f.phi_plus_up[:n], grids.up2.points) * (f.phi_minus_up[n:] / Q)[None, :]
    C_minus[n + np.arange(n), n + np.arange(n)] += 1.0 / (Q + f.psi_up[n:])
    return _StateOps(B_plus, B_minus, C_plus, C_minus)


def _coupled(model: RegimeModel, U: np.ndarray) -> np.ndarray:
    """``F_j = sum_{k != j} lambda_jk U_k``."""
    return model.rates @ U


def _iterate(model: RegimeModel, B: np.ndarray, C: Sequence[np.ndarray], tol: float, max_iter: int):
    """Fixed point ``U_j = B_j + F_j @ C_j`` started from ``U = B``.

    Returns the iterate and the list of sup-norm increments.  Raises
    :class:`ConvergenceError` when the increment fails to decrease over five steps.
    """
    U = B.copy()
    incs: list[float] = []
    if model.m == 1 or not np.any(model.rates):
        # No coupling: the barrier term is the exact solution.
        return U, incs
    scale = max(float(np.abs(B).max()), 1e-300)
    for _ in range(max_iter):
        F = _coupled(model, U)
        new = B + np.stack([F[j] @ C[j] for j in range(model.m)])
        incs.append(float(np.abs(new - U).max()) / scale)
        U = new
        if incs[-1] < tol:
            break
        if len(incs) > 5 and incs[-1] >= incs[-6]:
            raise ConvergenceError(f"inner iteration not converging: increments {incs[-6:]}")
    return U, incs


def inner_step_plus(model, ops, barrier_terms, U_prev):
    """One coupling update of the lower-contour samples for every state.

    ``U_j <- barrier_j + (sum_k lambda_jk U_prev_k) @ couple_plus_j``.
    """
    F = _coupled(model, U_prev)
    return barrier_terms + np.stack([F[j] @ ops[j].couple_plus for j in range(model.m)])


def inner_step_minus(model, ops, barrier_terms, U_prev):
    """Upper-contour counterpart of :func:`inner_step_plus`."""
    F = _coupled(model, U_prev)
    return barrier_terms + np.stack([F[j] @ ops[j].couple_minus for j in range(model.m)])


@dataclass
class CorrectionDiagnostics:
    outer_terms: int = 0
    inner_increments: list = field(default_factory=list)
    whf_residual: float = 0.0


def perpetual_correction(model: RegimeModel, geometry: BarrierGeometry, grids: SpiralGrids,
                         q: float, x, num: RegimeNumerics, diag: CorrectionDiagnostics | None = None):
    """Laplace-space barrier correction of every state at log-spot(s) ``x``.

    Returns an array of shape ``(m, len(x))``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    m, n = model.m, grids.n
    Qs = model.Q(q)
    facs = [state_factors(model.states[j], Qs[j], grids) for j in range(m)]
    w = geometry.width
    ops = [_state_ops(model.states[j], facs[j], grids, w) for j in range(m)]
    V0 = solve_v0(model, q)
    lo, up = grids.lower, grids.upper
    Bp = np.stack([V0[j] * facs[j].phi_plus_lo / (1j * lo) for j in range(m)])
    Bm = np.stack([V0[j] * facs[j].phi_minus_up * (1j / up) for j in range(m)])
    Sp = np.zeros((m, 2 * n), dtype=complex)
    Sm = np.zeros((m, 2 * n), dtype=complex)
    scale = max(float(np.abs(Bp).max()), float(np.abs(Bm).max()))
    sign = -1.0
    s = 0
    for s in range(1, num.outer_max + 1):
        Up, ip = _iterate(model, Bp, [o.couple_plus for o in ops], num.inner_tol, num.inner_max)
        Um, im = _iterate(model, Bm, [o.couple_minus for o in ops], num.inner_tol, num.inner_max)
        if diag is not None:
            diag.inner_increments.append((ip, im))
        Sp += sign * Up
        Sm += sign * Um
        sign = -sign
        inc = max(float(np.abs(Up).max()), float(np.abs(Um).max())) / scale
        if inc < num.outer_tol:
            break
        Bp = np.stack([Um[j, :n] @ ops[j].barrier_plus for j in range(m)])
        Bm = np.stack([Up[j, :n] @ ops[j].barrier_minus for j in range(m)])
    if diag is not None:
        diag.outer_terms = s
        diag.whf_residual = max(diag.whf_residual, max(f.residual for f in facs))
    wl = grids.lo1.weights / (2 * math.pi)
    wu = grids.up1.weights / (2 * math.pi)
    ap, am = Sp[:, :n] * wl, Sm[:, :n] * wu
    # One spot at a time so that a spot's value does not depend on its batch.
    out = np.empty((m, len(xs)), dtype=complex)
    for i, xv in enumerate(xs):
        out[:, i] = np.sum(ap * np.exp(1j * (xv - geometry.h_plus) * grids.lo1.points), axis=1) \
            + np.sum(am * np.exp(1j * (xv - geometry.h_minus) * grids.up1.points), axis=1)
    return out


def _check_states(model: RegimeModel, grids: SpiralGrids, q0: float) -> None:
    for j, p in enumerate(model.states):
        validate(p)
        Q0 = float(model.Q(q0)[j])
        for a, b_ in ((grids.up1, grids.lo1), (grids.up2, grids.lo2)):
            check_admissibility(p, Q0, ContourPair(a, b_, grids.up_fine, grids.lo_fine))


def price_regime_all(model: RegimeModel, geometry: BarrierGeometry, T: float, x,
                     num: RegimeNumerics | None = None, return_diagnostics: bool = False):
    """Prices of every initial state at log-spot(s) ``x``; shape ``(m, len(x))``.

    Spots on or outside a barrier are priced at 0.
    """
    num = num or RegimeNumerics()
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if model.states[0].mu < 0:
        model, geometry, xs = model.mirrored(), geometry.mirrored(), -xs
    inside = (xs > geometry.h_minus) & (xs < geometry.h_plus)
    out = np.zeros((model.m, len(xs)))
    diags = []
    if not inside.any():
        return (out, diags) if return_diagnostics else out
    gcfg = GwrConfig(T=T, M=num.M, r0=num.r0)
    qs = num.r0 + nodes(gcfg)
    try:
        grids = build_spiral_grids(model, geometry, num)
        _check_states(model, grids, float(qs[0]))
    except DntError as e:
        raise PipelineError("admissibility", None, e) from e
    samples = []
    for k, q in enumerate(qs):
        d = CorrectionDiagnostics()
        try:
            samples.append(perpetual_correction(model, geometry, grids, q, xs[inside], num, d).real)
        except DntError as e:
            raise PipelineError("regime", k + 1, e) from e
        diags.append(d)
    corr = invert(np.array(samples), gcfg)
    out[:, inside] = barrier_free_price(model, T)[:, None] + math.exp(num.r0 * T) * corr
    return (out, diags) if return_diagnostics else out


def price_regime_dnt(model: RegimeModel, geometry: BarrierGeometry, T: float, x: float, j0: int,
                     num: RegimeNumerics | None = None) -> float:
    """Price for initial state ``j0`` (0-based) at log-spot ``x``."""
    if not 0 <= j0 < model.m:
        raise ConfigError(f"initial state {j0} out of range for {model.m} states")
    return float(price_regime_all(model, geometry, T, [x], num)[j0, 0])


_STATE_KEYS = {"preset", "c", "nu", "lambda_minus", "lambda_plus", "mu"}


def regime_from_config(block: dict) -> RegimeModel:
    """Build a :class:`RegimeModel` from a JSON-style block.

    ``{"states": [{"preset": "MB"} | {"c": .., "nu": .., ...}], "rates": [[...]],
    "r": [...], "G": [...]}``; numbers may be given as decimal strings.
    """
    unknown = set(block) - {"states", "rates", "r", "G"}
    if unknown:
        raise ConfigError(f"unknown key(s) in regime block: {sorted(unknown)}")
    if "states" not in block:
        raise ConfigError("regime block needs 'states'")
    states = []
    for i, s in enumerate(block["states"]):
        if isinstance(s, str):
            states.append(get_preset(s))
            continue
        bad = set(s) - _STATE_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) in regime state {i}: {sorted(bad)}")
        if "preset" in s:
            base = get_preset(s["preset"]).as_dict()
            base.update({k: float(v) for k, v in s.items() if k != "preset"})
        else:
            missing = {"c", "nu", "lambda_minus", "lambda_plus", "mu"} - set(s)
            if missing:
                raise ConfigError(f"regime state {i} is missing {sorted(missing)}")
            base = {k: float(v) for k, v in s.items()}
        states.append(KoBoLParams(**base))
    m = len(states)
    rates = np.array([[float(v) for v in row] for row in block.get("rates", [[0.0] * m] * m)])
    if rates.shape != (m, m):
        raise ConfigError(f"regime rates must be {m}x{m}")
    r = [float(v) for v in block.get("r", [0.0] * m)]
    G = [float(v) for v in block.get("G", [1.0] * m)]
    return RegimeModel(tuple(states), rates, tuple(r), tuple(G))
