"""Desk-scale Monte Carlo pricer for double-no-touch options under KoBoL.

Jumps larger than ``eps`` in absolute value form a compound Poisson process
whose sizes are drawn by inverse transform from a tabulated distribution
function.  Smaller jumps are replaced by their mean, which is finite because
the process has finite variation.  Barriers are monitored on the time grid
only, so the estimate is biased upwards by missed touches; refining the grid
lowers it.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gamma, gammainc, gammaincc

from .errors import ConfigError, GeometryError, ScopeError
from .levy_model import KoBoLParams
from .perpetual_dual import BarrierGeometry

__all__ = ["McConfig", "McResult", "McComparison", "JumpTail", "simulate_dnt", "compare", "write_csv"]

_TABLE_NODES = 10_000
_TAIL_CUTOFF = 1e-14


@dataclass(frozen=True)
class McConfig:
    eps: float = 1e-4
    n_paths: int = 100_000
    n_steps: int = 2000
    seed: int = 12345
    chunk: int = 2500
    workers: int = 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.n_paths < 1 or self.n_steps < 1 or self.chunk < 1:
            raise ConfigError("n_paths, n_steps and chunk must be >= 1")


@dataclass(frozen=True)
class McResult:
    price: float
    stderr: float
    survival: float
    n_paths: int
    n_steps: int
    eps: float
    seed: int


@dataclass(frozen=True)
class McComparison:
    gap: float
    z_score: float
    allowance: float
    flagged: bool


def _upper_gamma_neg(nu: float, z: float) -> float:
    """``Gamma(-nu, z)`` for ``0 < nu < 1`` and ``z > 0``."""
    g1 = gammaincc(1 - nu, z) * gamma(1 - nu)
    return (z ** (-nu) * math.exp(-z) - g1) / nu


class JumpTail:
    """One side of the truncated Levy measure ``c*exp(-a*x)*x^(-nu-1)`` on ``x > eps``."""

    def __init__(self, c: float, nu: float, a: float, eps: float):
        self.c, self.nu, self.a, self.eps = c, nu, a, eps
        self.intensity = c * a ** nu * _upper_gamma_neg(nu, a * eps) if c > 0 else 0.0
        # Mean of the jumps below eps: c * a^(nu-1) * lower_gamma(1-nu, a*eps).
        self.small_mean = c * a ** (nu - 1) * gamma(1 - nu) * gammainc(1 - nu, a * eps) if c > 0 else 0.0
        self.abs_moment = c * a ** (nu - 1) * gamma(1 - nu) if c > 0 else 0.0
        if self.intensity > 0:
            x_max = eps
            while _upper_gamma_neg(nu, a * x_max) / _upper_gamma_neg(nu, a * eps) > _TAIL_CUTOFF:
                x_max *= 2
            xs = np.geomspace(eps, x_max, _TABLE_NODES)
            sf = np.array([_upper_gamma_neg(nu, a * x) for x in xs]) / _upper_gamma_neg(nu, a * eps)
            sf[0] = 1.0
            # Interpolate log x against log survival (increasing order for np.interp).
            self._ls = np.log(np.maximum(sf, 1e-300))[::-1]
            self._lx = np.log(xs)[::-1]

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Jump sizes for uniforms ``u`` in (0, 1]."""
        return np.exp(np.interp(np.log(u), self._ls, self._lx))


def _paths_chunk(n, rng, x0, geom, T, cfg, drift, up: JumpTail, dn: JumpTail):
    dt = T / cfg.n_steps
    inc = np.full((n, cfg.n_steps), drift * dt)
    for tail, sgn in ((up, 1.0), (dn, -1.0)):
        if tail.intensity <= 0:
            continue
        counts = rng.poisson(tail.intensity * T, size=n)
        tot = int(counts.sum())
        if tot == 0:
            continue
        rows = np.repeat(np.arange(n), counts)
        cols = np.minimum((rng.random(tot) * cfg.n_steps).astype(np.int64), cfg.n_steps - 1)
        sizes = tail.sample(1.0 - rng.random(tot))
        np.add.at(inc, (rows, cols), sgn * sizes)
    path = x0 + np.cumsum(inc, axis=1)
    alive = np.all((path > geom.h_minus) & (path < geom.h_plus), axis=1)
    return int(alive.sum())


def simulate_dnt(p: KoBoLParams, geometry: BarrierGeometry, T: float, x: float, r: float,
                 cfg: McConfig) -> McResult:
    """Monte Carlo DNT price with discrete monitoring on ``cfg.n_steps`` dates."""
    if not 0 < p.nu < 1 or not p.lambda_minus < 0 < p.lambda_plus:
        raise ScopeError("Monte Carlo needs 0 < nu < 1 and lambda_minus < 0 < lambda_plus")
    if not geometry.contains(x):
        raise GeometryError("spot outside corridor")
    up = JumpTail(p.c, p.nu, -p.lambda_minus, cfg.eps)
    dn = JumpTail(p.c, p.nu, p.lambda_plus, cfg.eps)
    total = up.abs_moment + dn.abs_moment
    if total > 0:
        truncated = (up.abs_moment - up.small_mean) + (dn.abs_moment - dn.small_mean)
        small = total - truncated
        if small > 0.5 * total:
            raise ConfigError(f"eps too large: small jumps carry {small / total:.0%} of the jump variation")
    drift = p.mu + up.small_mean - dn.small_mean
    sizes = [cfg.chunk] * (cfg.n_paths // cfg.chunk)
    if cfg.n_paths % cfg.chunk:
        sizes.append(cfg.n_paths % cfg.chunk)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(len(sizes))]
    args = list(zip(sizes, streams))

    def run(a):
        return _paths_chunk(a[0], a[1], x, geometry, T, cfg, drift, up, dn)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            alive = sum(ex.map(run, args))
    else:
        alive = sum(run(a) for a in args)
    disc = math.exp(-r * T)
    frac = alive / cfg.n_paths
    std = math.sqrt(frac * (1 - frac) * cfg.n_paths / max(cfg.n_paths - 1, 1))
    return McResult(disc * frac, disc * std / math.sqrt(cfg.n_paths), frac,
                    cfg.n_paths, cfg.n_steps, cfg.eps, cfg.seed)


def compare(analytic_price: float, mc: McResult, bias_allowance: float = 0.02) -> McComparison:
    """Gap ``analytic - mc`` in absolute terms and in standard errors."""
    gap = analytic_price - mc.price
    if mc.stderr > 0:
        z = gap / mc.stderr
    else:
        z = 0.0 if gap == 0 else math.copysign(math.inf, gap)
    flagged = abs(gap) > 3 * mc.stderr + bias_allowance
    return McComparison(gap, z, bias_allowance, flagged)


def write_csv(path, mc: McResult, extra: dict | None = None) -> None:
    """One-row CSV with the estimate and its configuration."""
    row = asdict(mc)
    if extra:
        row.update(extra)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
