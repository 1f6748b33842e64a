"""Acceptance criteria at their stated tolerances.

Each test checks one part of a criterion and records it; the terminal summary
prints one pass/fail line per criterion.
"""
import math
import time

import numpy as np
import pytest

from kobol_dnt import (KoBoLParams, NumericsConfig, PricingRequest, get_preset, mirror, price_curve,
                       price_values)
from kobol_dnt.laplace_gwr import closed_form_suite
from kobol_dnt.mc_oracle import McConfig, compare, simulate_dnt
from kobol_dnt.perpetual_dual import build_kernels, seed, solve_direct, solve_series
from kobol_dnt.regime_switching import RegimeModel, barrier_free_price, price_regime_all
from kobol_dnt.wiener_hopf import compute_factors

from conftest import (PRESET_NAMES, REF_HI, REF_LO, REF_R, REF_SPOTS, REF_T, record, ref_factors, ref_geometry,
                      ref_nodes, ref_pair)

CURVE_REF = (0.4325056, 0.6497429, 0.6801758, 0.5289720, 0.224546)
PRESET_REF = {"AA": 0.65266801, "AB": 0.67764139, "MA": 0.65499963, "MB": 0.68017579}
PRESET_SPOT = 1.09985
CARRY = 0.004 + 0.01171  # domestic minus foreign rate of the reference setup


def _curve(r=REF_R, model="MB", lo=REF_LO, hi=REF_HI, T=REF_T, **num):
    return PricingRequest.from_prices(model, list(REF_SPOTS), lo, hi, T, r, NumericsConfig(**num))


def _fmt(a):
    return "[" + ", ".join(f"{v:.2e}" for v in np.atleast_1d(a)) + "]"


# 1. Reference price curve

C1 = "reference price curve"


def test_criterion_1_curve_prices():
    t0 = time.perf_counter()
    v = price_values(_curve())
    wall = time.perf_counter() - t0
    diff = v - np.array(CURVE_REF)
    alt = price_values(_curve(r=CARRY)) - np.array(CURVE_REF)
    ok = record(1, C1, "prices at r=0.004 within 5e-5", np.max(np.abs(diff)) < 5e-5,
                f"diffs {_fmt(diff)}; at r=r_d-r_f diffs {_fmt(alt)}; wall {wall:.2f}s")
    assert ok, f"max |diff| {np.max(np.abs(diff)):.2e}"


def test_criterion_1_wall_time():
    price_values(_curve())  # warm-up
    t0 = time.perf_counter()
    price_values(_curve())
    wall = time.perf_counter() - t0
    assert record(1, C1, "5-spot curve within 5 s", wall <= 5.0, f"{wall:.2f}s")


# 2. Reference preset prices

@pytest.mark.parametrize("name", PRESET_NAMES)
def test_criterion_2_preset_prices(name):
    S0 = PRESET_SPOT
    req = PricingRequest.from_prices(name, [S0], 0.95 * S0, 1.05 * S0, 0.25, CARRY)
    v = price_values(req)[0]
    d = v - PRESET_REF[name]
    assert record(2, "reference preset prices", name, abs(d) < 1e-4, f"{v:.8f}, diff {d:.2e}"), d


# 3. Self-consistency suite

C3 = "self-consistency suite"


@pytest.fixture(scope="module")
def curve_base():
    return price_values(_curve())


def test_criterion_3_contour_change(curve_base):
    d = price_values(_curve(n_main=306, n_fine=557, omega=math.pi / 5, b=0.95)) - curve_base
    assert record(3, C3, "eps0 contour change < 1e-7", np.max(np.abs(d)) < 1e-7, _fmt(d))


@pytest.mark.parametrize("r0", [0.5, 5.0, -0.5])
def test_criterion_3_r0_family(curve_base, r0):
    d = price_values(_curve(r0=r0)) - curve_base
    assert record(3, C3, f"r0={r0:g} < 2e-4", np.max(np.abs(d)) < 2e-4, _fmt(d))


def test_criterion_3_grid_coarsening(curve_base):
    d = price_values(_curve(n_main=108, n_fine=188)) - curve_base
    assert record(3, C3, "276->108 grids < 1e-4", np.max(np.abs(d)) < 1e-4, _fmt(d))


# 4. GWR oracle suite

def test_criterion_4_gwr_suite():
    rows = closed_form_suite(M=8, T=0.25)
    for row in rows:
        record(4, "GWR oracle suite", row["transform"], row["passed"], f"err {row['error']:.1e} < {row['tol']:.0e}")
    assert all(r["passed"] for r in rows)


# 5. Wiener-Hopf identity

C5 = "Wiener-Hopf identity"


def test_criterion_5_identity_all_nodes():
    worst = max(ref_factors(n, k).residual for n in PRESET_NAMES for k in range(1, 17))
    assert record(5, C5, "residual < 1e-12 (4 presets, 16 nodes, both grids)", worst < 1e-12, f"max {worst:.1e}")


def test_criterion_5_pure_drift():
    p = KoBoLParams(c=0.0, nu=0.445, lambda_minus=-51.66, lambda_plus=27.93, mu=0.094)
    worst = 0.0
    for q in ref_nodes():
        f = compute_factors(p, float(q), ref_pair("MB"))
        xp, xm = ref_pair("MB").L_plus.points, ref_pair("MB").L_minus.points
        worst = max(worst, f.residual, np.abs(f.phi_minus_on_minus - 1).max(),
                    np.abs(f.phi_plus_on_plus - q / (q - 1j * p.mu * xp)).max(),
                    np.abs(f.phi_plus_on_minus - q / (q - 1j * p.mu * xm)).max())
    assert record(5, C5, "pure-drift limit exact to 1e-14", worst < 1e-14, f"max {worst:.1e}")


# 6. Solver equivalence

C6 = "solver equivalence"


def _kernels(k):
    return build_kernels(get_preset("MB"), ref_factors("MB", k), ref_geometry(), ref_pair("MB"))


def test_criterion_6_blocks_agree():
    worst = 0.0
    for k in range(1, 17):
        ker, s0 = _kernels(k), seed(ref_pair("MB"))
        b1 = solve_series(ker, s0, M0=40, tol=1e-17)
        b2 = solve_direct(ker, s0, "inverse")
        b3 = solve_direct(ker, s0, "solve")
        for a, b in ((b1, b2), (b1, b3), (b2, b3)):
            worst = max(worst, np.abs(a.W_plus - b.W_plus).max(), np.abs(a.W_minus - b.W_minus).max())
    assert record(6, C6, "blocks 1/2/3 agree < 1e-12", worst < 1e-12, f"max {worst:.1e}")


def test_criterion_6_series_increment_by_j10():
    incs = []
    for k in range(1, 17):
        # j counts kernel applications after the seed, as M0 does
        full = solve_series(_kernels(k), seed(ref_pair("MB")), M0=40, tol=1e-17)
        inc = full.increments
        incs.append(inc[9] if len(inc) >= 10 else inc[-1])
    worst = max(incs)
    assert record(6, C6, "series increment < 1e-15 by j=10", worst < 1e-15,
                  f"max over nodes {worst:.1e} (node {int(np.argmax(incs)) + 1})")


# 7. Structural properties

C7 = "structural properties"


@pytest.fixture(scope="module")
def structural():
    out = {}
    for name in PRESET_NAMES:
        by_T = {T: price_curve(_curve(model=name, T=T)) for T in (0.05, 0.1, 0.25, 0.5)}
        wide = [price_values(_curve(model=name, lo=REF_LO - d, hi=REF_HI + d)) for d in (0.0, 0.01, 0.02)]
        req = _curve(model=name)
        mirrored = PricingRequest(mirror(req.model), tuple(-x for x in req.x), req.geometry.mirrored(), req.T, req.r)
        shifted = PricingRequest(req.model, tuple(x + 0.3 for x in req.x), req.geometry.shifted(0.3), req.T, req.r)
        out[name] = (by_T, wide, price_values(mirrored), price_values(shifted))
    return out


def _prices(curve):
    return np.array([r.price for r in curve])


def test_criterion_7_bounds(structural):
    cap = math.exp(-REF_R * 0.05)
    ok = all(np.all((_prices(c) >= 0) & (_prices(c) <= math.exp(-REF_R * T)))
             for by_T, wide, _, _ in structural.values() for T, c in by_T.items())
    ok &= all(np.all((w >= 0) & (w <= cap)) for _, wide, _, _ in structural.values() for w in wide)
    assert record(7, C7, "bounds [0, exp(-rT)]", ok, "all presets")


def test_criterion_7_monotone_in_T(structural):
    ok = all(np.all(np.diff(np.array([_prices(by_T[T]) for T in sorted(by_T)]), axis=0) < 0)
             for by_T, _, _, _ in structural.values())
    assert record(7, C7, "decreasing in T", ok, "T in {0.05, 0.1, 0.25, 0.5}")


def test_criterion_7_widening(structural):
    ok = all(np.all(np.diff(np.array(wide), axis=0) > 0) for _, wide, _, _ in structural.values())
    assert record(7, C7, "increasing under widening", ok, "+-0.01, +-0.02")


def test_criterion_7_mirror(structural):
    worst = max(np.abs(m - _prices(by_T[0.25])).max() for by_T, _, m, _ in structural.values())
    assert record(7, C7, "mirror < 1e-9", worst < 1e-9, f"max {worst:.1e}")


def test_criterion_7_translation(structural):
    worst = max(np.abs(s - _prices(by_T[0.25])).max() for by_T, _, _, s in structural.values())
    assert record(7, C7, "translation < 1e-10", worst < 1e-10, f"max {worst:.1e}")


def test_criterion_7_imaginary_residual(structural):
    worst = max(r.im_residual for by_T, _, _, _ in structural.values() for c in by_T.values() for r in c)
    assert record(7, C7, "imaginary residual < 1e-10", worst < 1e-10, f"max {worst:.1e}")


# 8. Regime switching

C8 = "regime switching"
REG_X = np.log([0.96, 1.0, 1.04])
REG_RATES = np.array([[0.0, 2.0], [3.0, 0.0]])


@pytest.fixture(scope="module")
def single_prices():
    return price_values(PricingRequest(get_preset("MB"), tuple(REG_X), ref_geometry(), REF_T, REF_R))


def test_criterion_8_one_state_reduction(single_prices):
    v = price_regime_all(RegimeModel.single(get_preset("MB"), REF_R), ref_geometry(), REF_T, REG_X)
    d = np.abs(v[0] - single_prices).max()
    assert record(8, C8, "m=1 reduction < 1e-6", d < 1e-6, f"{d:.1e}")


def test_criterion_8_collapse(single_prices):
    p = get_preset("MB")
    v = price_regime_all(RegimeModel((p, p), REG_RATES, (REF_R, REF_R), (1.0, 1.0)), ref_geometry(), REF_T, REG_X)
    d = np.abs(v - single_prices[None, :]).max()
    assert record(8, C8, "m=2 collapse < 1e-6", d < 1e-6, f"{d:.1e}")


@pytest.fixture(scope="module")
def mixed_regime():
    p = get_preset("MB")
    p2 = KoBoLParams(**{**p.as_dict(), "c": 2 * p.c})
    model = RegimeModel((p, p2), REG_RATES, (REF_R, 2 * REF_R), (1.0, 1.5))
    vals, diags = price_regime_all(model, ref_geometry(), REF_T, REG_X, return_diagnostics=True)
    return model, vals, diags


def test_criterion_8_geometric_increments(mixed_regime):
    _, _, diags = mixed_regime
    worst = 0.0
    for d in diags:
        for pair in d.inner_increments:
            for inc in pair:
                inc = np.asarray(inc)
                inc = inc[inc > 1e-13]
                if len(inc) >= 3:
                    worst = max(worst, float(np.max(inc[1:] / inc[:-1])))
    assert record(8, C8, "inner increments geometric", worst < 1, f"max ratio {worst:.2f}")


def test_criterion_8_state_bounds(mixed_regime):
    model, vals, _ = mixed_regime
    free = barrier_free_price(model, REF_T)
    ok = bool(np.all(vals >= 0) and np.all(vals <= free[:, None]))
    assert record(8, C8, "per-state bounds", ok, f"min {vals.min():.4f}, max/cap {np.max(vals / free[:, None]):.4f}")


# 9. Monte Carlo cross-check

def test_criterion_9_monte_carlo():
    cfg = McConfig(eps=1e-4, n_paths=100_000, n_steps=2000, seed=12345)
    req = PricingRequest.from_prices("MB", [1.0], REF_LO, REF_HI, REF_T, REF_R)
    analytic = price_values(req)[0]
    mc = simulate_dnt(req.model, req.geometry, REF_T, 0.0, REF_R, cfg)
    cmp_ = compare(analytic, mc)
    err_mc = mc.price - analytic
    record(9, "Monte Carlo cross-check", "|analytic-MC| < 3 se + 0.02", not cmp_.flagged,
           f"analytic {analytic:.5f}, MC {mc.price:.5f} +- {mc.stderr:.5f}")
    record(9, "Monte Carlo cross-check", "MC error negative", err_mc < 0, f"MC - analytic {err_mc:+.4f}")
    assert not cmp_.flagged and err_mc < 0
