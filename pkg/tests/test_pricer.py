import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobol_dnt import (BarrierGeometry, ConfigError, NumericsConfig, PipelineError, PricingRequest, get_preset,
                       mirror, price, price_curve, price_values, self_consistency)
from kobol_dnt.pricer import GRID_PRESETS

from conftest import REF_HI, REF_LO, REF_R, REF_SPOTS, REF_T


def _req(S=REF_SPOTS, lo=REF_LO, hi=REF_HI, T=REF_T, model="MB", **num):
    return PricingRequest.from_prices(model, list(S), lo, hi, T, REF_R, NumericsConfig(**num))


@functools.lru_cache(maxsize=None)
def _curve(S=REF_SPOTS, lo=REF_LO, hi=REF_HI, T=REF_T, model="MB"):
    return tuple(price_curve(_req(S, lo, hi, T, model)))


def test_diagnostics_are_complete():
    res = _curve()
    assert len(res) == 5
    r = res[0]
    assert len(r.nodes) == 16 and [n.node for n in r.nodes] == list(range(1, 17))
    assert r.whf_residual < 1e-12 and r.im_residual < 1e-10
    assert 2 <= r.series_terms <= 11
    assert all(n.solver_used == "series" for n in r.nodes)
    assert set(r.nodes[0].timings) == {"factors", "kernels", "solve", "evaluate"}
    info = r.grid_info
    assert info["N_main"] == 138 and info["N_fine"] == 251 and not info["mirrored"]


def test_prices_within_bounds_and_unimodal():
    p = np.array([r.price for r in _curve()])
    assert np.all((p > 0) & (p < math.exp(-REF_R * REF_T)))
    k = int(np.argmax(p))
    assert np.all(np.diff(p[:k + 1]) > 0) and np.all(np.diff(p[k:]) < 0)


def test_knocked_out_spots():
    res = price_curve(_req(S=(0.9, 0.95, 1.0, 1.05, 1.2)))
    assert [r.knocked_out for r in res] == [True, True, False, True, True]
    assert [r.price for r in res][:2] == [0.0, 0.0] and res[-1].price == 0.0
    assert res[2].price == pytest.approx(_curve()[2].price, abs=0)
    all_out = price_curve(_req(S=(0.5, 2.0)))
    assert [r.price for r in all_out] == [0.0, 0.0]


def test_curve_and_single_spot_agree_bitwise():
    curve = [r.price for r in _curve()]
    single = [price(_req(S=(s,))).price for s in REF_SPOTS]
    assert curve == single
    with pytest.raises(ConfigError):
        price(_req())


def test_translation_invariance():
    base = price_values(_req())
    for shift in (-0.4, 0.25):
        req = _req()
        moved = PricingRequest(req.model, tuple(x + shift for x in req.x), req.geometry.shifted(shift), req.T, req.r)
        assert np.max(np.abs(price_values(moved) - base)) < 1e-10


def test_negative_drift_is_priced_through_the_mirror():
    req = _req()
    m = PricingRequest(mirror(req.model), tuple(-x for x in req.x), req.geometry.mirrored(), req.T, req.r)
    res = price_curve(m)
    assert res[0].grid_info["mirrored"]
    assert np.max(np.abs(np.array([r.price for r in res]) - price_values(req))) < 1e-9


def test_threads_match_serial():
    serial = price_values(_req())
    threaded = price_values(_req(workers=4))
    assert np.array_equal(serial, threaded)


def test_threads_env(monkeypatch):
    monkeypatch.setenv("KOBOL_DNT_THREADS", "3")
    assert np.array_equal(price_values(_req(S=(1.0,))), price_values(_req(S=(1.0,), workers=1)))
    monkeypatch.setenv("KOBOL_DNT_THREADS", "many")
    with pytest.raises(ConfigError):
        price_values(_req(S=(1.0,)))


@pytest.mark.parametrize("solver", ["solve", "inverse"])
def test_direct_solvers_agree_with_series(solver):
    # the states agree to rounding; the rho acceleration turns that into ~1e-8 in price
    assert np.max(np.abs(price_values(_req(solver=solver)) - price_values(_req()))) < 5e-8


def test_series_fallback_for_slow_nodes():
    res = price_curve(_req(S=(1.0,), T=0.5))
    used = [n.solver_used for n in res[0].nodes]
    assert used[0] == "solve" and used[-1] == "series"
    with pytest.raises(PipelineError) as info:
        price_curve(_req(S=(1.0,), T=0.5, series_fallback=False))
    assert info.value.stage == "solve" and info.value.node == 1


def test_monotone_in_maturity():
    prev = None
    for T in (0.05, 0.1, 0.25, 0.5):
        v = price_values(_req(T=T))
        if prev is not None:
            assert np.all(v < prev)
        prev = v


@settings(max_examples=8, deadline=None)
@given(u=st.floats(0.1, 0.9), widen=st.floats(0.002, 0.03))
def test_widening_increases_price(u, widen):
    S = REF_LO + u * (REF_HI - REF_LO)
    a = price_values(_req(S=(S,)))[0]
    b = price_values(_req(S=(S,), lo=REF_LO - widen, hi=REF_HI + widen))[0]
    assert 0 <= a < b <= math.exp(-REF_R * REF_T)


def test_grid_presets_and_numerics_validation():
    assert NumericsConfig.preset("coarse").n_main == GRID_PRESETS["coarse"][0]
    with pytest.raises(ConfigError):
        NumericsConfig.preset("huge")
    for kw in (dict(n_main=5), dict(solver="lu"), dict(kappa=0.6), dict(omega=2.0), dict(M=0),
               dict(offset_fraction=0.0), dict(b=-1.0), dict(eps=2.0)):
        with pytest.raises(ConfigError):
            NumericsConfig(**kw)


def test_request_validation():
    g = BarrierGeometry.from_prices(0.95, 1.05)
    with pytest.raises(ConfigError):
        PricingRequest("MB", (), g, 0.25)
    with pytest.raises(ConfigError):
        PricingRequest("MB", (0.0,), g, 0.0)
    with pytest.raises(ConfigError):
        PricingRequest("MB", (math.nan,), g, 0.25)
    with pytest.raises(ConfigError):
        PricingRequest.from_prices("MB", [-1.0], 0.95, 1.05, 0.25)
    assert PricingRequest("mb", (0.0,), g, 0.25).model == get_preset("MB")


def test_invalid_models_fail_at_validation():
    base = get_preset("MB").as_dict()
    base["nu"] = 1.5
    from kobol_dnt import KoBoLParams
    req = PricingRequest(KoBoLParams(**base), (0.0,), BarrierGeometry.from_prices(0.95, 1.05), 0.25)
    with pytest.raises(PipelineError) as info:
        price_curve(req)
    assert info.value.stage == "validate"


def test_self_consistency_report_shape():
    rep = self_consistency(_req(S=(1.0,)), runs={"alt": ({"n_main": 306, "n_fine": 557}, 1e-7, "finer grids")})
    assert rep.spots == (1.0,) and len(rep.rows) == 1
    label, desc, diffs, thr, ok = rep.rows[0]
    assert label == "alt" and ok and abs(diffs[0]) < thr
