"""Command-line front end.

Usage examples::

    kobol-dnt price --preset MB --spot 1.0 --lo 0.95 --hi 1.05 --T 0.25 --r 0.004
    kobol-dnt curve --preset MB --spot 0.96 0.98 1 1.02 1.04 --lo 0.95 --hi 1.05 --T 0.25
    kobol-dnt gwr-test
    kobol-dnt whf-check --preset MB

A JSON config file (``--config``) may supply the blocks ``model``, ``market``,
``option``, ``numerics``, ``regime`` and ``mc``; flags override file values.
Exit codes: 0 success, 1 pricing error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DntError
from .laplace_gwr import GwrConfig, closed_form_suite, nodes
from .levy_model import PRESETS, KoBoLParams, get_preset, martingale_diagnostic, mirror
from .mc_oracle import McConfig, compare, simulate_dnt
from .perpetual_dual import BarrierGeometry
from .pricer import GRID_PRESETS, NumericsConfig, PricingRequest, build_contour_pair, price_curve, self_consistency
from .regime_switching import RegimeModel, RegimeNumerics, price_regime_all, regime_from_config
from .wiener_hopf import compute_factors, continuation_residual, cross_check_general_formulas

__all__ = ["RunConfig", "parse", "run", "main", "resolved_config"]

COMMANDS = ("price", "curve", "selfcheck", "gwr-test", "whf-check", "mc", "regime-price")
_BLOCKS = {"model", "market", "option", "numerics", "regime", "mc"}
_MODEL_KEYS = {"preset", "c", "nu", "lambda_minus", "lambda_plus", "mu"}
_MARKET_KEYS = {"r"}
_OPTION_KEYS = {"spot", "spots", "lo", "hi", "T", "state"}
_NUMERICS_KEYS = {f.name for f in dataclasses.fields(NumericsConfig)} | {"grid_preset"}
_MC_KEYS = {"eps", "n_paths", "n_steps", "seed"}
_INT_NUMERICS = {"n_main", "n_fine", "M", "M0", "workers"}


@dataclass(frozen=True)
class RunConfig:
    command: str
    request: PricingRequest | None = None
    regime: RegimeModel | None = None
    state: int = 0
    mc: McConfig | None = None
    fmt: str = "csv"
    output: str | None = None
    verbosity: int = 0
    gwr_M: int = 8
    gwr_T: float = 0.25
    dump_config: bool = False
    compare: bool = False


def _num(v, key: str) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        x = float(v)
    elif isinstance(v, str):
        try:
            x = float(v.strip())
        except ValueError:
            raise ConfigError(f"{key}: malformed number {v!r}") from None
    else:
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if not math.isfinite(x):
        raise ConfigError(f"{key}: number must be finite, got {v!r}")
    return x


def _int(v, key: str) -> int:
    x = _num(v, key)
    if x != int(x):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return int(x)


def _check_keys(block: dict, allowed: set, name: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{name}: expected an object")
    bad = set(block) - allowed
    if bad:
        raise ConfigError(f"unknown key(s) in {name}: {sorted(bad)}")


def _model(block: dict) -> KoBoLParams:
    _check_keys(block, _MODEL_KEYS, "model")
    if "preset" in block:
        base = get_preset(str(block["preset"])).as_dict()
        base.update({k: _num(v, f"model.{k}") for k, v in block.items() if k != "preset"})
    else:
        missing = (_MODEL_KEYS - {"preset"}) - set(block)
        if missing:
            raise ConfigError(f"model: missing required field(s) {sorted(missing)}")
        base = {k: _num(v, f"model.{k}") for k, v in block.items()}
    return KoBoLParams(**base)


def _numerics(block: dict) -> NumericsConfig:
    _check_keys(block, _NUMERICS_KEYS, "numerics")
    kw = {}
    if "grid_preset" in block:
        name = str(block["grid_preset"])
        if name not in GRID_PRESETS:
            raise ConfigError(f"numerics.grid_preset: unknown preset {name!r}")
        kw["n_main"], kw["n_fine"] = GRID_PRESETS[name]
    for k, v in block.items():
        if k == "grid_preset":
            continue
        if k == "solver":
            kw[k] = str(v)
        elif k == "series_fallback":
            if not isinstance(v, bool):
                raise ConfigError(f"numerics.series_fallback: expected true or false, got {v!r}")
            kw[k] = v
        elif k in ("n_main", "n_fine", "workers") and v is None:
            kw[k] = None
        elif k in _INT_NUMERICS:
            kw[k] = _int(v, f"numerics.{k}")
        else:
            kw[k] = _num(v, f"numerics.{k}")
    return NumericsConfig(**kw)


def _merge(file_cfg: dict, args) -> dict:
    # Deep copy of the file blocks, then flag overrides.
    cfg = {k: dict(v) if isinstance(v, dict) else v for k, v in file_cfg.items()}
    for b in ("model", "market", "option", "numerics", "mc"):
        cfg.setdefault(b, {})
    if getattr(args, "preset", None):
        cfg["model"] = {"preset": args.preset}
    for flag, block, key in (("r", "market", "r"), ("lo", "option", "lo"), ("hi", "option", "hi"),
                             ("T", "option", "T"), ("state", "option", "state"),
                             ("r0", "numerics", "r0"), ("M", "numerics", "M"), ("M0", "numerics", "M0"),
                             ("solver", "numerics", "solver"), ("grid_preset", "numerics", "grid_preset"),
                             ("paths", "mc", "n_paths"), ("steps", "mc", "n_steps"),
                             ("eps", "mc", "eps"), ("seed", "mc", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            cfg[block][key] = v
    if getattr(args, "grid", None):
        parts = args.grid.split(",")
        if len(parts) != 2:
            raise ConfigError("--grid expects MAIN,FINE point counts")
        cfg["numerics"]["n_main"], cfg["numerics"]["n_fine"] = parts
        cfg["numerics"].pop("grid_preset", None)
    if getattr(args, "spot", None):
        cfg["option"].pop("spot", None)
        cfg["option"]["spots"] = list(args.spot)
    return cfg


def _request(cfg: dict, need_model: bool = True, need_spot: bool = True) -> PricingRequest:
    opt = cfg["option"]
    _check_keys(opt, _OPTION_KEYS, "option")
    _check_keys(cfg["market"], _MARKET_KEYS, "market")
    if need_model and not cfg["model"]:
        raise ConfigError("model: missing (give --preset or a model block)")
    for k in ("lo", "hi", "T"):
        if k not in opt:
            raise ConfigError(f"option.{k}: missing required field")
    if "spots" in opt:
        spots = [_num(v, "option.spots") for v in opt["spots"]]
    elif "spot" in opt:
        spots = [_num(opt["spot"], "option.spot")]
    elif need_spot:
        raise ConfigError("option.spot: missing required field")
    else:
        spots = None
    lo, hi = _num(opt["lo"], "option.lo"), _num(opt["hi"], "option.hi")
    if not lo < hi:
        raise ConfigError(f"barriers out of order: lo={lo} >= hi={hi}")
    if spots is None:
        spots = [math.sqrt(abs(lo * hi))]  # barrier checks reject lo <= 0 downstream
    model = _model(cfg["model"]) if cfg["model"] else get_preset("MB")
    r = _num(cfg["market"].get("r", 0.0), "market.r")
    return PricingRequest.from_prices(model, spots, lo, hi, _num(opt["T"], "option.T"), r,
                                      _numerics(cfg["numerics"]))


def _mc(block: dict) -> McConfig:
    _check_keys(block, _MC_KEYS, "mc")
    kw = {}
    for k, v in block.items():
        kw[k] = _num(v, f"mc.{k}") if k == "eps" else _int(v, f"mc.{k}")
    return McConfig(**kw)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kobol-dnt", description="Double-no-touch pricing under KoBoL with drift")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spots="one"):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="model preset")
        if spots == "many":
            p.add_argument("--spot", nargs="+", help="spot level(s)")
        else:
            p.add_argument("--spot", nargs=1, help="spot level")
        p.add_argument("--lo", help="lower barrier level")
        p.add_argument("--hi", help="upper barrier level")
        p.add_argument("--T", help="maturity in years")
        p.add_argument("--r", help="discount rate")
        p.add_argument("--r0", help="spectral shift")
        p.add_argument("--M", help="GWR depth")
        p.add_argument("--M0", help="series terms cap")
        p.add_argument("--solver", choices=("series", "inverse", "solve"))
        p.add_argument("--grid", help="MAIN,FINE point counts")
        p.add_argument("--grid-preset", dest="grid_preset", choices=sorted(GRID_PRESETS))
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
        p.add_argument("--output", help="write output here instead of stdout")
        p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
        p.add_argument("-v", "--verbose", action="count", default=0)

    common(sub.add_parser("price", help="price one spot"))
    common(sub.add_parser("curve", help="price several spots"), spots="many")
    common(sub.add_parser("selfcheck", help="alternative-numerics consistency report"), spots="many")
    g = sub.add_parser("gwr-test", help="closed-form Laplace inversion suite")
    g.add_argument("--M", default="8")
    g.add_argument("--T", default="0.25")
    g.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    g.add_argument("--output")
    g.add_argument("-v", "--verbose", action="count", default=0)
    w = sub.add_parser("whf-check", help="Wiener-Hopf factor residuals over the GWR nodes")
    common(w, spots="many")
    m = sub.add_parser("mc", help="Monte Carlo estimate")
    common(m)
    m.add_argument("--paths")
    m.add_argument("--steps")
    m.add_argument("--eps")
    m.add_argument("--seed")
    m.add_argument("--compare", action="store_true", help="also price analytically and compare")
    rp = sub.add_parser("regime-price", help="regime-switching price (needs a regime block)")
    common(rp, spots="many")
    rp.add_argument("--state", help="initial state index (0-based)")
    return ap


def parse(argv, file_cfg: dict | None = None) -> RunConfig:
    """Parse CLI arguments (and an optional pre-loaded config dict) into a :class:`RunConfig`."""
    ap = _parser()
    args = ap.parse_args(argv)
    cmd = args.command
    if cmd == "gwr-test":
        return RunConfig(cmd, fmt=args.fmt, output=args.output, verbosity=args.verbose,
                         gwr_M=_int(args.M, "--M"), gwr_T=_num(args.T, "--T"))
    if file_cfg is None:
        file_cfg = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    file_cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {args.config}: {e}") from e
    _check_keys(file_cfg, _BLOCKS, "config")
    cfg = _merge(file_cfg, args)
    regime = None
    state = 0
    if cmd == "regime-price":
        if "regime" not in cfg:
            raise ConfigError("regime: missing (regime-price needs a regime block)")
        regime = regime_from_config(cfg["regime"])
        state = _int(cfg["option"].pop("state", 0), "option.state")
        if not 0 <= state < regime.m:
            raise ConfigError(f"option.state: {state} out of range for {regime.m} states")
        req = _request(cfg, need_model=False)
    else:
        cfg["option"].pop("state", None)
        req = _request(cfg, need_spot=cmd != "whf-check")
    if cmd == "price" and len(req.x) != 1:
        raise ConfigError("price takes exactly one spot; use curve")
    mc = _mc(cfg["mc"]) if cmd == "mc" else None
    return RunConfig(cmd, req, regime, state, mc, args.fmt, args.output, args.verbose,
                     dump_config=bool(getattr(args, "dump_config", False)),
                     compare=bool(getattr(args, "compare", False)))


def resolved_config(cfg: RunConfig) -> dict:
    """Config blocks that re-parse to the same request."""
    req = cfg.request
    num = {k: v for k, v in dataclasses.asdict(req.numerics).items()}
    spots = [float(s) for s in req.spots]
    out = {
        "model": req.model.as_dict(),
        "market": {"r": req.r},
        "option": {"spots": spots, "lo": math.exp(req.geometry.h_minus),
                   "hi": math.exp(req.geometry.h_plus), "T": req.T},
        "numerics": num,
    }
    if cfg.regime is not None:
        reg = cfg.regime
        out["regime"] = {"states": [s.as_dict() for s in reg.states], "rates": reg.rates.tolist(),
                         "r": list(reg.r), "G": list(reg.G)}
        out["option"]["state"] = cfg.state
    if cfg.mc is not None:
        out["mc"] = {"eps": cfg.mc.eps, "n_paths": cfg.mc.n_paths, "n_steps": cfg.mc.n_steps,
                     "seed": cfg.mc.seed}
    return out


def _g(v) -> str:
    return f"{v:.10g}"


def _emit(cfg: RunConfig, rows: list[dict], header: list[str]) -> None:
    if cfg.fmt == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_g(r[h]) if isinstance(r[h], float) else r[h] for h in header])
        text = buf.getvalue()
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _curve_rows(results) -> list[dict]:
    return [{"S": r.spot, "price": r.price, "im_residual": r.im_residual,
             "whf_residual": r.whf_residual, "series_terms": r.series_terms} for r in results]


def _whf_rows(req: PricingRequest) -> list[dict]:
    p, geom = req.model, req.geometry
    if p.mu < 0:
        p, geom = mirror(p), geom.mirrored()
    pair = build_contour_pair(p, geom, req.numerics)
    gcfg = GwrConfig(T=req.T, M=req.numerics.M, r0=req.numerics.r0)
    rows = []
    for k, q in enumerate(req.r + req.numerics.r0 + nodes(gcfg), start=1):
        f = compute_factors(p, q, pair)
        rows.append({"node": k, "q": float(q), "identity_residual": f.residual,
                     "continuation_residual": continuation_residual(p, f, pair),
                     "general_formula_deviation": cross_check_general_formulas(p, q, pair, f)})
    return rows


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        if cfg.dump_config:
            sys.stdout.write(json.dumps(resolved_config(cfg), indent=2) + "\n")
            return 0
        if cfg.command == "gwr-test":
            rows = closed_form_suite(cfg.gwr_M, cfg.gwr_T)
            _emit(cfg, rows, ["transform", "value", "exact", "error", "tol", "passed"])
            return 0 if all(r["passed"] for r in rows) else 1
        req = cfg.request
        if cfg.command in ("price", "curve"):
            res = price_curve(req)
            if cfg.verbosity > 0:
                ko = [r for r in res if not r.knocked_out]
                if ko:
                    sys.stderr.write(f"grid: {ko[0].grid_info}\nwall time: {ko[0].wall_time:.3f}s\n")
                    sys.stderr.write(f"martingale diagnostic psi(-i)+r: "
                                     f"{martingale_diagnostic(req.model, req.r):.3e}\n")
            _emit(cfg, _curve_rows(res), ["S", "price", "im_residual", "whf_residual", "series_terms"])
            return 0
        if cfg.command == "selfcheck":
            rep = self_consistency(req)
            rows = []
            for label, desc, diffs, thr, ok in rep.rows:
                for s, d in zip(rep.spots, diffs):
                    rows.append({"run": label, "description": desc, "S": s, "difference": d,
                                 "threshold": thr, "passed": abs(d) < thr})
            _emit(cfg, rows, ["run", "description", "S", "difference", "threshold", "passed"])
            return 0
        if cfg.command == "whf-check":
            rows = _whf_rows(req)
            _emit(cfg, rows, ["node", "q", "identity_residual", "continuation_residual",
                              "general_formula_deviation"])
            return 0 if max(r["identity_residual"] for r in rows) < 1e-12 else 1
        if cfg.command == "mc":
            x = req.x[0]
            res = simulate_dnt(req.model, req.geometry, req.T, x, req.r, cfg.mc)
            row = {"price": res.price, "stderr": res.stderr, "survival": res.survival,
                   "n_paths": res.n_paths, "n_steps": res.n_steps, "eps": res.eps, "seed": res.seed}
            header = list(row)
            if cfg.compare:
                analytic = price_curve(req)[0].price
                cmp_ = compare(analytic, res)
                row.update({"analytic": analytic, "gap": cmp_.gap, "z_score": cmp_.z_score,
                            "flagged": cmp_.flagged})
                header += ["analytic", "gap", "z_score", "flagged"]
            _emit(cfg, [row], header)
            return 0
        if cfg.command == "regime-price":
            num = RegimeNumerics(M=req.numerics.M, r0=req.numerics.r0)
            vals = price_regime_all(cfg.regime, req.geometry, req.T, np.array(req.x), num)
            rows = [{"S": float(s), "state": cfg.state, "price": float(vals[cfg.state, i])}
                    for i, s in enumerate(req.spots)]
            _emit(cfg, rows, ["S", "state", "price"])
            return 0
        raise ConfigError(f"unknown command {cfg.command!r}")
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return 2
    except DntError as e:
        sys.stderr.write(f"pricing error: {e}\n")
        return 1


def main(argv=None) -> int:
    try:
        cfg = parse(sys.argv[1:] if argv is None else argv)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return 2
    except SystemExit as e:  # argparse usage errors
        return int(e.code) if isinstance(e.code, int) else 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
