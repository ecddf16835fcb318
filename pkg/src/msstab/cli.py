"""Command-line front end.

Subcommands: analyze | synthesize | simulate | sweep.  The problem is
described by a JSON config file; reports are JSON on stdout, traces are
CSV.  Diagnostics go to stderr.  Exit codes: 0 success (stable verdict),
2 config error, 3 not mean-square stable, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .delay_channel import ChannelSpec, MarginalFactorizationError
from .h2_synthesis import RiccatiError, SynthesisError, synthesize
from .lti_core import Polynomial, RationalTF, StateSpace, ss_from_tf
from .ms_analysis import (
    VarianceTrace,
    analyze,
    analysis_horizon,
    recursion_kernels,
    variance_recursion,
)
from .mc_sim import SimConfig, estimate_variance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _parse_system(d: dict, what: str) -> StateSpace:
    has_ss = "state_space" in d
    has_tf = "transfer_function" in d
    if has_ss == has_tf:
        raise ConfigError(
            f"{what}: exactly one of state_space / transfer_function required"
        )
    if has_ss:
        ss = d["state_space"]
        try:
            return StateSpace(ss["A"], ss["B"], ss["C"], ss.get("D", 0.0))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{what}.state_space: {exc}") from exc
    tf = d["transfer_function"]
    try:
        return ss_from_tf(RationalTF(Polynomial(tf["num"]), Polynomial(tf["den"])))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{what}.transfer_function: {exc}") from exc


def _parse_channel(cfg: dict) -> ChannelSpec:
    if "channel" not in cfg:
        raise ConfigError("config missing 'channel'")
    try:
        return ChannelSpec.from_dict(cfg["channel"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"channel: {exc}") from exc


def _parse_plant(cfg: dict) -> StateSpace:
    if "plant" not in cfg:
        raise ConfigError("config missing 'plant'")
    return _parse_system(cfg["plant"], "plant")


def _parse_controller(cfg: dict) -> StateSpace:
    if "controller" not in cfg or cfg["controller"] is None:
        raise ConfigError("config missing 'controller'")
    return _parse_system(cfg["controller"], "controller")


def _sigma_v_sq(cfg: dict) -> float:
    return float(cfg.get("input", {}).get("sigma_v_sq", 1.0))


def _json_out(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    P = _parse_plant(cfg)
    K = _parse_controller(cfg)
    spec = _parse_channel(cfg)
    report = analyze(P, K, spec, _sigma_v_sq(cfg))
    _json_out(report.to_dict())
    return EXIT_OK if report.ms_stable else EXIT_UNSTABLE


def cmd_synthesize(args) -> int:
    cfg = _load_config(args.config)
    P = _parse_plant(cfg)
    spec = _parse_channel(cfg)
    if cfg.get("controller") is not None:
        print("warning: 'controller' in config is ignored by synthesize",
              file=sys.stderr)
    result = synthesize(P, spec)
    d = result.to_dict()
    if result.degenerate:
        d["note"] = "deterministic channel: cost channel vanishes, J* = 0"
    _json_out(d)
    return EXIT_OK if result.J_star < 1.0 else EXIT_UNSTABLE


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    P = _parse_plant(cfg)
    K = _parse_controller(cfg)
    spec = _parse_channel(cfg)
    sigma_v_sq = _sigma_v_sq(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.zero_input:
        n = P.n_states + K.n_states
        cov = cfg.get("input", {}).get("initial_covariance")
        cov = np.eye(n) if cov is None else np.asarray(cov, dtype=float)
        sim_cfg = SimConfig(P=P, K=K, spec=spec, horizon=args.horizon,
                            trials=args.trials, seed=seed,
                            input_mode="zero_input", initial_cov=cov)
    else:
        sim_cfg = SimConfig(P=P, K=K, spec=spec, horizon=args.horizon,
                            trials=args.trials, seed=seed,
                            input_mode="white", sigma_v_sq=sigma_v_sq)
    sim = estimate_variance(sim_cfg)

    report = analyze(P, K, spec, sigma_v_sq)
    if report.nominal_stable and not args.zero_input:
        kern = recursion_kernels(report.G, spec, args.horizon)
        rec = variance_recursion(
            kern, VarianceTrace(np.full(args.horizon, sigma_v_sq), "recursion")
        ).sigma_sq
    else:
        rec = np.full(args.horizon, np.nan)

    out = sys.stdout if args.output is None else open(args.output, "w")
    try:
        out.write("k,var_recursion,var_empirical,stderr\n")
        for k in range(args.horizon):
            out.write(f"{k},{float(rec[k])!r},{float(sim.var_u.sigma_sq[k])!r},"
                      f"{float(sim.stderr_u[k])!r}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    P = _parse_plant(cfg)
    K = _parse_controller(cfg)
    spec = _parse_channel(cfg)
    sigma_v_sq = _sigma_v_sq(cfg)

    def J_of(kappa: float):
        Kk = StateSpace(K.A, K.B, kappa * K.C, kappa * K.D)
        rep = analyze(P, Kk, spec, sigma_v_sq)
        return rep

    rows = []
    for kappa in np.linspace(args.kappa_from, args.kappa_to, args.steps):
        rep = J_of(float(kappa))
        if rep.ms_stable:
            rows.append((float(kappa), rep.J, rep.sigma_u_inf))
        else:
            rows.append((float(kappa), rep.J, None))

    boundary = None
    if args.refine_boundary:
        lo, hi = args.kappa_from, args.kappa_to
        rep_lo, rep_hi = J_of(lo), J_of(hi)
        lo_st = rep_lo.ms_stable
        hi_st = rep_hi.ms_stable
        if lo_st != hi_st:
            if not lo_st:
                lo, hi = hi, lo
            while abs(hi - lo) > 1e-3:
                mid = 0.5 * (lo + hi)
                if J_of(mid).ms_stable:
                    lo = mid
                else:
                    hi = mid
            boundary = 0.5 * (lo + hi)
        else:
            print("warning: J - 1 does not change sign over the sweep range; "
                  "no boundary reported", file=sys.stderr)

    out = sys.stdout if args.output is None else open(args.output, "w")
    try:
        out.write("kappa,J_kappa,sigma_u_inf\n")
        for kappa, J, sig in rows:
            js = "" if J is None else repr(J)
            ss = "" if sig is None else repr(sig)
            out.write(f"{kappa!r},{js},{ss}\n")
        if boundary is not None:
            out.write(f"# boundary_kappa,{boundary!r}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="msstab",
        description="Mean-square stability analysis, synthesis and simulation "
                    "for feedback loops over random-delay channels",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="stability analysis of a configured loop")
    pa.add_argument("config")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("synthesize", help="optimal output-feedback design")
    ps.add_argument("config")
    ps.set_defaults(func=cmd_synthesize)

    pm = sub.add_parser("simulate", help="Monte Carlo variance estimation")
    pm.add_argument("config")
    pm.add_argument("--trials", type=int, default=10000)
    pm.add_argument("--horizon", type=int, default=200)
    pm.add_argument("--seed", type=int, default=None)
    pm.add_argument("--zero-input", action="store_true", dest="zero_input")
    pm.add_argument("--output", default=None)
    pm.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("sweep", help="kappa sweep of the scaled controller")
    pw.add_argument("config")
    pw.add_argument("--from", dest="kappa_from", type=float, default=1.0)
    pw.add_argument("--to", dest="kappa_to", type=float, default=2.1)
    pw.add_argument("--steps", type=int, default=23)
    pw.add_argument("--refine-boundary", action="store_true")
    pw.add_argument("--output", default=None)
    pw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RiccatiError, SynthesisError, MarginalFactorizationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
