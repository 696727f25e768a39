"""Command-line interface.

Commands: ``fit`` (moment fit from a history table), ``adjust`` (target
interval via plug-in or domain bootstrap), ``loo`` (leave-one-out overlap and
width table), ``simulate`` (coverage experiment from a config file) and
``tune-context`` (similarity bandwidth search). Exit status 0 on success, 2
for input validation failures, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dataio
from .contextual import (
    beta_profile,
    default_beta_grid,
    fit_weighted_mom,
    similarity_weights,
    tune_beta,
)
from .core import fit_mom
from .diagnostics import METHODS, loo_overlap_rate, normalized_width
from .intervals import (
    DEFAULT_BOOTSTRAP_DRAWS,
    domain_bootstrap_interval,
    plugin_interval,
)
from .simulation import run_experiment

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _emit_model_warnings(model) -> None:
    for flag in model.warnings:
        _warn(flag.replace("_", " "))


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise dataio.SchemaError(f"cannot parse {flag} value {text!r}") from None


def _cmd_fit(args: argparse.Namespace) -> int:
    history = dataio.load_history(args.history)
    model = fit_mom(history)
    _emit_model_warnings(model)
    dataio.write_model(args.out, model)
    dataio.write_manifest(
        args.out,
        "fit",
        {"history": str(args.history), "out": str(args.out)},
        inputs={"history": args.history},
        outputs={"model": args.out},
    )
    print(f"rho = {model.rho!r}")
    print(f"gamma2 = {model.gamma2!r}")
    return EXIT_OK


def _cmd_adjust(args: argparse.Namespace) -> int:
    if args.history is None and args.model is None:
        raise dataio.SchemaError("one of --history or --model is required")
    target = dataio.load_target(args.target)

    history = None
    if args.history is not None:
        history = dataio.load_history(args.history)
        model = fit_mom(history)
    else:
        model = dataio.load_model(args.model)
    _emit_model_warnings(model)

    if args.method == "plugin":
        interval = plugin_interval(target, model, args.alpha)
    else:
        if history is None:
            raise dataio.SchemaError(
                "bootstrap adjustment resamples per-domain differences; "
                "pass --history (a fitted model alone is not enough)"
            )
        interval = domain_bootstrap_interval(
            history, target, args.alpha, draws=args.draws, seed=args.seed
        )

    point = target.theta_star_hat - model.rho
    lines = [
        f"point = {point!r}",
        f"lower = {interval.lower!r}",
        f"upper = {interval.upper!r}",
        f"level = {interval.level!r}",
        f"method = {args.method}",
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    inputs = {"target": args.target}
    if args.history is not None:
        inputs["history"] = args.history
    if args.model is not None:
        inputs["model"] = args.model
    dataio.write_manifest(
        args.out,
        "adjust",
        {
            "alpha": args.alpha,
            "method": args.method,
            "draws": args.draws,
            "seed": args.seed,
            "out": str(args.out),
        },
        inputs=inputs,
        outputs={"interval": args.out},
    )
    print("\n".join(lines))
    return EXIT_OK


def _cmd_loo(args: argparse.Namespace) -> int:
    history = dataio.load_history(args.history)
    alphas = _parse_float_list(args.alpha, "--alpha")
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise dataio.SchemaError(f"unknown method {m!r}; choose from {METHODS}")

    rows = []
    for method in methods:
        for alpha in alphas:
            rate = loo_overlap_rate(
                history, alpha, method, bootstrap_draws=args.draws, seed=args.seed
            )
            width = normalized_width(
                history, alpha, method, bootstrap_draws=args.draws, seed=args.seed
            )
            rows.append((alpha, method, rate, width))

    with Path(args.out).open("w", newline="") as fh:
        fh.write("alpha,method,overlap_rate,normalized_width\n")
        for alpha, method, rate, width in rows:
            fh.write(f"{alpha!r},{method},{rate!r},{width!r}\n")
    dataio.write_manifest(
        args.out,
        "loo",
        {
            "alpha": args.alpha,
            "method": args.method,
            "draws": args.draws,
            "seed": args.seed,
            "out": str(args.out),
        },
        inputs={"history": args.history},
        outputs={"table": args.out},
    )
    for alpha, method, rate, width in rows:
        print(f"alpha={alpha} method={method} overlap_rate={rate!r} normalized_width={width!r}")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    cells = []
    configs = dataio.load_sim_configs(args.config)
    for cfg in configs:
        cells.extend(run_experiment(cfg))
    dataio.write_results(args.out, cells)
    dataio.write_manifest(
        args.out,
        "simulate",
        {"config": str(args.config), "cells": len(configs), "out": str(args.out)},
        inputs={"config": args.config},
        outputs={"results": args.out},
    )
    print(f"wrote {len(cells)} result rows to {args.out}")
    return EXIT_OK


def _cmd_tune_context(args: argparse.Namespace) -> int:
    history = dataio.load_history(args.history)
    target_context = tuple(_parse_float_list(args.target_context, "--target-context"))
    if args.beta_grid is not None:
        grid = _parse_float_list(args.beta_grid, "--beta-grid")
    else:
        grid = default_beta_grid()
    if any(rec.context is None for rec in history):
        raise dataio.SchemaError(f"{args.history}: context_* columns required for tuning")

    profile = beta_profile(history, target_context, grid)
    beta_star, ll_star = tune_beta(history, target_context, grid)
    weights = similarity_weights([r.context for r in history], target_context, beta_star)
    model = fit_weighted_mom(history, weights)
    _emit_model_warnings(model)

    lines = [
        f"beta_star = {beta_star!r}",
        f"loglik_star = {ll_star!r}",
        f"rho = {model.rho!r}",
        f"gamma2 = {model.gamma2!r}",
        f"grid_betas = {','.join(repr(b) for b, _ in profile)}",
        f"grid_logliks = {','.join(repr(ll) for _, ll in profile)}",
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    dataio.write_manifest(
        args.out,
        "tune-context",
        {
            "target_context": args.target_context,
            "beta_grid": args.beta_grid,
            "out": str(args.out),
        },
        inputs={"history": args.history},
        outputs={"tuning": args.out},
    )
    print("\n".join(lines[:4]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxycal",
        description="Calibrate proxy-based confidence intervals from historical aggregates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the bias distribution from a history table")
    p_fit.add_argument("history", help="history CSV path")
    p_fit.add_argument("--out", required=True, help="output model file")
    p_fit.set_defaults(func=_cmd_fit)

    p_adj = sub.add_parser("adjust", help="adjusted interval for a target record")
    p_adj.add_argument("--history", help="history CSV (required for bootstrap)")
    p_adj.add_argument("--model", help="fitted model file (plugin only)")
    p_adj.add_argument("--target", required=True, help="target CSV path")
    p_adj.add_argument("--alpha", type=float, default=0.05)
    p_adj.add_argument("--method", choices=("plugin", "bootstrap"), default="plugin")
    p_adj.add_argument("--draws", type=int, default=DEFAULT_BOOTSTRAP_DRAWS)
    p_adj.add_argument("--seed", type=int, default=0)
    p_adj.add_argument("--out", required=True)
    p_adj.set_defaults(func=_cmd_adjust)

    p_loo = sub.add_parser("loo", help="leave-one-out overlap/width diagnostics")
    p_loo.add_argument("history", help="history CSV path")
    p_loo.add_argument("--alpha", default="0.05", help="comma-separated alpha grid")
    p_loo.add_argument(
        "--method", default="unadjusted,plugin", help="comma-separated interval methods"
    )
    p_loo.add_argument("--draws", type=int, default=DEFAULT_BOOTSTRAP_DRAWS)
    p_loo.add_argument("--seed", type=int, default=0)
    p_loo.add_argument("--out", required=True)
    p_loo.set_defaults(func=_cmd_loo)

    p_sim = sub.add_parser("simulate", help="run the coverage experiment")
    p_sim.add_argument("config", help="key = value config file")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_tune = sub.add_parser("tune-context", help="tune the similarity bandwidth")
    p_tune.add_argument("history", help="history CSV with context_* columns")
    p_tune.add_argument("--target-context", required=True, help="comma-separated vector")
    p_tune.add_argument("--beta-grid", help="comma-separated bandwidths")
    p_tune.add_argument("--out", required=True)
    p_tune.set_defaults(func=_cmd_tune_context)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (dataio.SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
