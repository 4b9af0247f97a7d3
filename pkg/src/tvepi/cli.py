"""``tvepi`` command-line front end.

Subcommands::

    tvepi simulate     --scenario NAME [--seed N] --out DIR
    tvepi fit          (--scenario NAME | --config FILE) [--seed N] [--lambda X] --out DIR
    tvepi reproduce    NAME [--seed N] [--out DIR]
    tvepi lambda-sweep (--scenario NAME | --config FILE) [--lambda X,Y,...] --out DIR

Exit status is 0 on success (a FAIL verdict from ``reproduce`` is still a
successful run), 1 on an internal error and 2 on a usage or configuration
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .dynamics import ModelKind, basic_reproduction_number
from .inference import (
    EXPERIMENTS,
    FitSettings,
    fit,
    lambda_sweep,
    reproduce,
    scenario_objective,
    write_fit,
    write_sweep,
)
from .objective import Penalty, PenaltyKind, RegularizerSpec, load_objective_config
from .synthesis import ScenarioName, builtin_scenario, synthesize, write_bundle

__all__ = ["main", "build_parser"]

SCENARIOS = [s.value for s in ScenarioName]


class UsageError(Exception):
    """Bad flags or configuration; maps to exit status 2."""


def _lambda_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty lambda list")
    return vals


def _non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvepi", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=False, config=True):
        src = p.add_mutually_exclusive_group(required=not scenario_required and config)
        src.add_argument("--scenario", choices=SCENARIOS, required=scenario_required and not config)
        if config:
            src.add_argument("--config", type=Path, help="objective config JSON")
        p.add_argument("--seed", type=_non_negative_int, default=0)

    def budget(p):
        p.add_argument("--starts", type=_positive_int, default=FitSettings.starts)
        p.add_argument("--max-restarts", type=_positive_int, default=FitSettings.max_restarts)
        p.add_argument("--workers", type=_positive_int, default=1, help="threads for independent starts")

    p = sub.add_parser("simulate", help="synthesize a built-in scenario")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("fit", help="fit a model to data")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="TV weight for every time-varying parameter (overrides the config)")
    p.add_argument("--out", type=Path, required=True)
    budget(p)

    p = sub.add_parser("reproduce", help="synthesize, fit and score a built-in experiment")
    p.add_argument("experiment", choices=SCENARIOS)
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--out", type=Path, default=None)
    budget(p)

    p = sub.add_parser("lambda-sweep", help="fit across a grid of TV weights")
    common(p)
    p.add_argument("--lambda", dest="lam", type=_lambda_list, default=None,
                   help="comma-separated, non-negative, increasing")
    p.add_argument("--out", type=Path, required=True)
    budget(p)
    return parser


def _settings(args) -> FitSettings:
    return replace(FitSettings(), starts=args.starts, max_restarts=args.max_restarts, workers=args.workers)


def _load(args):
    """Objective (and synthetic bundle, for scenarios) selected by the flags."""
    if args.scenario is not None:
        return scenario_objective(args.scenario, args.seed)
    try:
        return None, load_objective_config(args.config)
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load config {args.config}: {exc}") from exc


def _with_lambda(obj, lam: float):
    tv = [s.name for s in obj.encoding.specs if s.time_varying]
    return obj.with_regularizer(RegularizerSpec({p: Penalty(PenaltyKind.TV, lam) for p in tv}))


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_simulate(args) -> int:
    bundle = synthesize(builtin_scenario(args.scenario, args.seed))
    files = write_bundle(bundle, args.out)
    final = bundle.trajectory.states[-1]
    kind = bundle.spec.kind
    p0 = {k: float(v.values[0]) for k, v in bundle.truth.items()}
    parts = [f"{c}={_fmt(v)}" for c, v in zip(kind.compartments, final.as_array())]
    parts.append(f"R0_uncontrolled={_fmt(basic_reproduction_number(kind, p0['beta'], p0['gamma']))}")
    if kind is ModelKind.SIRQ:
        r0c = basic_reproduction_number(kind, p0["beta"], p0["gamma"], p0["delta"], controlled=True)
        parts.append(f"R0_controlled={_fmt(r0c)}")
    print(f"{bundle.spec.name} seed={args.seed} final " + " ".join(parts))
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def cmd_fit(args) -> int:
    bundle, obj = _load(args)
    settings = _settings(args)
    extra = {}
    if args.lam is not None:
        if args.lam < 0:
            raise UsageError("--lambda must be >= 0")
        obj = _with_lambda(obj, args.lam)
    elif bundle is not None and any(s.time_varying for s in obj.encoding.specs):
        # No weight given for a time-varying scenario: take the sweep's choice.
        setup = EXPERIMENTS[ScenarioName.parse(args.scenario)]
        sweep = lambda_sweep(obj, setup.lambdas, settings, seed=args.seed)
        obj = _with_lambda(obj, sweep.selected_lambda)
        extra["selected_lambda"] = sweep.selected_lambda
    report = fit(obj, settings, seed=args.seed)
    if bundle is not None:
        write_bundle(bundle, args.out)
    write_fit(report, args.out, extra)
    est = " ".join(
        f"{k}={_fmt(v[0])}" if v.size == 1 else f"{k}=[{v.size} values]" for k, v in report.paths.items()
    )
    print(f"loss={_fmt(report.loss)} restarts={report.result.restarts} "
          f"termination={report.result.termination.value} {est}")
    for w in report.warnings:
        print(f"warning: {w}")
    return 0


def cmd_reproduce(args) -> int:
    v = reproduce(args.experiment, args.seed, args.out, _settings(args))
    status = "PASS" if v["passed"] else "FAIL"
    print(f"{v['experiment']} seed={v['seed']}: {status}")
    if "relative_errors" in v:
        for k, e in v["relative_errors"].items():
            est = float(v["report"].paths[k][0])
            print(f"  {k}: estimate={_fmt(est)} relative_error={e:.4f} (tolerance {v['tolerance']})")
    else:
        print(f"  selected lambda={v['selected_lambda']}")
        for k, sc in v["scores"].items():
            if "relative_error" in sc:
                print(f"  {k}: relative_error={sc['relative_error']:.4f} (tolerance {v['level_tolerance']})")
            else:
                print(f"  {k}: breaks true={sc['true_breaks']} fitted={sc['fitted_breaks']} "
                      f"max_location_error={max(sc['location_errors'], default=0)} "
                      f"(tolerance {v['location_tolerance']}); "
                      f"max_level_error={max(sc['level_errors']):.4f} (tolerance {v['level_tolerance']})")
    return 0


def cmd_lambda_sweep(args) -> int:
    bundle, obj = _load(args)
    lambdas = args.lam
    if lambdas is None:
        if bundle is None:
            raise UsageError("--lambda is required with --config")
        lambdas = list(EXPERIMENTS[ScenarioName.parse(args.scenario)].lambdas)
    if any(v < 0 for v in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise UsageError("--lambda must be non-negative and strictly increasing")
    if not any(s.time_varying for s in obj.encoding.specs):
        raise UsageError("the encoding has no time-varying parameter to regularize")
    sweep = lambda_sweep(obj, lambdas, _settings(args), seed=args.seed)
    if bundle is not None:
        write_bundle(bundle, args.out)
    write_sweep(sweep, args.out)
    print(f"{'lambda':>10} {'loss':>12} {'misfit':>12} {'tv':>10} {'deviance':>10} {'dispersion':>10}  regime")
    for r in sweep.rows:
        print(f"{r.lam:>10.4g} {r.loss:>12.4f} {r.nll:>12.4f} {r.tv:>10.4g} {r.deviance:>10.3f} "
              f"{r.dispersion:>10.4g}  {r.regime}")
    print(f"selected lambda={sweep.selected_lambda} (deviance <= {sweep.n_obs} observations)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "reproduce": cmd_reproduce,
    "lambda-sweep": cmd_lambda_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tvepi: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tvepi: I/O error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit status
        print(f"tvepi: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
