"""Command-line entry point.

Exit codes: 0 success, 1 failed check or criterion (or a runtime error),
2 usage or configuration error.
"""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import ExperimentConfig, apply_overrides, load_config
from .coupling import LevelSchedule, coupled_samples
from .exceptions import ConfigError, ErgodicMlmcError
from .mlmc import run_mlmc
from .model import (GridSpec, check_contractivity, check_diffusion_bound,
                    check_dissipativity)
from .output import write_csv, write_json
from .stepping import _state_norm, check_lower_bound, check_timestep_condition, simulate_paths

log = logging.getLogger("ergodic_mlmc")

BENCHMARK = 0.44115
ORACLE_TOL = 1e-4
VARIANCE_SLOPE = (-2.0, 0.4)
WEAK_SLOPE = (-1.0, 0.3)
COST_RATIO_MAX = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flag name -> config key; flags default to None so only given ones override
_COMMON = {
    "--config": None, "--model": "model", "--seed": "seed", "--workers": "workers",
    "--phi": "observable", "--mode": "mode", "--policy": "policy",
}


def _add_common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--model", help="cubic, ou or polynomial")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--phi", choices=["abs", "identity", "x2"])
    p.add_argument("--mode", choices=["general", "langevin"])
    p.add_argument("--policy", choices=["drift_scaled", "constant"])
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="ergodic-mlmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("check", help="grid-scan the drift and timestep assumptions")
    _add_common(p)
    for flag in ("--alpha", "--beta", "--lambda", "--p-star", "--xi", "--zeta", "--q",
                 "--h-constant", "--grid-radius"):
        p.add_argument(flag, type=float)
    p.add_argument("--grid-points", type=int)

    p = sub.add_parser("simulate", help="independent adaptive EM paths")
    _add_common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("couple", help="coupled fine/coarse samples on one level")
    _add_common(p)
    p.add_argument("--level", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--schedule-mode", choices=["general", "langevin"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("mlmc", help="adaptive multilevel estimate for each epsilon")
    _add_common(p)
    p.add_argument("--eps", type=float, action="append")
    p.add_argument("--split", help="variance,bias,truncation shares")
    p.add_argument("--out-dir")

    p = sub.add_parser("oracle", help="quadrature value of the invariant expectation")
    _add_common(p)
    p.add_argument("--out")

    p = sub.add_parser("moments", help="Monte Carlo moments at several horizons")
    _add_common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--horizons")
    p.add_argument("--paths", type=int)
    p.add_argument("--p", type=float, dest="moment_p")
    p.add_argument("--out", required=True)

    p = sub.add_parser("contraction", help="decay of synchronously coupled path differences")
    _add_common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--x0", type=float, dest="contraction_x0")
    p.add_argument("--y0", type=float, dest="contraction_y0")
    p.add_argument("--horizons", dest="contraction_horizons")
    p.add_argument("--paths", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("levels", help="per-level correction mean/variance/cost table")
    _add_common(p)
    p.add_argument("--max-level", type=int, dest="levels_max")
    p.add_argument("--samples", type=int, dest="level_samples")
    p.add_argument("--out", required=True)

    p = sub.add_parser("reproduce", help="oracle, level tables, MLMC runs and a pass/fail summary")
    _add_common(p)
    p.add_argument("--out-dir")
    return parser


_NOT_CONFIG = {"command", "config", "out", "verbose"}


def _config_from_args(args):
    config = load_config(args.config) if args.config else ExperimentConfig()
    values = {}
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        if key == "eps":
            key = "epsilon"
        elif key == "schedule_mode":
            key = "mode"
        elif key == "lambda":
            key = "lambda_"
        values[key] = value
    return apply_overrides(config, values)


# commands ----------------------------------------------------------------------


def cmd_check(config, args):
    model = config.build_model()
    policy = config.build_policy(model)
    grid = GridSpec(radius=config.grid_radius, points=config.grid_points, dim=model.dim_state)
    reports = [
        check_dissipativity(model, config.alpha, config.beta, grid),
        check_diffusion_bound(model, config.beta, grid),
        check_contractivity(model, config.lambda_, config.p_star, grid),
        check_timestep_condition(model, policy, config.alpha, config.beta, grid),
        check_lower_bound(policy, config.xi, config.zeta, config.q, grid),
    ]
    for rep in reports:
        print(rep.summary())
    ok = all(r.satisfied for r in reports)
    print("all checks passed" if ok else "some checks failed")
    return 0 if ok else 1


def cmd_simulate(config, args):
    model = config.build_model()
    policy = config.build_policy(model).scaled(config.delta)
    batch = simulate_paths(model, policy, config.horizon, config.paths, config.seed,
                           workers=config.workers)
    rows = []
    for i in range(config.paths):
        terminal = batch.terminal[i]
        rows.append([i, *terminal.tolist(), int(batch.steps[i]), float(batch.max_norm[i])])
    term_cols = ["terminal"] if model.dim_state == 1 else [
        f"terminal_{j}" for j in range(model.dim_state)]
    write_csv(args.out, ["path_id", *term_cols, "steps", "max_norm"], rows)
    print(f"wrote {config.paths} paths to {args.out}; mean steps {batch.steps.mean():.6g}")
    return 0


def _schedule(config, max_level):
    return LevelSchedule.build(max_level, config.refinement_factor, config.lambda_, config.mode)


def cmd_couple(config, args):
    model = config.build_model()
    policy = config.build_policy(model)
    batch = coupled_samples(model, policy, _schedule(config, config.level), config.level,
                            config.build_observable(), config.samples, config.seed,
                            workers=config.workers)
    rows = [[i, float(batch.fine[i]), float(batch.coarse[i]), float(batch.correction[i]),
             int(batch.fine_steps[i]), int(batch.coarse_steps[i])] for i in range(len(batch))]
    write_csv(args.out, ["sample_id", "fine", "coarse", "diff", "fine_steps", "coarse_steps"], rows)
    corr = batch.correction
    print(f"level {config.level}: mean {corr.mean():.6g} var {corr.var(ddof=1):.6g}")
    return 0


def _eps_tag(eps):
    return f"{eps:g}".replace("+", "")


def _level_rows(levels):
    return [[s.level, s.horizon, s.samples, s.mean_correction, s.var_correction, s.mean_cost]
            for s in levels]


LEVEL_HEADER = ["level", "T", "N", "mean", "var", "cost"]


def _run_mlmc_set(config, out_dir):
    model = config.build_model()
    policy = config.build_policy(model)
    observable = config.build_observable()
    results = []
    for eps in config.epsilon:
        res = run_mlmc(model, policy, observable, config.mlmc_config(eps), seed=config.seed)
        tag = _eps_tag(eps)
        write_json(out_dir / f"mlmc_eps_{tag}.json", res.as_dict())
        write_csv(out_dir / f"mlmc_eps_{tag}.csv", LEVEL_HEADER, _level_rows(res.levels))
        print(f"eps={eps:g}: estimate {res.estimate:.6f} levels {len(res.levels)} "
              f"cost {res.total_cost:.6g}")
        results.append(res)
    return results


def cmd_mlmc(config, args):
    _run_mlmc_set(config, Path(config.output_dir))
    return 0


def cmd_oracle(config, args):
    value = analysis.invariant_expectation_1d(config.build_model(), config.build_observable())
    print(repr(value))
    if args.out:
        write_json(args.out, {"model": config.model, "observable": config.observable,
                              "value": value})
    return 0


def cmd_moments(config, args):
    model = config.build_model()
    policy = config.build_policy(model).scaled(config.delta)
    rows = []
    for j, horizon in enumerate(config.horizons):
        batch = simulate_paths(model, policy, horizon, config.paths, config.seed + j,
                               workers=config.workers)
        vals = _state_norm(batch.terminal) ** config.moment_p
        rows.append([horizon, float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))])
        print(f"t={horizon:g}: {rows[-1][1]:.6g} +- {rows[-1][2]:.2g}")
    write_csv(args.out, ["horizon", "mean", "std_error"], rows)
    return 0


def cmd_contraction(config, args):
    model = config.build_model()
    policy = config.build_policy(model).scaled(config.delta)
    fit = analysis.estimate_contraction(model, policy, [config.contraction_x0],
                                        [config.contraction_y0], config.contraction_horizons,
                                        config.paths, config.seed, workers=config.workers)
    write_csv(args.out, ["t", "log_mean_diff"], zip(fit.x.tolist(), fit.y.tolist()))
    print(f"slope {fit.slope:.6g} (r^2 {fit.r_squared:.4f})")
    return 0


def cmd_levels(config, args):
    model = config.build_model()
    stats = analysis.level_statistics(model, config.build_policy(model),
                                      config.build_observable(),
                                      _schedule(config, config.levels_max),
                                      range(config.levels_max + 1), config.level_samples,
                                      config.seed, workers=config.workers)
    write_csv(args.out, LEVEL_HEADER + ["mean_fine", "mean_coarse"],
              [r + [s.mean_fine, s.mean_coarse] for r, s in zip(_level_rows(stats), stats)])
    for s in stats:
        print(f"level {s.level}: V={s.var_correction:.4g} mean={s.mean_correction:.4g}")
    return 0


def cmd_reproduce(config, args):
    out = Path(config.output_dir)
    model = config.build_model()
    policy = config.build_policy(model)
    observable = config.build_observable()
    criteria = {}

    oracle = analysis.invariant_expectation_1d(model, observable)
    if config.model == "cubic" and config.observable == "abs":
        criteria["oracle_benchmark"] = abs(oracle - BENCHMARK) <= ORACLE_TOL

    schedule = _schedule(config, max(config.levels_max, max(config.weak_levels, default=0)))
    stats = analysis.level_statistics(model, policy, observable, schedule,
                                      range(config.levels_max + 1), config.level_samples,
                                      config.seed, workers=config.workers)
    write_csv(out / "levels.csv", LEVEL_HEADER + ["mean_fine", "mean_coarse"],
              [r + [s.mean_fine, s.mean_coarse] for r, s in zip(_level_rows(stats), stats)])
    var = [s.var_correction for s in stats]
    summary = {"oracle": oracle, "seed": config.seed, "model": config.model,
               "observable": config.observable}
    if len(var) >= 5:
        lo = max(0, len(var) - 5)
        fit = analysis.fit_order([(s.level, s.var_correction) for s in stats],
                                 (lo, len(var) - 1), config.refinement_factor)
        summary["variance_slope"] = fit.slope
        criteria["variance_decay"] = (abs(fit.slope - VARIANCE_SLOPE[0]) <= VARIANCE_SLOPE[1]
                                      and all(b < a for a, b in zip(var, var[1:])))

    if config.weak_paths > 0:
        weak = analysis.weak_error_curve(model, policy, observable, schedule, config.weak_levels,
                                         config.weak_paths, config.seed, config.workers, oracle)
        write_csv(out / "weak_error.csv", ["level", "error", "std_error"], weak)
        fit = analysis.fit_order([(w.level, w.error) for w in weak], None,
                                 config.refinement_factor)
        summary["weak_slope"] = fit.slope
        criteria["weak_order"] = abs(fit.slope - WEAK_SLOPE[0]) <= WEAK_SLOPE[1]

    results = _run_mlmc_set(config, out)
    write_csv(out / "samples_per_level.csv", ["epsilon", "level", "N"],
              [[r.epsilon, s.level, s.samples] for r in results for s in r.levels])
    cost_rows = [[r.epsilon, r.estimate, r.total_cost, r.epsilon**2 * r.total_cost]
                 for r in results]
    write_csv(out / "cost.csv", ["epsilon", "estimate", "total_cost", "eps2_cost"], cost_rows)
    scaled = [row[3] for row in cost_rows]
    if len(scaled) >= 2:
        ratio = max(scaled) / min(scaled)
        summary["eps2_cost_ratio"] = ratio
        criteria["cost_scaling"] = ratio < COST_RATIO_MAX
    summary["estimates"] = {_eps_tag(r.epsilon): r.estimate for r in results}
    summary["criteria"] = criteria
    summary["all_passed"] = all(criteria.values())
    write_json(out / "summary.json", summary)
    for name, ok in criteria.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if summary["all_passed"] else 1


COMMANDS = {
    "check": cmd_check, "simulate": cmd_simulate, "couple": cmd_couple, "mlmc": cmd_mlmc,
    "oracle": cmd_oracle, "moments": cmd_moments, "contraction": cmd_contraction,
    "levels": cmd_levels, "reproduce": cmd_reproduce,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "split", None) is not None:
            args.error_split = args.split
            del args.split
        if getattr(args, "out_dir", None) is not None:
            args.output_dir = args.out_dir
        if hasattr(args, "out_dir"):
            del args.out_dir
        config = _config_from_args(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ErgodicMlmcError, FloatingPointError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
