"""Command-line front end.

    fedincentive {equilibrium,train,obsa,asosa,compare} --config cfg.json
                 [--out DIR] [--seed N] [--jobs N] [--stub]

``FEDINCENTIVE_SEED`` and ``FEDINCENTIVE_OUT`` override the config's seed
and output directory; command-line flags override both.

Exit codes: 0 success (a terminated game is a valid outcome), 1 config
error, 2 runtime or model error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .asosa import (AsosaTrace, ComparisonRecord, asosa_record, play_round, random_prices, run_fixed_pricing,
                    run_random_pricing, write_asosa_trace, write_comparison)
from .asosa import asosa as run_asosa
from .config import ConfigError, ExperimentConfig, derive_seed, load_config
from .marl import TRAIN_LOG_COLUMNS, TrainingError, load_policy, save_policy, train
from .model import DomainError, tp_utility
from .obsa import LinearResponse, PolicyResponse, obsa, write_obsa_trace
from .plots import line_chart_svg
from .stackelberg import (nash_deviation_gain, optimal_total_data, solve_equilibrium,
                          tp_utility_of_tau, verify_first_order)

log = logging.getLogger("fedincentive")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class MissingPolicyError(RuntimeError):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def policies_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.policies_dir) if cfg.policies_dir else Path(cfg.output_dir) / "policies"


def build_responses(cfg: ExperimentConfig, profiles, stub: bool) -> dict:
    if stub or cfg.policy_source == "stub":
        s = cfg.stub
        return {pr.id: LinearResponse(s.rate_per_worker * pr.worker_count,
                                      None if s.capacity_per_worker is None
                                      else s.capacity_per_worker * pr.worker_count)
                for pr in profiles}
    responses = {}
    for pr in profiles:
        path = policies_dir(cfg) / f"policy_lmo{pr.id}.txt"
        if not path.exists():
            raise MissingPolicyError(f"no policy for LMO {pr.id} at {path}; run `fedincentive train` "
                                     f"with this config first (or pass --stub)")
        policy = load_policy(path)
        if policy.n_agents != pr.worker_count:
            raise MissingPolicyError(f"{path} was trained for {policy.n_agents} workers, LMO {pr.id} "
                                     f"has {pr.worker_count}; retrain with this config")
        responses[pr.id] = PolicyResponse(policy, cfg.env_config(pr.worker_count), cfg.obsa.episodes,
                                          cfg.obsa.cost)
    return responses


def _retrainer(cfg: ExperimentConfig, responses: dict):
    def retrain(profile, budget):
        current = responses[profile.id]
        env = cfg.env_config(profile.worker_count, budget)
        res = train(env, cfg.train_config(profile.id), policy=current.policy)
        responses[profile.id] = dataclasses.replace(current, policy=res.policy)
        return responses[profile.id]
    return retrain


# ---------------------------------------------------------------- equilibrium

def cmd_equilibrium(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.output_dir)
    params = cfg.params
    profiles = cfg.profiles()
    sol = solve_equilibrium(profiles, params)
    rows = [(e.id, pr.price, sol.tau_star, sol.z_star, e.zeta_star, e.budget, e.predicted_utility, e.feasible)
            for e, pr in zip(sol.per_lmo, profiles)]
    write_csv(out / "equilibrium.csv", ("lmo", "price", "tau", "z_star", "zeta_star", "budget",
                                        "predicted_utility", "feasible"), rows, cfg.header())
    if sol.terminated:
        print(f"infeasible: publisher budget {sol.tau_star!r} <= 0; the game terminates", file=sys.stderr)
        return EXIT_RUNTIME
    report = verify_first_order(sol, profiles, params)
    gains = nash_deviation_gain(sol, profiles)
    checks = [(f"follower_gradient_lmo{e.id}", g) for e, g in zip(sol.per_lmo, report.follower_gradients)]
    checks += [(f"follower_curvature_lmo{e.id}", c) for e, c in zip(sol.per_lmo, report.follower_curvatures)]
    checks += [(f"nash_gain_lmo{e.id}", float(g)) for e, g in zip(sol.per_lmo, gains)]
    checks += [("tp_gradient", report.tp_gradient), ("tp_curvature", report.tp_curvature),
               ("max_deviation", report.max_deviation)]
    write_csv(out / "first_order.csv", ("check", "value"), checks, cfg.header())
    for sw in cfg.sweeps:
        _run_sweep(cfg, sw, profiles, sol)
    print(f"tau*={sol.tau_star:.6g} Z*={sol.z_star:.6g} max first-order deviation={report.max_deviation:.3g}")
    return EXIT_OK


def _run_sweep(cfg, sw, profiles, sol) -> None:
    out = Path(cfg.output_dir)
    params = cfg.params
    grid = np.linspace(sw.start, sw.stop, sw.steps)
    prices = [pr.price for pr in profiles]
    if sw.parameter == "tau":
        rows = [(t, optimal_total_data(t, prices), tp_utility_of_tau(t, prices, params)) for t in grid]
        cols = ("tau", "z_star", "tp_utility")
        name, series = "sweep_tau", {"TP utility": [r[2] for r in rows]}
    elif sw.parameter == "total_data":
        rows = [(z, tp_utility(sol.tau_star, z, params)) for z in grid]
        cols = ("total_data", "tp_utility")
        name, series = "sweep_total_data", {"TP utility": [r[1] for r in rows]}
    else:
        idx = [pr.id for pr in profiles].index(sw.lmo)
        rows = []
        for p in grid:
            swept = [dataclasses.replace(pr, price=float(p)) if i == idx else pr
                     for i, pr in enumerate(profiles)]
            s = solve_equilibrium(swept, params)
            if s.terminated:
                rows.append((p, s.tau_star, float("nan"), float("nan"), float("nan"), False))
                continue
            e = s.per_lmo[idx]
            rows.append((p, s.tau_star, e.zeta_star, e.predicted_utility,
                         tp_utility(s.tau_star, s.z_star, params), e.feasible))
        cols = ("price", "tau", "zeta", "lmo_utility", "tp_utility", "feasible")
        name = f"sweep_price_lmo{sw.lmo}"
        series = {"zeta": [r[2] for r in rows], "LMO utility": [r[3] for r in rows],
                  "TP utility": [r[4] for r in rows]}
    write_csv(out / f"{name}.csv", cols, rows, cfg.header())
    if cfg.svg:
        line_chart_svg(out / f"{name}.svg", [r[0] for r in rows], series, title=name, xlabel=cols[0])


# ---------------------------------------------------------------------- train

def _train_one(job):
    cfg, pr = job
    env = cfg.env_config(pr.worker_count)
    return pr.id, train(env, cfg.train_config(pr.id))


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.output_dir)
    pdir = policies_dir(cfg)
    pdir.mkdir(parents=True, exist_ok=True)
    profiles = cfg.profiles()
    for lmo_id, res in _map(_train_one, [(cfg, pr) for pr in profiles], args.jobs):
        save_policy(pdir / f"policy_lmo{lmo_id}.txt", res.policy, cfg.header())
        rows = [tuple(r[c] for c in TRAIN_LOG_COLUMNS) for r in res.log]
        write_csv(out / f"train_log_lmo{lmo_id}.csv", TRAIN_LOG_COLUMNS, rows, cfg.header())
        if cfg.svg and rows:
            line_chart_svg(out / f"train_log_lmo{lmo_id}.svg", [r[0] for r in rows],
                           {"mean return": [r[1] for r in rows]}, title=f"LMO {lmo_id} training",
                           xlabel="iteration", ylabel="mean episode return")
        final = res.log[-1]["mean_return"] if res.log else float("nan")
        print(f"LMO {lmo_id}: {len(res.log)} iterations, final mean return {final:.5g}")
    return EXIT_OK


# ----------------------------------------------------------------------- obsa

def cmd_obsa(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.output_dir)
    profiles = cfg.profiles()
    sol = solve_equilibrium(profiles, cfg.params)
    if sol.terminated:
        print(f"infeasible: publisher budget {sol.tau_star!r} <= 0", file=sys.stderr)
        return EXIT_RUNTIME
    responses = build_responses(cfg, profiles, args.stub)
    summary = []
    for e, pr in zip(sol.per_lmo, profiles):
        if e.zeta_star <= 0:
            summary.append((pr.id, e.zeta_star, "nan", "nan", "nan", 0, False, "eliminated"))
            continue
        res = obsa(sol.tau_star, e.zeta_star, responses[pr.id], **cfg.obsa_options())
        write_obsa_trace(out / f"obsa_lmo{pr.id}.csv", res, cfg.header())
        summary.append((pr.id, e.zeta_star, res.budget_star, res.total_paid, res.total_data,
                        res.iterations, res.converged, res.diagnostic or "ok"))
    write_csv(out / "obsa_summary.csv", ("lmo", "zeta_target", "budget_star", "total_paid", "total_data",
                                         "iterations", "converged", "diagnostic"), summary, cfg.header())
    return EXIT_OK


# ---------------------------------------------------------------------- asosa

def cmd_asosa(cfg: ExperimentConfig, args) -> int:
    if cfg.scheme == "equilibrium-only":
        return cmd_equilibrium(cfg, args)
    profiles = cfg.profiles()
    responses = build_responses(cfg, profiles, args.stub)
    opts = cfg.obsa_options()
    if cfg.scheme == "asosa":
        retrain = None
        if cfg.asosa.retrain and not (args.stub or cfg.policy_source == "stub"):
            retrain = _retrainer(cfg, responses)
        trace = run_asosa(profiles, responses, cfg.params, cfg.asosa.max_iterations,
                           cfg.asosa.conv_tolerance or cfg.params.conv_tolerance, opts, retrain)
    else:
        if cfg.scheme == "fixed":
            prices = {pr.id: cfg.compare.fixed_price for pr in profiles}
        else:
            draw = random_prices(len(profiles), cfg.compare.random_hi, derive_seed(cfg.seed, 4, 0))
            prices = {pr.id: float(p) for pr, p in zip(profiles, draw)}
        rnd = play_round(1, profiles, prices, cfg.params, responses, opts)
        trace = AsosaTrace([rnd], "tau_nonpositive" if rnd.status != "ok" else "max_iterations")
    write_asosa_trace(Path(cfg.output_dir) / "asosa_trace.csv", trace,
                           f"{cfg.header()} termination={trace.termination}")
    for d in trace.diagnostics:
        print(d, file=sys.stderr)
    print(f"termination={trace.termination} iterations={trace.iterations}")
    return EXIT_OK


# -------------------------------------------------------------------- compare

def _compare_one(job):
    cfg, m, stub = job
    profiles = cfg.profiles(count=m)
    responses = build_responses(cfg, profiles, stub)
    opts = cfg.obsa_options()
    trace = run_asosa(profiles, responses, cfg.params, cfg.asosa.max_iterations,
                       cfg.asosa.conv_tolerance or cfg.params.conv_tolerance, opts)
    rec_asosa = asosa_record(trace, m)
    rec_fixed = run_fixed_pricing(profiles, cfg.compare.fixed_price, cfg.params, responses, opts)
    draws = [run_random_pricing(profiles, cfg.compare.random_hi, derive_seed(cfg.seed, 4, m, j),
                                     cfg.params, responses, opts)
             for j in range(cfg.compare.random_draws)]
    rec_random = ComparisonRecord("random", m, float(np.mean([d.tau for d in draws])),
                                       float(np.mean([d.tp_utility for d in draws])),
                                       float(np.mean([d.total_data for d in draws])))
    for d in draws:
        d.scheme = "random_draw"
    return [rec_asosa, rec_fixed, rec_random], draws


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.output_dir)
    results = _map(_compare_one, [(cfg, m, args.stub) for m in cfg.compare.M], args.jobs)
    main_rows = [r for rows, _ in results for r in rows]
    draw_rows = [d for _, draws in results for d in draws]
    write_comparison(out / "comparison.csv", main_rows, cfg.header())
    write_comparison(out / "comparison_random_draws.csv", draw_rows, cfg.header())
    if cfg.svg:
        ms = list(cfg.compare.M)
        for col in ("tp_utility", "total_data", "tau"):
            series = {s: [getattr(r, col) for r in main_rows if r.scheme == s]
                      for s in ("asosa", "fixed", "random")}
            line_chart_svg(out / f"comparison_{col}.svg", ms, series, title=col, xlabel="M")
    for r in main_rows:
        print(f"M={r.M:<3d} {r.scheme:<7s} tau={r.tau:.5g} tp_utility={r.tp_utility:.5g} "
              f"total_data={r.total_data:.5g}")
    return EXIT_OK


COMMANDS = {"equilibrium": cmd_equilibrium, "train": cmd_train, "obsa": cmd_obsa,
            "asosa": cmd_asosa, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedincentive",
                                     description="Hierarchical FL incentive mechanism experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (overrides config and FEDINCENTIVE_OUT)")
        p.add_argument("--seed", type=int, help="master seed, unsigned 64-bit")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--stub", action="store_true",
                       help="use the linear stub worker response instead of trained policies")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    seed = args.seed if args.seed is not None else os.environ.get("FEDINCENTIVE_SEED")
    if seed is not None:
        try:
            changes["seed"] = int(seed)
        except ValueError:
            raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    out = args.out or os.environ.get("FEDINCENTIVE_OUT")
    if out:
        changes["output_dir"] = out
    try:
        return dataclasses.replace(cfg, **changes) if changes else cfg
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args)
    except (DomainError, TrainingError, MissingPolicyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
