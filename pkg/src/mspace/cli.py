"""Batch command-line front end.

Subcommands: `forecast` runs the online state-space forecaster over a
dataset, `synth` generates synthetic benchmark datasets, `baseline`
runs the Kalman reference models, and `bench` drives scaling probes and
the periodicity/sample-size experiment tables.

Every subcommand is deterministic given --seed.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 runtime error.  The environment
variable MSPACE_THREADS caps worker parallelism (execution is currently
single-threaded, which trivially respects any cap).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from . import dataio, metrics, synth
from .engine import RunConfig, online_run
from .errors import ConfigError, DataError, MspaceError
from .kalman import kalman_run

MSPACE_THREADS_ENV = "MSPACE_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(MSPACE_THREADS_ENV)
    if raw is None:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"{MSPACE_THREADS_ENV} must be an integer, got {raw!r}")
    if cap < 1:
        raise ConfigError(f"{MSPACE_THREADS_ENV} must be >= 1, got {cap}")
    return cap


def _resolve_train_ratio(args) -> float:
    if args.train_ratio is not None:
        return args.train_ratio
    return 0.9 if args.steps == 1 else 0.8


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mspace",
        description="Online node-feature forecasting on temporal graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("forecast", formatter_class=fmt,
                       help="run the online forecaster over a dataset")
    p.add_argument("--dataset", required=True, help="path to a dataset manifest.json")
    p.add_argument("--variant", default="s-mu",
                   choices=["s-mu", "s-n", "t-mu", "t-n", "st-mu", "st-n"],
                   help="state function (s/t/st) x sampling function (mu/n)")
    p.add_argument("--train-ratio", type=float, default=None,
                   help="offline training fraction (default 0.9 single-step, 0.8 multi-step)")
    p.add_argument("--steps", type=int, default=1, help="forecast horizon q")
    p.add_argument("--queue-size", type=int, default=20, help="per-state queue capacity M")
    p.add_argument("--period", type=int, default=None,
                   help="phase period for t-*/st-* variants (e.g. 2016 weekly, 288 daily at 5 min)")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="phase weight in combined-state distances")
    p.add_argument("--hops", type=int, default=1, help="neighborhood radius in hops")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--repeats", type=int, default=1,
                   help="Monte-Carlo chains for stochastic variants")
    p.add_argument("--out", required=True, help="result CSV path")
    p.add_argument("--check-bounds", action="store_true",
                   help="also emit the error-bound envelope CSV")
    p.add_argument("--bounds-out", default=None,
                   help="bound CSV path (default <out>.bounds.csv)")
    p.add_argument("--state-stats", default=None,
                   help="also export per-state statistics (node, state, count, trace)")
    p.add_argument("--verbose", action="store_true", help="per-horizon console output")

    p = sub.add_parser("synth", formatter_class=fmt,
                       help="generate synthetic benchmark datasets")
    p.add_argument("--preset", default=None, choices=sorted(synth.PRESETS),
                   help="named parameter package")
    p.add_argument("--nodes", type=int, default=None, help="node count (explicit mode)")
    p.add_argument("--edge-prob", type=float, default=None, help="ER edge probability")
    p.add_argument("--feature-dim", type=int, default=None, help="feature dimension d")
    p.add_argument("--length", type=int, default=None,
                   help="generated steps T (output has T+1 snapshots)")
    p.add_argument("--mu-min", type=float, default=None, help="state-mean range lower end")
    p.add_argument("--mu-max", type=float, default=None, help="state-mean range upper end")
    p.add_argument("--var-min", type=float, default=None, help="covariance-entry range lower end")
    p.add_argument("--var-max", type=float, default=None, help="covariance-entry range upper end")
    p.add_argument("--init-mean", type=float, default=None, help="initial feature mean")
    p.add_argument("--init-std", type=float, default=None, help="initial feature std dev")
    p.add_argument("--season-period", type=int, default=None,
                   help="seasonal period tau (0 disables seasonality)")
    p.add_argument("--season-mean", type=float, default=None, help="seasonal shock mean")
    p.add_argument("--season-std", type=float, default=None, help="seasonal shock std dev")
    p.add_argument("--instances", type=int, default=1, help="independent instances to generate")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("baseline", formatter_class=fmt,
                       help="run a classical Kalman baseline")
    p.add_argument("baseline_variant", choices=["kalman-x", "kalman-eps"],
                   help="observe features (kalman-x) or shocks (kalman-eps)")
    p.add_argument("--dataset", required=True, help="path to a dataset manifest.json")
    p.add_argument("--train-ratio", type=float, default=None,
                   help="training fraction (default 0.9 single-step, 0.8 multi-step)")
    p.add_argument("--steps", type=int, default=1, help="forecast horizon q")
    p.add_argument("--em-iterations", type=int, default=20, help="EM fitting iterations")
    p.add_argument("--seed", type=int, default=0, help="recorded in result rows")
    p.add_argument("--out", required=True, help="result CSV path")

    p = sub.add_parser("bench", formatter_class=fmt,
                       help="scaling probes and synthetic experiment tables")
    p.add_argument("--scaling", action="store_true", help="run the (n, T) timing grid")
    p.add_argument("--grid", nargs="+", default=["n=20,40", "T=1000,2000"],
                   help="grid axes, e.g. n=20,40,80 T=1000,2000")
    p.add_argument("--experiment", choices=["periodicity", "samples"], default=None,
                   help="regenerate a synthetic comparison table")
    p.add_argument("--instances", type=int, default=5, help="instances per dataset package")
    p.add_argument("--steps", type=int, default=1, help="forecast horizon q")
    p.add_argument("--train-ratio", type=float, default=0.8, help="training fraction")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--out", required=True, help="output CSV path")
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_forecast(args) -> int:
    config = RunConfig(
        variant=args.variant,
        train_ratio=_resolve_train_ratio(args),
        horizon=args.steps,
        queue_capacity=args.queue_size,
        period=args.period,
        gamma=args.gamma,
        hops=args.hops,
        seed=args.seed,
        mc_samples=args.repeats,
    )
    dataset = dataio.load_dataset(args.dataset)
    start = time.perf_counter()
    result = online_run(dataset, config)
    elapsed = time.perf_counter() - start
    shocks = np.diff(dataset.features, axis=0)
    report = metrics.error_report(result.records, shocks)
    rows = [
        dataio.ResultRow(
            dataset=dataset.name, method="mspace", variant=config.variant,
            q=i + 1, rmse=float(report.rmse_per_q[i]), mae=float(report.mae_per_q[i]),
            wall_time=elapsed, seed=config.seed, config_hash=config.config_hash(),
        )
        for i in range(config.horizon)
    ]
    dataio.write_results(rows, args.out)
    print(f"forecast: {dataset.name} variant={config.variant} records={result.num_records} "
          f"rmse({config.horizon})={report.rmse:.6g} mae({config.horizon})={report.mae:.6g}")
    if args.verbose:
        for i in range(config.horizon):
            print(f"  q={i + 1} rmse={report.rmse_per_q[i]:.6g} mae={report.mae_per_q[i]:.6g}")
    if args.check_bounds:
        upper = metrics.theorem1_bound(result.records, shocks, report=report,
                                       deterministic_sampling=not config.stochastic)
        lower = metrics.lower_bound(result.records, shocks, report=report,
                                    deterministic_sampling=not config.stochastic)
        bounds_out = args.bounds_out or f"{args.out}.bounds.csv"
        with open(bounds_out, "w") as fh:
            fh.write("q,rmse,mae,upper_bound,lower_bound\n")
            for i in range(config.horizon):
                fh.write(",".join([
                    str(i + 1),
                    f"{report.rmse_per_q[i]:.17g}",
                    f"{report.mae_per_q[i]:.17g}",
                    f"{upper.bound_curve[i]:.17g}",
                    f"{lower.bound_curve[i]:.17g}",
                ]) + "\n")
        status = "satisfied" if upper.all_satisfied else "VIOLATED"
        print(f"bounds: alpha={upper.alpha:.6g} beta={upper.beta:.6g} "
              f"beta'={lower.beta_prime:.6g} upper-bound {status}")
    if args.state_stats:
        from .states import export_state_statistics
        rows = export_state_statistics(
            [nm.store for nm in result.model.nodes], args.state_stats)
        print(f"state stats: {rows} rows -> {args.state_stats}")
    return 0


def _synth_params(args) -> tuple[str, synth.SynthParams]:
    overrides = {
        "nodes": args.nodes,
        "edge_prob": args.edge_prob,
        "d": args.feature_dim,
        "length": args.length,
        "mu_min": args.mu_min,
        "mu_max": args.mu_max,
        "var_min": args.var_min,
        "var_max": args.var_max,
        "init_mean": args.init_mean,
        "init_std": args.init_std,
        "period": args.season_period,
        "season_mean": args.season_mean,
        "season_std": args.season_std,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.preset is not None:
        base = synth.PRESETS[args.preset]
        return args.preset, dataclasses.replace(base, **overrides)
    if "nodes" not in overrides or "edge_prob" not in overrides:
        raise ConfigError("explicit mode needs at least --nodes and --edge-prob "
                          "(or pass --preset)")
    return "custom", synth.SynthParams(**overrides)


def _cmd_synth(args) -> int:
    name, base = _synth_params(args)
    if args.instances < 1:
        raise ConfigError(f"--instances must be >= 1, got {args.instances}")
    for i in range(args.instances):
        params = dataclasses.replace(base, seed=synth.instance_seed(args.seed, i))
        dataset = synth.gen_synthetic(params)
        dataset = dataclasses.replace(dataset, name=f"{name}_{i}")
        out_dir = os.path.join(args.out, f"{name}_{i}")
        manifest = dataio.save_dataset(dataset, out_dir,
                                       provenance=synth.provenance_dict(params))
        print(manifest)
    return 0


def _cmd_baseline(args) -> int:
    if args.train_ratio is None:
        args.train_ratio = 0.9 if args.steps == 1 else 0.8
    dataset = dataio.load_dataset(args.dataset)
    start = time.perf_counter()
    result = kalman_run(dataset, args.baseline_variant,
                        train_ratio=args.train_ratio, horizon=args.steps,
                        em_iterations=args.em_iterations)
    elapsed = time.perf_counter() - start
    shocks = np.diff(dataset.features, axis=0)
    report = metrics.error_report(result.records, shocks)
    config_hash = RunConfig(variant="s-mu", train_ratio=args.train_ratio,
                            horizon=args.steps, seed=args.seed).config_hash()
    rows = [
        dataio.ResultRow(
            dataset=dataset.name, method="kalman", variant=args.baseline_variant,
            q=i + 1, rmse=float(report.rmse_per_q[i]), mae=float(report.mae_per_q[i]),
            wall_time=elapsed, seed=args.seed, config_hash=config_hash,
        )
        for i in range(args.steps)
    ]
    dataio.write_results(rows, args.out)
    print(f"baseline: {dataset.name} variant={args.baseline_variant} "
          f"records={result.num_records} rmse({args.steps})={report.rmse:.6g}")
    return 0


def _parse_grid(tokens) -> tuple[list[int], list[int]]:
    axes = {}
    for token in tokens:
        if "=" not in token:
            raise ConfigError(f"bad grid token {token!r}; expected axis=v1,v2,...")
        axis, values = token.split("=", 1)
        axis = axis.strip()
        if axis not in ("n", "T"):
            raise ConfigError(f"unknown grid axis {axis!r}; expected n or T")
        try:
            axes[axis] = [int(v) for v in values.split(",") if v]
        except ValueError:
            raise ConfigError(f"non-integer grid value in {token!r}")
    if "n" not in axes or "T" not in axes:
        raise ConfigError("grid needs both axes, e.g. --grid n=20,40 T=1000,2000")
    return axes["n"], axes["T"]


def _cmd_bench(args) -> int:
    if args.scaling == (args.experiment is not None):
        raise ConfigError("pick exactly one of --scaling or --experiment")
    if args.scaling:
        ns, lengths = _parse_grid(args.grid)
        cells = metrics.complexity_probe(ns, lengths, seed=args.seed)
        with open(args.out, "w") as fh:
            fh.write("n,T,wall_time,store_bytes,records\n")
            for c in cells:
                fh.write(f"{c.n},{c.length},{c.seconds:.6f},{c.store_bytes},{c.records}\n")
        for key, value in metrics.probe_ratios(cells).items():
            print(f"{key} = {value:.3f}")
        return 0
    return _run_experiment(args)


_EXPERIMENTS = {
    "periodicity": ("syn01", "syn02"),
    "samples": ("syn03", "syn04"),
}

_EXPERIMENT_MODELS = ("s-mu", "s-n", "kalman-x", "kalman-eps")


def _experiment_rmse(dataset, model, train_ratio, horizon, seed) -> float:
    shocks = np.diff(dataset.features, axis=0)
    if model.startswith("kalman"):
        result = kalman_run(dataset, model, train_ratio=train_ratio, horizon=horizon)
        records = result.records
    else:
        config = RunConfig(variant=model, train_ratio=train_ratio, horizon=horizon,
                           seed=seed, track_bounds=False)
        records = online_run(dataset, config).records
    return metrics.error_report(records, shocks).rmse


def _run_experiment(args) -> int:
    name_a, name_b = _EXPERIMENTS[args.experiment]
    datasets = {
        name: synth.gen_preset(name, instances=args.instances, seed=args.seed)
        for name in (name_a, name_b)
    }
    lines = [f"model,{name_a}_mean,{name_a}_std,{name_b}_mean,{name_b}_std,pct_change"]
    for model in _EXPERIMENT_MODELS:
        stats = {}
        for name in (name_a, name_b):
            values = [
                _experiment_rmse(ds, model, args.train_ratio, args.steps, args.seed)
                for ds in datasets[name]
            ]
            stats[name] = (float(np.mean(values)), float(np.std(values, ddof=1) if len(values) > 1 else 0.0))
        pct = 100.0 * (stats[name_b][0] - stats[name_a][0]) / stats[name_a][0]
        lines.append(",".join([
            model,
            f"{stats[name_a][0]:.17g}", f"{stats[name_a][1]:.17g}",
            f"{stats[name_b][0]:.17g}", f"{stats[name_b][1]:.17g}",
            f"{pct:.17g}",
        ]))
        print(f"{args.experiment}: {model} {name_a}={stats[name_a][0]:.2f} "
              f"{name_b}={stats[name_b][0]:.2f} change={pct:+.2f}%")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "forecast": _cmd_forecast,
    "synth": _cmd_synth,
    "baseline": _cmd_baseline,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_cap()
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
