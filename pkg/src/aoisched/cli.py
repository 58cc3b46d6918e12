"""Command-line entry points: path dumps, table builds, simulation runs,
policy comparisons and validation suites.

Every command is deterministic given the config file, flags and seed.  CSV
and JSON layouts are documented in the README; summary JSON embeds the fully
resolved configuration so a run can be reproduced from its own output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import config as cfg_mod
from . import harness, reference, validation
from .config import ConfigError

SCHEMA_VERSION = 1
DEFAULT_CACHE_DIR = "table-cache"


def _load(path: str) -> dict:
    return cfg_mod.load_config(path)


def cmd_paths(args) -> int:
    cfg = _load(args.config)
    scenario = cfg_mod.build_scenario(cfg)
    out = sys.stdout
    out.write("sensor,pathIndex,lengthM,aoaRad,aodRad,pathLossDb\n")
    for paths in scenario.paths:
        for p in paths:
            out.write(f"{p.sensor_index},{p.path_index},{p.length_m:.9f},"
                      f"{p.aoa_rad:.9f},{p.aod_rad:.9f},{p.path_loss_db:.9f}\n")
    return 0


def cmd_value_tables(args) -> int:
    cfg = _load(args.config)
    scenario = cfg_mod.build_scenario(cfg)
    cached = reference.load_tables(args.cache_dir, scenario)
    if cached is not None:
        print(f"cache hit: {reference.cache_path(args.cache_dir, cached.config_hash)}")
        tables = cached
        elapsed = 0.0
    else:
        started = time.perf_counter()
        tables = reference.build_tables(scenario)
        elapsed = time.perf_counter() - started
        path = reference.save_tables(tables, args.cache_dir)
        print(f"built and cached: {path}")
    for k0, matrix in enumerate(tables.transition):
        print(f"sensor {k0 + 1}: dimension {matrix.shape[0]}, "
              f"nonzeros {matrix.nnz}, solve residual {tables.residuals[k0]:.3e}")
    print(f"constant term {tables.constant_term:.6f}, wall time {elapsed:.2f}s")
    return 0


def _policy_with_tables(name: str, scenario, cache_dir):
    tables = None
    if name == "proposed" or name.startswith("psi"):
        tables = reference.load_or_build(scenario, cache_dir,
                                         notice=lambda msg: print(f"note: {msg}"))
    return harness.make_policy(name, scenario, tables)


def _cost_cdf(costs: np.ndarray, grid=None):
    if grid is None:
        top = float(costs.max()) if len(costs) else 1.0
        grid = np.linspace(0.0, top, 201)
    grid = np.asarray(grid, dtype=float)
    cdf = np.searchsorted(np.sort(costs), grid, side="right") / max(len(costs), 1)
    return grid, cdf


def _summary(cfg, policy_name, seed, record) -> dict:
    grid, cdf = _cost_cdf(record.cost)
    return {
        "schemaVersion": SCHEMA_VERSION,
        "policy": policy_name,
        "seed": int(seed),
        "frames": int(record.n_frames),
        "meanCost": float(record.cost.mean()),
        "componentMeans": record.component_means(),
        "costCdf": {"grid": grid.tolist(), "cdf": cdf.tolist()},
        "config": cfg,
    }


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    scenario = cfg_mod.build_scenario(cfg)
    frames = args.frames if args.frames is not None else cfg["sim"]["frames"]
    seed = args.seed if args.seed is not None else cfg["sim"]["seed"]
    policy = _policy_with_tables(args.policy, scenario, args.cache_dir)
    record = harness.run_episode(policy, scenario, seed, frames)
    os.makedirs(args.out, exist_ok=True)
    episode_path = os.path.join(args.out, f"episode-{args.policy}-seed{seed}.csv")
    with open(episode_path, "w") as fh:
        record.write_csv(fh)
    summary_path = os.path.join(args.out, f"summary-{args.policy}-seed{seed}.json")
    with open(summary_path, "w") as fh:
        json.dump(_summary(cfg, args.policy, seed, record), fh, indent=2, sort_keys=True)
    print(f"wrote {episode_path}")
    print(f"wrote {summary_path}")
    print(f"mean per-frame cost: {record.cost.mean():.4f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args.config)
    policies = args.policies.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    frames = args.frames if args.frames is not None else cfg["sim"]["frames"]
    os.makedirs(args.out, exist_ok=True)

    sweep = cfg["sim"]["kSweep"] or [None]
    sweep_rows = []
    summary = {"schemaVersion": SCHEMA_VERSION, "policies": policies,
               "seeds": seeds, "frames": frames, "results": [], "config": cfg}
    for k in sweep:
        scenario = cfg_mod.build_scenario(cfg, sensor_count=k)
        made = {name: _policy_with_tables(name, scenario, args.cache_dir)
                for name in policies}
        costs = {name: [] for name in policies}
        components = {name: [] for name in policies}
        for seed in seeds:
            for name in policies:  # same seed across policies: shared randomness
                rec = harness.run_episode(made[name], scenario, seed, frames)
                costs[name].append(rec.cost)
                components[name].append(rec.component_means())
        label = k if k is not None else scenario.n_sensors
        for name in policies:
            all_costs = np.concatenate(costs[name])
            grid, cdf = _cost_cdf(all_costs)
            comp = {key: float(np.mean([c[key] for c in components[name]]))
                    for key in components[name][0]}
            summary["results"].append({
                "sensors": int(label),
                "policy": name,
                "meanCost": float(all_costs.mean()),
                "componentMeans": comp,
                "costCdf": {"grid": grid.tolist(), "cdf": cdf.tolist()},
            })
            sweep_rows.append((int(label), name, float(all_costs.mean())))

    summary_path = os.path.join(args.out, "compare.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    table_path = os.path.join(args.out, "mean-cost.csv")
    with open(table_path, "w") as fh:
        fh.write("sensors,policy,meanCost\n")
        for label, name, mean in sweep_rows:
            fh.write(f"{label},{name},{mean:.6f}\n")
    print(f"wrote {summary_path}")
    print(f"wrote {table_path}")
    for label, name, mean in sweep_rows:
        print(f"K={label} {name}: mean per-frame cost {mean:.3f}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    scenario = cfg_mod.build_scenario(cfg)
    tables = None
    if args.suite in ("transitions", "value", "lemma4"):
        tables = reference.load_or_build(scenario, args.cache_dir,
                                         notice=lambda msg: print(f"note: {msg}"))
    started = time.perf_counter()
    result = validation.run_suite(args.suite, scenario, tables,
                                  cache_dir=args.cache_dir)
    elapsed = time.perf_counter() - started
    print(f"suite {args.suite}: {'PASS' if result['passed'] else 'FAIL'} "
          f"({elapsed:.1f}s)")
    for key, value in result.items():
        if key == "passed":
            continue
        print(f"  {key}: {value}")
    return 0 if result["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoisched",
        description="mmWave sensor-network scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("paths", help="dump propagation paths as CSV")
    p.add_argument("config")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("value-tables", help="build or refresh the value-table cache")
    p.add_argument("config")
    p.add_argument("--cache-dir", default=DEFAULT_CACHE_DIR)
    p.set_defaults(func=cmd_value_tables)

    p = sub.add_parser("simulate", help="run one policy and write episode outputs")
    p.add_argument("config")
    p.add_argument("--policy", required=True, choices=harness.POLICY_NAMES)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--cache-dir", default=DEFAULT_CACHE_DIR)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run several policies on common random numbers")
    p.add_argument("config")
    p.add_argument("--policies", default="proposed,bm1,bm2,bm3")
    p.add_argument("--seeds", default="7")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--cache-dir", default=DEFAULT_CACHE_DIR)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="run a quantitative validation suite")
    p.add_argument("config")
    p.add_argument("--suite", required=True, choices=validation.SUITES)
    p.add_argument("--cache-dir", default=DEFAULT_CACHE_DIR)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
