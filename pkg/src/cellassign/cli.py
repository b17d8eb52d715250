"""Command-line entry point: ``cellassign {gen,solve,sweep,heatmap}``.

Every command reads one JSON config (optional) and applies flag overrides on
top; flags win. Artifacts go to the output directory under fixed names.

Exit codes: 0 success, 2 config/validation error, 3 infeasible result,
4 internal limit (grid or brute-force caps).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as exp
from .errors import CellAssignError, GridTooLargeError, InfeasibleCapacitiesError, TooLargeError
from .qubo import (
    Assignment,
    build_naive,
    build_proposed,
    decode_naive,
    decode_proposed,
    default_penalty,
    objective,
    top2,
)
from .radio import Gaussian, Isotropic, RadioConfig, export_heatmap, sinr_heatmap, sinr_matrix
from .scenario import (
    Area,
    Scenario,
    Station,
    generate_biased,
    generate_uniform,
    load_scenario,
    random_stations,
    save_scenario,
    validate,
)
from .solvers import SaConfig, best_feasible, brute_force, exact_assignment, simulated_anneal, top2_mask, write_samples_csv

log = logging.getLogger("cellassign")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 2, 3, 4

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out": "out",
    "scenario": {
        "path": None,
        "n": 30,
        "m": 3,
        "dist": "uniform",
        "beam": "isotropic",
        "hot_fraction": 0.6,
        "hot_station": 0,
        "allow_remainder": False,
        "area": {"width": 700.0, "height": 700.0},
    },
    "radio": {
        "frequency_hz": 2.0e9,
        "tx_power": 1.0,
        "noise_power": 1e-13,
        "sinr_scale": "db",
    },
    "qubo": {"lambda1": None, "lambda2": None, "lambda_p": None},
    "sa": {
        "num_reads": 1000,
        "sweeps_per_read": 1000,
        "beta_min": None,
        "beta_max": None,
        "randomize_order": False,
    },
    "solve": {"formulation": "both", "solver": "sa", "allow_infeasible": False},
    "experiment": {
        "kind": "patterns",
        "n": 30,
        "n_values": [9, 15, 30, 45, 60],
        "instances": 20,
        "patterns": [1, 2, 3, 4],
        "solvers": ["sa"],
    },
    "heatmap": {"preset": "caption", "beam": None, "step": 1.0, "bounds": None, "max_cells": 4_000_000},
}

# station layouts for the SINR maps: two stations on the map diagonal, or 1 km apart
HEATMAP_PRESETS = {
    "caption": {"stations": [(0.0, 0.0), (350.0, 350.0)], "bounds": (0.0, 700.0, 0.0, 700.0)},
    "prose": {"stations": [(0.0, 350.0), (1000.0, 350.0)], "bounds": (-250.0, 1250.0, 0.0, 700.0)},
}
PRESET_BEAMS = (0.0, 120.0, 240.0)

PATTERN_IDS = {(p.distribution, p.beam): p.id for p in exp.PATTERNS.values()}


class ConfigError(CellAssignError, ValueError):
    pass


# -----------------------------
# Config handling
# -----------------------------
def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cfg = _merge(cfg, json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    overrides = {
        ("seed",): args.seed,
        ("out",): args.out,
        ("scenario", "n"): args.n,
        ("scenario", "m"): args.m,
        ("scenario", "dist"): args.dist,
        ("scenario", "beam"): args.beam,
        ("scenario", "hot_fraction"): getattr(args, "hot_fraction", None),
        ("scenario", "path"): getattr(args, "scenario", None),
        ("solve", "formulation"): args.formulation,
        ("solve", "solver"): args.solver,
        ("sa", "num_reads"): args.reads,
        ("sa", "sweeps_per_read"): args.sweeps,
        ("experiment", "kind"): getattr(args, "kind", None),
        ("experiment", "instances"): getattr(args, "instances", None),
        ("experiment", "n_values"): getattr(args, "n_values", None),
        ("heatmap", "preset"): getattr(args, "preset", None),
        ("heatmap", "step"): getattr(args, "step", None),
    }
    for keys, value in overrides.items():
        if value is None:
            continue
        node = cfg
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    if getattr(args, "allow_infeasible", False):
        cfg["solve"]["allow_infeasible"] = True
    if args.n is not None:
        cfg["experiment"]["n"] = args.n
    if cfg.get("seed") is None:
        raise ConfigError("a master seed is required")
    return cfg


def radio_config(cfg: dict) -> RadioConfig:
    try:
        return RadioConfig(**cfg["radio"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad radio config: {exc}") from exc


def sa_config(cfg: dict, seed: int) -> SaConfig:
    try:
        return SaConfig(seed=seed, workers=exp.thread_cap(1), **cfg["sa"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sa config: {exc}") from exc


def area_of(cfg: dict) -> Area:
    a = cfg["scenario"]["area"]
    return Area(float(a["width"]), float(a["height"]))


def make_scenario(cfg: dict) -> Scenario:
    sc = cfg["scenario"]
    if sc.get("path"):
        path = Path(sc["path"])
        if not path.exists():
            raise ConfigError(f"scenario file {path} does not exist")
        return load_scenario(path)
    seed = int(cfg["seed"])
    area = area_of(cfg)
    if sc.get("stations"):
        stations = tuple(
            Station(k, float(x), float(y), Isotropic() if sc["beam"] == "isotropic" else Gaussian(beam_azimuths_deg=PRESET_BEAMS))
            for k, (x, y) in enumerate(sc["stations"])
        )
    else:
        stations = random_stations(int(sc["m"]), area, exp.derive_seed(seed, 1), beam=sc["beam"])
    phone_seed = exp.derive_seed(seed, 2)
    if sc["dist"] == "uniform":
        return generate_uniform(int(sc["n"]), stations, area, phone_seed, sc["allow_remainder"])
    if sc["dist"] == "biased":
        return generate_biased(
            int(sc["n"]), stations, area, int(sc["hot_station"]), float(sc["hot_fraction"]),
            phone_seed, sc["allow_remainder"],
        )
    raise ConfigError(f"unknown distribution {sc['dist']!r}")


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -----------------------------
# Commands
# -----------------------------
def cmd_gen(cfg: dict) -> int:
    scenario = make_scenario(cfg)
    violations = validate(scenario)
    out = _out_dir(cfg)
    save_scenario(scenario, out / "scenario.json")
    print(f"scenario: N={scenario.num_phones} M={scenario.num_stations} capacities={list(scenario.capacities)}")
    if violations:
        for v in violations:
            print(f"violation: {v.kind}: {v.detail}")
        return EXIT_CONFIG
    print("validation: ok")
    return EXIT_OK


def _assignment_json(assign: Assignment | None) -> dict | None:
    if assign is None:
        return None
    return {
        "station_of": list(assign.station_of),
        "one_hot_violations": list(assign.one_hot_violations),
        "capacity_deltas": list(assign.capacity_deltas),
        "feasible": assign.feasible,
    }


def cmd_solve(cfg: dict) -> int:
    scenario = make_scenario(cfg)
    violations = validate(scenario)
    if violations:
        for v in violations:
            print(f"violation: {v.kind}: {v.detail}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(cfg)
    save_scenario(scenario, out / "scenario.json")
    seed = int(cfg["seed"])
    n, m, caps = scenario.num_phones, scenario.num_stations, scenario.capacities
    S = sinr_matrix(scenario, radio_config(cfg))
    lam = default_penalty(S)
    qc = cfg["qubo"]
    table = top2(S)
    E_star = objective(exact_assignment(S, caps), S)

    formulation = cfg["solve"]["formulation"]
    solver = cfg["solve"]["solver"]
    names = ["naive", "proposed"] if formulation == "both" else [formulation]
    # a loaded scenario carries no record of how its phones were drawn
    pattern_id = 0
    if not cfg["scenario"].get("path"):
        pattern_id = PATTERN_IDS.get((cfg["scenario"]["dist"], cfg["scenario"]["beam"]), 0)
    base = dict(pattern=pattern_id, n=n, m=m, instance=0, instance_seed=seed)

    records, assignments, infeasible = [], {}, False
    for name in names:
        if name == "naive":
            q = build_naive(S, caps, qc["lambda1"] or lam, qc["lambda2"] or lam)
            decode = lambda b: decode_naive(b, n, m, caps)  # noqa: E731
        else:
            q = build_proposed(table, caps, qc["lambda_p"] or lam)
            decode = lambda b: decode_proposed(b, table, caps)  # noqa: E731
        extra: dict = {}
        if solver == "sa":
            samples = simulated_anneal(q, sa_config(cfg, exp.derive_seed(seed, 3, 0 if name == "naive" else 1)))
            write_samples_csv(samples, out / f"samples_{name}.csv", decode)
            assign = best_feasible(samples, decode)
            extra = dict(feasible_samples=sum(decode(s.bits).feasible for s in samples.samples),
                         qubo_energy=samples.best.energy, wall_time=samples.wall_time)
        elif solver == "exact":
            try:
                assign = exact_assignment(S, caps, allowed=None if name == "naive" else top2_mask(table))
            except InfeasibleCapacitiesError:
                assign = None
        elif solver == "brute":
            bits, e = brute_force(q)
            assign = decode(bits)
            extra = dict(qubo_energy=e)
        else:
            raise ConfigError(f"unknown solver {solver!r}")
        record = exp.make_record(base, name, solver, assign, S, E_star, **extra)
        records.append(record)
        assignments[name] = _assignment_json(assign)
        if not record.feasible:
            infeasible = True
        rel = "n/a" if record.relative_error is None else f"{record.relative_error:.6g}"
        E = "n/a" if record.E is None else f"{record.E:.6f}"
        print(f"{name:8s} solver={solver} E={E} E*={E_star:.6f} relative_error={rel} feasible={record.feasible}")

    exp.write_results_csv(records, out / "results.csv")
    (out / "assignment.json").write_text(json.dumps(assignments, indent=2) + "\n")
    if infeasible and not cfg["solve"]["allow_infeasible"]:
        print("no feasible solution found", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def experiment_settings(cfg: dict) -> exp.ExperimentSettings:
    qc = cfg["qubo"]
    return exp.ExperimentSettings(
        area=area_of(cfg),
        radio=radio_config(cfg),
        sa=sa_config(cfg, 0),
        lambda1=qc["lambda1"],
        lambda2=qc["lambda2"],
        lambda_p=qc["lambda_p"],
        hot_fraction=float(cfg["scenario"]["hot_fraction"]),
        solvers=tuple(cfg["experiment"]["solvers"]),
        workers=exp.thread_cap(1),
    )


def cmd_sweep(cfg: dict) -> int:
    ec = cfg["experiment"]
    m = int(cfg["scenario"]["m"])
    settings = replace(experiment_settings(cfg), sa=replace(sa_config(cfg, 0), workers=1))
    seed = int(cfg["seed"])
    failures: list = []
    if ec["kind"] == "patterns":
        n_values = [int(ec["n"])]
        if n_values[0] % m:
            raise ConfigError(f"N={n_values[0]} is not divisible by M={m}")
        records = exp.run_pattern_comparison(n_values[0], m, int(ec["instances"]), seed, settings,
                                             patterns=tuple(ec["patterns"]), failures=failures)
    elif ec["kind"] == "n_sweep":
        n_values = [int(v) for v in ec["n_values"]]
        if any(v % m for v in n_values):
            raise ConfigError(f"every N in {n_values} must be divisible by M={m}")
        records = exp.run_n_sweep(n_values, m, int(ec["instances"]), seed, settings, failures=failures)
    else:
        raise ConfigError(f"unknown experiment kind {ec['kind']!r}")
    out = _out_dir(cfg)
    exp.write_results_csv(records, out / "results.csv")
    exp.write_timings_csv(records, out / "timings.csv")
    with open(out / "variable_counts.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "naive_vars", "proposed_vars"])
        writer.writerows(exp.variable_count_curve(n_values, m))
    doc = exp.write_summary_json(records, out / "summary.json", {"failures": failures})
    for row in doc["groups"]:
        med = "n/a" if row["median"] is None else f"{row['median']:.4g}"
        print(f"pattern={row['pattern']} N={row['n']} {row['formulation']:8s} {row['solver']} "
              f"median={med} feasible={row['feasible']}/{row['instances']}")
    if doc["crossover_n"] is not None:
        print(f"crossover N*={doc['crossover_n']}")
    for f in failures:
        print(f"failed: pattern={f['pattern']} N={f['n']} instance={f['instance']}: {f['error']}", file=sys.stderr)
    return EXIT_OK


def cmd_heatmap(cfg: dict) -> int:
    hc = cfg["heatmap"]
    beam = hc.get("beam") or cfg["scenario"]["beam"]
    if cfg["scenario"].get("path"):
        scenario = load_scenario(cfg["scenario"]["path"])
        stations = scenario.stations
        bounds = hc.get("bounds") or (0.0, scenario.area.width, 0.0, scenario.area.height)
    else:
        if hc["preset"] not in HEATMAP_PRESETS:
            raise ConfigError(f"unknown heatmap preset {hc['preset']!r}")
        preset = HEATMAP_PRESETS[hc["preset"]]
        pattern = Isotropic() if beam == "isotropic" else Gaussian(beam_azimuths_deg=PRESET_BEAMS)
        stations = tuple(Station(k, x, y, pattern) for k, (x, y) in enumerate(preset["stations"]))
        bounds = hc.get("bounds") or preset["bounds"]
    if len(stations) < 2:
        raise ConfigError("heatmap needs at least two stations")
    heat = sinr_heatmap(stations, radio_config(cfg), float(hc["step"]), tuple(bounds), int(hc["max_cells"]))
    paths = export_heatmap(heat, _out_dir(cfg))
    rows, cols = heat.shape
    print(f"heatmap {rows}x{cols}: SINR {np.min(heat.sinr_db):.2f}..{np.max(heat.sinr_db):.2f} dB")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "sweep": cmd_sweep, "heatmap": cmd_heatmap}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--n", type=int, help="number of phones")
    common.add_argument("--m", type=int, help="number of stations")
    common.add_argument("--dist", choices=["uniform", "biased"])
    common.add_argument("--beam", choices=["isotropic", "gaussian"])
    common.add_argument("--formulation", choices=["naive", "proposed", "both"])
    common.add_argument("--solver", choices=["sa", "exact", "brute"])
    common.add_argument("--reads", type=int, help="SA reads")
    common.add_argument("--sweeps", type=int, help="SA sweeps per read")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cellassign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    gen = sub.add_parser("gen", parents=[common], help="generate a scenario file")
    gen.add_argument("--hot-fraction", type=float)
    solve = sub.add_parser("solve", parents=[common], help="solve one scenario")
    solve.add_argument("--scenario", help="saved scenario JSON")
    solve.add_argument("--hot-fraction", type=float)
    solve.add_argument("--allow-infeasible", action="store_true", help="exit 0 even without a feasible sample")
    sweep = sub.add_parser("sweep", parents=[common], help="run an experiment grid")
    sweep.add_argument("--kind", choices=["patterns", "n_sweep"])
    sweep.add_argument("--instances", type=int)
    sweep.add_argument("--n-values", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated N grid")
    heat = sub.add_parser("heatmap", parents=[common], help="render SINR heatmaps")
    heat.add_argument("--preset", choices=sorted(HEATMAP_PRESETS))
    heat.add_argument("--step", type=float, help="grid step in meters")
    heat.add_argument("--scenario", help="take stations from a saved scenario")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (GridTooLargeError, TooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except (CellAssignError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
