"""Benchmark harness: naive vs top-2 formulations against the exact optimum."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from .errors import CellAssignError, InfeasibleCapacitiesError, ZeroOptimumError
from .qubo import (
    build_naive,
    build_proposed,
    decode_naive,
    decode_proposed,
    default_penalty,
    objective,
    top2,
)
from .radio import RadioConfig, sinr_matrix
from .scenario import Area, Scenario, generate_biased, generate_uniform, random_stations
from .solvers import SaConfig, best_feasible, exact_assignment, simulated_anneal, top2_mask

log = logging.getLogger(__name__)

DEFAULT_AREA = Area(700.0, 700.0)
OPTIMALITY_RTOL = 1e-9


@dataclass(frozen=True)
class TestPattern:
    id: int
    distribution: Literal["uniform", "biased"]
    beam: Literal["isotropic", "gaussian"]

    __test__ = False  # not a pytest class


PATTERNS = {
    1: TestPattern(1, "uniform", "isotropic"),
    2: TestPattern(2, "biased", "isotropic"),
    3: TestPattern(3, "uniform", "gaussian"),
    4: TestPattern(4, "biased", "gaussian"),
}


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything besides N, M and the instance index that shapes one run."""

    area: Area = DEFAULT_AREA
    radio: RadioConfig = RadioConfig()
    sa: SaConfig = SaConfig()
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    lambda_p: Optional[float] = None
    hot_fraction: float = 0.6
    solvers: tuple[str, ...] = ("sa",)
    workers: int = 1


@dataclass(frozen=True)
class ResultRecord:
    pattern: int
    n: int
    m: int
    instance: int
    instance_seed: int
    formulation: Literal["naive", "proposed"]
    solver: Literal["sa", "exact", "brute"]
    E: Optional[float]
    E_star: float
    relative_error: Optional[float]
    signed_relative_error: Optional[float]
    feasible: bool
    feasible_samples: int = 0
    qubo_energy: Optional[float] = None
    wall_time: float = 0.0


CSV_FIELDS = (
    "pattern",
    "n",
    "m",
    "instance",
    "instance_seed",
    "formulation",
    "solver",
    "E",
    "E_star",
    "relative_error",
    "signed_relative_error",
    "feasible",
    "feasible_samples",
    "qubo_energy",
)


def relative_error(E: float, E_star: float) -> float:
    """Non-negative optimality gap ``(E* - E) / |E*|`` for the maximization."""
    if E_star == 0:
        raise ZeroOptimumError("relative error is undefined for a zero optimum")
    return (E_star - E) / abs(E_star)


def signed_relative_error(E: float, E_star: float) -> float:
    """``(E - E*) / E*`` exactly as written for the cost comparison."""
    if E_star == 0:
        raise ZeroOptimumError("relative error is undefined for a zero optimum")
    return (E - E_star) / E_star


def variable_count_curve(n_values: Iterable[int], m: int) -> list[tuple[int, int, int]]:
    return [(n, n * m, n) for n in n_values]


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def thread_cap(default: int = 1) -> int:
    value = os.environ.get("CELLASSIGN_THREADS")
    if not value:
        return default
    return max(1, int(value))


# -----------------------------
# Instances
# -----------------------------
def build_instance(
    pattern: TestPattern, n: int, m: int, instance_seed: int, settings: ExperimentSettings
) -> Scenario:
    area = settings.area
    stations = random_stations(m, area, derive_seed(instance_seed, 1), beam=pattern.beam)
    phone_seed = derive_seed(instance_seed, 2)
    if pattern.distribution == "uniform":
        return generate_uniform(n, stations, area, phone_seed)
    return generate_biased(n, stations, area, hot_station=0, hot_fraction=settings.hot_fraction, seed=phone_seed)


def make_record(base: dict, formulation, solver, assign, S, E_star, **extra) -> ResultRecord:
    if assign is None or not assign.feasible:
        return ResultRecord(**base, formulation=formulation, solver=solver, E=None, E_star=E_star,
                            relative_error=None, signed_relative_error=None, feasible=False, **extra)
    E = objective(assign, S)
    if E > E_star + OPTIMALITY_RTOL * abs(E_star):
        raise RuntimeError(f"{formulation}/{solver} objective {E!r} exceeds the exact optimum {E_star!r}")
    return ResultRecord(**base, formulation=formulation, solver=solver, E=E, E_star=E_star,
                        relative_error=relative_error(E, E_star),
                        signed_relative_error=signed_relative_error(E, E_star), feasible=True, **extra)


def solve_instance(
    pattern: TestPattern, n: int, m: int, instance: int, instance_seed: int, settings: ExperimentSettings
) -> list[ResultRecord]:
    """Build one scenario, solve both formulations, and emit one record per (formulation, solver)."""
    scenario = build_instance(pattern, n, m, instance_seed, settings)
    caps = scenario.capacities
    S = sinr_matrix(scenario, settings.radio)
    lam = default_penalty(S)
    table = top2(S)
    q_naive = build_naive(S, caps, settings.lambda1 or lam, settings.lambda2 or lam)
    q_prop = build_proposed(table, caps, settings.lambda_p or lam)
    E_star = objective(exact_assignment(S, caps), S)

    base = dict(pattern=pattern.id, n=n, m=m, instance=instance, instance_seed=instance_seed)
    records = []
    decoders = {
        "naive": (q_naive, lambda b: decode_naive(b, n, m, caps)),
        "proposed": (q_prop, lambda b: decode_proposed(b, table, caps)),
    }
    for formulation, (q, decode) in decoders.items():
        if "sa" in settings.solvers:
            sa_cfg = replace(settings.sa, seed=derive_seed(instance_seed, 3, 0 if formulation == "naive" else 1))
            samples = simulated_anneal(q, sa_cfg)
            assign = best_feasible(samples, decode)
            feasible_count = sum(decode(s.bits).feasible for s in samples.samples)
            records.append(make_record(base, formulation, "sa", assign, S, E_star,
                                   feasible_samples=feasible_count,
                                   qubo_energy=samples.best.energy, wall_time=samples.wall_time))
        if "exact" in settings.solvers:
            start = time.perf_counter()
            mask = None if formulation == "naive" else top2_mask(table)
            try:
                assign = exact_assignment(S, caps, allowed=mask)
            except InfeasibleCapacitiesError:
                assign = None
            records.append(make_record(base, formulation, "exact", assign, S, E_star,
                                   wall_time=time.perf_counter() - start))
    return records


def _record_key(r: ResultRecord):
    return (r.pattern, r.n, r.instance, r.instance_seed, r.formulation, r.solver)


def _run_jobs(jobs: list[tuple], settings: ExperimentSettings, failures: list | None) -> list[ResultRecord]:
    def run(job):
        pattern, n, m, instance, seed = job
        try:
            return solve_instance(pattern, n, m, instance, seed, settings)
        except CellAssignError as exc:
            log.warning("pattern %s N=%s instance %s failed: %s", pattern.id, n, instance, exc)
            if failures is not None:
                failures.append({"pattern": pattern.id, "n": n, "instance": instance, "error": str(exc)})
            return []

    workers = max(1, min(settings.workers, thread_cap(settings.workers)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(run, jobs))
    else:
        chunks = [run(job) for job in jobs]
    if failures is not None:
        failures.sort(key=lambda f: (f["pattern"], f["n"], f["instance"]))
    return sorted((r for chunk in chunks for r in chunk), key=_record_key)


def run_pattern_comparison(
    n: int,
    m: int,
    instances: int,
    master_seed: int,
    settings: ExperimentSettings = ExperimentSettings(),
    patterns: Sequence[int] = (1, 2, 3, 4),
    failures: list | None = None,
) -> list[ResultRecord]:
    if n % m:
        raise ValueError(f"N={n} must be divisible by M={m}")
    jobs = [
        (PATTERNS[p], n, m, k, derive_seed(master_seed, p, n, k))
        for p in patterns
        for k in range(instances)
    ]
    return _run_jobs(jobs, settings, failures)


def run_n_sweep(
    n_values: Sequence[int],
    m: int,
    instances: int,
    master_seed: int,
    settings: ExperimentSettings = ExperimentSettings(),
    failures: list | None = None,
) -> list[ResultRecord]:
    """Test Pattern 1 (uniform phones, isotropic stations) over a grid of phone counts."""
    for n in n_values:
        if n % m:
            raise ValueError(f"N={n} must be divisible by M={m}")
    jobs = [(PATTERNS[1], n, m, k, derive_seed(master_seed, 1, n, k)) for n in n_values for k in range(instances)]
    return _run_jobs(jobs, settings, failures)


# -----------------------------
# Summaries and output
# -----------------------------
def summarize(records: Sequence[ResultRecord]) -> list[dict]:
    """Per (pattern, N, formulation, solver) medians and quartiles over feasible records."""
    groups: dict[tuple, list[ResultRecord]] = {}
    for r in records:
        groups.setdefault((r.pattern, r.n, r.m, r.formulation, r.solver), []).append(r)
    out = []
    for (pattern, n, m, formulation, solver), rs in sorted(groups.items()):
        errs = np.array([r.relative_error for r in rs if r.feasible], dtype=float)
        row = {
            "pattern": pattern,
            "n": n,
            "m": m,
            "formulation": formulation,
            "solver": solver,
            "instances": len(rs),
            "feasible": int(errs.size),
            "feasibility_rate": errs.size / len(rs),
            "median": None,
            "q1": None,
            "q3": None,
        }
        if errs.size:
            q1, med, q3 = np.percentile(errs, [25, 50, 75])
            row.update(median=float(med), q1=float(q1), q3=float(q3))
        out.append(row)
    return out


def median_table(summary: Sequence[dict], solver: str = "sa") -> dict[tuple[int, int], dict[str, float]]:
    """{(pattern, n): {formulation: median}} for one solver."""
    table: dict[tuple[int, int], dict[str, float]] = {}
    for row in summary:
        if row["solver"] == solver and row["median"] is not None:
            table.setdefault((row["pattern"], row["n"]), {})[row["formulation"]] = row["median"]
    return table


def crossover_n(summary: Sequence[dict], pattern: int = 1, solver: str = "sa") -> Optional[int]:
    """Smallest N such that the top-2 median is at most the naive median for every N from there on."""
    table = median_table(summary, solver)
    ns = sorted(n for (p, n) in table if p == pattern)
    crossover = None
    for n in reversed(ns):
        meds = table[(pattern, n)]
        if "naive" in meds and "proposed" in meds and meds["proposed"] <= meds["naive"]:
            crossover = n
        else:
            break
    return crossover


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(records: Sequence[ResultRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])


def read_results_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_timings_csv(records: Sequence[ResultRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pattern", "n", "instance", "formulation", "solver", "wall_time"])
        for r in records:
            writer.writerow([r.pattern, r.n, r.instance, r.formulation, r.solver, f"{r.wall_time:.6f}"])


def write_summary_json(records: Sequence[ResultRecord], path: str | Path, extra: dict | None = None) -> dict:
    summary = summarize(records)
    doc = {"groups": summary, "crossover_n": crossover_n(summary)}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc
