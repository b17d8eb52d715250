import csv
import json
import statistics

import numpy as np
import pytest

from cellassign.cli import main
from cellassign.qubo import build_proposed, default_penalty, energies, top2
from cellassign.radio import RadioConfig, read_ppm, sinr_matrix
from cellassign.scenario import load_scenario, nearest_station

from oracles import all_bitstrings, close

FAST = ["--reads", "20", "--sweeps", "100"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_uniform(tmp_path, capsys):
    assert main(["gen", "--n", "30", "--m", "3", "--dist", "uniform", "--seed", "1", "--out", str(tmp_path)]) == 0
    sc = load_scenario(tmp_path / "scenario.json")
    assert sc.num_phones == 30 and sc.capacities == (10, 10, 10)
    assert "validation: ok" in capsys.readouterr().out


def test_gen_biased(tmp_path):
    args = ["gen", "--n", "30", "--m", "3", "--dist", "biased", "--hot-fraction", "0.6", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path)]) == 0
    sc = load_scenario(tmp_path / "scenario.json")
    assert int(np.sum(nearest_station(sc.phone_xy(), sc.station_xy()) == 0)) == 18


def test_gen_byte_identical(tmp_path):
    args = ["gen", "--n", "12", "--m", "3", "--beam", "gaussian", "--seed", "9"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "scenario.json").read_bytes() == (tmp_path / "b" / "scenario.json").read_bytes()


def test_gen_config_error(tmp_path):
    assert main(["gen", "--n", "31", "--m", "3", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert main(["gen", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 3, "scenario": {"n": 12, "m": 4}}))
    assert main(["gen", "--config", str(cfg), "--n", "8", "--out", str(tmp_path)]) == 0
    sc = load_scenario(tmp_path / "scenario.json")
    assert sc.num_phones == 8 and sc.num_stations == 4 and sc.seed != 0


def test_solve_naive_exact_zero_error(tmp_path):
    rc = main(["solve", "--n", "12", "--m", "3", "--seed", "2", "--formulation", "naive", "--solver", "exact",
               "--out", str(tmp_path)])
    assert rc == 0
    (row,) = _rows(tmp_path / "results.csv")
    assert float(row["relative_error"]) == 0.0


def test_solve_both_rows_share_optimum(tmp_path):
    rc = main(["solve", "--n", "9", "--m", "3", "--seed", "5", "--formulation", "both", "--solver", "sa",
               "--allow-infeasible", "--out", str(tmp_path)] + FAST)
    assert rc == 0
    rows = _rows(tmp_path / "results.csv")
    assert [r["formulation"] for r in rows] == ["naive", "proposed"]
    assert rows[0]["E_star"] == rows[1]["E_star"]
    assert (tmp_path / "samples_naive.csv").exists() and (tmp_path / "samples_proposed.csv").exists()
    doc = json.loads((tmp_path / "assignment.json").read_text())
    assert set(doc) == {"naive", "proposed"}


def test_solve_proposed_brute_matches_enumeration(tmp_path):
    rc = main(["solve", "--n", "10", "--m", "2", "--seed", "6", "--formulation", "proposed", "--solver", "brute",
               "--allow-infeasible", "--out", str(tmp_path)])
    assert rc == 0
    (row,) = _rows(tmp_path / "results.csv")
    sc = load_scenario(tmp_path / "scenario.json")
    S = sinr_matrix(sc, RadioConfig()).values
    q = build_proposed(top2(S), sc.capacities, default_penalty(S))
    assert close(float(row["qubo_energy"]), float(energies(q, all_bitstrings(10)).min()))


def test_solve_saved_scenario(tmp_path):
    main(["gen", "--n", "6", "--m", "3", "--seed", "1", "--out", str(tmp_path)])
    rc = main(["solve", "--scenario", str(tmp_path / "scenario.json"), "--solver", "exact", "--formulation", "naive",
               "--seed", "1", "--out", str(tmp_path / "solve")])
    assert rc == 0
    (row,) = _rows(tmp_path / "solve" / "results.csv")
    assert row["pattern"] == "0" and row["n"] == "6"


def test_solve_infeasible_exit_code(tmp_path):
    # one read with one sweep almost never lands on a capacity-exact state
    args = ["solve", "--n", "30", "--m", "3", "--seed", "1", "--formulation", "naive", "--solver", "sa",
            "--reads", "1", "--sweeps", "1", "--out", str(tmp_path)]
    assert main(args) == 3
    assert main(args + ["--allow-infeasible"]) == 0


def test_solve_brute_too_large(tmp_path):
    rc = main(["solve", "--n", "30", "--m", "3", "--seed", "1", "--formulation", "naive", "--solver", "brute",
               "--out", str(tmp_path)])
    assert rc == 4


def test_sweep_patterns_deterministic_and_recomputable(tmp_path):
    args = ["sweep", "--kind", "patterns", "--n", "6", "--m", "3", "--instances", "2", "--seed", "7"] + FAST
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "results.csv")
    assert len(rows) == 4 * 2 * 2
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    for g in summary["groups"]:
        errs = [float(r["relative_error"]) for r in rows
                if int(r["pattern"]) == g["pattern"] and r["formulation"] == g["formulation"] and r["feasible"] == "1"]
        if errs:
            assert g["median"] == pytest.approx(statistics.median(errs), rel=1e-12)
    assert _rows(tmp_path / "a" / "variable_counts.csv") == [{"n": "6", "naive_vars": "18", "proposed_vars": "6"}]
    assert summary["failures"] == []


def test_sweep_n_values(tmp_path):
    rc = main(["sweep", "--kind", "n_sweep", "--n-values", "6,9", "--m", "3", "--instances", "2", "--seed", "1",
               "--out", str(tmp_path)] + FAST)
    assert rc == 0
    rows = _rows(tmp_path / "results.csv")
    assert sorted({int(r["n"]) for r in rows}) == [6, 9]
    assert (tmp_path / "timings.csv").exists()
    assert main(["sweep", "--kind", "n_sweep", "--n-values", "7", "--m", "3", "--seed", "1",
                 "--out", str(tmp_path)]) == 2


def test_heatmap_isotropic_voronoi(tmp_path):
    rc = main(["heatmap", "--preset", "caption", "--beam", "isotropic", "--step", "10", "--seed", "0",
               "--out", str(tmp_path)])
    assert rc == 0
    rows = _rows(tmp_path / "heatmap.csv")
    for r in rows:
        x, y = float(r["x"]), float(r["y"])
        d0, d1 = np.hypot(x, y), np.hypot(x - 350, y - 350)
        if abs(d0 - d1) > 1e-6:
            assert int(r["best_station"]) == int(d1 < d0)
    assert read_ppm(tmp_path / "heatmap_station.ppm").shape == (71, 71, 3)


def test_heatmap_gaussian_lobes(tmp_path):
    rc = main(["heatmap", "--preset", "caption", "--beam", "gaussian", "--step", "10", "--seed", "0",
               "--out", str(tmp_path)])
    assert rc == 0
    rows = _rows(tmp_path / "heatmap.csv")
    mismatch = 0
    for r in rows:
        x, y = float(r["x"]), float(r["y"])
        mismatch += int(r["best_station"]) != int(np.hypot(x - 350, y - 350) < np.hypot(x, y))
    assert mismatch > 0


def test_heatmap_single_pixel(tmp_path):
    cfg = tmp_path / "h.json"
    cfg.write_text(json.dumps({"heatmap": {"bounds": [100.0, 100.0, 100.0, 100.0]}}))
    assert main(["heatmap", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path)]) == 0
    assert read_ppm(tmp_path / "heatmap_sinr.ppm").shape == (1, 1, 3)


def test_heatmap_grid_limit(tmp_path):
    cfg = tmp_path / "h.json"
    cfg.write_text(json.dumps({"heatmap": {"max_cells": 100}}))
    assert main(["heatmap", "--config", str(cfg), "--step", "1", "--seed", "0", "--out", str(tmp_path)]) == 4
