"""CLI front end: config parsing, artifacts, exit codes, determinism."""

import json
import os

import pytest

from varopt import GraphSpec, MissingColumns
from varopt.cli import ExperimentConfig, build_graph_from_config, emit_plot_data, main, run


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


SOLVER = {"restarts": 5, "tol_grad": 1e-8, "max_iters": 20000}


def test_threshold_experiment_artifacts(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "experiment": "threshold",
        "graph": {"construction": "lattice", "d": 1, "L": 10},
        "params": {"p": 4.0, "a_range": [0.5, 6.0], "levels": [10]},
        "solver": SOLVER,
        "output_dir": str(tmp_path / "out"),
        "seed": 3,
    })
    assert run(cfg) == 0
    summary = json.loads((tmp_path / "out" / "results.json").read_text())
    assert summary["status"] in ("bracketed", "all_negative", "all_nonnegative")
    lines = (tmp_path / "out" / "results.csv").read_text().splitlines()
    assert lines[0] == "probe,a,energy,converged,negative"
    assert len(lines) >= 3


def test_solve_experiment_with_field_dump(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "experiment": "solve-nls",
        "graph": {"construction": "lattice", "d": 1, "L": 6},
        "problem": {"a": 2.0, "p": 4.0},
        "solver": dict(SOLVER, record_trace=True),
        "output_dir": str(tmp_path),
        "emit_field": True,
    })
    assert run(cfg) == 0
    values = json.loads((tmp_path / "minimizer.json").read_text())
    assert isinstance(values, list) and len(values) == 11
    summary = json.loads((tmp_path / "results.json").read_text())
    spec = GraphSpec.from_json_dict(summary["graph"]["spec"])
    assert spec == GraphSpec(d=1, L=6)
    trace = (tmp_path / "trace.csv").read_text().splitlines()
    assert trace[0] == "iter,energy,residual,step"
    assert len(trace) >= 3
    energies = [float(line.split(",")[1]) for line in trace[1:]]
    assert all(b <= a for a, b in zip(energies, energies[1:]))


def test_exit_code_3_when_not_converged(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "experiment": "solve-nls",
        "graph": {"construction": "lattice", "d": 1, "L": 6},
        "problem": {"a": 2.0, "p": 4.0},
        "solver": {"restarts": 1, "seeds": ["random"], "tol_grad": 1e-14, "max_iters": 2},
        "output_dir": str(tmp_path),
    })
    assert run(cfg) == 3


def test_compare_experiment_and_plot_data(tmp_path):
    out = tmp_path / "cmp"
    cfg = ExperimentConfig.from_dict({
        "experiment": "compare",
        "graph": {"construction": "star_addition", "d": 1, "R": 2, "L": 8},
        "problem": {"kind": "nls", "p": 4.0},
        "params": {"a_grid": [1.0, 2.0], "tol": 1e-4},
        "solver": SOLVER,
        "output_dir": str(out),
    })
    assert run(cfg) == 0
    csv_path = str(out / "results.csv")
    text = emit_plot_data(csv_path, "energy-vs-a")
    lines = text.splitlines()
    assert lines[0] == "a,E_perturbed,E_base"
    assert len(lines) == 3
    with pytest.raises(MissingColumns):
        emit_plot_data(csv_path, "escape-vs-L")


def test_star_probe_plot_kinds(tmp_path):
    out = tmp_path / "star"
    cfg = ExperimentConfig.from_dict({
        "experiment": "star-probe",
        "params": {"d": 1, "R": 4, "p": 4.0, "L_list": [7, 9], "a": 3.0},
        "solver": SOLVER,
        "output_dir": str(out),
    })
    assert run(cfg) == 0
    csv_path = str(out / "results.csv")
    escape = emit_plot_data(csv_path, "escape-vs-L").splitlines()
    assert escape[0] == "L,center_of_mass_norm"
    energy = emit_plot_data(csv_path, "energy-vs-L").splitlines()
    assert energy[0] == "L,E_perturbed,E_base"


def test_verify_lemmas_rows(tmp_path):
    out = tmp_path / "lemmas"
    cfg = ExperimentConfig.from_dict({
        "experiment": "verify-lemmas",
        "graph": {"construction": "lattice", "d": 1, "L": 12},
        "params": {"n_fields": 10},
        "output_dir": str(out),
    })
    assert run(cfg) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "check,lhs,rhs,margin,passed"
    assert len(lines) == 5
    assert all(line.endswith(",true") for line in lines[1:])


def test_malformed_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["threshold", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    doc = json.loads(err)
    assert doc["error"] == "InvalidSpec"
    assert not (tmp_path / "o").exists()


def test_unknown_config_keys_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, "cfg.json", {"graph": {}, "bogus": 1})
    assert main(["threshold", "--config", path]) == 2


def test_missing_config_exit_2(capsys):
    assert main(["threshold"]) == 2


def test_main_solve_and_determinism(tmp_path):
    path = write_config(tmp_path, "solve.json", {
        "graph": {"construction": "lattice", "d": 1, "L": 8},
        "problem": {"a": 2.0, "p": 4.0},
        "solver": {"restarts": 8, "tol_grad": 1e-8, "max_iters": 20000},
    })
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["solve-nls", "--config", path, "--out", a, "--seed", "17"]) == 0
    assert main(["solve-nls", "--config", path, "--out", b, "--seed", "17"]) == 0
    bytes_a = (tmp_path / "a" / "results.csv").read_bytes()
    bytes_b = (tmp_path / "b" / "results.csv").read_bytes()
    assert bytes_a == bytes_b


def test_plot_data_cli_to_file(tmp_path):
    out = tmp_path / "star"
    cfg = ExperimentConfig.from_dict({
        "experiment": "star-probe",
        "params": {"d": 1, "R": 3, "p": 4.0, "L_list": [6, 8], "a": 3.0},
        "solver": SOLVER,
        "output_dir": str(out),
    })
    assert run(cfg) == 0
    dest = str(tmp_path / "plot.csv")
    assert main(["plot-data", "--results", str(out / "results.csv"),
                 "--kind", "escape-vs-L", "--out", dest]) == 0
    assert os.path.exists(dest)


def test_build_graph_from_config_variants():
    g = build_graph_from_config({"construction": "path", "n": 3})
    assert g.n == 3
    g2 = build_graph_from_config({"construction": "sphere_deletion", "d": 2, "R": 2, "L": 5})
    assert g2.spec.deletions
    g3 = build_graph_from_config({"d": 1, "L": 4, "deletions": [], "additions": [[[-1], [1]]]})
    assert g3.spec.additions == frozenset({((-1,), (1,))})
    g4 = build_graph_from_config({"construction": "lattice", "d": 2, "L": 3,
                                  "boundary": "dirichlet"})
    assert g4.boundary == "dirichlet"


def test_sobolev_gap_experiment(tmp_path):
    out = tmp_path / "gap"
    cfg = ExperimentConfig.from_dict({
        "experiment": "sobolev-gap",
        "params": {"d": 3, "p": 2.0, "R_list": [2], "L": 6},
        "solver": {"restarts": 3, "tol_grad": 1e-7, "max_iters": 30000},
        "output_dir": str(out),
    })
    assert run(cfg) == 0
    summary = json.loads((out / "results.json").read_text())
    assert summary["witness_R"] == 2
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "R,bound_formula,bound_evaluated,j_unperturbed,witness"
