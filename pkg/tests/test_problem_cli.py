import json
import subprocess
import sys

import numpy as np
import pytest

from abreulab.cli import main
from abreulab.grid import GridDomain
from abreulab.problem import (MANUFACTURED, ProblemError, parse_problem,
                              parse_problem_dict)
from abreulab.report import (SolveReport, field_to_grid, read_field_csv,
                             write_field_csv)


def base_problem(**over):
    d = {
        "domain": {"disc": 1.0},
        "R": 1.5,
        "h": 0.125,
        "phi": "0.5*(x1^2 + x2^2)",
        "f": "0",
        "psi": "1",
        "schedules": {},
        "tolerances": {},
        "out": ".",
    }
    d.update(over)
    return d


# ----------------------------------------------------------------------
# Problem parsing
# ----------------------------------------------------------------------

def test_parse_minimal():
    spec = parse_problem_dict({"domain": 1.0, "R": 1.5, "h": 0.125,
                               "phi": "x1^2 + x2^2"})
    assert spec.domain_kind == "disc"
    assert spec.disc_radius == 1.0
    assert spec.f(0.3, 0.4) == 0.0
    assert spec.psi(0.3, 0.4) == 1.0
    assert spec.out == "."


def test_unknown_key_rejected():
    with pytest.raises(ProblemError, match="unknown problem keys"):
        parse_problem_dict(base_problem(extra=1))


def test_missing_key_rejected():
    d = base_problem()
    del d["phi"]
    with pytest.raises(ProblemError, match="missing problem keys"):
        parse_problem_dict(d)


def test_unknown_schedule_key_rejected():
    with pytest.raises(ProblemError, match="unknown schedule keys"):
        parse_problem_dict(base_problem(schedules={"bogus": 1}))


def test_nonconvex_phi_rejected():
    with pytest.raises(ProblemError, match="not convex"):
        parse_problem_dict(base_problem(phi="x1^2 - x2^2"))


def test_manufactured_forcings():
    assert set(MANUFACTURED) == {"exp", "zero"}
    spec = parse_problem_dict(base_problem(phi="exp(x1) + exp(x2)",
                                           f="manufactured:exp"))
    assert spec.f(0.0, 0.0) == pytest.approx(2.0)
    spec = parse_problem_dict(base_problem(f="manufactured:zero"))
    assert spec.f(0.3, -0.2) == 0.0
    with pytest.raises(ProblemError, match="unknown manufactured"):
        parse_problem_dict(base_problem(f="manufactured:nope"))


def test_polygon_domain():
    spec = parse_problem_dict(base_problem(
        domain={"polygon": [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]}))
    assert spec.domain_kind == "polygon"
    dom = spec.build_domain()
    assert dom.in_omega.any()


def test_parse_problem_file(tmp_path):
    p = tmp_path / "prob.json"
    p.write_text(json.dumps(base_problem()))
    spec = parse_problem(str(p))
    assert spec.R == 1.5
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ProblemError, match="parse error"):
        parse_problem(str(bad))


def test_grid_h_override():
    spec = parse_problem_dict(base_problem())
    dom = spec.build_domain(1.0 / 16)
    assert dom.h == 1.0 / 16


# ----------------------------------------------------------------------
# Field CSV round-trip
# ----------------------------------------------------------------------

def test_field_csv_exact_roundtrip(tmp_path):
    dom = GridDomain.disc(1.0, 1.5, 1.0 / 8)
    rng = np.random.default_rng(7)
    vals = np.where(dom.in_omega, rng.standard_normal(dom.shape) * np.pi, np.nan)
    path = tmp_path / "u.csv"
    write_field_csv(str(path), dom, vals, dom.in_omega)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,value"
    x1, x2, back = read_field_csv(str(path))
    grid = field_to_grid(dom, x1, x2, back)
    # repr-formatted doubles round-trip bit for bit
    assert np.array_equal(grid[dom.in_omega], vals[dom.in_omega])
    assert np.all(np.isnan(grid[~dom.in_omega]))


def test_report_json_deterministic(tmp_path):
    rep = SolveReport("solve-direct")
    rep.set("b", 2)
    rep.set("a", [1.5, np.float64(2.5)])
    rep.set("nan_val", float("nan"))
    s1 = rep.to_json()
    s2 = SolveReport("solve-direct", dict(rep.data)).to_json()
    assert s1 == s2
    payload = json.loads(s1)
    assert payload["command"] == "solve-direct"
    assert payload["nan_val"] == "nan"
    assert list(payload) == sorted(payload)


# ----------------------------------------------------------------------
# CLI commands
# ----------------------------------------------------------------------

def write_problem(tmp_path, name="prob.json", **over):
    p = tmp_path / name
    p.write_text(json.dumps(base_problem(**over)))
    return str(p)


def test_cli_rejects_bad_problem(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(base_problem(surprise=1)))
    rc = main(["check-barrier", "--problem", str(p), "--out", str(tmp_path)])
    assert rc == 2
    assert "unknown problem keys" in capsys.readouterr().err


def test_cli_check_barrier(tmp_path):
    prob = write_problem(tmp_path, schedules={"deltas": [0.5, 0.01]})
    out = tmp_path / "out"
    rc = main(["check-barrier", "--problem", prob, "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "barrier_delta_0.01.json").read_text())
    assert set(rep) == {"command", "delta", "theta", "C1", "C2", "C3",
                        "branch_gap_G", "branch_gap_G1", "branch_gap_G2",
                        "F_concave"}
    assert rep["delta"] == 0.01
    assert rep["theta"] == 0.25
    assert rep["F_concave"] is True
    assert rep["branch_gap_G"] < 1e-10


def test_cli_solve_direct_and_diagnose(tmp_path):
    prob = write_problem(tmp_path, schedules={"deltas": [0.5, 0.05]})
    out = tmp_path / "out"
    rc = main(["solve-direct", "--problem", prob, "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["membership"]["passed"] is True
    assert (out / "u.csv").exists()
    assert (out / "d.csv").exists()
    assert (out / "w.csv").exists()
    rc = main(["diagnose", "--problem", prob, "--out", str(out)])
    assert rc == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["convexity"]["passed"] is True
    assert diag["primal_det_bound"] > 0


def test_cli_diagnose_without_field(tmp_path, capsys):
    prob = write_problem(tmp_path)
    out = tmp_path / "empty"
    rc = main(["diagnose", "--problem", prob, "--out", str(out)])
    assert rc == 1
    assert "no stored field" in capsys.readouterr().err


def test_cli_solve_direct_seed_repeatable(tmp_path):
    prob = write_problem(tmp_path, schedules={"deltas": [0.5, 0.05]})
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = main(["solve-direct", "--problem", prob, "--out", str(out),
                   "--seed", "3"])
        assert rc == 0
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_cli_solve_bvp2(tmp_path):
    prob = write_problem(tmp_path, h=1.0 / 16,
                         schedules={"deltas": [0.01], "penalty_j": [2, 4]})
    out = tmp_path / "out"
    rc = main(["solve-bvp2", "--problem", prob, "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["w_min"] > 0
    assert rep["band_clamp"] <= rep["clamp_bound"]
    assert (out / "u.csv").exists() and (out / "w.csv").exists()


def test_cli_sweep(tmp_path):
    prob = write_problem(tmp_path, h=1.0 / 16,
                         schedules={"deltas": [0.05, 0.01],
                                    "penalty_j": [2, 3]})
    out = tmp_path / "out"
    rc = main(["sweep", "--problem", prob, "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert all(e["ok"] for e in rep["entries"])


def test_cli_convergence_study(tmp_path):
    prob = write_problem(tmp_path, schedules={"deltas": [0.5, 0.05]})
    out = tmp_path / "out"
    rc = main(["convergence-study", "--problem", prob, "--out", str(out),
               "--grid-h", str(1.0 / 8)])
    assert rc == 0
    rep = json.loads((out / "convergence.json").read_text())
    hs = [row["h"] for row in rep["table"]]
    assert hs == [1.0 / 8, 1.0 / 16, 1.0 / 32]
    errs = [row["u_minus_phi_linf"] for row in rep["table"]]
    assert all(np.isfinite(e) for e in errs)


def test_console_entry_point(tmp_path):
    prob = write_problem(tmp_path, schedules={"deltas": [0.5]})
    out = tmp_path / "out"
    r = subprocess.run([sys.executable, "-m", "abreulab.cli", "check-barrier",
                        "--problem", prob, "--out", str(out)],
                       capture_output=True)
    assert r.returncode == 0
    assert (out / "barrier_delta_0.5.json").exists()
