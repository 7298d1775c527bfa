import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from penbar import available_problems, registry_get, solve
from penbar.cli import CSV_COLUMNS, EXIT_OK, EXIT_SOLVE_FAILURE, EXIT_USAGE, emit_report, main


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_json_round_trip(capsys):
    code, out, _ = run_cli(capsys, "run", "--problem", "circle_equality", "--format", "json")
    assert code == EXIT_OK
    data = json.loads(out)
    (run,) = data["runs"]
    report = solve(registry_get("circle_equality"))
    assert run["status"] == "converged"
    assert np.array_equal(np.array(run["x_final"]), report.x_final)
    assert run["phi_final"] == report.phi_final
    assert run["outer_iterations"] == len(run["records"]) == report.outer_iterations


def test_csv_single_header(capsys):
    code, out, _ = run_cli(capsys, "run", "--problem", "box_lp,convex_qp_3", "--problem", "overdetermined",
                           "--format", "csv")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert sum(line.startswith("problem,") for line in lines) == 1
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["problem"] for r in rows] == ["box_lp", "convex_qp_3", "overdetermined"]
    assert float(rows[0]["phi_final"]) == solve(registry_get("box_lp")).phi_final


def test_human_table(capsys):
    code, out, _ = run_cli(capsys, "run", "--problem", "box_lp")
    assert code == EXIT_OK
    assert out.splitlines()[0].split() == list(CSV_COLUMNS)
    assert "converged" in out


def test_all_problems(capsys):
    code, out, _ = run_cli(capsys, "run", "--problem", "all", "--format", "csv", "--no-timing")
    assert code == EXIT_OK
    assert len(out.splitlines()) == 1 + len(available_problems())


def test_no_timing_is_reproducible(capsys):
    args = ("run", "--problem", "all", "--format", "json", "--no-timing")
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second


def test_workers_keep_order(capsys):
    args = ("run", "--problem", "all", "--format", "csv", "--no-timing")
    _, serial, _ = run_cli(capsys, *args)
    _, parallel, _ = run_cli(capsys, *args, "--workers", "4")
    assert serial == parallel


@pytest.mark.parametrize("args", [
    ("run", "--problem", "nosuch"),
    ("run", "--problem", "box_lp", "--rho", "-1"),
    ("run", "--problem", "box_lp", "--workers", "0"),
    ("run", "--problem", "box_lp", "--format", "xml"),
    ("run",),
    ("bench", "--sizes", "0"),
])
def test_usage_errors(capsys, args):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(list(args)))
    assert exc.value.code == EXIT_USAGE


def test_unknown_problem_lists_names(capsys):
    code, _, err = run_cli(capsys, "run", "--problem", "nosuch")
    assert code == EXIT_USAGE
    assert "circle_equality" in err


def test_solve_failure_exit_code(capsys):
    code, out, _ = run_cli(capsys, "run", "--problem", "hanging_chain", "--max-iter", "1", "--format", "csv")
    assert code == EXIT_SOLVE_FAILURE
    assert "max_iter" in out


def test_out_file(tmp_path, capsys):
    target = tmp_path / "res.csv"
    code, out, _ = run_cli(capsys, "run", "--problem", "box_lp", "--format", "csv", "--out", str(target))
    assert code == EXIT_OK and out == ""
    assert target.read_text().startswith("problem,")


def test_unwritable_out(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--problem", "box_lp", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == EXIT_SOLVE_FAILURE
    assert "cannot write" in err


def test_verbose_trace(capsys):
    code, out, _ = run_cli(capsys, "run", "--problem", "circle_equality", "-v")
    assert code == EXIT_OK
    assert "# circle_equality: converged" in out
    _, out, err = run_cli(capsys, "run", "--problem", "circle_equality", "-v", "--format", "csv")
    assert "# circle_equality" in err and "#" not in out


def test_flags_reach_solver(capsys):
    _, out, _ = run_cli(capsys, "run", "--problem", "linear_rate_example", "--no-polish", "--no-watchdog",
                        "--format", "json", "--no-timing")
    run = json.loads(out)["runs"][0]
    assert not any(r["polish_accepted"] for r in run["records"])
    assert all(r["mode"] == "standard" for r in run["records"])


def test_emit_report_rejects_format():
    with pytest.raises(ValueError):
        emit_report(solve(registry_get("box_lp")), "yaml", io.StringIO())


def test_bench_command(capsys):
    code, out, _ = run_cli(capsys, "bench", "--sizes", "3", "--repeats", "1")
    assert code == EXIT_OK
    assert "python" in out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "penbar", "run", "--problem", "box_lp", "--format", "csv"],
                         capture_output=True, text=True)
    assert out.returncode == EXIT_OK
    assert out.stdout.startswith("problem,")
