import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bloch_threads.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, read_thread_csv, run

from conftest import cached_main


@pytest.fixture
def fig1_file(tmp_path):
    path = tmp_path / "fig1.json"
    path.write_text(json.dumps({"A_diag": [100, 57, 39], "b": [29, 67, 61]}))
    return str(path)


def run_cli(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_ok_and_invalid(capsys, tmp_path, fig1_file):
    code, out, _ = run_cli(capsys, "validate", "--system", fig1_file)
    assert code == EXIT_OK
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"A_diag": [1, -1, 0], "b": [0, 0, 0]}))
    code, _, _ = run_cli(capsys, "validate", "--system", str(bad))
    assert code == EXIT_INVALID


@pytest.mark.parametrize(
    "content, message",
    [
        ('{"A_diag": [1, 2, 3],\n "b": [0, 0 0]}', "line 2"),
        ('{"A_diag": [1, 2, 3]}', "b"),
    ],
    ids=["syntax", "missing-field"],
)
def test_malformed_system_file(capsys, tmp_path, content, message):
    path = tmp_path / "broken.json"
    path.write_text(content)
    code, _, err = run_cli(capsys, "threads", "--system", str(path))
    assert code == EXIT_INVALID
    assert message in err


def test_missing_system_and_bad_radius(capsys, fig1_file):
    assert run_cli(capsys, "threads")[0] == EXIT_INVALID
    assert run_cli(capsys, "critical-points", "--system", fig1_file, "--r", "1.5")[0] == EXIT_INVALID


def test_critical_points_output(capsys, fig1_file):
    code, out, _ = run_cli(capsys, "critical-points", "--system", fig1_file, "--r", "0.3")
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.splitlines()))
    assert {row["class"] for row in rows} >= {"max", "min"}
    best = max(rows, key=lambda row: float(row["f"]))
    assert float(best["f"]) == pytest.approx(53.0876315883, abs=1e-8)


def test_threads_output_is_byte_identical(capsys, fig1_file):
    first = run_cli(capsys, "threads", "--system", fig1_file)[1]
    second = run_cli(capsys, "threads", "--system", fig1_file)[1]
    assert first == second
    rows = list(csv.DictReader(first.splitlines()))
    assert len(rows) == 2002
    up, _ = cached_main(1)
    assert float(rows[500]["nx"]) == up.n_hat[500, 0]


def test_json_format(capsys, fig1_file):
    code, out, _ = run_cli(capsys, "critical-points", "--system", fig1_file, "--r", "0.5", "--format", "json")
    assert code == EXIT_OK
    records = json.loads(out)
    assert all(isinstance(rec["f"], float) for rec in records)


def test_dynamics_starts_along_the_drift(capsys, fig1_file):
    code, out, _ = run_cli(capsys, "dynamics", "--system", fig1_file, "--t-end", "0.001", "--dt", "1e-5", "--record-every", "10")
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.splitlines()))
    n = np.array([float(rows[1][c]) for c in ("nx", "ny", "nz")])
    b_hat = np.array([29, 67, 61]) / np.linalg.norm([29, 67, 61])
    assert n @ b_hat / np.linalg.norm(n) > 0.999
    code, _, _ = run_cli(capsys, "dynamics", "--system", fig1_file, "--state", "2,0,0")
    assert code == EXIT_INVALID


def test_plan_from_thread_csv(capsys, tmp_path, fig1_file):
    out_dir = tmp_path / "threads"
    assert run_cli(capsys, "threads", "--system", fig1_file, "--out", str(out_dir))[0] == EXIT_OK
    table = (out_dir / "threads.csv").read_text().splitlines()
    max_only = tmp_path / "max.csv"
    max_only.write_text("\n".join([table[0]] + [row for row in table[1:] if row.startswith("maximizing")]) + "\n")
    thread = read_thread_csv(str(max_only))
    assert len(thread) == 1001
    code, out, _ = run_cli(capsys, "plan", "--system", fig1_file, "--thread", str(max_only), "--c-profile", "constant:2")
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.splitlines()))
    assert float(rows[-1]["r"]) < 0.702
    assert run_cli(capsys, "plan", "--system", fig1_file, "--thread", str(out_dir / "threads.csv"))[0] == EXIT_INVALID
    assert run_cli(capsys, "plan", "--system", fig1_file, "--thread", str(max_only), "--c-profile", "ramp")[0] == EXIT_INVALID


def test_plan_without_a_segment_is_a_numerical_failure(capsys, tmp_path, fig1_file):
    up, _ = cached_main(1)
    path = tmp_path / "short.csv"
    lines = ["r,nx,ny,nz"] + [f"{r},{n[0]},{n[1]},{n[2]}" for r, n in ((0.70, up.interpolate(0.70)), (0.71, up.interpolate(0.71)))]
    path.write_text("\n".join(lines) + "\n")
    code, _, err = run_cli(capsys, "plan", "--system", fig1_file, "--thread", str(path))
    assert code == EXIT_NUMERICAL
    assert "FIsZeroOnThread" in err


def test_survey_small(capsys):
    code, out, _ = run_cli(capsys, "survey", "--n", "50", "--seed", "3", "--workers", "1")
    assert code == EXIT_OK
    stats = json.loads(out)
    assert sum(stats["counts"].values()) + stats["failures"] == 50
    assert stats["seed"] == 3


def test_reproduce_figure(capsys, tmp_path):
    out_dir = tmp_path / "fig1"
    code, _, _ = run_cli(capsys, "reproduce-figure", "1", "--out", str(out_dir), "--theta-count", "6")
    assert code == EXIT_OK
    report = json.loads((out_dir / "report.json").read_text())
    assert report["chimney"]["apogees"][0]["r"] == pytest.approx(0.701856, abs=2e-6)
    assert (out_dir / "threads.csv").exists() and (out_dir / "chimney.csv").exists()


def test_console_entry_point(tmp_path, fig1_file):
    proc = subprocess.run(
        [sys.executable, "-m", "bloch_threads", "validate", "--system", fig1_file], capture_output=True, text=True
    )
    assert proc.returncode == 0
