"""Command-line front end.

Exit codes: 0 success, 2 invalid input or a system that fails validation,
3 numerical failure.  Tables are CSV with 17 significant digits (or JSON
with ``--format json``); reports are JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .chimney import ChimneyMesh, ellipsoid_scale, trace_chimney
from .critical import critical_points_at, special_case_critical_sets, tangency_points
from .dynamics import evolve_density, hamiltonian_matrix, radial_velocity, transverse_velocity
from .errors import BlochThreadsError, InvalidStateError, SystemInputError
from .planner import plan_trajectory
from .survey import SurveyConfig, run_survey
from .system import (
    BlochState,
    LindbladSystem,
    bloch_to_density,
    figure_system,
    system_from_dict,
    system_to_dict,
    system_to_operators,
    validate_system,
)
from .threads import DEFAULT_DR, Thread, alternate_threads, main_threads

log = logging.getLogger("bloch_threads")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class CliInputError(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def render_table(columns: list[str], rows: list[list], fmt: str = "csv") -> str:
    if fmt == "json":
        records = [
            {c: (float(v) if isinstance(v, (float, np.floating)) else v) for c, v in zip(columns, row)}
            for row in rows
        ]
        return json.dumps(records, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out_dir: Path | None, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)
    log.info("wrote %s", out_dir / name)


def _emit_json(data, out_dir: Path | None, name: str) -> None:
    _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", out_dir, name)


def load_system(path: str) -> LindbladSystem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliInputError(f"cannot read system file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliInputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return system_from_dict(data)
    except SystemInputError as exc:
        raise CliInputError(f"{path}: {exc}") from None


def _system_arg(args) -> LindbladSystem:
    if args.system is None:
        raise CliInputError("--system is required")
    system = load_system(args.system)
    report = validate_system(system)
    if not report.passed:
        failed = ", ".join(f"{c.name} (margin {c.margin:.3e})" for c in report.failures())
        raise CliInputError(f"system fails validation: {failed}")
    return system


def _vec(text: str, name: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise CliInputError(f"{name} must be three comma-separated numbers") from None
    if v.shape != (3,):
        raise CliInputError(f"{name} must be three comma-separated numbers")
    return v


THREAD_COLUMNS = ["kind", "label", "r", "nx", "ny", "nz", "f", "residual"]


def thread_rows(threads: list[Thread]) -> list[list]:
    rows = []
    for th in threads:
        for r, n, f, res in zip(th.r, th.n_hat, th.f, th.residual):
            rows.append([th.kind, th.label or th.kind, r, n[0], n[1], n[2], f, res])
    return rows


CHIMNEY_COLUMNS = ["theta", "r", "nx", "ny", "nz", "f", "termination"]


def chimney_rows(mesh: ChimneyMesh) -> list[list]:
    rows = []
    for theta, g in zip(mesh.theta, mesh.generators):
        for r, n, f in zip(g.r, g.n_hat, g.f):
            rows.append([theta, r, n[0], n[1], n[2], f, g.termination])
    return rows


def chimney_report(system: LindbladSystem, mesh: ChimneyMesh) -> dict:
    scale = ellipsoid_scale(system)
    return {
        "theta_count": mesh.theta_count,
        "terminations": {t: sum(g.termination == t for g in mesh.generators) for t in sorted({g.termination for g in mesh.generators})},
        "max_abs_f": max(float(np.max(np.abs(g.f))) for g in mesh.generators),
        "max_ellipsoid_relative_residual": max(float(np.max(g.residual)) for g in mesh.generators) / scale,
        "apogees": [
            {
                "r": a.r,
                "n_hat": a.n_hat.tolist(),
                "generator_count": len(a.generators),
                "generators": a.generators,
                "matched_thread": None if a.matched_thread is None else a.matched_thread.label or a.matched_thread.kind,
                "match_distance": a.match_distance,
            }
            for a in mesh.apogees
        ],
    }


def _label_main(threads):
    for th in threads:
        if not th.label:
            th.label = th.kind
    return threads


def cmd_validate(args) -> int:
    system = load_system(args.system)
    report = validate_system(system)
    out = {"system": system_to_dict(system), **report.to_dict()}
    _emit_json(out, args.out, "validation.json")
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_dynamics(args) -> int:
    system = _system_arg(args)
    n0 = _vec(args.state, "--state")
    if np.linalg.norm(n0) > 1 + 1e-12:
        raise CliInputError("--state must lie in the Bloch ball")
    h = _vec(args.h, "--h")
    H = hamiltonian_matrix(h)
    ops = system_to_operators(system)
    times, states = evolve_density(
        ops, lambda t, rho: H, bloch_to_density(n0), args.dt, t_end=args.t_end, record_every=args.record_every
    )
    rows = []
    for t, n in zip(times, states):
        r = float(np.linalg.norm(n))
        if r > 0:
            state = BlochState(r, n / r)
            f = radial_velocity(system, state)
            g = np.linalg.norm(transverse_velocity(system, h, state))
        else:
            f, g = radial_velocity(system, BlochState(0.0)), float("nan")
        rows.append([t, n[0], n[1], n[2], r, f, g])
    _emit(render_table(["t", "nx", "ny", "nz", "r", "f", "transverse_speed"], rows, args.format), args.out, "dynamics." + args.format)
    return EXIT_OK


def cmd_critical_points(args) -> int:
    system = _system_arg(args)
    if not 0 <= args.r <= 1:
        raise CliInputError("--r must lie in [0, 1]")
    pts = critical_points_at(system, args.r)
    rows = [
        [p.r, p.n_hat[0], p.n_hat[1], p.n_hat[2], float(system.radial(p.n_hat, p.r)), p.nu, p.classification, p.residual]
        for p in pts
    ]
    _emit(render_table(["r", "nx", "ny", "nz", "f", "nu", "class", "residual"], rows, args.format), args.out, "critical_points." + args.format)
    return EXIT_OK


def _all_threads(system, dr, alternates):
    threads = _label_main(list(main_threads(system, dr)))
    if alternates:
        threads += alternate_threads(system, dr)
    return threads


def cmd_threads(args) -> int:
    system = _system_arg(args)
    threads = _all_threads(system, args.dr, args.alternates)
    _emit(render_table(THREAD_COLUMNS, thread_rows(threads), args.format), args.out, "threads." + args.format)
    return EXIT_OK


def cmd_chimney(args) -> int:
    system = _system_arg(args)
    if system.is_unital:
        raise CliInputError("b = 0: the chimney is degenerate")
    mesh = trace_chimney(system, args.theta_count, args.dr, args.f_threshold)
    _emit(render_table(CHIMNEY_COLUMNS, chimney_rows(mesh), args.format), args.out, "chimney." + args.format)
    if args.out is not None:
        _emit_json(chimney_report(system, mesh), args.out, "chimney_report.json")
    return EXIT_OK


def read_thread_csv(path: str) -> Thread:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliInputError(f"cannot read thread file {path}: {exc}") from None
    if not rows:
        raise CliInputError(f"{path}: no samples")
    for col in ("r", "nx", "ny", "nz"):
        if col not in rows[0]:
            raise CliInputError(f"{path}: missing column '{col}'")
    kinds = {row.get("label") or row.get("kind") for row in rows}
    if len(kinds) > 1:
        raise CliInputError(f"{path}: contains several threads {sorted(map(str, kinds))}; pass one")
    try:
        r = np.array([float(row["r"]) for row in rows])
        n = np.array([[float(row[c]) for c in ("nx", "ny", "nz")] for row in rows])
    except ValueError as exc:
        raise CliInputError(f"{path}: {exc}") from None
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    kind = rows[0].get("kind") or "maximizing"
    zeros = np.zeros(len(r))
    return Thread(kind, r, n, zeros, zeros, "file", label=rows[0].get("label", ""))


def cmd_plan(args) -> int:
    system = _system_arg(args)
    if args.thread is None:
        raise CliInputError("--thread is required")
    thread = read_thread_csv(args.thread)
    c = 0.0
    if args.c_profile != "zero":
        try:
            c = float(args.c_profile.split(":", 1)[1])
        except (IndexError, ValueError):
            raise CliInputError("--c-profile must be 'zero' or 'constant:<value>'") from None
    schedule = plan_trajectory(system, thread, c)
    rows = [[r, t, h[0], h[1], h[2]] for r, t, h in zip(schedule.r, schedule.t, schedule.h)]
    _emit(render_table(["r", "t", "hx", "hy", "hz"], rows, args.format), args.out, "plan." + args.format)
    if schedule.crossing is not None:
        log.warning("f vanishes on the thread at r=%.6f; plan stops there", schedule.crossing)
    return EXIT_OK


def cmd_survey(args) -> int:
    cfg = SurveyConfig(sample_count=args.n, seed=args.seed, workers=args.workers)
    stats = run_survey(cfg)
    _emit_json(stats.to_dict(), args.out, "survey.json")
    return EXIT_OK


def cmd_reproduce_figure(args) -> int:
    system = figure_system(args.figure)
    out = args.out if args.out is not None else Path(f"figure{args.figure}")
    threads = _all_threads(system, args.dr, True)
    mesh = trace_chimney(system, args.theta_count, args.dr, args.f_threshold, threads=threads)
    _emit(render_table(THREAD_COLUMNS, thread_rows(threads), "csv"), out, "threads.csv")
    _emit(render_table(CHIMNEY_COLUMNS, chimney_rows(mesh), "csv"), out, "chimney.csv")
    report = {
        "figure": args.figure,
        "system": system_to_dict(system),
        "dr": args.dr,
        "threads": [
            {
                "kind": th.kind,
                "label": th.label,
                "samples": len(th),
                "r_range": [float(th.r.min()), float(th.r.max())],
                "max_residual": float(th.residual.max()),
                "termination": th.termination,
            }
            for th in threads
        ],
        "tangency_points": [{"mu": tp.mu, "r": tp.r, "inside_ball": tp.inside_ball} for tp in tangency_points(system)],
        "critical_sets": [{"kind": s.kind, "eigenvalue": s.eigenvalue, "offset": s.offset.tolist()} for s in special_case_critical_sets(system)],
        "chimney": chimney_report(system, mesh),
    }
    _emit_json(report, out, "report.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help="system JSON file")
    common.add_argument("--out", type=Path, default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--dr", type=float, default=DEFAULT_DR)
    common.add_argument("--theta-count", type=int, default=36)
    common.add_argument("--f-threshold", type=float, default=1e-3)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bloch-threads", description="Purity-optimal threads of a driven qubit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a system file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dynamics", parents=[common], help="evolve a state under a constant Hamiltonian")
    p.add_argument("--state", default="0,0,0", help="initial Bloch vector x,y,z")
    p.add_argument("--h", default="0,0,0", help="Hamiltonian vector, H = h.sigma/2")
    p.add_argument("--t-end", type=float, default=0.05)
    p.add_argument("--dt", type=float, default=1e-5)
    p.add_argument("--record-every", type=int, default=100)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("critical-points", parents=[common], help="critical points of f at one radius")
    p.add_argument("--r", type=float, required=True)
    p.set_defaults(func=cmd_critical_points)

    p = sub.add_parser("threads", parents=[common], help="main (and alternate) threads")
    p.add_argument("--alternates", action="store_true")
    p.set_defaults(func=cmd_threads)

    p = sub.add_parser("chimney", parents=[common], help="chimney generators and apogees")
    p.set_defaults(func=cmd_chimney)

    p = sub.add_parser("plan", parents=[common], help="Hamiltonian schedule along a thread CSV")
    p.add_argument("--thread", help="CSV with columns r,nx,ny,nz (one thread)")
    p.add_argument("--c-profile", default="zero", help="'zero' or 'constant:<value>'")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("survey", parents=[common], help="alternate-thread census")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("reproduce-figure", parents=[common], help="threads and chimney for a preset system")
    p.add_argument("figure", type=int, choices=(1, 2, 3, 4))
    p.set_defaults(func=cmd_reproduce_figure)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliInputError, SystemInputError, InvalidStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BlochThreadsError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream reader (e.g. head) closed early; silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
