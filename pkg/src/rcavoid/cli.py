"""Command-line interface: ``rcavoid solve | verify | plot-data``.

Exit codes: 0 success, 1 verification failed, 2 solver did not converge
(artifacts still written), 3 collision guard hit, 4 bad input or a
scenario/trajectory mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli_w

from .errors import CollisionGuardError, ContractError, NonConvergenceError, ScenarioError, SolverError
from .scenario import load_scenario, read_table, read_trajectory, write_agent_files, write_trajectory
from .solver import solve, verify

EXIT_OK, EXIT_VERIFY, EXIT_NONCONV, EXIT_GUARD, EXIT_INPUT = 0, 1, 2, 3, 4

log = logging.getLogger("rcavoid")


def _toml_safe(obj):
    if isinstance(obj, dict):
        return {k: _toml_safe(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_toml_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_report(report, path, extra=None):
    d = report.to_dict() if report is not None else {}
    if extra:
        d.update(extra)
    Path(path).write_text(tomli_w.dumps(_toml_safe(d)))


def _write_artifacts(traj, report, out, extra=None):
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(traj, out / "trajectory.csv")
    write_report(report, out / "report.toml", extra)
    write_agent_files(traj, out)


def run_solve(scenario_path, out_dir, k=None, sigma_steps=None) -> int:
    try:
        sc = load_scenario(scenario_path).with_overrides(k=k, sigma_steps=sigma_steps)
    except (ScenarioError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(out_dir)
    try:
        traj, report = solve(sc)
    except CollisionGuardError as exc:
        where = f" (pair {exc.pair}, t={exc.time:.4g})" if exc.pair is not None else ""
        print(f"collision guard: {exc}{where}", file=sys.stderr)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.toml").write_text(tomli_w.dumps(_toml_safe(
            {"status": "collision_guard", "message": str(exc), "time": exc.time,
             "pair": list(exc.pair) if exc.pair else None, "squared_distance": exc.value})))
        return EXIT_GUARD
    except NonConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        if exc.trajectory is not None:
            _write_artifacts(exc.trajectory, exc.report, out, {"status": "not_converged", "message": str(exc)})
        return EXIT_NONCONV
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _write_artifacts(traj, report, out, {"status": "converged", "scenario": sc.name})
    print(f"{sc.name}: converged in {report.solver['seconds']:.2f} s, "
          f"min distance {report.min_distance:.6g}, J = {report.J:.10g} -> {out}")
    return EXIT_OK


def run_verify(scenario_path, trajectory_path) -> int:
    try:
        sc = load_scenario(scenario_path)
        traj = read_trajectory(trajectory_path, sc.manifold, breaks=list(sc.breaks))
        report = verify(sc, traj)
    except (ScenarioError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(report.table())
    return EXIT_OK if report.ok else EXIT_VERIFY


def run_plot_data(trajectory_path, agent=None, out=sys.stdout) -> int:
    try:
        header, rows = read_table(trajectory_path)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    d = sum(h.startswith("q") for h in header)
    m = sum(h.startswith("e") for h in header)
    cols = list(range(2 + d, 2 + d + m)) if m else list(range(2, 2 + d))
    agents = np.unique(rows[:, 1]).astype(int)
    if agent is not None:
        if agent not in agents:
            print(f"error: no agent {agent} in {trajectory_path}", file=sys.stderr)
            return EXIT_INPUT
        agents = [agent]
    out.write(",".join(["agent", "t"] + [header[c] for c in cols]) + "\n")
    for a in agents:
        for r in rows[rows[:, 1] == a]:
            out.write(",".join([str(int(a))] + [f"{r[0]:.17g}"] + [f"{r[c]:.17g}" for c in cols]) + "\n")
    return EXIT_OK


def _solve_job(args):
    return run_solve(*args)


def build_parser():
    p = argparse.ArgumentParser(prog="rcavoid", description="Collision-avoiding Riemannian cubic trajectories.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one or more scenarios")
    s.add_argument("scenario", nargs="+", help="scenario file or bundled name")
    s.add_argument("--out", default="out", help="output directory (one subdirectory per scenario if several)")
    s.add_argument("--k", type=float, default=None, help="override the velocity regulator k")
    s.add_argument("--sigma-steps", type=int, default=None, help="continuation steps for the potential scale")
    s.add_argument("--jobs", type=int, default=1, help="solve several scenarios in parallel")

    v = sub.add_parser("verify", help="check a trajectory record against a scenario")
    v.add_argument("scenario")
    v.add_argument("trajectory")

    d = sub.add_parser("plot-data", help="print plot-ready coordinates from a trajectory record")
    d.add_argument("trajectory")
    d.add_argument("--agent", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "solve":
        if len(args.scenario) == 1:
            return run_solve(args.scenario[0], args.out, args.k, args.sigma_steps)
        jobs = [(s, Path(args.out) / Path(s).stem, args.k, args.sigma_steps) for s in args.scenario]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                codes = list(ex.map(_solve_job, jobs))
        else:
            codes = [_solve_job(j) for j in jobs]
        return max(codes)
    if args.command == "verify":
        return run_verify(args.scenario, args.trajectory)
    return run_plot_data(args.trajectory, args.agent)


if __name__ == "__main__":
    sys.exit(main())
