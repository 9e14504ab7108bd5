"""Solve the bundled scenarios, print their residual tables, write artifacts.

    python scripts/run_examples.py [--out runs] [name ...]
"""

import argparse
import time
from pathlib import Path

from rcavoid import solve
from rcavoid.cli import write_report
from rcavoid.scenario import BUNDLED, load_scenario, write_agent_files, write_trajectory


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", default=list(BUNDLED))
    p.add_argument("--out", default="runs")
    args = p.parse_args()
    for name in args.names:
        sc = load_scenario(name)
        start = time.perf_counter()
        traj, report = solve(sc)
        seconds = time.perf_counter() - start
        out = Path(args.out) / sc.name
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(traj, out / "trajectory.csv")
        write_agent_files(traj, out)
        write_report(report, out / "report.toml", {"scenario": sc.name})
        print(f"== {sc.name} ({sc.manifold.name}, {sc.n_agents} agents, {seconds:.1f} s)")
        print(report.table())
        print()


if __name__ == "__main__":
    main()
