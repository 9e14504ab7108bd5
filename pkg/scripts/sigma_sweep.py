"""Minimum inter-agent distance and J against the potential scale sigma.

    python scripts/sigma_sweep.py [--scenario r2_two_agents] [--sigma 0 0.25 0.5 1 2 4]
"""

import argparse
from dataclasses import replace

from rcavoid import ElParams, solve
from rcavoid.scenario import load_scenario


def sweep(scenario, sigmas):
    pot = scenario.params.potential
    rows = []
    for s in sigmas:
        sc = replace(scenario, params=ElParams(scenario.params.k, replace(pot, sigma=s)))
        _, report = solve(sc)
        rows.append((s, report.min_distance, report.min_distance_time, report.J, report.ok))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="r2_two_agents")
    p.add_argument("--sigma", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0, 2.0, 4.0])
    args = p.parse_args()
    print(f"{'sigma':>8}{'min dist':>12}{'at t':>8}{'J':>16}  status")
    for s, d, t, J, ok in sweep(load_scenario(args.scenario), args.sigma):
        print(f"{s:>8g}{d:>12.6f}{t:>8.3f}{J:>16.8g}  {'ok' if ok else 'FAIL'}")


if __name__ == "__main__":
    main()
