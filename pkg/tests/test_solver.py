import numpy as np
import pytest
from dataclasses import replace

from rcavoid import (BoundarySpec, ElParams, Euclidean, PotentialSpec, Scenario, Segment, SolverConfig, Sphere2,
                     Trajectory, Waypoint, solve, verify)
from rcavoid.errors import CollisionGuardError, ContractError, IllPosedError, NonConvergenceError
from rcavoid.solver import _SegmentProblem

E2 = Euclidean(2)
S2 = Sphere2()


def hermite_scenario(**solver):
    spec = BoundarySpec(E2, (Waypoint(0.0, [0.0, 0.0], [1.0, 0.0]), Waypoint(1.0, [1.0, 1.0], [0.0, 1.0])))
    return Scenario("hermite", E2, (spec,), ElParams(0.0, PotentialSpec()), SolverConfig(**solver))


def hermite(t):
    # x = t + t^2 - t^3, y = 2 t^2 - t^3 match the data at t = 0 and t = 1
    q = np.stack([t + t ** 2 - t ** 3, 2 * t ** 2 - t ** 3], -1)
    v = np.stack([1 + 2 * t - 3 * t ** 2, 4 * t - 3 * t ** 2], -1)
    return q, v


def great_circle(t):
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 0.6, 0.8])
    x = np.cos(t)[:, None] * a + np.sin(t)[:, None] * b
    xd = -np.sin(t)[:, None] * a + np.cos(t)[:, None] * b
    q = S2.from_embedded(x)
    return q, S2.tangent_from_embedded(q, xd)


def geodesic_scenario(k=0.7, end_speed=1.0):
    t = np.array([0.0, 1.2])
    q, v = great_circle(t)
    spec = BoundarySpec(S2, (Waypoint(0.0, q[0], v[0]), Waypoint(1.2, q[1], end_speed * v[1])))
    return Scenario("geodesic", S2, (spec,), ElParams(k, PotentialSpec()))


class TestHermite:
    def test_solution_matches_cubic(self):
        sc = hermite_scenario()
        traj, report = solve(sc)
        seg = traj.segments[0]
        q, v = hermite(seg.t)
        assert np.abs(seg.q[:, 0] - q).max() < 1e-8
        assert np.abs(seg.vel[:, 0] - v).max() < 1e-8
        assert report.ok

    def test_verify_exact_cubic(self):
        sc = hermite_scenario()
        t = np.linspace(0, 1, 201)
        q, v = hermite(t)
        report = verify(sc, Trajectory(E2, [Segment(t, q[:, None], v[:, None])]))
        assert report.max_el < 1e-6
        assert report.max_boundary < 1e-12
        assert report.J == pytest.approx(0.5 * ((2 - 6 * t) ** 2 + (4 - 6 * t) ** 2).mean(), rel=1e-2)

    def test_bump_breaks_verification(self):
        sc = hermite_scenario()
        t = np.linspace(0, 1, 201)
        q, v = hermite(t)
        bump = 1e-2 * np.sin(np.pi * t) ** 4
        dbump = 1e-2 * 4 * np.pi * np.sin(np.pi * t) ** 3 * np.cos(np.pi * t)
        q = q + bump[:, None] * [1.0, -1.0]
        v = v + dbump[:, None] * [1.0, -1.0]
        report = verify(sc, Trajectory(E2, [Segment(t, q[:, None], v[:, None])]))
        assert report.max_el > 1e-3
        assert not report.ok


class TestGeodesic:
    def test_geodesic_passes_verify(self):
        # with F absent and k > 0, geodesics satisfy the necessary conditions exactly
        sc = geodesic_scenario()
        t = np.linspace(0, 1.2, 201)
        q, v = great_circle(t)
        report = verify(sc, Trajectory(S2, [Segment(t, q[:, None], v[:, None])]))
        assert report.max_el < 1e-7
        assert report.manifold_defect < 1e-14

    def test_solver_recovers_geodesic(self):
        sc = geodesic_scenario()
        traj, report = solve(sc)
        seg = traj.segments[0]
        q, _ = great_circle(seg.t)
        assert np.abs(S2.embed(seg.q[:, 0]) - S2.embed(q)).max() < 1e-8
        assert report.max_el < 1e-7


class TestWellPosedness:
    @pytest.mark.parametrize("name", ["r2_two_agents", "s2_two_agents", "so3_two_agents"])
    def test_unknowns_match_rows(self, name):
        from rcavoid.scenario import bundled_path, load_scenario
        sc = load_scenario(bundled_path(name))
        for k in range(len(sc.agents[0].waypoints) - 1):
            prob = _SegmentProblem(sc, k, sc.solver)
            res, _ = prob.residual(sc.params.with_sigma(0.0), np.zeros(prob.n_unknowns))
            assert res.shape[-1] == prob.n_unknowns == 2 * sc.n_agents * sc.manifold.dim

    def test_mismatched_times(self):
        a = BoundarySpec(E2, (Waypoint(0.0, [0, 0], [1, 0]), Waypoint(1.0, [1, 1], [0, 1])))
        b = BoundarySpec(E2, (Waypoint(0.0, [3, 0], [1, 0]), Waypoint(1.5, [4, 1], [0, 1])))
        with pytest.raises(IllPosedError):
            solve(Scenario("bad", E2, (a, b)))

    def test_wrong_manifold(self):
        a = BoundarySpec(Euclidean(3), (Waypoint(0.0, [0, 0, 0], [1, 0, 0]), Waypoint(1.0, [1, 1, 0], [0, 1, 0])))
        with pytest.raises(IllPosedError):
            solve(Scenario("bad", E2, (a,)))

    def test_verify_agent_mismatch(self, r2_solution):
        sc, traj, _, _ = r2_solution
        with pytest.raises(IllPosedError):
            verify(replace(sc, agents=sc.agents[:1]), traj)


class TestConfig:
    @pytest.mark.parametrize("bad", [dict(n_mesh=7), dict(n_mesh=101), dict(tol=1e-14), dict(fd_width=4),
                                     dict(damping=1.0), dict(integrator_order=5), dict(max_iter=0)])
    def test_rejects(self, bad):
        with pytest.raises(ContractError):
            SolverConfig(**bad)

    def test_frozen(self):
        with pytest.raises(Exception):
            SolverConfig().tol = 1.0


class TestFailures:
    def test_nonconvergence_carries_iterate(self):
        # zero initial jets give the geodesic, so a mismatched end speed needs several Newton steps
        with pytest.raises(NonConvergenceError) as err:
            solve(geodesic_scenario(end_speed=1.5), SolverConfig(max_iter=1))
        assert err.value.trajectory is not None
        assert err.value.trajectory.n_agents == 1

    def test_guard(self):
        # the agents swap places head-on; the guard is far larger than the gap they keep
        a = BoundarySpec(E2, (Waypoint(0.0, [0, 0], [1, 0]), Waypoint(1.0, [1, 0], [1, 0])))
        b = BoundarySpec(E2, (Waypoint(0.0, [1, 0], [-1, 0]), Waypoint(1.0, [0, 0], [-1, 0])))
        sc = Scenario("swap", E2, (a, b), ElParams(0.0, PotentialSpec(epsilon_min=4.0)))
        with pytest.raises(CollisionGuardError) as err:
            solve(sc)
        assert err.value.pair == (0, 1)
        assert err.value.time is not None


class TestBundledR2:
    def test_report(self, r2_solution):
        sc, traj, report, _ = r2_solution
        assert report.ok
        # boundary rows are evaluated on samples, so they inherit the Newton tolerance
        assert report.max_boundary < 10 * sc.solver.tol
        assert report.min_distance > 0.2
        assert report.min_distance_pair == (0, 1)
        assert report.solver["converged"]
        assert len(report.junction_d2) == 1

    def test_table_and_dict(self, r2_solution):
        _, _, report, _ = r2_solution
        text = report.table()
        assert "EL residual agent 0" in text and "status" in text and text.rstrip().endswith("ok")
        d = report.to_dict()
        assert d["ok"] and d["min_distance_pair"] == [0, 1]
        assert d["J"] == report.J

    def test_verify_is_independent_of_stored_jets(self, r2_solution):
        sc, traj, report, _ = r2_solution
        again = verify(sc, traj.without_jets())
        assert again.el_residual == report.el_residual
