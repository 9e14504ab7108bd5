import numpy as np
import pytest

from rcavoid import (AgentJet, ElParams, Euclidean, LieJet, ManifoldPoint, PotentialSpec, SO3ExpChart,
                     Sphere2, SystemState, TangentVector, el_residual, lie_rhs, rhs_first_order)
from rcavoid._numerics import differentiate
from rcavoid.dynamics import fourth_derivative
from rcavoid.errors import CollisionGuardError, ContractError
from rcavoid.lie import covariant_jets, exp_so3
from rcavoid.solver import flow

E2 = Euclidean(2)
S2 = Sphere2()
no_force = ElParams(0.0, PotentialSpec(sigma=0.0))


def jet(M, x, x1, x2, x3):
    p = ManifoldPoint(M, x)
    return AgentJet(p, TangentVector(p, x1), TangentVector(p, x2), TangentVector(p, x3))


def r2_display(q):
    """Fourth derivatives of the two planar agents as printed for F = 1/x, k = 0."""
    (x1, y1), (x2, y2) = q
    den = ((x2 - x1) ** 2 + (y2 - y1) ** 2) ** 2
    return np.array([[(x1 - x2) / den, (y1 - y2) / den], [(x2 - x1) / den, (y2 - y1) / den]])


class TestElResidual:
    def test_geodesic_single_agent(self):
        state = SystemState([jet(E2, [0.3, 0.2], [1.0, -2.0], [0, 0], [0, 0])])
        for k in (0.0, 2.5):
            r = el_residual(ElParams(k, PotentialSpec()), state, [np.zeros(2)])
            assert np.array_equal(r[0].comps, [0.0, 0.0])

    def test_two_agents_unit_separation(self):
        state = SystemState([jet(E2, [0, 0], [0, 0], [0, 0], [0, 0]), jet(E2, [1, 0], [0, 0], [0, 0], [0, 0])])
        r = el_residual(ElParams(0.0, PotentialSpec()), state, [np.zeros(2)] * 2)
        assert np.allclose(r[0].comps, [1.0, 0.0])
        assert np.allclose(r[1].comps, [-1.0, 0.0])
        # the printed planar equations are x'''' = r, so plugging them in zeroes the residual
        r = el_residual(ElParams(0.0, PotentialSpec()), state, list(r2_display(np.array([[0, 0], [1, 0.0]]))))
        assert np.allclose([v.comps for v in r], 0.0, atol=1e-15)

    def test_random_flat_states_match_display(self, rng):
        params = ElParams(0.0, PotentialSpec())
        for _ in range(20):
            q = rng.normal(size=(2, 2))
            state = SystemState([jet(E2, q[i], *rng.normal(size=(3, 2))) for i in range(2)])
            dY = rhs_first_order(params, state)
            assert np.allclose(dY[:, 3], r2_display(q), atol=1e-12, rtol=1e-12)
            x4 = rng.normal(size=(2, 2))
            r = np.array([v.comps for v in el_residual(params, state, list(x4))])
            assert np.allclose(r, x4 - r2_display(q), atol=1e-12)

    def test_linear_in_x4(self, rng):
        params = ElParams(0.7, PotentialSpec())
        q = np.array([[1.0, 0.3], [2.0, -0.4]])
        state = SystemState([jet(S2, q[i], *rng.normal(size=(3, 2))) for i in range(2)])
        a = rng.normal(size=(2, 2))
        r0 = np.array([v.comps for v in el_residual(params, state, [np.zeros(2)] * 2)])
        ra = np.array([v.comps for v in el_residual(params, state, list(a))])
        assert np.allclose(ra - r0, a, atol=1e-14)

    def test_force_balance(self, rng):
        params = ElParams(0.0, PotentialSpec())
        q = rng.normal(size=(4, 2)) * 2
        state = SystemState([jet(E2, q[i], *rng.normal(size=(3, 2))) for i in range(4)])
        dY = rhs_first_order(params, state)
        assert np.abs(dY[:, 3].sum(axis=0)).max() < 1e-12 * np.abs(dY[:, 3]).max()

    def test_guard(self):
        state = SystemState([jet(E2, [0, 0], [0, 0], [0, 0], [0, 0]), jet(E2, [1e-4, 0], [0, 0], [0, 0], [0, 0])])
        with pytest.raises(CollisionGuardError):
            el_residual(ElParams(0.0, PotentialSpec()), state, [np.zeros(2)] * 2)

    def test_contracts(self):
        p = ManifoldPoint(E2, [0.0, 0.0])
        q = ManifoldPoint(E2, [1.0, 0.0])
        with pytest.raises(ContractError):
            AgentJet(p, TangentVector(q, [0, 0]), TangentVector(p, [0, 0]), TangentVector(p, [0, 0]))
        with pytest.raises(ContractError):
            SystemState([])
        with pytest.raises(ContractError):
            ElParams(-1.0)


class TestFirstOrderForm:
    def test_flat_free_is_quartic_zero(self, rng):
        state = SystemState([jet(E2, *rng.normal(size=(4, 2)))])
        dY = rhs_first_order(no_force, state)
        assert np.array_equal(dY[0, 3], [0.0, 0.0])
        assert np.array_equal(dY[0, :3], state.array()[0, 1:])

    def test_flat_free_flow_is_cubic(self):
        x0, v0, a0, j0 = np.array([0.2, -0.1]), np.array([1.0, 0.5]), np.array([-2.0, 0.3]), np.array([0.7, 1.1])
        seg = flow(E2, no_force, x0[None], v0[None], a0[None], j0[None], 0.0, 1.0, 50)
        t = seg.t[:, None]
        cubic = x0 + v0 * t + a0 * t ** 2 / 2 + j0 * t ** 3 / 6
        assert np.abs(seg.q[:, 0] - cubic).max() < 1e-12

    def test_sphere_geodesic_stays_geodesic(self):
        q0 = np.array([[0.8, -0.5]])
        v0 = np.array([[1.2, 0.9]])
        z = np.zeros((1, 2))
        seg = flow(S2, no_force, q0, v0, z, z, 0.0, 1.0, 200)
        assert np.abs(seg.jets[:, 0, 0]).max() < 1e-6
        x = S2.embed(seg.q[:, 0])
        # a great circle stays in the plane spanned by x(0) and x'(0)
        n = np.cross(x[0], S2.tangent_to_embedded(q0[0], v0[0]))
        assert np.abs(x @ n).max() < 1e-9

    def test_rhs_first_order_needs_chart(self):
        from rcavoid import SO3Symmetric
        M = SO3Symmetric()
        with pytest.raises(ContractError):
            rhs_first_order(no_force, SystemState([jet(M, np.eye(3), [1, 0, 0], [0, 0, 0], [0, 0, 0])]))


def sphere_d4_display(th, ph):
    """Fourth covariant derivative on the sphere as printed, from coordinate derivatives."""
    t0, t1, t2, t3, t4 = th
    p0, p1, p2, p3, p4 = ph
    s, c = np.sin(t0), np.cos(t0)
    cot = c / s
    a = (t4 + 5 * np.sin(2 * t0) * t1 ** 2 * p1 ** 2 + (1 - 7 * c ** 2) * t2 * p1 ** 2
         + (5 - 17 * c ** 2) * t1 * p1 * p2 - 3 * s * c * p2 ** 2 - 2 * np.sin(2 * t0) * p1 * p3
         + s * c ** 3 * p1 ** 4)
    b = (p4 - 7 * t1 * t2 * p1 - 5 * t1 ** 2 * p2 + 4 * cot * t3 * p1 + 6 * cot * t2 * p2
         + 4 * cot * p3 * t1 + (np.sin(2 * t0) - cot * (5 * c ** 2 - 1)) * t1 * p1 ** 3
         - 6 * c ** 2 * p1 ** 2 * p2 - 2 * cot * p1 * t1 ** 3)
    return np.array([a, b])


class TestSphereDisplay:
    """The printed D4 formula versus the generic covariant chain."""

    def _curve(self, rng):
        P = np.polynomial.polynomial
        ct = rng.normal(size=5) * 0.5
        ct[0] = rng.uniform(0.8, 2.2)
        cp = rng.normal(size=5) * 0.5
        h = 2e-3
        t = np.arange(-20, 21) * h
        q = np.stack([P.polyval(t, ct), P.polyval(t, cp)], -1)
        v = np.stack([P.polyval(t, P.polyder(ct)), P.polyval(t, P.polyder(cp))], -1)
        w, jets = v, []
        for _ in range(3):
            w = differentiate(w, h, 1, 11) + S2.connection(q, v, w)
            jets.append(w[20])
        th = [P.polyval(0.0, P.polyder(ct, k)) for k in range(5)]
        ph = [P.polyval(0.0, P.polyder(cp, k)) for k in range(5)]
        return q[20], v[20], jets, th, ph

    def test_display_is_the_fourth_covariant_derivative(self, rng):
        for _ in range(5):
            q, v, (d2, d3, d4), th, ph = self._curve(rng)
            assert np.allclose(sphere_d4_display(th, ph), d4, atol=1e-6 * (1 + np.abs(d4).max()))

    def test_curvature_term_does_not_vanish(self, rng):
        # so the extremal equation keeps R(D2 x, x') x' on the sphere
        q, v, (d2, d3, d4), th, ph = self._curve(rng)
        R = S2.curvature(q, d2, v, v)
        closed = S2.inner(q, v, v) * d2 - S2.inner(q, d2, v) * v
        assert np.allclose(R, closed, atol=1e-8)
        assert S2.norm(q, R) > 1e-2

    def test_production_path_keeps_curvature(self, rng):
        q = np.array([[1.1, 0.3]])
        x1, x2 = rng.normal(size=(2, 1, 2))
        x4, _ = fourth_derivative(S2, no_force, q, x1, x2)
        assert np.allclose(x4, -S2.curvature(q, x2, x1, x1), atol=1e-12)
        assert np.abs(x4).max() > 1e-3


def _random_lie_jets(rng, n):
    return [LieJet(exp_so3(rng.normal(size=3) * 0.4), *rng.normal(size=(3, 3))) for _ in range(n)]


class TestLieRhs:
    def test_one_parameter_subgroup(self):
        out = lie_rhs(no_force, [LieJet(np.eye(3), [0.3, -1.0, 2.0], [0, 0, 0], [0, 0, 0])])
        assert np.allclose(out[0][3], 0.0)
        assert np.allclose(out[0][0], np.eye(3) @ np.array([[0, -2.0, -1.0], [2.0, 0, -0.3], [1.0, 0.3, 0]]))

    def test_potential_term(self):
        Rj = exp_so3([np.pi / 2, 0, 0])
        params = ElParams(0.0, PotentialSpec())
        z = np.zeros(3)
        out = lie_rhs(params, [LieJet(np.eye(3), z, z, z), LieJet(Rj, z, z, z)])
        # F'(d^2) log(R_i^T R_j) = -(pi/2)^-4 (pi/2, 0, 0)
        assert np.allclose(out[0][3], [-(np.pi / 2) ** -3, 0, 0], atol=1e-12)
        assert np.allclose(out[1][3], [(np.pi / 2) ** -3, 0, 0], atol=1e-12)

    def test_symmetric_body_closed_form(self, rng):
        for k in (0.0, 1.3):
            params = ElParams(k, PotentialSpec(sigma=0.0))
            j = _random_lie_jets(rng, 1)[0]
            v3 = lie_rhs(params, [j])[0][3]
            assert np.allclose(v3, np.cross(j.v2, j.v) + k * j.v1, atol=1e-12)

    def test_printed_extra_terms_are_not_part_of_the_flow(self, rng):
        j = _random_lie_jets(rng, 1)[0]
        printed = np.cross(j.v2, j.v) + 0.75 * np.cross(np.cross(j.v1, j.v), j.v) + 1.5 * np.cross(j.v1, j.v)
        v3 = lie_rhs(no_force, [j])[0][3]
        assert np.abs(printed - v3).max() > 1e-3

    def test_matches_exponential_chart(self, rng):
        params = ElParams(0.8, PotentialSpec())
        for _ in range(10):
            jets = _random_lie_jets(rng, 2)
            out = lie_rhs(params, jets)
            chart = SO3ExpChart()
            q = np.stack([chart.from_rotation(j.R) for j in jets])
            v = np.stack([j.v for j in jets])
            d2, d3 = covariant_jets(v, np.stack([j.v1 for j in jets]), np.stack([j.v2 for j in jets]))
            x4, _ = fourth_derivative(chart, params, q, chart.from_body(q, v), chart.from_body(q, d2))
            lie_d4 = covariant_jets(v, np.stack([j.v1 for j in jets]), np.stack([j.v2 for j in jets]),
                                    np.stack([o[3] for o in out]))[2]
            assert np.allclose(chart.to_body(q, x4), lie_d4, atol=1e-6)

    def test_short_flows_agree(self, rng):
        params = ElParams(0.5, PotentialSpec())
        jets = _random_lie_jets(rng, 2)
        from rcavoid import SO3Symmetric
        R0 = np.stack([j.R for j in jets])
        v = np.stack([j.v for j in jets])
        d2, d3 = covariant_jets(v, np.stack([j.v1 for j in jets]), np.stack([j.v2 for j in jets]))
        lie_seg = flow(SO3Symmetric(), params, R0, v, d2, d3, 0.0, 0.5, 100)
        chart = SO3ExpChart(base=R0[0])
        q0 = np.stack([chart.from_rotation(R) for R in R0])
        ch = flow(chart, params, q0, chart.from_body(q0, v), chart.from_body(q0, d2), chart.from_body(q0, d3),
                  0.0, 0.5, 100)
        assert np.abs(chart.rotation(ch.q) - lie_seg.q).max() < 1e-8
        assert np.abs(chart.to_body(ch.q, ch.vel) - lie_seg.vel).max() < 1e-8
