import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcavoid import Euclidean, ManifoldPoint, PotentialSpec, Sphere2, f_prime, f_value, pair_force
from rcavoid.errors import CollisionGuardError, ContractError
from rcavoid.potential import pair_forces

E2 = Euclidean(2)
S2 = Sphere2()
unit = PotentialSpec()


def test_values():
    assert f_value(unit, 1.0) == 1.0 and f_prime(unit, 1.0) == -1.0
    assert f_value(unit, 0.25) == 4.0 and f_prime(unit, 0.25) == -16.0


def test_scaled():
    spec = PotentialSpec(kind="scaled_reciprocal", sigma=3.0)
    assert f_value(spec, 2.0) == 1.5
    assert f_prime(spec, 2.0) == -0.75
    assert unit.scaled(0.5).sigma == 0.5


def test_derivative_matches_central_difference():
    x, h = 0.7, 1e-6
    fd = (f_value(unit, x + h) - f_value(unit, x - h)) / (2 * h)
    assert abs(fd - f_prime(unit, x)) / abs(f_prime(unit, x)) < 1e-8


def test_guard_carries_value():
    spec = PotentialSpec(epsilon_min=1e-3)
    with pytest.raises(CollisionGuardError) as err:
        f_value(spec, 5e-4)
    assert err.value.value == pytest.approx(5e-4)
    with pytest.raises(CollisionGuardError):
        f_prime(spec, 1e-4)


def test_invalid_specs():
    with pytest.raises(ContractError):
        PotentialSpec(kind="gaussian")
    with pytest.raises(ContractError):
        PotentialSpec(epsilon_min=0.0)
    with pytest.raises(ContractError):
        PotentialSpec(sigma=-1.0)


def test_flat_pair_force_example():
    xi = ManifoldPoint(E2, [0.0, 0.0])
    xj = ManifoldPoint(E2, [1.0, 0.0])
    assert np.allclose(pair_force(unit, xi, xj).comps, [-1.0, 0.0])


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_flat_antisymmetry(c):
    a, b = np.array(c[:2]), np.array(c[2:])
    if np.sum((a - b) ** 2) < 1e-3:
        return
    fij = pair_force(unit, ManifoldPoint(E2, a), ManifoldPoint(E2, b)).comps
    fji = pair_force(unit, ManifoldPoint(E2, b), ManifoldPoint(E2, a)).comps
    assert np.allclose(fij, -fji, rtol=1e-12, atol=1e-12)


def test_sphere_quarter_separation():
    x = S2.from_embedded(np.array([1.0, 0.0, 0.0]))
    y = S2.from_embedded(np.array([0.0, 1.0, 0.0]))
    xi, xj = ManifoldPoint(S2, x), ManifoldPoint(S2, y)
    f = pair_force(unit, xi, xj)
    expected = abs(f_prime(unit, (np.pi / 2) ** 2)) * (np.pi / 2)
    assert S2.norm(x, f.comps) == pytest.approx(expected, rel=1e-10)


@given(st.floats(0.3, 2.8), st.floats(-3, 3), st.floats(0.3, 2.8), st.floats(-3, 3))
def test_sphere_repulsive(t1, p1, t2, p2):
    q1, q2 = np.array([t1, p1]), np.array([t2, p2])
    x, y = S2.embed(q1), S2.embed(q2)
    if not -0.99 < np.dot(x, y) < 1 - 1e-5:
        return
    f = pair_force(unit, ManifoldPoint(S2, q1), ManifoldPoint(S2, q2)).comps
    assert S2.inner(q1, f, S2.log(q1, q2)) < 0.0


def test_flat_magnitude_decreases():
    direction = np.array([0.6, 0.8])
    norms = [np.linalg.norm(pair_force(unit, ManifoldPoint(E2, [0, 0]), ManifoldPoint(E2, r * direction)).comps)
             for r in np.linspace(0.05, 3.0, 40)]
    assert np.all(np.diff(norms) < 0)


def test_batched_forces_balance():
    rng = np.random.default_rng(4)
    q = rng.normal(size=(5, 4, 2))
    forces, d2 = pair_forces(E2, unit, q)
    assert np.allclose(forces.sum(axis=1), 0.0, atol=1e-12 * np.abs(forces).max())
    assert np.all(np.isinf(np.diagonal(d2, axis1=-2, axis2=-1)))
    assert np.allclose(d2[:, 0, 1], np.sum((q[:, 0] - q[:, 1]) ** 2, axis=-1))


def test_batched_guard():
    q = np.array([[0.0, 0.0], [1e-4, 0.0]])
    with pytest.raises(CollisionGuardError):
        pair_forces(E2, unit, q, check=True)
    forces, d2 = pair_forces(E2, unit, q, check=False)
    assert np.all(np.isfinite(forces)) and d2[0, 1] < unit.epsilon_min
