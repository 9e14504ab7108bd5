"""Euler-Lagrange necessary conditions in first-order form.

Each agent carries the 4-jet ``(x, x1, x2, x3)`` = position, velocity,
covariant acceleration and covariant jerk, stored as frame components. The
extremal condition fixes the fourth covariant derivative

    x4 = -R(x2, x1) x1 + k x2 + sum_j F'(d^2(x_j, x)) log_x(x_j)

and ``DW/dt = W' + Gamma(x1, W)`` turns the covariant chain into ordinary
ODEs, so no derivatives of the Christoffel symbols are needed besides the
ones inside the curvature.

On SO(3) with a bi-invariant metric the same condition is also available in
reduced form (``lie_rhs``) on ``(R, v, v', v'')``, where ``v`` is the body
velocity. For the symmetric body it simplifies to

    v''' = v'' x v + k v' + sum_j F'(d^2) log(R_i^T R_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errors import ContractError
from .manifolds import Manifold, ManifoldPoint, SO3Symmetric, TangentVector
from .potential import PotentialSpec, pair_forces


@dataclass(frozen=True)
class ElParams:
    k: float = 0.0
    potential: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        if not self.k >= 0.0:
            raise ContractError("velocity regulator k must be >= 0")

    def with_sigma(self, sigma: float) -> "ElParams":
        return ElParams(self.k, self.potential.scaled(sigma))


@dataclass(frozen=True)
class AgentJet:
    x: ManifoldPoint
    x1: TangentVector
    x2: TangentVector
    x3: TangentVector

    def __post_init__(self):
        for v in (self.x1, self.x2, self.x3):
            if v.base.manifold != self.x.manifold or not np.array_equal(v.base.coords, self.x.coords):
                raise ContractError("jet components must be based at the jet's point")


@dataclass(frozen=True)
class SystemState:
    jets: list
    t: float = 0.0

    def __post_init__(self):
        if not self.jets:
            raise ContractError("system state needs at least one agent")
        M = self.jets[0].x.manifold
        if any(j.x.manifold != M for j in self.jets):
            raise ContractError("all agents must live on the same manifold")

    @property
    def manifold(self) -> Manifold:
        return self.jets[0].x.manifold

    def positions(self):
        return np.stack([j.x.coords for j in self.jets])

    def array(self):
        """Chart-state array ``(n_agents, 4, dim)``."""
        return np.stack([np.stack([j.x.coords, j.x1.comps, j.x2.comps, j.x3.comps]) for j in self.jets])


# ---------------------------------------------------------------------------
# array kernels


def fourth_derivative(manifold, params: ElParams, q, x1, x2, check=False):
    """Fourth covariant derivative demanded by the extremal condition.

    Returns ``(x4, d2)`` with the pairwise squared distances ``d2``.
    """
    forces, d2 = pair_forces(manifold, params.potential, q, check=check)
    x4 = params.k * x2 + forces
    if not manifold.flat:
        x4 = x4 - manifold.curvature(q, x2, x1, x1)
    return x4, d2


def chart_rhs(manifold, params: ElParams, Y, check=False):
    """Time derivative of the chart state ``Y[..., agent, (q, x1, x2, x3), :]``."""
    q, x1, x2, x3 = Y[..., 0, :], Y[..., 1, :], Y[..., 2, :], Y[..., 3, :]
    x4, d2 = fourth_derivative(manifold, params, q, x1, x2, check=check)
    dY = np.empty_like(Y)
    dY[..., 0, :] = x1
    if manifold.flat:
        dY[..., 1, :] = x2
        dY[..., 2, :] = x3
        dY[..., 3, :] = x4
        return dY, d2
    dY[..., 1, :] = x2 - manifold.connection(q, x1, x1)
    dY[..., 2, :] = x3 - manifold.connection(q, x1, x2)
    dY[..., 3, :] = x4 - manifold.connection(q, x1, x3)
    return dY, d2


def el_residual_array(manifold, params: ElParams, q, x1, x2, x4, check=True):
    """``x4 + R(x2, x1)x1 - k x2 - sum_j F' log``; zero on extremals."""
    forces, _ = pair_forces(manifold, params.potential, q, check=check)
    return x4 + manifold.curvature(q, x2, x1, x1) - params.k * x2 - forces


def lie_rhs_array(params: ElParams, S, inertia=None, check=False):
    """Reduced dynamics on ``S[..., agent, 6, 3]`` = rows (R, v, v', v'').

    Returns ``(dS, d2)``.
    """
    R, v, v1, v2 = S[..., 0:3, :], S[..., 3, :], S[..., 4, :], S[..., 5, :]
    group = SO3Symmetric(inertia=inertia)
    forces, d2 = pair_forces(group, params.potential, R, check=check)
    c = lambda a, b: lie.reduced_connection(a, b, inertia)  # noqa: E731
    cvv = c(v, v)
    d2v = v1 + cvv
    v3 = (-lie.d4_tail(v, v1, v2, c, cvv) - lie.reduced_curvature(d2v, v, v, inertia)
          + params.k * d2v + forces)
    dS = np.empty_like(S)
    dS[..., 0:3, :] = R @ lie.hat(v)
    dS[..., 3, :] = v1
    dS[..., 4, :] = v2
    dS[..., 5, :] = v3
    return dS, d2


def lie_state(R, v, v1, v2):
    """Pack rotations and body derivatives into the ``(..., n, 6, 3)`` layout."""
    R = np.asarray(R, dtype=float)
    return np.concatenate([R, np.stack([v, v1, v2], axis=-2)], axis=-2)


# ---------------------------------------------------------------------------
# checked API


def el_residual(params: ElParams, state: SystemState, x4) -> list:
    M = state.manifold
    q = state.positions()
    x1 = np.stack([j.x1.comps for j in state.jets])
    x2 = np.stack([j.x2.comps for j in state.jets])
    x4 = np.stack([np.asarray(getattr(a, "comps", a), dtype=float) for a in x4])
    if x4.shape != x1.shape:
        raise ContractError("need one fourth-derivative vector per agent")
    res = el_residual_array(M, params, q, x1, x2, x4, check=True)
    return [TangentVector(j.x, r) for j, r in zip(state.jets, res)]


def rhs_first_order(params: ElParams, state: SystemState) -> np.ndarray:
    """Derivative of the chart state, shape ``(n_agents, 4, dim)``."""
    M = state.manifold
    if not M.is_chart:
        raise ContractError("rhs_first_order needs a coordinate chart; use lie_rhs on SO(3)")
    dY, _ = chart_rhs(M, params, state.array(), check=True)
    return dY


@dataclass(frozen=True)
class LieJet:
    R: np.ndarray
    v: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        R = SO3Symmetric().check_point(self.R)
        object.__setattr__(self, "R", R)
        for name in ("v", "v1", "v2"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (3,) or not np.all(np.isfinite(a)):
                raise ContractError(f"LieJet.{name} must be a finite 3-vector")
            object.__setattr__(self, name, a)


def lie_rhs(params: ElParams, jets: list, inertia=None) -> list:
    """Derivatives ``(R', v', v'', v''')`` for every agent."""
    S = lie_state([j.R for j in jets], [j.v for j in jets], [j.v1 for j in jets], [j.v2 for j in jets])
    dS, _ = lie_rhs_array(params, S, inertia=inertia, check=True)
    return [(d[0:3], d[3], d[4], d[5]) for d in dS]
