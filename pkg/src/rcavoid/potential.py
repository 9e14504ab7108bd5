"""Artificial potentials on squared inter-agent distance and the pair force."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import CollisionGuardError, ContractError
from .manifolds import ManifoldPoint, TangentVector


@dataclass(frozen=True)
class PotentialSpec:
    """``F(x) = sigma / x``; ``kind="reciprocal"`` is the unit-strength case.

    ``epsilon_min`` is a hard floor on the squared distance: F and F' are
    never evaluated below it.
    """

    kind: str = "reciprocal"
    sigma: float = 1.0
    epsilon_min: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("reciprocal", "scaled_reciprocal"):
            raise ContractError(f"unknown potential kind {self.kind!r}")
        if self.kind == "reciprocal" and self.sigma != 1.0:
            object.__setattr__(self, "kind", "scaled_reciprocal")
        if not self.sigma >= 0.0:
            raise ContractError("potential sigma must be >= 0")
        if not self.epsilon_min > 0.0:
            raise ContractError("epsilon_min must be > 0")

    def scaled(self, factor: float) -> "PotentialSpec":
        return replace(self, kind="scaled_reciprocal", sigma=self.sigma * factor)


def _guard(spec, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < spec.epsilon_min):
        bad = float(np.min(x))
        raise CollisionGuardError(
            f"squared distance {bad:.3e} below collision guard {spec.epsilon_min:.3e}", value=bad)
    return x


def f_value(spec: PotentialSpec, x):
    x = _guard(spec, x)
    return spec.sigma / x


def f_prime(spec: PotentialSpec, x):
    x = _guard(spec, x)
    return -spec.sigma / (x * x)


def pair_force(spec: PotentialSpec, x_i: ManifoldPoint, x_j: ManifoldPoint) -> TangentVector:
    """``F'(d^2(x_j, x_i)) log_{x_i}(x_j)``, a tangent vector at ``x_i``."""
    M = x_i.manifold
    if x_j.manifold != M:
        raise ContractError("agents live on different manifolds")
    v = M.log(x_i.coords, x_j.coords)
    d2 = M.inner(x_i.coords, v, v)
    return TangentVector(x_i, f_prime(spec, d2) * v)


def pair_forces(manifold, spec: PotentialSpec, q, check: bool = True):
    """Summed avoidance force on every agent.

    ``q`` has shape ``(..., n_agents, *point_shape)``. Returns the forces
    ``(..., n_agents, dim)`` and the matrix of squared distances
    ``(..., n_agents, n_agents)`` with ``inf`` on the diagonal. With
    ``check=False`` nothing raises: F' is evaluated at ``max(d2, epsilon_min)``
    and the caller inspects the returned distances instead.
    """
    q = np.asarray(q, dtype=float)
    nd = len(manifold.point_shape)
    n = q.shape[q.ndim - nd - 1]
    batch = q.shape[: q.ndim - nd - 1]
    forces = np.zeros(batch + (n, manifold.dim))
    d2 = np.full(batch + (n, n), np.inf)
    for i in range(n):
        qi = _agent(q, i, nd)
        for j in range(n):
            if j == i:
                continue
            v = manifold.log(qi, _agent(q, j, nd), check=check)
            dij = manifold.inner(qi, v, v)
            d2[..., i, j] = dij
            if spec.sigma == 0.0:
                continue
            if check:
                fp = f_prime(spec, dij)
            else:
                fp = -spec.sigma / np.maximum(dij, spec.epsilon_min) ** 2
            forces[..., i, :] += fp[..., None] * v
    return forces, d2


def _agent(q, i, nd):
    return q[(Ellipsis, i) + (slice(None),) * nd]
