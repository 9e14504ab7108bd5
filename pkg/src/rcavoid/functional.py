"""Energy functional, its first variation, and a finite-difference oracle.

The functional evaluated here is

    J = 1/2 sum_i int ( |D2 x_i|^2 + k |x_i'|^2 + 1/2 sum_{j != i} F(d^2(x_j, x_i)) ) dt,

so every unordered pair of agents contributes ``F/2``. With that weighting
the first variation in the direction ``X`` of agent ``i`` is exactly

    int < X, D4 x - k D2 x + R(D2 x, x') x' - sum_j F' log_x(x_j) > dt
    + sum over smooth pieces [ <DX/dt, D2 x> + <X, k x' - D3 x> ],

the expression whose vanishing the solver enforces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._numerics import differentiate, simpson
from .errors import ContractError
from .potential import f_value, pair_forces


@dataclass
class Segment:
    """Samples of all agents on one smooth piece ``[t[0], t[-1]]``.

    ``q``: ``(M, n_agents, *point_shape)``; ``vel``: ``(M, n_agents, dim)``
    frame components of the velocity; ``jets``: optional
    ``(M, n_agents, 3, dim)`` holding the covariant derivatives D2, D3, D4.
    """

    t: np.ndarray
    q: np.ndarray
    vel: np.ndarray
    jets: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t.ndim != 1 or len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise ContractError("segment mesh must be strictly increasing")
        if self.q.shape[0] != len(self.t) or self.vel.shape[0] != len(self.t):
            raise ContractError("segment samples do not match the mesh")

    @property
    def h(self) -> float:
        return (self.t[-1] - self.t[0]) / (len(self.t) - 1)


@dataclass
class Trajectory:
    manifold: object
    segments: list = field(default_factory=list)

    @property
    def n_agents(self) -> int:
        return self.segments[0].q.shape[1]

    @property
    def breaks(self) -> list:
        return [s.t[0] for s in self.segments] + [self.segments[-1].t[-1]]

    def without_jets(self) -> "Trajectory":
        return Trajectory(self.manifold, [replace(s, jets=None) for s in self.segments])

    def with_fd_jets(self, width: int = 9) -> "Trajectory":
        return Trajectory(self.manifold, [replace(s, jets=fd_jets(self.manifold, s, width))
                                          for s in self.segments])


@dataclass
class VariationField:
    """Frame components of ``X`` and of ``dX/dt`` per segment, for one agent."""

    values: list
    derivs: list


def _check_uniform(seg: Segment):
    dt = np.diff(seg.t)
    if np.max(np.abs(dt - seg.h)) > 1e-9 * max(1.0, abs(seg.t[-1])):
        raise ContractError("finite-difference derivatives need a uniform mesh")


def fd_jets(manifold, seg: Segment, width: int = 9) -> np.ndarray:
    """D2, D3, D4 from the velocity samples via ``DW/dt = W' + Gamma(x', W)``."""
    _check_uniform(seg)
    h = seg.h
    out = np.empty(seg.vel.shape[:2] + (3,) + seg.vel.shape[2:])
    w = seg.vel
    for n in range(3):
        w = differentiate(w, h, 1, width) + manifold.connection(seg.q, seg.vel, w)
        out[:, :, n] = w
    return out


def velocities_from_positions(manifold, t, q, width: int = 5) -> np.ndarray:
    """Frame velocity components recovered from sampled positions."""
    h = (t[-1] - t[0]) / (len(t) - 1)
    dq = differentiate(q, h, 1, width)
    if manifold.is_chart:
        return dq
    from .lie import vee
    W = np.swapaxes(q, -1, -2) @ dq
    return vee(0.5 * (W - np.swapaxes(W, -1, -2)), tol=None)


def _params(obj):
    return getattr(obj, "params", obj)


def _jets(manifold, seg):
    return seg.jets if seg.jets is not None else fd_jets(manifold, seg)


def evaluate_J(scenario, traj: Trajectory, width: int = 9) -> float:
    """Composite-Simpson value of the functional; uses stored D2 when present."""
    params = _params(scenario)
    M = traj.manifold
    total = 0.0
    for seg in traj.segments:
        if seg.jets is not None:
            acc = seg.jets[:, :, 0]
        else:
            _check_uniform(seg)
            acc = differentiate(seg.vel, seg.h, 1, width) + M.connection(seg.q, seg.vel, seg.vel)
        kin = M.inner(seg.q, acc, acc) + params.k * M.inner(seg.q, seg.vel, seg.vel)
        integrand = 0.5 * kin.sum(axis=1)
        if seg.q.shape[1] > 1 and params.potential.sigma != 0.0:
            _, d2 = pair_forces(M, params.potential, seg.q, check=True)
            off = ~np.eye(d2.shape[-1], dtype=bool)
            integrand = integrand + 0.25 * f_value(params.potential, d2[:, off]).sum(axis=1)
        total += float(simpson(integrand, seg.h))
    return total


def first_variation(scenario, traj: Trajectory, agent: int, X: VariationField) -> float:
    """Analytic ``dJ/dr`` at ``r = 0`` for the variation ``exp(r X)`` of one agent."""
    params = _params(scenario)
    M = traj.manifold
    if len(X.values) != len(traj.segments):
        raise ContractError("variation field must provide one array per segment")
    total = 0.0
    for seg, Xv, dXv in zip(traj.segments, X.values, X.derivs):
        jets = _jets(M, seg)
        q = seg.q[:, agent]
        v = seg.vel[:, agent]
        d2, d3, d4 = jets[:, agent, 0], jets[:, agent, 1], jets[:, agent, 2]
        forces, _ = pair_forces(M, params.potential, seg.q, check=True)
        el = d4 - params.k * d2 + M.curvature(q, d2, v, v) - forces[:, agent]
        total += float(simpson(M.inner(q, Xv, el), seg.h))
        DX = dXv + M.connection(q, v, Xv)
        bracket = M.inner(q, DX, d2) + M.inner(q, Xv, params.k * v - d3)
        total += float(bracket[-1] - bracket[0])
    return total


def perturb(traj: Trajectory, agent: int, X: VariationField, r: float, width: int = 5) -> Trajectory:
    """Trajectory with one agent moved to ``exp(r X(t))``, velocities re-derived."""
    M = traj.manifold
    segs = []
    for seg, Xv in zip(traj.segments, X.values):
        q = seg.q.copy()
        q[:, agent] = M.exp(seg.q[:, agent], r * np.asarray(Xv))
        vel = velocities_from_positions(M, seg.t, q, width)
        segs.append(Segment(seg.t, q, vel))
    return Trajectory(M, segs)


def fd_variation(scenario, traj: Trajectory, agent: int, X: VariationField, h: float = 1e-5,
                 width: int = 5) -> float:
    """Central difference of J along ``exp(+-h X)``; derivatives by 5-point stencils."""
    if all(not np.any(np.asarray(v)) for v in X.values):
        return 0.0
    Jp = evaluate_J(scenario, perturb(traj, agent, X, h, width), width=width)
    Jm = evaluate_J(scenario, perturb(traj, agent, X, -h, width), width=width)
    return (Jp - Jm) / (2.0 * h)
