"""Waypoint chains, terminal submanifolds, and the boundary-condition rows.

Each agent follows a chain of waypoints ``t_0 = 0 < t_1 < ... < t_K``. Every
waypoint pins the position. The velocity is pinned as well, except at the
final waypoint, where it may instead be required to be tangent to a
submanifold ``S`` of dimension ``m``. In that case the rows are

    <x'(T), n_a> = 0      for the d - m normals of S,
    <D2 x(T), tau_b> = 0  for the m tangents of S,

so the row count stays ``d`` either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import ContractError, IllPosedError


class Submanifold:
    """Immersed submanifold ``S`` of a chart manifold, given by ``immersion(s)``.

    ``locate(q)`` returns the parameter of the point of S nearest to ``q``;
    tangent vectors come from central differences of the immersion.
    """

    def __init__(self, ambient, immersion, param_dim: int, locate=None, fd_step: float = 1e-6):
        if not 0 <= param_dim <= ambient.dim:
            raise IllPosedError(f"submanifold dimension {param_dim} outside [0, {ambient.dim}]")
        if not ambient.is_chart:
            raise ContractError("terminal submanifolds need a chart manifold")
        self.ambient = ambient
        self.immersion = immersion
        self.dim = int(param_dim)
        self._locate = locate
        self.fd_step = fd_step

    def locate(self, q):
        if self._locate is not None:
            return np.atleast_1d(np.asarray(self._locate(q), dtype=float))
        q = np.asarray(q, dtype=float)
        if self.dim == 0:
            return np.zeros(0)
        # a few starts per parameter; a single start can sit on a stationary point
        grid = np.linspace(-3.0, 3.0, 7) if self.dim <= 2 else np.array([0.0])
        starts = np.stack(np.meshgrid(*[grid] * self.dim, indexing="ij"), -1).reshape(-1, self.dim)
        best = None
        for s0 in starts:
            fit = least_squares(lambda s: self.ambient.position_defect(self.immersion(s), q), s0)
            if best is None or fit.cost < best.cost:
                best = fit
        return best.x

    def distance(self, q) -> float:
        """Chart-coordinate distance from ``q`` to S."""
        s = self.locate(q)
        return float(np.linalg.norm(self.ambient.position_defect(self.immersion(s), q)))

    def tangent_basis(self, q) -> np.ndarray:
        """``(m, d)`` chart components of the tangent vectors of S at ``q``."""
        s = self.locate(q)
        h = self.fd_step
        cols = []
        for a in range(self.dim):
            e = np.zeros(self.dim)
            e[a] = h
            cols.append(self.ambient.position_defect(self.immersion(s + e), self.immersion(s - e)) / (2 * h))
        return np.array(cols).reshape(self.dim, self.ambient.dim)

    def normal_basis(self, q) -> np.ndarray:
        return normal_basis(self.ambient, q, self.tangent_basis(q))


class Circle(Submanifold):
    """Circle ``|z - center| = radius`` in the Euclidean plane."""

    def __init__(self, ambient, center, radius: float):
        if ambient.dim != 2 or ambient.name != "euclidean":
            raise ContractError("Circle is defined in the Euclidean plane only")
        if not radius > 0:
            raise ContractError("circle radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        super().__init__(ambient, self._point, 1, locate=self._angle)

    def _point(self, s):
        s = np.asarray(s, dtype=float)[..., 0]
        return self.center + self.radius * np.stack([np.cos(s), np.sin(s)], axis=-1)

    def _angle(self, q):
        d = np.asarray(q, dtype=float) - self.center
        return np.arctan2(d[1], d[0])

    def tangent_basis(self, q):
        s = self._angle(q)
        return np.array([[-np.sin(s), np.cos(s)]])

    def distance(self, q):
        return abs(float(np.linalg.norm(np.asarray(q, dtype=float) - self.center)) - self.radius)


def normal_basis(manifold, q, tangents) -> np.ndarray:
    """Metric-orthonormal complement of ``tangents`` at ``q`` by Gram-Schmidt."""
    d = manifold.dim
    q = np.asarray(q, dtype=float)
    basis = [np.asarray(t, dtype=float) for t in tangents]
    if len(basis) > d:
        raise IllPosedError("more tangent vectors than the ambient dimension")
    ortho = []
    for i, v in enumerate(basis + list(np.eye(d))):
        w = v.copy()
        for u in ortho:
            w = w - manifold.inner(q, w, u) * u
        n = np.sqrt(manifold.inner(q, w, w))
        if n > 1e-9:
            ortho.append(w / n)
        elif i < len(basis):
            raise IllPosedError("tangent vectors of the submanifold are degenerate")
        if len(ortho) == d:
            break
    return np.array(ortho[len(basis):]).reshape(d - len(basis), d)


@dataclass(frozen=True)
class Waypoint:
    """Pinned position at time ``t`` plus either a fixed velocity or ``tangent_to``."""

    t: float
    position: np.ndarray
    velocity: np.ndarray | None = None
    tangent_to: Submanifold | None = None

    def __post_init__(self):
        if (self.velocity is None) == (self.tangent_to is None):
            raise IllPosedError(f"waypoint at t={self.t}: give exactly one of a velocity or a submanifold")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.velocity is not None:
            object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


@dataclass(frozen=True)
class BoundarySpec:
    """Waypoint chain of one agent."""

    manifold: object
    waypoints: tuple = field(default_factory=tuple)
    on_tol: float = 1e-10

    def __post_init__(self):
        M = self.manifold
        wps = tuple(self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        if len(wps) < 2:
            raise IllPosedError("an agent needs at least an initial and a final waypoint")
        times = np.array([w.t for w in wps], dtype=float)
        if times[0] != 0.0:
            raise IllPosedError("the first waypoint must be at t = 0")
        if np.any(np.diff(times) <= 0):
            raise IllPosedError("waypoint times must be strictly increasing")
        for i, w in enumerate(wps):
            q = M.check_point(w.position)
            if q.shape != M.point_shape:
                raise IllPosedError(f"waypoint {i}: position shape {q.shape}, expected {M.point_shape}")
            if w.velocity is not None and w.velocity.shape != (M.dim,):
                excess = w.velocity.size - M.dim
                what = "excess" if excess > 0 else "missing"
                raise IllPosedError(f"waypoint {i}: {abs(excess)} {what} velocity component(s)")
            if w.tangent_to is not None:
                if i != len(wps) - 1:
                    raise IllPosedError("tangency to a submanifold is only supported at the final waypoint")
                if w.tangent_to.ambient != M:
                    raise IllPosedError("terminal submanifold lives on a different manifold")
                if w.tangent_to.distance(q) > self.on_tol:
                    raise IllPosedError(f"terminal position is not on the submanifold "
                                        f"(distance {w.tangent_to.distance(q):.3e})")

    @property
    def times(self) -> np.ndarray:
        return np.array([w.t for w in self.waypoints])

    def terminal_frames(self, index: int):
        """``(normals, tangents)`` at the target of waypoint ``index`` (``None`` if velocity is fixed)."""
        w = self.waypoints[index]
        if w.tangent_to is None:
            return None
        tang = w.tangent_to.tangent_basis(w.position)
        return normal_basis(self.manifold, w.position, tang), tang


def waypoint_rows(manifold, waypoint: Waypoint, q, x1, x2, frames=None) -> np.ndarray:
    """Boundary rows at one waypoint; batched over leading axes of ``q, x1, x2``.

    Always ``2 * dim`` rows: the position defect, then the velocity block.
    """
    pos = manifold.position_defect(q, waypoint.position)
    if waypoint.tangent_to is None:
        vel = x1 - waypoint.velocity
    else:
        if frames is None:
            tang = waypoint.tangent_to.tangent_basis(waypoint.position)
            frames = (normal_basis(manifold, waypoint.position, tang), tang)
        normals, tang = frames
        g = manifold.metric_tensor(waypoint.position)
        vel = np.concatenate([x1 @ (normals @ g).T, x2 @ (tang @ g).T], axis=-1)
    return np.concatenate([pos, vel], axis=-1)


def row_labels(manifold, waypoint: Waypoint) -> list:
    d = manifold.dim
    labels = [f"position[{i}]" for i in range(d)]
    if waypoint.tangent_to is None:
        labels += [f"velocity[{i}]" for i in range(d)]
    else:
        m = waypoint.tangent_to.dim
        labels += [f"velocity.normal[{a}]" for a in range(d - m)]
        labels += [f"accel.tangent[{b}]" for b in range(m)]
    return labels


def boundary_residual(specs: list, traj) -> list:
    """Row vectors per agent and waypoint, read off a trajectory with jets.

    The start of segment ``k`` is waypoint ``k``; the last waypoint is read at
    the end of the last segment.
    """
    M = traj.manifold
    out = []
    for a, spec in enumerate(specs):
        if len(spec.waypoints) != len(traj.segments) + 1:
            raise IllPosedError(f"agent {a}: {len(spec.waypoints)} waypoints for {len(traj.segments)} segments")
        rows = []
        for k, w in enumerate(spec.waypoints):
            seg, idx = (traj.segments[k], 0) if k < len(traj.segments) else (traj.segments[-1], -1)
            d2 = seg.jets[idx, a, 0] if seg.jets is not None else np.zeros(M.dim)
            rows.append(waypoint_rows(M, w, seg.q[idx, a], seg.vel[idx, a], d2, spec.terminal_frames(k)))
        out.append(rows)
    return out
