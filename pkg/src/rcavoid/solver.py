"""Shooting solver for the coupled boundary value problem, and the verifier.

Segments between consecutive waypoints are independent once positions and
velocities are pinned at the waypoints, so each segment is solved on its
own: the unknowns are the covariant acceleration and jerk of every agent at
the segment start, the residual is the stack of boundary rows at the
segment end. Newton uses a forward-difference Jacobian whose columns are
integrated together as one vectorized batch, and the potential strength is
ramped from 0 to its nominal value.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lie
from ._numerics import RK_TABLEAUS, polar, rk_step
from .boundary import boundary_residual, waypoint_rows
from .dynamics import chart_rhs, el_residual_array, fourth_derivative, lie_rhs_array
from .errors import (CollisionGuardError, ContinuationStallError, ContractError, IllPosedError,
                     NonConvergenceError)
from .functional import Segment, Trajectory, evaluate_J, fd_jets, velocities_from_positions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    n_mesh: int = 200
    tol: float = 1e-10
    max_iter: int = 40
    damping: float = 0.5
    max_backtracks: int = 12
    sigma_steps: int = 10
    max_halvings: int = 8
    integrator_order: int = 6
    fd_step: float = 1e-7
    el_tol: float = 1e-5
    bc_tol: float = 1e-6
    kin_tol: float = 1e-6
    fd_width: int = 11

    def __post_init__(self):
        if self.n_mesh < 8 or self.n_mesh % 2:
            raise ContractError("n_mesh must be even and at least 8")
        if not self.tol >= 1e-12:
            raise ContractError("Newton tolerance must be >= 1e-12")
        if self.fd_width < 5 or self.fd_width % 2 == 0 or self.fd_width > self.n_mesh + 1:
            raise ContractError("fd_width must be odd, at least 5, and fit in a segment")
        if not 0.0 < self.damping < 1.0:
            raise ContractError("damping must lie in (0, 1)")
        if self.integrator_order not in RK_TABLEAUS:
            raise ContractError(f"integrator_order must be one of {sorted(RK_TABLEAUS)}")
        for name in ("max_iter", "max_backtracks", "sigma_steps", "fd_step", "el_tol", "bc_tol", "kin_tol"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")


@dataclass
class ResidualReport:
    el_residual: list
    boundary: list
    junction_d2: list
    junction_d3: list
    min_distance: float
    min_distance_time: float
    min_distance_pair: tuple
    J: float
    kinematic_defect: float
    manifold_defect: float
    el_residual_ends: list = field(default_factory=list)
    el_tol: float = 1e-5
    bc_tol: float = 1e-6
    kin_tol: float = 1e-6
    solver: dict = field(default_factory=dict)

    @property
    def max_el(self) -> float:
        return max(self.el_residual)

    @property
    def max_boundary(self) -> float:
        return max(max(b) for b in self.boundary)

    @property
    def ok(self) -> bool:
        return (self.max_el < self.el_tol and self.max_boundary < self.bc_tol
                and self.kinematic_defect < self.kin_tol and self.min_distance > 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["min_distance_pair"] = list(self.min_distance_pair)
        d["ok"] = self.ok
        return d

    def table(self) -> str:
        lines = [f"{'quantity':<28}{'value':>14}{'threshold':>12}"]
        for a, r in enumerate(self.el_residual):
            lines.append(f"{f'EL residual agent {a}':<28}{r:>14.3e}{self.el_tol:>12.1e}")
        for a, r in enumerate(self.el_residual_ends):
            lines.append(f"{f'EL at segment ends {a}':<28}{r:>14.3e}{'(info)':>12}")
        for a, rows in enumerate(self.boundary):
            lines.append(f"{f'boundary agent {a}':<28}{max(rows):>14.3e}{self.bc_tol:>12.1e}")
        for k, (j2, j3) in enumerate(zip(self.junction_d2, self.junction_d3)):
            lines.append(f"{f'junction {k} D2 / D3':<28}{max(j2):>14.3e}{max(j3):>12.3e}")
        lines.append(f"{'kinematic defect':<28}{self.kinematic_defect:>14.3e}{self.kin_tol:>12.1e}")
        lines.append(f"{'manifold defect':<28}{self.manifold_defect:>14.3e}")
        pair = f"{self.min_distance_pair[0]}-{self.min_distance_pair[1]}" if self.min_distance_pair else "-"
        lines.append(f"{'min distance':<28}{self.min_distance:>14.6g}   t={self.min_distance_time:.4g} pair {pair}")
        lines.append(f"{'J':<28}{self.J:>14.10g}")
        lines.append(f"{'status':<28}{'ok' if self.ok else 'FAIL':>14}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# state-space backends


class _ChartBackend:
    """State ``(..., n, 4, d)``: position, velocity, D2, D3 in chart components."""

    def __init__(self, manifold):
        self.M = manifold

    def initial(self, q0, v0, U):
        B, n = U.shape[:2]
        Y = np.empty((B, n, 4, self.M.dim))
        Y[:, :, 0] = q0
        Y[:, :, 1] = v0
        Y[:, :, 2:] = U
        return Y

    def rhs(self, params, Y):
        return chart_rhs(self.M, params, Y, check=False)

    def project(self, Y):
        return Y

    def observe(self, Y):
        return Y[..., 0, :], Y[..., 1, :], Y[..., 2, :]

    def samples(self, params, Ys):
        q, x1, x2, x3 = (Ys[..., i, :] for i in range(4))
        x4, _ = fourth_derivative(self.M, params, q, x1, x2, check=True)
        return q, x1, np.stack([x2, x3, x4], axis=-2)


class _LieBackend:
    """State ``(..., n, 6, 3)``: rotation rows, then body v, v', v''."""

    def __init__(self, manifold):
        self.M = manifold
        self.inertia = None if np.allclose(manifold.inertia, np.eye(3)) else manifold.inertia

    def initial(self, q0, v0, U):
        B, n = U.shape[:2]
        v = np.broadcast_to(v0, (B, n, 3))
        v1, v2 = lie.body_derivatives(v, U[:, :, 0], U[:, :, 1], self.inertia)
        return np.concatenate([np.broadcast_to(q0, (B, n, 3, 3)), np.stack([v, v1, v2], axis=-2)], axis=-2)

    def rhs(self, params, S):
        return lie_rhs_array(params, S, self.inertia, check=False)

    def project(self, S):
        out = S.copy()
        out[..., 0:3, :] = polar(S[..., 0:3, :])
        return out

    def observe(self, S):
        v = S[..., 3, :]
        d2, _ = lie.covariant_jets(v, S[..., 4, :], S[..., 5, :], inertia=self.inertia)
        return S[..., 0:3, :], v, d2

    def samples(self, params, Ss):
        dS, _ = lie_rhs_array(params, Ss, self.inertia, check=True)
        v, v1, v2 = Ss[..., 3, :], Ss[..., 4, :], Ss[..., 5, :]
        jets = lie.covariant_jets(v, v1, v2, dS[..., 5, :], inertia=self.inertia)
        return Ss[..., 0:3, :], v, np.stack(jets, axis=-2)


def backend_for(manifold):
    return _ChartBackend(manifold) if manifold.is_chart else _LieBackend(manifold)


@dataclass
class _Guard:
    d2: np.ndarray
    t: np.ndarray
    pair: np.ndarray

    @classmethod
    def empty(cls, B):
        return cls(np.full(B, np.inf), np.zeros(B), np.zeros((B, 2), dtype=int))

    def update(self, d2, t):
        B, n = d2.shape[0], d2.shape[-1]
        flat = d2.reshape(B, n * n)
        flat = np.where(np.isnan(flat), -np.inf, flat)
        idx = np.argmin(flat, axis=1)
        val = flat[np.arange(B), idx]
        better = val < self.d2
        self.d2 = np.where(better, val, self.d2)
        self.t = np.where(better, t, self.t)
        self.pair[better] = np.stack([idx // n, idx % n], axis=1)[better]


def integrate(backend, params, Y0, t0, t1, n_steps, record=False, order=6):
    """Fixed-step explicit Runge-Kutta over ``[t0, t1]`` for a batch of states.

    Returns the final state, the per-member closest approach (``_Guard``),
    and with ``record`` the states at all ``n_steps + 1`` mesh points.
    """
    h = (t1 - t0) / n_steps
    Y = Y0
    guard = _Guard.empty(Y.shape[0])
    states = [Y] if record else None
    f = lambda y: backend.rhs(params, y)  # noqa: E731
    with np.errstate(all="ignore"):
        for i in range(n_steps):
            Y, d2 = rk_step(f, Y, h, order)
            guard.update(d2, t0 + i * h)
            Y = backend.project(Y)
            if record:
                states.append(Y)
        _, d2 = backend.rhs(params, Y)
        guard.update(d2, t1)
    return Y, guard, (np.stack(states, axis=1) if record else None)


def flow(manifold, params, q0, v0, d2, d3, t0: float, t1: float, n_steps: int = 200,
         order: int = 6) -> Segment:
    """Integrate the EL system forward from given jets; returns the sampled segment.

    ``d2, d3`` are the covariant acceleration and jerk of every agent, in
    chart components on chart manifolds and body components on SO(3).
    """
    backend = backend_for(manifold)
    U = np.stack([np.asarray(d2, dtype=float), np.asarray(d3, dtype=float)], axis=-2)[None]
    _, _, Ys = integrate(backend, params, backend.initial(np.asarray(q0, dtype=float),
                                                          np.asarray(v0, dtype=float), U),
                         t0, t1, n_steps, record=True, order=order)
    q, vel, jets = backend.samples(params, Ys[0])
    return Segment(np.linspace(t0, t1, n_steps + 1), q, vel, jets)


# ---------------------------------------------------------------------------
# Newton and continuation


@dataclass
class NewtonResult:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool


class _SegmentProblem:
    def __init__(self, scenario, k, cfg):
        self.M = scenario.manifold
        self.backend = backend_for(self.M)
        self.cfg = cfg
        self.agents = scenario.agents
        self.n = len(self.agents)
        self.d = self.M.dim
        starts = [a.waypoints[k] for a in self.agents]
        self.ends = [a.waypoints[k + 1] for a in self.agents]
        self.frames = [a.terminal_frames(k + 1) for a in self.agents]
        self.t0, self.t1 = starts[0].t, self.ends[0].t
        self.q0 = np.stack([w.position for w in starts])
        self.v0 = np.stack([w.velocity for w in starts])
        self.eps = scenario.params.potential.epsilon_min

    @property
    def n_unknowns(self):
        return self.n * 2 * self.d

    def start_state(self, u):
        U = np.asarray(u).reshape(-1, self.n, 2, self.d)
        return self.backend.initial(self.q0, self.v0, U)

    def residual(self, params, u):
        Y, guard, _ = integrate(self.backend, params, self.start_state(u), self.t0, self.t1, self.cfg.n_mesh,
                                  order=self.cfg.integrator_order)
        q, x1, x2 = self.backend.observe(Y)
        with np.errstate(all="ignore"):
            rows = [waypoint_rows(self.M, w, q[:, a], x1[:, a], x2[:, a], self.frames[a])
                    for a, w in enumerate(self.ends)]
        F = np.concatenate(rows, axis=-1)
        if F.shape[-1] != self.n_unknowns:
            raise IllPosedError(f"{F.shape[-1]} boundary rows for {self.n_unknowns} unknowns")
        F[~np.all(np.isfinite(F), axis=-1)] = np.inf
        return F, guard

    def guard_error(self, guard, i=0):
        d = float(np.sqrt(max(guard.d2[i], 0.0)))
        pair = tuple(int(p) for p in sorted(guard.pair[i]))
        return CollisionGuardError(
            f"agents {pair[0]} and {pair[1]} come within distance {d:.4g} at t={guard.t[i]:.4g}, "
            f"below the collision guard sqrt(epsilon_min)={np.sqrt(self.eps):.3g}",
            value=float(guard.d2[i]), time=float(guard.t[i]), pair=pair)

    def linearize(self, params, u):
        """Residual, forward-difference Jacobian and guard at ``u``, in one batch."""
        steps = self.cfg.fd_step * np.maximum(1.0, np.abs(u))
        F, guard = self.residual(params, np.vstack([u, u + np.diag(steps)]))
        with np.errstate(invalid="ignore"):
            Jac = ((F[1:] - F[0]) / steps[:, None]).T
        return F[0], Jac, guard.d2[0] >= self.eps, guard

    def newton(self, params, u0, guard_on):
        """Damped Newton with Armijo backtracking.

        The Jacobian at the full-step point is built in the same batch as
        the full-step residual, so an accepted full step costs one pass.
        """
        cfg = self.cfg
        u = np.array(u0, dtype=float)
        F0, Jac, safe, g0 = self.linearize(params, u)
        if guard_on and not safe:
            raise self.guard_error(g0)
        best = NewtonResult(u.copy(), float(np.max(np.abs(F0))), 0, False)
        for it in range(1, cfg.max_iter + 1):
            norm = float(np.max(np.abs(F0)))
            if not np.isfinite(norm):
                break
            if norm < cfg.tol:
                return NewtonResult(u, norm, it - 1, True)
            if not np.all(np.isfinite(Jac)):
                break
            delta = np.linalg.lstsq(Jac, -F0, rcond=None)[0]
            phi0 = float(F0 @ F0)
            Ft, Jt, safe, _ = self.linearize(params, u + delta)
            if np.isfinite(Ft @ Ft) and Ft @ Ft <= (1.0 - 1e-4) * phi0 and (safe or not guard_on):
                u, F0, Jac = u + delta, Ft, Jt
            else:
                lams = cfg.damping ** np.arange(1, cfg.max_backtracks + 1)
                Fb, gb = self.residual(params, u[None] + lams[:, None] * delta)
                phib = np.sum(Fb * Fb, axis=-1)
                okay = np.isfinite(phib) & (phib <= (1.0 - 1e-4 * lams) * phi0)
                if guard_on:
                    okay &= gb.d2 >= self.eps
                if not np.any(okay):
                    log.debug("line search failed at iteration %d (residual %.3e)", it, norm)
                    break
                u = u + lams[int(np.argmax(okay))] * delta
                F0, Jac, _, _ = self.linearize(params, u)
            res = float(np.max(np.abs(F0)))
            if res < best.residual:
                best = NewtonResult(u.copy(), res, it, False)
        norm = float(np.max(np.abs(F0)))
        if norm < cfg.tol:
            return NewtonResult(u, norm, cfg.max_iter, True)
        return best

    def continuation(self, params):
        """Solve at sigma = 0, then ramp the potential scale to 1."""
        cfg = self.cfg
        ladder = []
        res = self.newton(params.with_sigma(0.0), np.zeros(self.n_unknowns), guard_on=False)
        if not res.converged:
            return res, 0.0, ladder
        total = res.iterations
        ladder.append((0.0, res.residual))
        if self.n == 1 or params.potential.sigma == 0.0:
            return self.polish(params, NewtonResult(res.u, res.residual, total, True)), 1.0, ladder
        base = 1.0 / cfg.sigma_steps
        step, s = base, 0.0
        prev = None
        while s < 1.0:
            s_next = min(1.0, s + step)
            if 1.0 - s_next < 1e-12:
                s_next = 1.0
            guess = res.u
            if prev is not None:
                # secant predictor along the continuation path
                guess = res.u + (s_next - s) / (s - prev[0]) * (res.u - prev[1])
            try:
                trial = self.newton(params.with_sigma(s_next), guess, guard_on=True)
            except CollisionGuardError:
                if guess is res.u:
                    raise
                trial = self.newton(params.with_sigma(s_next), res.u, guard_on=True)
            total += trial.iterations
            if trial.converged:
                prev = (s, res.u)
                s, res = s_next, trial
                ladder.append((s, trial.residual))
                step = min(base, 2.0 * step)
                continue
            step *= 0.5
            if step < base * 0.5 ** cfg.max_halvings:
                raise ContinuationStallError(
                    f"continuation stalled at sigma scale {s:.4g} (residual {trial.residual:.3e})")
        return self.polish(params, NewtonResult(res.u, res.residual, total, True)), s, ladder

    def polish(self, params, res, max_steps: int = 4):
        """Extra full Newton steps past ``tol`` while the residual keeps falling.

        Shrinks the gap between a segment's integrated end and the pinned
        waypoint to roundoff, which matters once samples are differentiated.
        """
        u, norm, its = res.u, res.residual, res.iterations
        for _ in range(max_steps):
            F, Jac, _, _ = self.linearize(params, u)
            if not np.all(np.isfinite(Jac)):
                break
            trial = u + np.linalg.lstsq(Jac, -F, rcond=None)[0]
            Ft, _ = self.residual(params, trial[None])
            nt = float(np.max(np.abs(Ft[0])))
            if not nt < 0.5 * norm:
                break
            u, norm, its = trial, nt, its + 1
        return NewtonResult(u, norm, its, res.converged)

    def sample(self, params, u):
        Y, _, Ys = integrate(self.backend, params, self.start_state(u[None]), self.t0, self.t1,
                             self.cfg.n_mesh, record=True, order=self.cfg.integrator_order)
        q, vel, jets = self.backend.samples(params, Ys[0])
        t = np.linspace(self.t0, self.t1, self.cfg.n_mesh + 1)
        return Segment(t, q, vel, jets)


def _config(scenario, config):
    if config is not None:
        return config
    return getattr(scenario, "solver", None) or SolverConfig()


def check_scenario(scenario):
    times = [tuple(a.times) for a in scenario.agents]
    if not scenario.agents:
        raise IllPosedError("scenario has no agents")
    if any(t != times[0] for t in times):
        raise IllPosedError("all agents must share the same waypoint times")
    for a in scenario.agents:
        if a.manifold != scenario.manifold:
            raise IllPosedError("agent boundary data lives on a different manifold")
        for w in a.waypoints[:-1]:
            if w.velocity is None:
                raise IllPosedError("only the final waypoint may leave the velocity free")


def solve(scenario, config: SolverConfig | None = None):
    """Solve the scenario; returns ``(Trajectory, ResidualReport)``.

    Raises ``CollisionGuardError`` when an iterate with positive potential
    strength violates the guard, ``NonConvergenceError`` (with the best
    iterate and its report attached) when Newton fails.
    """
    cfg = _config(scenario, config)
    check_scenario(scenario)
    params = scenario.params
    started = time.perf_counter()
    n_seg = len(scenario.agents[0].waypoints) - 1
    segs, info, failure = [], [], None
    for k in range(n_seg):
        prob = _SegmentProblem(scenario, k, cfg)
        try:
            res, reached, ladder = prob.continuation(params)
        except ContinuationStallError as exc:
            failure = str(exc)
            res, reached, ladder = None, None, []
        if res is None or not res.converged:
            failure = failure or f"Newton did not converge on segment {k} (residual {res.residual:.3e})"
            u = res.u if res is not None else np.zeros(prob.n_unknowns)
            sigma = reached if reached is not None else 0.0
            segs.append(prob.sample(params.with_sigma(sigma) if sigma < 1.0 else params, u))
            info.append({"segment": k, "iterations": getattr(res, "iterations", 0),
                         "residual": getattr(res, "residual", float("inf")), "sigma_reached": sigma})
            continue
        segs.append(prob.sample(params, res.u))
        info.append({"segment": k, "iterations": res.iterations, "residual": res.residual,
                     "sigma_reached": reached, "ladder_sigma": [s for s, _ in ladder]})
    traj = Trajectory(scenario.manifold, segs)
    meta = {"converged": failure is None, "seconds": time.perf_counter() - started, "segments": info}
    try:
        report = verify(scenario, traj, cfg)
    except CollisionGuardError:
        report = None
    if report is not None:
        report.solver = meta
    if failure is not None:
        raise NonConvergenceError(failure, trajectory=traj, report=report)
    return traj, report


def verify(scenario, traj: Trajectory, config: SolverConfig | None = None) -> ResidualReport:
    """Check the necessary conditions on a sampled trajectory.

    Covariant derivatives are rebuilt from the velocity samples by finite
    differences, independently of any jets stored on the trajectory. The EL
    sup-norm covers every sample except the two ends of each segment, where
    the stencils are fully one-sided extrapolations; those values are
    reported separately in ``el_residual_ends`` and do not gate ``ok``.
    """
    cfg = _config(scenario, config)
    M = traj.manifold
    params = scenario.params
    n = traj.n_agents
    if n != len(scenario.agents):
        raise IllPosedError(f"trajectory has {n} agents, scenario has {len(scenario.agents)}")
    if len(traj.segments) != len(scenario.agents[0].waypoints) - 1:
        raise IllPosedError("trajectory segments do not match the scenario's waypoints")
    for seg, (a, b) in zip(traj.segments, zip(scenario.agents[0].times[:-1], scenario.agents[0].times[1:])):
        if abs(seg.t[0] - a) > 1e-9 or abs(seg.t[-1] - b) > 1e-9:
            raise IllPosedError("trajectory segment times do not match the scenario's waypoints")
    fd = Trajectory(M, [Segment(s.t, s.q, s.vel, fd_jets(M, s, cfg.fd_width)) for s in traj.segments])

    el = np.zeros(n)
    el_ends = np.zeros(n)
    kin = 0.0
    mdef = 0.0
    best = (np.inf, 0.0, ())
    for seg in fd.segments:
        d2, d3, d4 = seg.jets[:, :, 0], seg.jets[:, :, 1], seg.jets[:, :, 2]
        r = el_residual_array(M, params, seg.q, seg.vel, d2, d4, check=True)
        rn = np.sqrt(np.maximum(M.inner(seg.q, r, r), 0.0))
        el = np.maximum(el, np.max(rn[1:-1], axis=0))
        el_ends = np.maximum(el_ends, np.maximum(rn[0], rn[-1]))
        kin = max(kin, float(np.max(np.abs(velocities_from_positions(M, seg.t, seg.q, cfg.fd_width) - seg.vel))))
        mdef = max(mdef, _manifold_defect(M, seg.q))
        for i in range(n):
            for j in range(i + 1, n):
                dd = M.dist_sq(seg.q[:, i], seg.q[:, j], check=False)
                m = int(np.argmin(dd))
                if dd[m] < best[0]:
                    best = (float(dd[m]), float(seg.t[m]), (i, j))
    bnd = [[float(np.max(np.abs(r))) for r in rows] for rows in boundary_residual(scenario.agents, fd)]
    j2, j3 = [], []
    for a, b in zip(fd.segments[:-1], fd.segments[1:]):
        j2.append([float(M.norm(a.q[-1, i], a.jets[-1, i, 0] - b.jets[0, i, 0])) for i in range(n)])
        j3.append([float(M.norm(a.q[-1, i], a.jets[-1, i, 1] - b.jets[0, i, 1])) for i in range(n)])
    return ResidualReport(
        el_residual=[float(x) for x in el], el_residual_ends=[float(x) for x in el_ends],
        boundary=bnd, junction_d2=j2, junction_d3=j3,
        min_distance=float(np.sqrt(best[0])) if np.isfinite(best[0]) else float("inf"),
        min_distance_time=best[1], min_distance_pair=best[2],
        J=evaluate_J(params, fd), kinematic_defect=kin, manifold_defect=mdef,
        el_tol=cfg.el_tol, bc_tol=cfg.bc_tol, kin_tol=cfg.kin_tol)


def _manifold_defect(M, q):
    if M.name == "sphere2":
        return float(np.max(np.abs(np.linalg.norm(M.embed(q), axis=-1) - 1.0)))
    if M.name == "so3":
        return float(np.max(np.abs(np.swapaxes(q, -1, -2) @ q - np.eye(3))))
    return 0.0
