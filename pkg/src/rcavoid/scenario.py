"""Scenario files (TOML) and trajectory CSV records.

Scenario grammar::

    name = "r2_two_agents"
    manifold = "euclidean"        # euclidean | sphere2 | so3
    dim = 2                       # euclidean only
    inertia = [1.0, 1.0, 1.0]     # so3 only, optional

    [params]
    k = 0.0
    potential = "reciprocal"      # reciprocal | scaled_reciprocal
    sigma = 1.0
    epsilon_min = 1e-6            # squared distance

    [solver]                      # optional SolverConfig overrides
    n_mesh = 200

    [[agents]]
    [[agents.waypoints]]
    t = 0.0                       # seconds
    position = [0.0, 0.0]
    velocity = [1.0, 0.0]
    [[agents.waypoints]]
    t = 2.0
    position = [0.0, 2.0]
    tangent_to = { kind = "circle", center = [0.2, 2.0], radius = 0.2 }

Angles are radians. On ``sphere2`` a waypoint gives either chart
coordinates ``position = [theta, phi]`` / ``velocity = [dtheta, dphi]`` or
``embedded_position`` / ``embedded_velocity`` in R^3; embedded data is
normalized onto the unit sphere and its tangent plane. On ``so3``,
``position`` is a 3x3 rotation matrix (nested rows) or ``rotvec = [..]``,
and ``velocity`` holds body-frame components.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import lie
from ._numerics import polar
from .boundary import BoundarySpec, Circle, Waypoint
from .dynamics import ElParams
from .errors import ContractError, ScenarioError
from .functional import Segment, Trajectory
from .manifolds import Euclidean, SO3Symmetric, Sphere2
from .potential import PotentialSpec
from .solver import SolverConfig

BUNDLED = ("r2_two_agents", "s2_two_agents", "so3_two_agents")


@dataclass(frozen=True)
class Scenario:
    name: str
    manifold: object
    agents: tuple
    params: ElParams = field(default_factory=ElParams)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise ScenarioError("scenario needs at least one agent")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def breaks(self) -> np.ndarray:
        return self.agents[0].times

    def with_overrides(self, k=None, sigma_steps=None) -> "Scenario":
        sc = self
        if k is not None:
            sc = replace(sc, params=ElParams(float(k), sc.params.potential))
        if sigma_steps is not None:
            sc = replace(sc, solver=replace(sc.solver, sigma_steps=int(sigma_steps)))
        return sc


# ---------------------------------------------------------------------------
# loading


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("rcavoid") / "scenarios" / f"{name}.toml"))


def resolve(path_or_name) -> Path:
    """A file path, or the name of a bundled scenario."""
    p = Path(path_or_name)
    if p.exists():
        return p
    if str(path_or_name) in BUNDLED:
        return bundled_path(str(path_or_name))
    raise ScenarioError(f"no scenario file or bundled scenario named {str(path_or_name)!r}")


def load_scenario(path) -> Scenario:
    path = resolve(path)
    text = path.read_text()
    return loads_scenario(text)


def _line_of(text: str, pattern: str, nth: int = 0):
    hits = [i + 1 for i, ln in enumerate(text.splitlines()) if re.match(pattern, ln.strip())]
    return hits[nth] if nth < len(hits) else None


def loads_scenario(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(f"parse error: {exc}", int(m.group(1)) if m else None) from None
    try:
        return _build(doc, text)
    except ScenarioError:
        raise
    except (ContractError, ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from None


def _vec(value, what, line):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{what} must be numeric", line) from None
    if not np.all(np.isfinite(a)):
        raise ScenarioError(f"{what} must be finite", line)
    return a


def _manifold(doc, text):
    kind = doc.get("manifold")
    line = _line_of(text, r"manifold\s*=")
    if kind == "euclidean":
        dim = doc.get("dim", 2)
        if not isinstance(dim, int) or dim < 1:
            raise ScenarioError("dim must be a positive integer", _line_of(text, r"dim\s*="))
        return Euclidean(dim)
    if kind == "sphere2":
        return Sphere2()
    if kind == "so3":
        inertia = doc.get("inertia")
        return SO3Symmetric(inertia=None if inertia is None else _vec(inertia, "inertia", None))
    raise ScenarioError(f"unknown manifold {kind!r} (expected euclidean, sphere2 or so3)", line)


def _waypoint(M, w, line):
    t = float(w.get("t", np.nan))
    if not np.isfinite(t):
        raise ScenarioError("waypoint needs a finite time t", line)
    known = {"t", "position", "velocity", "tangent_to", "embedded_position", "embedded_velocity", "rotvec"}
    extra = set(w) - known
    if extra:
        raise ScenarioError(f"unknown waypoint key(s): {', '.join(sorted(extra))}", line)
    if M.name == "sphere2" and "embedded_position" in w:
        x = _vec(w["embedded_position"], "embedded_position", line)
        if x.shape != (3,) or np.linalg.norm(x) == 0:
            raise ScenarioError("embedded_position must be a nonzero 3-vector", line)
        x = x / np.linalg.norm(x)
        q = M.from_embedded(x)
    elif M.name == "so3" and "rotvec" in w:
        q = lie.exp_so3(_vec(w["rotvec"], "rotvec", line))
    elif "position" in w:
        q = _vec(w["position"], "position", line)
        if M.name == "so3" and q.shape == (9,):
            q = q.reshape(3, 3)
    else:
        raise ScenarioError("waypoint needs a position", line)
    if q.shape != M.point_shape:
        raise ScenarioError(f"position has shape {q.shape}, expected {M.point_shape}", line)
    try:
        M.check_point(q)
    except ContractError as exc:
        raise ScenarioError(str(exc), line) from None

    vel = None
    if M.name == "sphere2" and "embedded_velocity" in w:
        V = _vec(w["embedded_velocity"], "embedded_velocity", line)
        x = M.embed(q)
        vel = M.tangent_from_embedded(q, V - np.dot(V, x) * x)
    elif "velocity" in w:
        vel = _vec(w["velocity"], "velocity", line)
        if vel.shape != (M.dim,):
            raise ScenarioError(f"velocity needs {M.dim} components, got {vel.size}", line)
    sub = None
    if "tangent_to" in w:
        spec = w["tangent_to"]
        if spec.get("kind") != "circle":
            raise ScenarioError(f"unknown submanifold kind {spec.get('kind')!r} (expected circle)", line)
        try:
            sub = Circle(M, _vec(spec["center"], "center", line), float(spec["radius"]))
        except ContractError as exc:
            raise ScenarioError(str(exc), line) from None
    return Waypoint(t, q, vel, sub)


def _build(doc, text) -> Scenario:
    known = {"name", "manifold", "dim", "inertia", "params", "solver", "agents"}
    extra = set(doc) - known
    if extra:
        raise ScenarioError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioError("scenario needs a non-empty string name", _line_of(text, r"name\s*="))
    M = _manifold(doc, text)

    p = dict(doc.get("params", {}))
    pline = _line_of(text, r"\[params\]")
    try:
        pot = PotentialSpec(kind=p.pop("potential", "reciprocal"), sigma=float(p.pop("sigma", 1.0)),
                            epsilon_min=float(p.pop("epsilon_min", 1e-6)))
        params = ElParams(k=float(p.pop("k", 0.0)), potential=pot)
    except ContractError as exc:
        raise ScenarioError(str(exc), pline) from None
    if p:
        raise ScenarioError(f"unknown params key(s): {', '.join(sorted(p))}", pline)

    s = dict(doc.get("solver", {}))
    names = {f.name for f in fields(SolverConfig)}
    if set(s) - names:
        raise ScenarioError(f"unknown solver key(s): {', '.join(sorted(set(s) - names))}",
                            _line_of(text, r"\[solver\]"))
    try:
        solver = SolverConfig(**s)
    except (ContractError, TypeError) as exc:
        raise ScenarioError(str(exc), _line_of(text, r"\[solver\]")) from None

    agents = []
    raw = doc.get("agents", [])
    if not raw:
        raise ScenarioError("scenario needs at least one [[agents]] entry")
    wp_index = 0
    for a, entry in enumerate(raw):
        aline = _line_of(text, r"\[\[agents\]\]", a)
        wps = []
        for w in entry.get("waypoints", []):
            wps.append(_waypoint(M, w, _line_of(text, r"\[\[agents\.waypoints\]\]", wp_index)))
            wp_index += 1
        try:
            agents.append(BoundarySpec(M, tuple(wps)))
        except ContractError as exc:
            raise ScenarioError(f"agent {a}: {exc}", aline) from None
    times = [tuple(ag.times) for ag in agents]
    if any(t != times[0] for t in times):
        raise ScenarioError("all agents must share the same waypoint times")
    for a, ag in enumerate(agents):
        if any(w.velocity is None for w in ag.waypoints[:-1]):
            raise ScenarioError(f"agent {a}: only the final waypoint may leave the velocity free",
                                _line_of(text, r"\[\[agents\]\]", a))
    return Scenario(name, M, tuple(agents), params, solver)


# ---------------------------------------------------------------------------
# canonical writer


def _floats(a):
    a = np.asarray(a, dtype=float)
    return [_floats(x) for x in a] if a.ndim > 1 else [float(x) for x in a]


def scenario_to_dict(sc: Scenario) -> dict:
    M = sc.manifold
    doc = {"name": sc.name, "manifold": M.name}
    if M.name == "euclidean":
        doc["dim"] = M.dim
    if M.name == "so3" and not np.array_equal(M.inertia, np.eye(3)):
        doc["inertia"] = _floats(M.inertia)
    doc["params"] = {"k": float(sc.params.k), "potential": sc.params.potential.kind,
                     "sigma": float(sc.params.potential.sigma),
                     "epsilon_min": float(sc.params.potential.epsilon_min)}
    default = SolverConfig()
    over = {f.name: getattr(sc.solver, f.name) for f in fields(SolverConfig)
            if getattr(sc.solver, f.name) != getattr(default, f.name)}
    if over:
        doc["solver"] = over
    agents = []
    for ag in sc.agents:
        wps = []
        for w in ag.waypoints:
            d = {"t": float(w.t), "position": _floats(w.position)}
            if w.velocity is not None:
                d["velocity"] = _floats(w.velocity)
            else:
                sub = w.tangent_to
                d["tangent_to"] = {"kind": "circle", "center": _floats(sub.center), "radius": sub.radius}
            wps.append(d)
        agents.append({"waypoints": wps})
    doc["agents"] = agents
    return doc


def dumps_scenario(sc: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(sc))


def dump_scenario(sc: Scenario, path):
    Path(path).write_text(dumps_scenario(sc))


# ---------------------------------------------------------------------------
# trajectory records


def _layout(M):
    d = M.dim
    m = 0 if M.name == "euclidean" else M.embed_dim
    return d, m


def trajectory_rows(traj: Trajectory) -> tuple:
    """``(header, rows)`` with one row per (sample, agent), sorted by (t, agent).

    Junction samples appear once, taken from the segment that starts there.
    """
    M = traj.manifold
    d, m = _layout(M)
    n = traj.n_agents
    header = ["t", "agent"] + [f"q{i + 1}" for i in range(d)] + [f"e{i + 1}" for i in range(m)] \
        + [f"v{i + 1}" for i in range(d)] + ["min_dist"]
    blocks = []
    for k, seg in enumerate(traj.segments):
        last = k == len(traj.segments) - 1
        sl = slice(None) if last else slice(0, -1)
        t, q, vel = seg.t[sl], seg.q[sl], seg.vel[sl]
        md = np.full(len(t), np.inf)
        for i in range(n):
            for j in range(i + 1, n):
                md = np.minimum(md, np.sqrt(M.dist_sq(q[:, i], q[:, j], check=False)))
        for a in range(n):
            cols = [t[:, None], np.full((len(t), 1), a), M.chart_coords(q[:, a]).reshape(len(t), d)]
            if m:
                cols.append(M.embed(q[:, a]).reshape(len(t), m))
            cols += [vel[:, a], md[:, None]]
            blocks.append((t, a, np.hstack(cols)))
    rows = np.vstack([b for _, _, b in blocks])
    order = np.lexsort((rows[:, 1], rows[:, 0]))
    return header, rows[order]


def write_trajectory(traj: Trajectory, path):
    header, rows = trajectory_rows(traj)
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def write_agent_files(traj: Trajectory, out_dir) -> list:
    """Per-agent plot files: time and embedded (or Euclidean) coordinates."""
    M = traj.manifold
    header, rows = trajectory_rows(traj)
    d, m = _layout(M)
    paths = []
    for a in range(traj.n_agents):
        sel = rows[rows[:, 1] == a]
        coords = sel[:, 2 + d: 2 + d + m] if m else sel[:, 2: 2 + d]
        names = header[2 + d: 2 + d + m] if m else header[2: 2 + d]
        p = Path(out_dir) / f"agent_{a}.csv"
        np.savetxt(p, np.column_stack([sel[:, 0], coords]), delimiter=",",
                   header=",".join(["t"] + names), comments="", fmt="%.17g")
        paths.append(p)
    return paths


def read_table(path):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if header[:2] != ["t", "agent"] or header[-1] != "min_dist":
        raise ScenarioError(f"{path}: not a trajectory record (bad header)", 1)
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return header, rows


def read_trajectory(path, manifold, breaks=None) -> Trajectory:
    """Rebuild a Trajectory; ``breaks`` (waypoint times) split it into segments."""
    header, rows = read_table(path)
    M = manifold
    d, m = _layout(M)
    if len(header) != 2 + 2 * d + m + 1:
        raise ContractError(f"record has {len(header)} columns, expected {2 + 2 * d + m + 1} for {M.name}")
    agents = np.unique(rows[:, 1]).astype(int)
    n = len(agents)
    if not np.array_equal(agents, np.arange(n)):
        raise ContractError("agent ids must be 0..n-1")
    t = rows[rows[:, 1] == 0, 0]
    if rows.shape[0] != n * len(t):
        raise ContractError("every agent needs one row per time sample")
    rows = rows[np.lexsort((rows[:, 1], rows[:, 0]))].reshape(len(t), n, -1)
    if M.name == "so3":
        q = polar(rows[:, :, 2 + d: 2 + d + 9].reshape(len(t), n, 3, 3))
    else:
        q = rows[:, :, 2: 2 + d]
    vel = rows[:, :, 2 + d + m: 2 + 2 * d + m]
    if breaks is None:
        breaks = [t[0], t[-1]]
    segs = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        i0 = int(np.argmin(np.abs(t - a)))
        i1 = int(np.argmin(np.abs(t - b)))
        if abs(t[i0] - a) > 1e-9 or abs(t[i1] - b) > 1e-9:
            raise ContractError(f"record has no sample at waypoint time {a if abs(t[i0] - a) > 1e-9 else b}")
        segs.append(Segment(t[i0: i1 + 1], q[i0: i1 + 1], vel[i0: i1 + 1]))
    return Trajectory(M, segs)
