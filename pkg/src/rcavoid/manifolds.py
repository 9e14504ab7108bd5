"""Chart-based Riemannian geometry for the supported configuration spaces.

Every manifold works on plain numpy arrays with arbitrary leading batch
axes: points have shape ``(..., *point_shape)`` and tangent vectors
``(..., dim)`` in the manifold's frame (coordinate frame for charts, body
frame for SO(3)). ``ManifoldPoint`` / ``TangentVector`` and the module-level
functions below are the checked, single-point API on top of that.

Sign convention for curvature: ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
- nabla_[X,Y] Z``, so the unit sphere has ``R(X, Y)Z = <Y,Z>X - <X,Z>Y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errors import ContractError, InjectivityError, SingularChartError

COMPLEX_STEP = 1e-30


class Manifold:
    """Interface shared by all configuration spaces."""

    name: str = ""
    dim: int = 0
    point_shape: tuple = ()
    embed_dim: int = 0
    is_chart = True
    flat = False

    fd_step: float = 1e-5

    # -- points ------------------------------------------------------------
    def check_point(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[q.ndim - len(self.point_shape):] != self.point_shape:
            raise ContractError(f"{self.name}: point shape {q.shape} does not end with {self.point_shape}")
        if not np.all(np.isfinite(q)):
            raise ContractError(f"{self.name}: non-finite point coordinates")
        return q

    def embed(self, q):
        return np.asarray(q, dtype=float)

    def chart_coords(self, q):
        return np.asarray(q, dtype=float)

    def position_defect(self, q, target):
        """Small vector that vanishes iff ``q == target``."""
        return np.asarray(q, dtype=float) - np.asarray(target, dtype=float)

    def position_rate(self, q, vel):
        """Time derivative of the stored point given frame velocity components."""
        return vel

    def project(self, q):
        return q

    # -- metric ------------------------------------------------------------
    def metric_tensor(self, q):
        raise NotImplementedError

    def inner(self, q, u, v):
        g = self.metric_tensor(q)
        return np.einsum("...i,...ij,...j->...", u, g, v)

    def norm(self, q, u):
        return np.sqrt(np.maximum(self.inner(q, u, u), 0.0))

    # -- connection --------------------------------------------------------
    def christoffel(self, q):
        """Connection coefficients ``G[..., k, i, j]`` in the manifold's frame."""
        raise NotImplementedError

    def connection(self, q, u, w):
        """``Gamma(u, w)^k = G^k_ij u^i w^j``: the frame correction in ``DW/dt``."""
        G = self.christoffel(q)
        return np.einsum("...kij,...i,...j->...k", G, u, w)

    def christoffel_derivative(self, q):
        """``dG[..., m, k, i, j] = d_m G^k_ij`` by central differences."""
        q = np.asarray(q, dtype=float)
        h = self.fd_step
        eye = np.eye(self.dim)
        qp = q[..., None, :] + h * eye
        qm = q[..., None, :] - h * eye
        return (self.christoffel(qp) - self.christoffel(qm)) / (2.0 * h)

    def riemann(self, q):
        """``Rm[..., l, i, j, k]`` with ``R(d_i, d_j) d_k = Rm^l_ijk d_l``."""
        G = self.christoffel(q)
        dG = self.christoffel_derivative(q)
        term = np.einsum("...lim,...mjk->...lijk", G, G)
        return (np.einsum("...iljk->...lijk", dG) - np.einsum("...jlik->...lijk", dG)
                + term - np.swapaxes(term, -3, -2))

    def curvature(self, q, X, Y, Z):
        Rm = self.riemann(q)
        return np.einsum("...lijk,...i,...j,...k->...l", Rm, X, Y, Z)

    # -- exponential / logarithm --------------------------------------------
    def exp(self, q, v):
        raise NotImplementedError

    def log(self, q, p, check=True):
        raise NotImplementedError

    def dist_sq(self, q, p, check=True):
        v = self.log(q, p, check=check)
        return self.inner(q, v, v)


class ChartManifold(Manifold):
    """Coordinate chart with a metric tensor; Levi-Civita symbols from it."""

    def metric_derivative(self, q):
        """``dg[..., m, i, j] = d_m g_ij`` by complex-step differentiation."""
        q = np.asarray(q, dtype=float)
        eye = np.eye(self.dim)
        qc = q[..., None, :] + 1j * COMPLEX_STEP * eye
        return self.metric_tensor(qc).imag / COMPLEX_STEP

    def christoffel(self, q):
        g = self.metric_tensor(q)
        dg = self.metric_derivative(q)
        # lower[l, i, j] = (d_i g_lj + d_j g_li - d_l g_ij) / 2
        lower = 0.5 * (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
        return np.einsum("...kl,...lij->...kij", np.linalg.inv(g), lower)


class Euclidean(ChartManifold):
    name = "euclidean"
    flat = True

    def __init__(self, dim: int = 2):
        if int(dim) < 1:
            raise ContractError("Euclidean dimension must be >= 1")
        self.dim = int(dim)
        self.point_shape = (self.dim,)
        self.embed_dim = 0

    def __repr__(self):
        return f"Euclidean({self.dim})"

    def __eq__(self, other):
        return isinstance(other, Euclidean) and other.dim == self.dim

    def __hash__(self):
        return hash(("euclidean", self.dim))

    def metric_tensor(self, q):
        q = np.asarray(q)
        return np.broadcast_to(np.eye(self.dim), q.shape[:-1] + (self.dim, self.dim))

    def inner(self, q, u, v):
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def christoffel(self, q):
        q = np.asarray(q)
        return np.zeros(q.shape[:-1] + (self.dim,) * 3)

    def connection(self, q, u, w):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(w)))

    def curvature(self, q, X, Y, Z):
        return np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y), np.shape(Z)))

    def exp(self, q, v):
        return np.asarray(q, dtype=float) + np.asarray(v, dtype=float)

    def log(self, q, p, check=True):
        return np.asarray(p, dtype=float) - np.asarray(q, dtype=float)

    def dist_sq(self, q, p, check=True):
        d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
        return np.sum(d * d, axis=-1)


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


class Sphere2(ChartManifold):
    """Unit 2-sphere in the chart ``x = (sin t sin p, sin t cos p, cos t)``.

    Chart coordinates are ``(theta, phi)``; ``theta`` must stay at least
    ``pole_margin`` away from the poles. ``injectivity_margin`` bounds
    exp/log arguments away from the cut locus (geodesic length ``pi``).
    """

    name = "sphere2"
    dim = 2
    point_shape = (2,)
    embed_dim = 3

    def __init__(self, pole_margin: float = 1e-3, injectivity_margin: float = 1e-2):
        self.pole_margin = float(pole_margin)
        self.injectivity_margin = float(injectivity_margin)

    def __repr__(self):
        return f"Sphere2(pole_margin={self.pole_margin}, injectivity_margin={self.injectivity_margin})"

    def __eq__(self, other):
        return isinstance(other, Sphere2)

    def __hash__(self):
        return hash("sphere2")

    def check_point(self, q):
        q = super().check_point(q)
        th = q[..., 0]
        if np.any(th <= self.pole_margin) or np.any(th >= np.pi - self.pole_margin):
            raise SingularChartError(f"sphere2: theta={th} within {self.pole_margin} of a pole")
        return q

    def metric_tensor(self, q):
        q = np.asarray(q)
        s = np.sin(q[..., 0])
        g = np.zeros(q.shape[:-1] + (2, 2), dtype=q.dtype)
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = s * s
        return g

    def inner(self, q, u, v):
        s = np.sin(np.asarray(q)[..., 0])
        return u[..., 0] * v[..., 0] + s * s * u[..., 1] * v[..., 1]

    def christoffel(self, q):
        q = np.asarray(q, dtype=float)
        th = q[..., 0]
        G = np.zeros(q.shape[:-1] + (2, 2, 2))
        G[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        G[..., 1, 0, 1] = G[..., 1, 1, 0] = np.cos(th) / np.sin(th)
        return G

    def connection(self, q, u, w):
        th = np.asarray(q)[..., 0]
        s, c = np.sin(th), np.cos(th)
        out = np.empty(np.broadcast_shapes(np.shape(u), np.shape(w)))
        out[..., 0] = -s * c * u[..., 1] * w[..., 1]
        out[..., 1] = (c / s) * (u[..., 0] * w[..., 1] + u[..., 1] * w[..., 0])
        return out

    # embedding helpers
    def embed(self, q):
        q = np.asarray(q, dtype=float)
        th, ph = q[..., 0], q[..., 1]
        st = np.sin(th)
        x = np.empty(q.shape[:-1] + (3,))
        x[..., 0] = st * np.sin(ph)
        x[..., 1] = st * np.cos(ph)
        x[..., 2] = np.cos(th)
        return x

    def frame(self, q):
        """Embedded images of the coordinate vectors ``d/dtheta``, ``d/dphi``."""
        q = np.asarray(q, dtype=float)
        th, ph = q[..., 0], q[..., 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        e_th = np.empty(q.shape[:-1] + (3,))
        e_ph = np.empty(q.shape[:-1] + (3,))
        e_th[..., 0], e_th[..., 1], e_th[..., 2] = ct * sp, ct * cp, -st
        e_ph[..., 0], e_ph[..., 1], e_ph[..., 2] = st * cp, -st * sp, 0.0
        return e_th, e_ph

    def from_embedded(self, x, near_phi=None):
        x = np.asarray(x, dtype=float)
        x = x / np.linalg.norm(x, axis=-1, keepdims=True)
        th = np.arccos(np.clip(x[..., 2], -1.0, 1.0))
        ph = np.arctan2(x[..., 0], x[..., 1])
        if near_phi is not None:
            ph = near_phi + _wrap(ph - near_phi)
        return np.stack([th, ph], axis=-1)

    def tangent_to_embedded(self, q, u):
        e_th, e_ph = self.frame(q)
        return u[..., 0:1] * e_th + u[..., 1:2] * e_ph

    def tangent_from_embedded(self, q, V):
        e_th, e_ph = self.frame(q)
        s2 = np.sin(np.asarray(q)[..., 0]) ** 2
        out = np.empty(np.shape(V)[:-1] + (2,))
        out[..., 0] = np.einsum("...i,...i->...", V, e_th)
        out[..., 1] = np.einsum("...i,...i->...", V, e_ph) / s2
        return out

    def position_defect(self, q, target):
        d = np.asarray(q, dtype=float) - np.asarray(target, dtype=float)
        return np.stack([d[..., 0], _wrap(d[..., 1])], axis=-1)

    def exp(self, q, v):
        q = np.asarray(q, dtype=float)
        x = self.embed(q)
        V = self.tangent_to_embedded(q, np.asarray(v, dtype=float))
        n = np.linalg.norm(V, axis=-1, keepdims=True)
        if np.any(n > np.pi - self.injectivity_margin):
            raise InjectivityError(f"sphere2 exp: |v|={np.max(n):.6g} beyond injectivity guard")
        small = n < 1e-12
        ns = np.where(small, 1.0, n)
        y = np.cos(n) * x + np.where(small, 1.0, np.sin(ns) / ns) * V
        return self.from_embedded(y, near_phi=q[..., 1])

    def _log_embedded(self, x, y, check):
        c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
        th = np.arccos(c)
        if check and np.any(th > np.pi - self.injectivity_margin):
            raise InjectivityError(f"sphere2 log: points {np.max(th):.6g} rad apart, beyond cut-locus guard")
        w = y - c[..., None] * x
        wn = np.linalg.norm(w, axis=-1)
        # th / sin(th) with sin(th) = |w|; series near th = 0
        small = th < 1e-6
        ratio = np.where(small, 1.0 + th**2 / 6.0, th / np.where(small, 1.0, np.maximum(wn, 1e-300)))
        return ratio[..., None] * w

    def log(self, q, p, check=True):
        q = np.asarray(q, dtype=float)
        V = self._log_embedded(self.embed(q), self.embed(p), check)
        return self.tangent_from_embedded(q, V)

    def dist_sq(self, q, p, check=True):
        x, y = self.embed(q), self.embed(p)
        c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
        th = np.arccos(c)
        if check and np.any(th > np.pi - self.injectivity_margin):
            raise InjectivityError("sphere2 distance: pair beyond cut-locus guard")
        return th * th


class SO3Symmetric(Manifold):
    """SO(3) with a left-invariant metric, points as rotation matrices.

    Tangent vectors are body-frame components ``v`` (``R' = R hat(v)``), so
    ``christoffel`` returns frame connection coefficients of the left-invariant
    frame, which are *not* symmetric in the lower indices.
    """

    name = "so3"
    dim = 3
    point_shape = (3, 3)
    embed_dim = 9
    is_chart = False

    def __init__(self, inertia=None, injectivity_margin: float = 1e-2, ortho_tol: float = 1e-10):
        self.inertia = np.eye(3) if inertia is None else np.asarray(
            np.diag(inertia) if np.ndim(inertia) == 1 else inertia, dtype=float)
        self.injectivity_margin = float(injectivity_margin)
        self.ortho_tol = ortho_tol

    def __repr__(self):
        return "SO3Symmetric()"

    def __eq__(self, other):
        return isinstance(other, SO3Symmetric) and np.array_equal(other.inertia, self.inertia)

    def __hash__(self):
        return hash("so3")

    def check_point(self, q):
        R = super().check_point(q)
        err = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max()
        if err > self.ortho_tol or np.any(np.abs(np.linalg.det(R) - 1.0) > self.ortho_tol):
            raise ContractError(f"so3: matrix is not a rotation (orthogonality error {err:.3g})")
        return R

    def embed(self, q):
        R = np.asarray(q, dtype=float)
        return R.reshape(R.shape[:-2] + (9,))

    def chart_coords(self, q):
        return lie.log_so3(q, margin=None)

    def position_rate(self, q, vel):
        return q @ lie.hat(vel)

    def project(self, q):
        from ._numerics import polar
        return polar(q)

    def position_defect(self, q, target):
        return lie.log_so3(np.swapaxes(target, -1, -2) @ q, margin=None)

    def metric_tensor(self, q):
        q = np.asarray(q)
        return np.broadcast_to(self.inertia, q.shape[:-2] + (3, 3))

    def inner(self, q, u, v):
        return np.einsum("...i,ij,...j->...", u, self.inertia, v)

    def christoffel(self, q):
        q = np.asarray(q)
        eye = np.eye(3)
        G = np.empty((3, 3, 3))
        for i in range(3):
            for j in range(3):
                G[:, i, j] = lie.reduced_connection(eye[i], eye[j], self.inertia)
        return np.broadcast_to(G, q.shape[:-2] + (3, 3, 3))

    def connection(self, q, u, w):
        return lie.reduced_connection(u, w, self.inertia)

    def curvature(self, q, X, Y, Z):
        return lie.reduced_curvature(X, Y, Z, self.inertia)

    def exp(self, q, v):
        v = np.asarray(v, dtype=float)
        if np.any(np.linalg.norm(v, axis=-1) > np.pi - self.injectivity_margin):
            raise InjectivityError("so3 exp: tangent vector beyond injectivity guard")
        return np.asarray(q, dtype=float) @ lie.exp_so3(v)

    def log(self, q, p, check=True):
        rel = np.swapaxes(np.asarray(q, dtype=float), -1, -2) @ np.asarray(p, dtype=float)
        return lie.log_so3(rel, margin=self.injectivity_margin if check else None)


class SO3ExpChart(ChartManifold):
    """SO(3) in exponential coordinates ``R = base exp(hat q)``.

    The metric is pulled back from the left-invariant one, ``g = Jr^T I Jr``,
    and everything else (Christoffels, curvature) comes from the generic
    chart machinery. Used as an independent check on the Lie-group path.
    """

    name = "so3chart"
    dim = 3
    point_shape = (3,)
    embed_dim = 9

    def __init__(self, base=None, inertia=None, chart_margin: float = 0.1, injectivity_margin: float = 1e-2):
        self.base = np.eye(3) if base is None else np.asarray(base, dtype=float)
        self.inertia = np.eye(3) if inertia is None else np.asarray(inertia, dtype=float)
        self.chart_margin = chart_margin
        self.injectivity_margin = injectivity_margin

    def check_point(self, q):
        q = super().check_point(q)
        if np.any(np.linalg.norm(q, axis=-1) >= np.pi - self.chart_margin):
            raise SingularChartError("so3chart: rotation vector too close to the chart boundary")
        return q

    def rotation(self, q):
        return self.base @ lie.exp_so3(q)

    def from_rotation(self, R):
        return lie.log_so3(np.swapaxes(self.base, -1, -2) @ R, margin=self.chart_margin)

    def embed(self, q):
        R = self.rotation(q)
        return R.reshape(R.shape[:-2] + (9,))

    def to_body(self, q, u):
        return np.einsum("...ij,...j->...i", lie.right_jacobian(np.asarray(q, dtype=float)), u)

    def from_body(self, q, b):
        Jr = lie.right_jacobian(np.asarray(q, dtype=float))
        return np.linalg.solve(Jr, np.asarray(b, dtype=float)[..., None])[..., 0]

    def metric_tensor(self, q):
        Jr = lie.right_jacobian(q)
        return np.swapaxes(Jr, -1, -2) @ self.inertia @ Jr

    def position_defect(self, q, target):
        R, T = self.rotation(q), self.rotation(target)
        return lie.log_so3(np.swapaxes(T, -1, -2) @ R, margin=None)

    def exp(self, q, v):
        b = self.to_body(q, v)
        if np.any(np.linalg.norm(b, axis=-1) > np.pi - self.injectivity_margin):
            raise InjectivityError("so3chart exp: tangent vector beyond injectivity guard")
        return self.from_rotation(self.rotation(q) @ lie.exp_so3(b))

    def log(self, q, p, check=True):
        rel = np.swapaxes(self.rotation(q), -1, -2) @ self.rotation(p)
        b = lie.log_so3(rel, margin=self.injectivity_margin if check else None)
        return self.from_body(q, b)

    def dist_sq(self, q, p, check=True):
        rel = np.swapaxes(self.rotation(q), -1, -2) @ self.rotation(p)
        b = lie.log_so3(rel, margin=self.injectivity_margin if check else None)
        return np.einsum("...i,ij,...j->...", b, self.inertia, b)


def manifold_from_id(kind: str, dim: int | None = None, **options) -> Manifold:
    kind = kind.lower()
    if kind in ("euclidean", "r", "rn"):
        return Euclidean(2 if dim is None else dim)
    if kind in ("sphere2", "s2"):
        return Sphere2(**options)
    if kind in ("so3", "so3symmetric"):
        return SO3Symmetric(**options)
    raise ContractError(f"unknown manifold kind {kind!r} (expected euclidean, sphere2 or so3)")


# ---------------------------------------------------------------------------
# Checked single-point API


@dataclass(frozen=True)
class ManifoldPoint:
    manifold: Manifold
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if isinstance(self.manifold, SO3Symmetric) and c.shape == (9,):
            c = c.reshape(3, 3)
        object.__setattr__(self, "coords", self.manifold.check_point(c))


@dataclass(frozen=True)
class TangentVector:
    base: ManifoldPoint
    comps: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.comps, dtype=float)
        if c.shape != (self.base.manifold.dim,) or not np.all(np.isfinite(c)):
            raise ContractError(f"tangent components must be {self.base.manifold.dim} finite reals")
        object.__setattr__(self, "comps", c)


def _same_base(p: ManifoldPoint, *vs: TangentVector):
    for v in vs:
        if v.base.manifold != p.manifold or not np.array_equal(v.base.coords, p.coords):
            raise ContractError("tangent vector is not based at the given point")


def metric(p: ManifoldPoint, u: TangentVector, v: TangentVector) -> float:
    _same_base(p, u, v)
    return float(p.manifold.inner(p.coords, u.comps, v.comps))


def christoffel(p: ManifoldPoint) -> np.ndarray:
    return p.manifold.christoffel(p.coords)


def curvature(p: ManifoldPoint, X: TangentVector, Y: TangentVector, Z: TangentVector) -> TangentVector:
    _same_base(p, X, Y, Z)
    return TangentVector(p, p.manifold.curvature(p.coords, X.comps, Y.comps, Z.comps))


def exp_map(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    _same_base(p, v)
    return ManifoldPoint(p.manifold, p.manifold.exp(p.coords, v.comps))


def log_map(p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    if q.manifold != p.manifold:
        raise ContractError("points live on different manifolds")
    return TangentVector(p, p.manifold.log(p.coords, q.coords))


def distance_sq(p: ManifoldPoint, q: ManifoldPoint) -> float:
    if q.manifold != p.manifold:
        raise ContractError("points live on different manifolds")
    return float(p.manifold.dist_sq(p.coords, q.coords))
