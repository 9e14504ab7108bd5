"""SO(3) machinery for rigid bodies with a left-invariant metric.

Body velocities live in R^3 identified with so(3) through ``hat``. The
connection and curvature restricted to the Lie algebra are given for a
general diagonal-or-full inertia matrix; the symmetric body (identity
inertia) reduces them to ``v x z / 2`` and ``-(v x z) x w / 4``.

Covariant derivatives of a curve ``x(t)`` with body velocity ``v`` follow by
repeated use of ``D/dt (x u) = x (u' + conn(v, u))``:

    D2 = v' + conn(v, v)
    D3 = v'' + conn(v', v) + 2 conn(v, v') + conn(v, conn(v, v))
    D4 = v''' + conn(v'', v) + 3 conn(v', v') + 3 conn(v, v'')
         + conn(v', conn(v, v)) + 2 conn(v, conn(v', v))
         + 3 conn(v, conn(v, v')) + conn(v, conn(v, conn(v, v)))
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from ._numerics import polar, rk4_step
from .errors import ContractError, InjectivityError

_SMALL_ANGLE = 1e-4


def hat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(W: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    W = np.asarray(W)
    if tol is not None and np.any(np.abs(W + np.swapaxes(W, -1, -2)) > tol):
        raise ContractError("vee: matrix is not skew-symmetric")
    return np.stack([W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1)


def _skew_part(W):
    return 0.5 * np.stack([W[..., 2, 1] - W[..., 1, 2],
                           W[..., 0, 2] - W[..., 2, 0],
                           W[..., 1, 0] - W[..., 0, 1]], axis=-1)


def exp_so3(v: np.ndarray) -> np.ndarray:
    """Matrix exponential of ``hat(v)`` (Rodrigues)."""
    v = np.asarray(v, dtype=float)
    th2 = np.sum(v * v, axis=-1)[..., None, None]
    th = np.sqrt(th2)
    small = th < _SMALL_ANGLE
    ths = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0 + th2**2 / 120.0, np.sin(ths) / ths)
    b = np.where(small, 0.5 - th2 / 24.0 + th2**2 / 720.0, (1.0 - np.cos(ths)) / ths**2)
    K = hat(v)
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R: np.ndarray, margin: float = 1e-2) -> np.ndarray:
    """Rotation vector ``w`` with ``exp_so3(w) = R``.

    Raises InjectivityError when the rotation angle exceeds ``pi - margin``.
    """
    R = np.asarray(R, dtype=float)
    s = _skew_part(R)
    sin_th = np.linalg.norm(s, axis=-1)
    cos_th = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    th = np.arctan2(sin_th, cos_th)
    if margin is not None and np.any(th > np.pi - margin):
        raise InjectivityError(f"log_so3: rotation angle {np.max(th):.6g} beyond cut-locus guard")
    small = th < _SMALL_ANGLE
    ratio = np.where(small, 1.0 + th**2 / 6.0 + 7.0 * th**4 / 360.0,
                     th / np.where(small, 1.0, sin_th))
    return ratio[..., None] * s


def right_jacobian(q: np.ndarray) -> np.ndarray:
    """``Jr(q)`` with ``d/dt exp(hat q) = exp(hat q) hat(Jr(q) q')``.

    Written with analytic operations only so that complex-step
    differentiation works through it.
    """
    th2 = np.sum(q * q, axis=-1)[..., None, None]
    small = np.abs(th2) < 1e-6
    th2s = np.where(small, 1.0, th2)
    th = np.sqrt(th2s)
    a = np.where(small, 0.5 - th2 / 24.0 + th2**2 / 720.0, (1.0 - np.cos(th)) / th2s)
    b = np.where(small, 1.0 / 6.0 - th2 / 120.0 + th2**2 / 5040.0, (th - np.sin(th)) / (th2s * th))
    K = hat(q)
    return np.eye(3) - a * K + b * (K @ K)


def _inertia_matrix(inertia):
    if inertia is None:
        return None
    J = np.asarray(inertia, dtype=float)
    if J.ndim == 1:
        J = np.diag(J)
    if np.allclose(J, np.eye(3), rtol=0, atol=0):
        return None
    return J


def reduced_connection(v, z, inertia=None):
    """Levi-Civita connection of the left-invariant metric on so(3) ~ R^3."""
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    out = 0.5 * np.cross(v, z)
    J = _inertia_matrix(inertia)
    if J is not None:
        Jz = z @ J.T
        Jv = v @ J.T
        out = out + 0.5 * np.linalg.solve(J, (np.cross(v, Jz) + np.cross(z, Jv))[..., None])[..., 0]
    return out


def reduced_curvature(v, z, w, inertia=None):
    """Curvature on so(3): ``conn_v conn_z w - conn_z conn_v w - conn_[v,z] w``."""
    J = _inertia_matrix(inertia)
    if J is None:
        return -0.25 * np.cross(np.cross(v, z), w)
    c = lambda a, b: reduced_connection(a, b, J)  # noqa: E731
    return c(v, c(z, w)) - c(z, c(v, w)) - c(np.cross(v, z), w)


def covariant_jets(v, v1, v2, v3=None, inertia=None):
    """Body components of (D2x, D3x[, D4x]) from v and its time derivatives."""
    c = lambda a, b: reduced_connection(a, b, inertia)  # noqa: E731
    cvv = c(v, v)
    d2 = v1 + cvv
    d3 = v2 + c(v1, v) + 2.0 * c(v, v1) + c(v, cvv)
    if v3 is None:
        return d2, d3
    d4 = v3 + d4_tail(v, v1, v2, c, cvv)
    return d2, d3, d4


def d4_tail(v, v1, v2, c, cvv):
    return (c(v2, v) + 3.0 * c(v1, v1) + 3.0 * c(v, v2) + c(v1, cvv)
            + 2.0 * c(v, c(v1, v)) + 3.0 * c(v, c(v, v1)) + c(v, c(v, cvv)))


def body_derivatives(v, d2, d3, inertia=None):
    """Inverse of ``covariant_jets``: recover (v', v'') from (v, D2, D3)."""
    c = lambda a, b: reduced_connection(a, b, inertia)  # noqa: E731
    cvv = c(v, v)
    v1 = d2 - cvv
    v2 = d3 - c(v1, v) - 2.0 * c(v, v1) - c(v, cvv)
    return v1, v2


def reconstruct(R0, v, t, substeps: int = 1):
    """Integrate ``R' = R hat(v(t))`` on the mesh ``t``.

    ``v`` is either an array of body velocities sampled on ``t`` (shape
    ``(len(t), 3)``; interpolated by a cubic spline for RK stages) or a
    callable ``v(t)``. Classical RK4, polar re-orthonormalisation each step.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise ContractError("reconstruct: mesh must be strictly increasing")
    if callable(v):
        vf = v
    else:
        v = np.asarray(v, dtype=float)
        if v.shape != (len(t), 3):
            raise ContractError("reconstruct: velocity samples must have shape (len(t), 3)")
        vf = CubicSpline(t, v, axis=0)
    f = lambda s, R: R @ hat(np.asarray(vf(s)))  # noqa: E731
    out = np.empty((len(t), 3, 3))
    R = polar(np.asarray(R0, dtype=float))
    out[0] = R
    for i in range(len(t) - 1):
        h = (t[i + 1] - t[i]) / substeps
        s = t[i]
        for _ in range(substeps):
            R = rk4_step(f, s, R, h, project=polar)
            s += h
        out[i + 1] = R
    return out
