"""Small numerical helpers: finite-difference stencils, RK4, Simpson."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

from .errors import ContractError


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], order: int) -> np.ndarray:
    """Weights ``w`` with ``sum(w[j] * f(x + offsets[j] h)) ~ h**order f^(order)(x)``."""
    s = np.asarray(offsets, dtype=float)
    n = len(s)
    if order >= n:
        raise ValueError("stencil too small for derivative order")
    V = np.array([s**p / factorial(p) for p in range(n)])
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(V, rhs)


def differentiate(y: np.ndarray, h: float, order: int = 1, width: int = 9) -> np.ndarray:
    """Derivative of uniformly sampled data along axis 0.

    Centered stencils of ``width`` points in the interior, shifted (same width)
    near both ends, so the formal accuracy is ``h**(width - order)`` everywhere.
    """
    y = np.asarray(y)
    m = y.shape[0]
    if m < width:
        raise ContractError(f"need at least {width} samples, got {m}")
    half = width // 2
    out = np.empty_like(y, dtype=np.result_type(y, float))
    scale = h**order

    w = fd_weights(tuple(range(-half, width - half)), order)
    interior = slice(half, m - (width - half) + 1)
    acc = 0.0
    for j, wj in enumerate(w):
        acc = acc + wj * y[j: m - width + 1 + j]
    out[interior] = acc / scale

    edge = list(range(half)) + list(range(m - (width - half) + 1, m))
    for i in edge:
        start = min(max(i - half, 0), m - width)
        offs = tuple(range(start - i, start - i + width))
        wi = fd_weights(offs, order)
        out[i] = np.tensordot(wi, y[start: start + width], axes=(0, 0)) / scale
    return out


def _tableau(rows, b, c):
    return tuple(tuple(float(x) for x in r) for r in rows), tuple(map(float, b)), tuple(map(float, c))


# explicit Runge-Kutta tableaus (A rows, weights b, nodes c) keyed by order
RK_TABLEAUS = {
    4: _tableau([[], [1 / 2], [0, 1 / 2], [0, 0, 1]],
                [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0, 1 / 2, 1 / 2, 1]),
    # Butcher's seven-stage sixth-order method
    6: _tableau([[], [1 / 3], [0, 2 / 3], [1 / 12, 1 / 3, -1 / 12],
                 [-1 / 16, 9 / 8, -3 / 16, -3 / 8], [0, 9 / 8, -3 / 8, -3 / 4, 1 / 2],
                 [9 / 44, -9 / 11, 63 / 44, 18 / 11, 0, -16 / 11]],
                [11 / 120, 0, 27 / 40, 27 / 40, -4 / 15, -4 / 15, 11 / 120],
                [0, 1 / 3, 2 / 3, 1 / 3, 1 / 2, 1 / 2, 1]),
}


def rk_step(f, y, h, order=4):
    """One explicit RK step of ``y' = f(y)[0]``; returns ``(y_new, aux of the first stage)``.

    ``f`` returns ``(dy, aux)``; ``aux`` from the first stage describes the
    state at the start of the step.
    """
    A, b, _ = RK_TABLEAUS[order]
    ks = []
    aux0 = None
    for i, row in enumerate(A):
        yi = y
        for a, k in zip(row, ks):
            if a:
                yi = yi + (h * a) * k
        k, aux = f(yi)
        if i == 0:
            aux0 = aux
        ks.append(k)
    out = y
    for bi, k in zip(b, ks):
        if bi:
            out = out + (h * bi) * k
    return out, aux0


def rk4_step(f, t, y, h, project=None):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if project is not None:
        y = project(y)
    return y


def simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson rule along axis 0; needs an even number of intervals."""
    n = values.shape[0] - 1
    if n < 2 or n % 2:
        raise ContractError(f"Simpson quadrature needs an even number of intervals >= 2, got {n}")
    return (h / 3.0) * (values[0] + values[-1]
                        + 4.0 * values[1:-1:2].sum(axis=0)
                        + 2.0 * values[2:-1:2].sum(axis=0))


def polar(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (orthogonal polar factor), batched over leading axes."""
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt
