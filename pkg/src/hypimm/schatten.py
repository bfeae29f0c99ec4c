"""1-Schatten norm of linear maps from a plane into 3-space.

All maps are 3x2 real arrays whose columns are images of an orthonormal
source basis, written in an orthonormal target basis.  Besides the exact
norm this module carries the smooth regularisation ``q_eps``, its
directional derivative along post-composition by a nonnegative operator,
the self-adjoint / cross-product splitting of a linear immersion, and a
numerical probe of convexity along solutions of ``T'' = A T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class PolarParts:
    b: np.ndarray
    sigma: Optional[np.ndarray]


@dataclass(frozen=True)
class ASParts:
    a_part: np.ndarray
    v: np.ndarray


def _as_linmap(L) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.shape != (3, 2):
        raise ValueError(f"expected a 3x2 map, got shape {L.shape}")
    return L


def gram_det(L) -> np.ndarray:
    """``det(L^T L)`` as the squared cross product of the columns (no cancellation)."""
    L = np.asarray(L, dtype=float)
    c = np.cross(L[..., :, 0], L[..., :, 1])
    return np.sum(c * c, axis=-1)


def sqrtm_psd2(M: np.ndarray, det=None) -> np.ndarray:
    """Square root of a symmetric nonnegative 2x2 matrix (or a stack of them).

    Uses ``sqrt(M) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))``.
    ``det`` may be supplied when it is known more accurately than from
    the entries of ``M``.
    """
    M = np.asarray(M, dtype=float)
    if det is None:
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    det = np.clip(det, 0.0, None)
    s = np.sqrt(det)
    t = np.sqrt(np.clip(M[..., 0, 0] + M[..., 1, 1] + 2.0 * s, 0.0, None))
    eye = np.broadcast_to(np.eye(2), M.shape)
    out = M + s[..., None, None] * eye
    safe = np.where(t > 0, t, 1.0)
    return np.where((t > 0)[..., None, None], out / safe[..., None, None], 0.0)


def singular_values(L) -> tuple[float, float]:
    """Singular values ``(lambda1, lambda2)`` with ``lambda1 <= lambda2``."""
    L = _as_linmap(L)
    scale = float(np.abs(L).max())
    if scale == 0.0:
        return 0.0, 0.0
    if not 1e-100 < scale < 1e100:
        # keep the squared entries in range
        lo, hi = singular_values(L / scale)
        return lo * scale, hi * scale
    G = L.T @ L
    tr = G[0, 0] + G[1, 1]
    det = float(gram_det(L))
    disc = np.sqrt(max(tr * tr / 4.0 - det, 0.0))
    big = tr / 2.0 + disc
    small = max(det / big, 0.0) if big > 0 else 0.0
    return float(np.sqrt(small)), float(np.sqrt(max(big, 0.0)))


def polar_decompose(L) -> PolarParts:
    """Factor ``L = sigma @ b`` with ``b = sqrt(L^T L)``.

    ``sigma`` (orthonormal columns) is returned only when ``L`` has rank 2,
    judged by ``det b > 1e-12 (1 + |L|^2)``.
    """
    L = _as_linmap(L)
    det_g = gram_det(L)
    b = sqrtm_psd2(L.T @ L, det_g)
    det_b = np.sqrt(det_g)
    if det_b <= 1e-12 * (1.0 + np.sum(L * L)):
        return PolarParts(b=b, sigma=None)
    return PolarParts(b=b, sigma=L @ np.linalg.inv(b))


def schatten1(L) -> float:
    """Sum of the singular values of ``L``."""
    L = _as_linmap(L)
    scale = float(np.abs(L).max())
    if scale == 0.0:
        return 0.0
    # the norm is homogeneous, so rescale to keep the Gram entries in range
    return scale * q_eps(L / scale, 0.0)


def q_eps_gram(G, eps: float, det=None):
    """``q_eps`` expressed through the Gram matrix ``G = L^T L`` (stackable)."""
    G = np.asarray(G, dtype=float)
    e2 = eps * eps
    tr = G[..., 0, 0] + G[..., 1, 1]
    if det is None:
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    inner = np.clip(det + e2 * tr + e2 * e2, 0.0, None)
    return np.sqrt(np.clip(tr + 2.0 * e2 + 2.0 * np.sqrt(inner), 0.0, None))


def q_eps(L, eps: float) -> float:
    """Regularised norm ``tr sqrt(eps^2 I + L^T L)``; equals ``schatten1`` at 0."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    L = _as_linmap(L)
    return float(q_eps_gram(L.T @ L, eps, gram_det(L)))


def n_eps(t1, t2, eps: float):
    """``sqrt(eps^2 + t1^2) + sqrt(eps^2 + t2^2)``; ``q_eps`` in singular values."""
    return np.sqrt(eps * eps + np.square(t1)) + np.sqrt(eps * eps + np.square(t2))


def q_eps_directional_derivative(L, A, eps: float) -> float:
    """Derivative of ``t -> q_eps((I + t A) L)`` at ``t = 0``.

    ``A`` is a symmetric nonnegative 3x3 operator on the target.  At
    ``eps = 0`` the map must have rank 2, otherwise the derivative need not
    exist and ``ValueError`` is raised.
    """
    L = _as_linmap(L)
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ValueError("A must be 3x3")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    G = L.T @ L
    if eps == 0.0:
        s1, s2 = singular_values(L)
        if s1 <= 1e-12 * max(1.0, s2):
            raise ValueError("rank-deficient map at eps = 0: derivative undefined")
    P = eps * eps * np.eye(2) + G
    A_hat = 2.0 * L.T @ A @ L
    q = float(q_eps_gram(G, eps, gram_det(L)))
    det_p = float(gram_det(L)) + eps * eps * np.trace(G) + eps**4
    return float(
        (np.trace(A_hat) + np.sqrt(det_p) * np.trace(np.linalg.solve(P, A_hat))) / (2.0 * q)
    )


def _default_plane_basis(N: np.ndarray) -> np.ndarray:
    # right-handed (w1, w2, N)
    helper = np.array([1.0, 0.0, 0.0]) if abs(N[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    w2 = np.cross(N, helper)
    w2 /= np.linalg.norm(w2)
    w1 = np.cross(w2, N)
    return np.column_stack([w1, w2])


def as_decompose(L, N, w_basis: Optional[np.ndarray] = None) -> ASParts:
    """Split ``L: W -> V`` as ``A + v x .`` with ``A`` self-adjoint on ``W = N^perp``.

    ``L`` holds the images of an orthonormal basis ``(w1, w2)`` of ``W``;
    ``(w1, w2, N)`` is taken right-handed, which fixes the sign of ``v``.
    ``w_basis`` gives ``w1, w2`` as columns; by default it is
    ``(e1, e2)`` when ``N = e3`` and a right-handed completion otherwise.
    ``a_part`` is returned in the ``(w1, w2)`` basis, ``v`` in target
    coordinates.
    """
    L = _as_linmap(L)
    N = np.asarray(N, dtype=float)
    if abs(np.linalg.norm(N) - 1.0) > 1e-9:
        raise ValueError("N must be a unit vector")
    if w_basis is None:
        if np.allclose(N, [0.0, 0.0, 1.0], atol=1e-14):
            w_basis = np.eye(3)[:, :2]
        else:
            w_basis = _default_plane_basis(N)
    frame = np.column_stack([w_basis, N])
    if np.linalg.det(frame) < 0:
        raise ValueError("(w1, w2, N) must be right-handed")
    M = frame.T @ L  # coordinates in (w1, w2, N)
    v3 = 0.5 * (M[1, 0] - M[0, 1])
    v_local = np.array([M[2, 1], -M[2, 0], v3])
    a_part = 0.5 * (M[:2, :] + M[:2, :].T)
    return ASParts(a_part=a_part, v=frame @ v_local)


def as_reassemble(parts: ASParts, N, w_basis: Optional[np.ndarray] = None) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    if w_basis is None:
        w_basis = np.eye(3)[:, :2] if np.allclose(N, [0, 0, 1], atol=1e-14) else _default_plane_basis(N)
    cols = []
    for j in range(2):
        w = w_basis[:, j]
        cols.append(w_basis @ parts.a_part[:, j] + np.cross(parts.v, w))
    return np.column_stack(cols)


@dataclass(frozen=True)
class JacobiProbe:
    s: np.ndarray
    u: np.ndarray
    second_differences: np.ndarray
    T: np.ndarray


def _check_nonneg_sym(A: np.ndarray, s: float) -> None:
    if A.shape != (3, 3):
        raise ValueError("A(s) must be 3x3")
    if not np.allclose(A, A.T, atol=1e-12 * (1.0 + np.abs(A).max())):
        raise ValueError(f"A({s}) is not symmetric")
    if np.linalg.eigvalsh(0.5 * (A + A.T))[0] < -1e-12 * (1.0 + np.abs(A).max()):
        raise ValueError(f"A({s}) is not nonnegative")


def jacobi_convexity_probe(
    T0,
    Tdot0,
    A: Callable[[float], np.ndarray],
    grid,
    max_step: float = 1e-3,
) -> JacobiProbe:
    """Integrate ``T'' = A(s) T`` and sample ``u(s) = |T(s)|_1`` on ``grid``.

    Classical RK4 with a fixed step no larger than ``max_step``; ``grid``
    must be increasing and start at 0.
    """
    T0 = _as_linmap(T0)
    Tdot0 = _as_linmap(Tdot0)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing and start at 0")

    def rhs(s, y):
        T, Td = y
        As = np.asarray(A(s), dtype=float)
        return Td, As @ T

    for s in grid:
        _check_nonneg_sym(np.asarray(A(float(s)), dtype=float), float(s))

    y = (T0.copy(), Tdot0.copy())
    Ts = [T0.copy()]
    for s0, s1 in zip(grid[:-1], grid[1:]):
        n = int(np.ceil((s1 - s0) / max_step - 1e-12))
        h = (s1 - s0) / n
        s = s0
        for _ in range(n):
            k1 = rhs(s, y)
            k2 = rhs(s + h / 2, (y[0] + h / 2 * k1[0], y[1] + h / 2 * k1[1]))
            k3 = rhs(s + h / 2, (y[0] + h / 2 * k2[0], y[1] + h / 2 * k2[1]))
            k4 = rhs(s + h, (y[0] + h * k3[0], y[1] + h * k3[1]))
            y = (
                y[0] + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                y[1] + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            )
            s += h
        Ts.append(y[0].copy())
    u = np.array([schatten1(T) for T in Ts])
    second = u[:-2] - 2.0 * u[1:-1] + u[2:]
    return JacobiProbe(s=grid, u=u, second_differences=second, T=np.array(Ts))
