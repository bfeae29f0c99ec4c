"""Hyperboloid-model kernels for H^2 and H^3.

Points are 4-vectors ``x`` in Minkowski space R^{1,3} with
``<x, x> = -x0^2 + x1^2 + x2^2 + x3^2 = -1`` and ``x0 > 0``.  The
hyperbolic plane H^2 is the totally geodesic slice ``x3 = 0``.  Every
function broadcasts over leading axes.
"""

from __future__ import annotations

import numpy as np

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
ORIGIN = np.array([1.0, 0.0, 0.0, 0.0])
E3 = np.array([0.0, 0.0, 0.0, 1.0])


def minkowski(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def normalize_point(x):
    """Rescale onto the upper sheet ``<x,x> = -1``."""
    x = np.asarray(x, dtype=float)
    n = np.sqrt(np.clip(-minkowski(x, x), 1e-300, None))
    return x / n[..., None]


def project_tangent(x, v):
    """Minkowski-orthogonal projection of ``v`` onto ``T_x``."""
    return v + minkowski(x, v)[..., None] * x


def point_from_spatial(z):
    """Global chart ``z in R^3 -> (sqrt(1 + |z|^2), z)``."""
    z = np.asarray(z, dtype=float)
    x0 = np.sqrt(1.0 + np.sum(z * z, axis=-1))
    return np.concatenate([x0[..., None], z], axis=-1)


def distance(x, y):
    """Geodesic distance, computed from the Minkowski chord for accuracy."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    c = np.clip(minkowski(d, d), 0.0, None)
    return 2.0 * np.arcsinh(np.sqrt(c) / 2.0)


def tangent_norm(v):
    return np.sqrt(np.clip(minkowski(v, v), 0.0, None))


def exp_point(x, v):
    """Riemannian exponential ``cosh|v| x + sinh|v| v/|v|``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = tangent_norm(v)[..., None]
    small = n < 1e-8
    # sinh(n)/n with a series guard near 0
    shc = np.where(small, 1.0 + n * n / 6.0, np.sinh(n) / np.where(small, 1.0, n))
    out = np.cosh(n) * x + shc * v
    return normalize_point(out)


def log_point(x, y):
    """Inverse of ``exp_point``: the tangent vector at ``x`` pointing to ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = distance(x, y)[..., None]
    u = y + minkowski(x, y)[..., None] * x  # tangential part of y
    un = tangent_norm(u)[..., None]
    small = un < 1e-14
    scale = np.where(small, 1.0, d / np.where(small, 1.0, un))
    return np.where(small, 0.0, scale * u)


def parallel_transport(v, x, y):
    """Transport ``v in T_x`` to ``T_y`` along the geodesic from ``x`` to ``y``."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = minkowski(y, v) / (1.0 - minkowski(x, y))
    return v + coef[..., None] * (x + y)


def cross_product(x, u, v):
    """Oriented cross product in ``T_x H^3``.

    ``u x v`` is the tangent vector ``w`` with ``<w, z> = det[x, u, v, z]``.
    At the origin this is the Euclidean cross product on ``(x1, x2, x3)``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.max(np.abs(minkowski(x, u))) > 1e-8 or np.max(np.abs(minkowski(x, v))) > 1e-8:
        raise ValueError("u and v must be tangent at x")
    M = np.stack([x, u, v], axis=-2)  # (..., 3, 4)
    cof = np.empty(M.shape[:-2] + (4,))
    cols = [0, 1, 2, 3]
    for k in range(4):
        rest = [c for c in cols if c != k]
        cof[..., k] = (-1) ** (k + 3) * np.linalg.det(M[..., :, rest])
    # <w, z> = sum_k cof_k z_k  =>  w = eta cof
    cof[..., 0] *= -1.0
    return cof


def oriented_volume(x, u, v, w):
    return np.linalg.det(np.stack([x, u, v, w], axis=-1))


def retract_to_h2(x):
    """Nearest-point retraction onto the plane ``x3 = 0``."""
    x = np.asarray(x, dtype=float)
    y = x.copy()
    y[..., 3] = 0.0
    return normalize_point(y)


def frame_at(x):
    """Orthonormal tangent frame at ``x``: parallel transport of ``e1, e2, e3`` from the origin.

    Returns an array of shape ``(..., 4, 3)``; its columns are positively
    oriented.
    """
    x = np.asarray(x, dtype=float)
    basis = np.eye(4)[:, 1:]
    out = np.empty(x.shape[:-1] + (4, 3))
    for j in range(3):
        out[..., :, j] = parallel_transport(np.broadcast_to(basis[:, j], x.shape), ORIGIN, x)
    return out


# --- isometries ---------------------------------------------------------


def is_lorentz(m, tol=1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(np.allclose(m.T @ ETA @ m, ETA, atol=tol * max(1.0, np.abs(m).max() ** 2)))


def check_isometry(m, tol=1e-8) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4) or not is_lorentz(m, tol):
        raise ValueError("matrix does not preserve the Minkowski form")
    if m[0, 0] <= 0:
        raise ValueError("isometry is not orthochronous")
    if np.linalg.det(m) <= 0:
        raise ValueError("isometry is not orientation preserving")
    return m


def lorentz_inverse(m):
    m = np.asarray(m)
    return ETA @ np.swapaxes(m, -1, -2) @ ETA


def rotation(theta: float, axis: int = 3) -> np.ndarray:
    """Elliptic isometry: rotation by ``theta`` about the spatial ``axis`` through the origin."""
    i, j = [k for k in (1, 2, 3) if k != axis]
    m = np.eye(4)
    c, s = np.cos(theta), np.sin(theta)
    m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
    return m


def boost(s: float, axis: int = 1) -> np.ndarray:
    """Hyperbolic translation by distance ``s`` along the geodesic through the origin in direction ``axis``."""
    m = np.eye(4)
    c, sh = np.cosh(s), np.sinh(s)
    m[0, 0], m[0, axis], m[axis, 0], m[axis, axis] = c, sh, sh, c
    return m


def so13_exp(X):
    from scipy.linalg import expm

    return expm(X)


def so13_basis() -> np.ndarray:
    """Basis of the Lie algebra so(1,3): three boosts then three rotations."""
    out = []
    for a in (1, 2, 3):
        X = np.zeros((4, 4))
        X[0, a] = X[a, 0] = 1.0
        out.append(X)
    for i, j in ((2, 3), (3, 1), (1, 2)):
        X = np.zeros((4, 4))
        X[i, j], X[j, i] = -1.0, 1.0
        out.append(X)
    return np.array(out)


def so13_coords(X) -> np.ndarray:
    """Coordinates of ``X`` in :func:`so13_basis` (batched over leading axes)."""
    X = np.asarray(X)
    return np.stack(
        [X[..., 0, 1], X[..., 0, 2], X[..., 0, 3], X[..., 3, 2], X[..., 1, 3], X[..., 2, 1]], axis=-1
    )


def so13_log(g) -> np.ndarray:
    """Principal logarithm of an element of SO+(1,3) near the identity."""
    from scipy.linalg import logm

    X = np.real(logm(np.asarray(g, dtype=float)))
    # remove the numerical non-algebra part
    return 0.5 * (X - ETA @ X.T @ ETA)


def adjoint_matrix(g) -> np.ndarray:
    """6x6 matrix of ``X -> g X g^-1`` in :func:`so13_basis` coordinates."""
    g = np.asarray(g, dtype=float)
    gi = lorentz_inverse(g)
    return so13_coords(g @ so13_basis() @ gi).T


def lorentz_polar_project(m) -> np.ndarray:
    """Nearest-style projection of a near-Lorentz matrix onto SO+(1,3).

    Writes ``m = Q S`` with ``S = sqrt(m^# m)`` (``m^# = eta m^T eta``)
    and returns ``Q``.
    """
    from scipy.linalg import sqrtm

    m = np.asarray(m, dtype=float)
    S2 = lorentz_inverse(m) @ m
    S = np.real(sqrtm(S2))
    Q = m @ np.linalg.inv(S)
    if Q[0, 0] < 0:
        Q = -Q
    return Q


# --- PSL(2, C) -------------------------------------------------------------

PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def hermitian_from_point(x):
    return np.tensordot(np.asarray(x, dtype=float), PAULI, axes=([-1], [0]))


def sl2_to_so13(A) -> np.ndarray:
    """Image of ``A in SL(2,C)`` acting by ``X -> A X A^*`` on Hermitian matrices."""
    A = np.asarray(A, dtype=complex)
    m = np.empty((4, 4))
    for mu in range(4):
        Y = A @ PAULI[mu] @ A.conj().T
        for nu in range(4):
            m[nu, mu] = 0.5 * np.real(np.trace(PAULI[nu] @ Y))
    return m


def so13_to_sl2(m) -> np.ndarray:
    """One of the two lifts ``+-A in SL(2,C)`` of an element of SO+(1,3).

    Uses ``sum_mu m(sigma_mu) K sigma_mu = 2 tr(A^* K) A`` for the ``K``
    among the Pauli basis giving the best-conditioned result.
    """
    m = check_isometry(m)
    imgs = [np.tensordot(m[:, mu], PAULI, axes=([0], [0])) for mu in range(4)]
    best = None
    for K in PAULI:
        B = sum(imgs[mu] @ K @ PAULI[mu] for mu in range(4))
        d = np.linalg.det(B)
        if best is None or abs(d) > abs(best[1]):
            best = (B, d)
    B, d = best
    return B / np.sqrt(d)


def sl2_fix_sign(A, reference=None) -> np.ndarray:
    """Choose the sign of ``A`` closest to ``reference`` (identity by default)."""
    ref = np.eye(2) if reference is None else np.asarray(reference)
    return A if np.linalg.norm(A - ref) <= np.linalg.norm(A + ref) else -A
