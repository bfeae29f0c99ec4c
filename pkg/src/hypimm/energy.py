"""The 1-Schatten energy of discrete equivariant maps into H^3.

A map assigns a point of H^3 to every quotient vertex (at its
representative copy); the other copies follow from the representation.
Each triangle is mapped affinely in the sense of Regge calculus: the
pullback metric ``G`` is the constant metric on the planar layout whose
edge lengths are the hyperbolic lengths of the image edges.  Then
``b = sqrt(G)`` and the energy is ``sum_t area_t q_eps(G_t)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize as sp_minimize

from . import hyperbolic as hyp
from .representation import Representation
from .schatten import q_eps_gram, sqrtm_psd2
from .surface import SurfaceMesh

logger = logging.getLogger(__name__)

EDGES = ((0, 1), (1, 2), (2, 0))


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


@dataclass
class EquivariantMap:
    mesh: SurfaceMesh
    rep: Representation
    positions: np.ndarray  # (V, 4)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape != (self.mesh.n_vertices, 4):
            raise ValueError("positions must have shape (V, 4)")
        if self.rep.genus != self.mesh.genus:
            raise ValueError("representation and surface have different genus")

    @property
    def word_mats(self) -> np.ndarray:
        key = ("words", id(self.rep), self.rep.generators.tobytes())
        cache = self.mesh._cache
        if key not in cache:
            cache[key] = self.rep.word_matrices(self.mesh.words)
        return cache[key]

    def dom_positions(self) -> np.ndarray:
        m = self.mesh
        return np.einsum("dij,dj->di", self.word_mats[m.dom_word_idx], self.positions[m.dom_quot])

    def corner_positions(self) -> np.ndarray:
        return self.dom_positions()[self.mesh.dom_tri]

    def equivariance_residual(self) -> float:
        P = self.dom_positions()
        G = self.rep.generators
        worst = 0.0
        for k, s, t in self.mesh.boundary_pairs:
            worst = max(worst, float(np.abs(G[k] @ P[s] - P[t]).max()))
        return worst

    def sheet_residual(self) -> float:
        x = self.positions
        return float(np.abs(hyp.minkowski(x, x) + 1.0).max())

    def with_positions(self, positions) -> "EquivariantMap":
        return EquivariantMap(self.mesh, self.rep, positions)

    @classmethod
    def identity(cls, mesh: SurfaceMesh, rep: Optional[Representation] = None) -> "EquivariantMap":
        rep = Representation.fuchsian(mesh.domain) if rep is None else rep
        return cls(mesh, rep, mesh.vertices.copy())

    @classmethod
    def equidistant(cls, mesh: SurfaceMesh, t: float, rep: Optional[Representation] = None) -> "EquivariantMap":
        """Pushoff ``x -> cosh(t) x + sinh(t) e3`` of the inclusion H^2 -> H^3."""
        rep = Representation.fuchsian(mesh.domain) if rep is None else rep
        x = np.cosh(t) * mesh.vertices + np.sinh(t) * hyp.E3
        return cls(mesh, rep, x)


# --- pullback metric and energy --------------------------------------------------


def _edge_terms(Y):
    """Squared lengths of the image edges (01, 12, 20) and their chords."""
    d = np.stack([Y[:, j] - Y[:, i] for i, j in EDGES], axis=1)  # (T, 3, 4)
    c = np.sqrt(np.clip(hyp.minkowski(d, d), 0.0, None))
    ell = 2.0 * np.arcsinh(c / 2.0)
    return ell, d


def _gram_from_lengths(mesh: SurfaceMesh, ell2) -> np.ndarray:
    g = np.einsum("tce,te->tc", mesh.metric_solver, ell2)
    return np.stack([np.stack([g[:, 0], g[:, 1]], -1), np.stack([g[:, 1], g[:, 2]], -1)], -2)


def pullback_gram(f: EquivariantMap) -> np.ndarray:
    ell, _ = _edge_terms(f.corner_positions())
    return _gram_from_lengths(f.mesh, ell**2)


def rank_deficient(G, tol: float = 1e-10) -> np.ndarray:
    tr = G[..., 0, 0] + G[..., 1, 1]
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2
    return det <= tol * np.maximum(tr, 1e-300) ** 2


def pullback_b(f: EquivariantMap) -> np.ndarray:
    """Per-triangle ``b = sqrt(G)`` in the triangle frames (rank-deficient triangles give singular ``b``)."""
    G = pullback_gram(f)
    bad = rank_deficient(G)
    if bad.any():
        logger.info("%d rank-deficient triangles", int(bad.sum()))
    return sqrtm_psd2(0.5 * (G + np.swapaxes(G, -1, -2)))


@dataclass
class EnergyReport:
    value: float
    densities: np.ndarray
    eps: float
    rank_deficient: int


def energy(f: EquivariantMap, eps: float = 0.0) -> EnergyReport:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    G = pullback_gram(f)
    dens = q_eps_gram(G, eps)
    A = f.mesh.areas
    return EnergyReport(
        value=float(np.sum(dens * A)), densities=dens, eps=float(eps), rank_deficient=int(rank_deficient(G).sum())
    )


def energy_and_gradient(f: EquivariantMap, eps: float = 0.0) -> tuple[float, np.ndarray]:
    """Energy and its gradient with respect to the ambient coordinates of ``positions``.

    At ``eps = 0`` a vanishing ``sqrt(det G + ...)`` is floored, which
    yields a subgradient on rank-deficient triangles.
    """
    m = f.mesh
    Y = f.corner_positions()
    ell, d = _edge_terms(Y)
    G = _gram_from_lengths(m, ell**2)
    e2 = eps * eps
    g11, g12, g22 = G[:, 0, 0], G[:, 0, 1], G[:, 1, 1]
    tr = g11 + g22
    det = g11 * g22 - g12 * g12
    s = np.sqrt(np.clip(det + e2 * tr + e2 * e2, 0.0, None))
    q = np.sqrt(np.clip(tr + 2 * e2 + 2 * s, 0.0, None))
    A = m.areas
    value = float(np.sum(A * q))
    s_safe = np.maximum(s, 1e-12 * np.maximum(tr, 1e-300))
    q_safe = np.maximum(q, 1e-300)
    dq = np.stack(
        [
            (1.0 + (g22 + e2) / s_safe) / (2 * q_safe),
            (-2.0 * g12 / s_safe) / (2 * q_safe),
            (1.0 + (g11 + e2) / s_safe) / (2 * q_safe),
        ],
        axis=1,
    )
    dE_dl2 = A[:, None] * np.einsum("tc,tce->te", dq, m.metric_solver)  # (T, 3)
    # d(l^2)/dy_i = (2 l / sinh l) eta (y_i - y_j)
    ratio = np.where(ell > 1e-8, ell / np.sinh(np.maximum(ell, 1e-300)), 1.0)
    coef = dE_dl2 * 2.0 * ratio  # (T, 3)
    gd = coef[..., None] * d
    gd[..., 0] *= -1.0  # apply eta
    gY = np.zeros_like(Y)
    for e, (i, j) in enumerate(EDGES):
        gY[:, j] += gd[:, e]
        gY[:, i] -= gd[:, e]
    # back to representative copies: y = Lambda x, dE/dx = Lambda^T dE/dy
    Lam = f.word_mats[m.corner_word_idx]  # (T, 3, 4, 4)
    gX = np.einsum("tkij,tki->tkj", Lam, gY)
    grad = np.zeros((m.n_vertices, 4))
    np.add.at(grad, m.tri.ravel(), gX.reshape(-1, 4))
    return value, grad


def riemannian_gradient(f: EquivariantMap, grad) -> np.ndarray:
    """Convert an ambient gradient to tangent vectors at the vertex images."""
    x = f.positions
    v = np.asarray(grad) @ hyp.ETA  # raise index
    return hyp.project_tangent(x, v)


# --- per-triangle image geometry ----------------------------------------------------


@dataclass
class TriangleGeometry:
    centroid: np.ndarray  # (T, 4) image centroids
    frame: np.ndarray  # (T, 4, 3) orthonormal (t1, t2, N) at the image centroid
    df: np.ndarray  # (T, 3, 2) differential in (t1, t2, N) coordinates
    G: np.ndarray  # (T, 2, 2) Regge pullback metric
    b: np.ndarray  # (T, 2, 2)
    sigma: np.ndarray  # (T, 3, 2) polar rotation part of df

    @property
    def normal(self) -> np.ndarray:
        return self.frame[:, :, 2]


def triangle_geometry(f: EquivariantMap) -> TriangleGeometry:
    """Image frames, differentials and pullback data of every triangle.

    The normal is the unit vector Minkowski-orthogonal to the three image
    corners, oriented so that ``(df e1, df e2, N)`` is positive.
    """
    m = f.mesh
    Y = f.corner_positions()
    c = hyp.normalize_point(Y.sum(axis=1))
    L = np.stack([hyp.log_point(c, Y[:, k]) for k in range(3)], axis=1)  # (T, 3, 4)
    u = L[:, 1] - L[:, 0]
    v = L[:, 2] - L[:, 0]
    # normal: cofactor of [c, u, v]
    N = hyp.cross_product(c, u, v)
    nn = np.sqrt(np.clip(hyp.minkowski(N, N), 0.0, None))
    bad = nn <= 1e-14 * (1.0 + np.abs(u).max(axis=-1) * np.abs(v).max(axis=-1))
    N = N / np.where(bad, 1.0, nn)[:, None]
    # the layout is positively oriented, so the sign of N follows from the
    # orientation of (u, v) relative to (P1 - P0, P2 - P0)
    P = m.layout
    Bsrc = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)
    det_src = np.linalg.det(Bsrc)
    N = N * np.sign(det_src)[:, None]
    t1 = u / np.sqrt(np.clip(hyp.minkowski(u, u), 1e-300, None))[:, None]
    t2 = hyp.cross_product(c, N, t1)
    frame = np.stack([t1, t2, N], axis=-1)
    D = np.einsum("tia,ij,tjk->tak", frame, hyp.ETA, np.stack([u, v], axis=-1))  # (T, 3, 2)
    df = D @ np.linalg.inv(Bsrc)
    ell, _ = _edge_terms(Y)
    G = _gram_from_lengths(m, ell**2)
    b = sqrtm_psd2(0.5 * (G + np.swapaxes(G, -1, -2)))
    # rotation part of df: orthonormal columns closest to df
    U, _, Vt = np.linalg.svd(df, full_matrices=False)
    sigma = U @ Vt
    return TriangleGeometry(centroid=c, frame=frame, df=df, G=G, b=b, sigma=sigma)


# --- variation fields ---------------------------------------------------------------


@dataclass
class VariationField:
    """Tangent vectors at the images of the representative vertices."""

    f: EquivariantMap
    vectors: np.ndarray  # (V, 4)
    tangential: Optional[np.ndarray] = None  # (T, 2) in source triangle frames
    nu: Optional[np.ndarray] = None  # (T,)
    normal: Optional[np.ndarray] = None  # (T, 4)

    def __post_init__(self):
        self.vectors = hyp.project_tangent(self.f.positions, np.asarray(self.vectors, dtype=float))

    def decompose(self, geom: Optional[TriangleGeometry] = None) -> "VariationField":
        """Fill ``X = X^T + nu N`` per triangle from the corner vectors moved to the image centroid."""
        f = self.f
        m = f.mesh
        geom = triangle_geometry(f) if geom is None else geom
        Lam = f.word_mats[m.corner_word_idx]
        Xc = np.einsum("tkij,tkj->tki", Lam, self.vectors[m.tri])
        Y = f.corner_positions()
        Xt = np.mean([hyp.parallel_transport(Xc[:, k], Y[:, k], geom.centroid) for k in range(3)], axis=0)
        coords = np.einsum("tia,ij,tj->ta", geom.frame, hyp.ETA, Xt)
        self.nu = coords[:, 2]
        self.normal = geom.normal
        self.tangential = np.linalg.solve(geom.df[:, :2, :], coords[:, :2, None])[..., 0]
        return self

    def reassembly_error(self) -> float:
        if self.nu is None:
            self.decompose()
        geom = triangle_geometry(self.f)
        tang = np.einsum("tab,tb->ta", geom.df, self.tangential)
        coords = tang + self.nu[:, None] * np.array([0.0, 0.0, 1.0])
        m = self.f.mesh
        Lam = self.f.word_mats[m.corner_word_idx]
        Xc = np.einsum("tkij,tkj->tki", Lam, self.vectors[m.tri])
        Y = self.f.corner_positions()
        Xt = np.mean([hyp.parallel_transport(Xc[:, k], Y[:, k], geom.centroid) for k in range(3)], axis=0)
        back = np.einsum("tia,ta->ti", geom.frame, coords)
        return float(np.abs(back - Xt).max())


def displace(f: EquivariantMap, X, t: float) -> EquivariantMap:
    """Geodesic displacement ``x_v -> exp_{x_v}(t X_v)``."""
    X = X.vectors if isinstance(X, VariationField) else np.asarray(X)
    return f.with_positions(hyp.exp_point(f.positions, t * X))


def normal_field(f: EquivariantMap) -> VariationField:
    """Vertex normals: area-weighted average of the adjacent triangle normals."""
    m = f.mesh
    geom = triangle_geometry(f)
    Lam_inv = hyp.lorentz_inverse(f.word_mats[m.corner_word_idx])
    Y = f.corner_positions()
    out = np.zeros((m.n_vertices, 4))
    for k in range(3):
        n = hyp.parallel_transport(geom.normal, geom.centroid, Y[:, k])
        n = np.einsum("tij,tj->ti", Lam_inv[:, k], n) * m.areas[:, None]
        np.add.at(out, m.tri[:, k], n)
    out = hyp.project_tangent(f.positions, out)
    out /= np.sqrt(np.clip(hyp.minkowski(out, out), 1e-300, None))[:, None]
    return VariationField(f, out)


def first_variation(f: EquivariantMap, X: VariationField, shape_operator=None) -> float:
    """``int nu tr(ba) + h(b^2 W, J b X^T)`` with ``W = det(b)^{-1} b^{-1} d^nabla b``.

    ``shape_operator`` (per-triangle ``a``) defaults to the one extracted
    from ``f``.
    """
    from .reconstruct import extract_data

    m = f.mesh
    geom = triangle_geometry(f)
    if rank_deficient(geom.G).any():
        raise ValueError("first variation formula needs an immersion")
    b, a = extract_data(f)
    if shape_operator is not None:
        a = np.asarray(shape_operator)
    if X.nu is None:
        X.decompose(geom)
    db = m.dnabla(m.from_triangles(b))
    detb = b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]
    W = np.linalg.solve(b, db[..., None])[..., 0] / detb[:, None]
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    b2W = np.einsum("tab,tbc,tc->ta", b, b, W)
    JbX = np.einsum("ab,tbc,tc->ta", J, b, X.tangential)
    dens = X.nu * np.einsum("taa->t", b @ a) + np.sum(b2W * JbX, axis=1)
    return float(np.sum(m.areas * dens))


# --- probes --------------------------------------------------------------------------


@dataclass
class ConvexityProbe:
    ts: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray


def convexity_probe(f: EquivariantMap, X, ts: Sequence[float], eps: float = 0.0) -> ConvexityProbe:
    ts = np.asarray(ts, dtype=float)
    vals = np.array([energy(displace(f, X, t), eps).value for t in ts])
    return ConvexityProbe(ts=ts, values=vals, second_differences=vals[:-2] - 2 * vals[1:-1] + vals[2:])


def retraction_test(f: EquivariantMap) -> tuple[float, float]:
    """Energies before and after the nearest-point retraction onto H^2."""
    if not f.rep.is_fuchsian():
        raise ValueError("retraction needs a representation preserving H^2")
    before = energy(f).value
    after = energy(f.with_positions(hyp.retract_to_h2(f.positions))).value
    return before, after


# --- minimization ----------------------------------------------------------------------


@dataclass
class MinimizeResult:
    map: EquivariantMap
    energy: float
    trace: list = field(default_factory=list)  # (eps, iteration, energy)
    stages: list = field(default_factory=list)  # per-eps summaries
    converged: bool = True
    gradient_norm: float = 0.0


def _to_chart(x):
    return x[:, 1:].ravel().copy()


def _from_chart(z, V):
    return hyp.point_from_spatial(z.reshape(V, 3))


def _chart_grad(x, grad):
    # x = (sqrt(1 + |z|^2), z): dE/dz = dE/dx_spatial + dE/dx0 * z / x0
    return (grad[:, 1:] + grad[:, :1] * x[:, 1:] / x[:, :1]).ravel()


def _stage_lbfgs(f, eps, max_iter, gtol, trace):
    V = f.mesh.n_vertices
    count = [0]

    def fun(z):
        x = _from_chart(z, V)
        val, g = energy_and_gradient(f.with_positions(x), eps)
        count[0] += 1
        trace.append((eps, count[0], val))
        return val, _chart_grad(x, g)

    res = sp_minimize(
        fun,
        _to_chart(f.positions),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "maxfun": 4 * max_iter, "gtol": gtol, "ftol": 1e-15, "maxcor": 30},
    )
    x = _from_chart(res.x, V)
    return f.with_positions(x), res


def _stage_geodesic(f, eps, max_iter, gtol, trace):
    """Armijo descent with geodesic updates ``x <- exp_x(-eta G)``."""
    val, g = energy_and_gradient(f, eps)
    G = riemannian_gradient(f, g)
    eta = 0.1 / max(np.abs(G).max(), 1e-300)
    stall = 0
    for it in range(max_iter):
        gn = float(np.sqrt(np.sum(hyp.minkowski(G, G))))
        if gn < gtol:
            break
        while True:
            trial = displace(f, -G, eta)
            tv = energy(trial, eps).value
            if tv <= val - 1e-4 * eta * gn * gn or eta < 1e-14:
                break
            eta *= 0.5
        if tv >= val:
            stall += 1
            if stall >= 100:
                raise ConvergenceError("energy did not decrease over 100 steps", f)
        else:
            stall = 0
        rel = (val - tv) / max(abs(val), 1e-300)
        f, val = trial, tv
        trace.append((eps, it + 1, val))
        _, g = energy_and_gradient(f, eps)
        G = riemannian_gradient(f, g)
        eta *= 2.0
        if rel < 1e-14 and gn < 1e3 * gtol:
            break
    return f, None


def minimize(
    rep: Representation,
    f_init: EquivariantMap,
    schedule: Sequence[float] = (1.0, 0.3, 0.1, 0.03, 0.0),
    max_iter: int = 5000,
    gtol: float = 1e-9,
    method: str = "lbfgs",
) -> MinimizeResult:
    """Annealed minimization of the ``q_eps`` energies over ``rep``-equivariant maps."""
    if f_init.rep is not rep and not np.allclose(f_init.rep.generators, rep.generators):
        raise ValueError("initial map is not equivariant for the given representation")
    sched = list(schedule)
    if any(e < 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be strictly decreasing and nonnegative")
    f = EquivariantMap(f_init.mesh, rep, f_init.positions)
    trace: list = []
    stages = []
    converged = True
    for eps in sched:
        e0 = energy(f, eps).value
        if method == "lbfgs":
            f, res = _stage_lbfgs(f, eps, max_iter, gtol, trace)
            ok = bool(res.success) or "ABNORMAL" in str(res.message)
            msg = str(res.message)
        elif method == "geodesic":
            f, _ = _stage_geodesic(f, eps, max_iter, gtol, trace)
            ok, msg = True, "done"
        else:
            raise ValueError(f"unknown method {method!r}")
        val, g = energy_and_gradient(f, eps)
        gnorm = float(np.linalg.norm(_chart_grad(f.positions, g)))
        stages.append({"eps": eps, "start": e0, "end": val, "grad_norm": gnorm, "message": msg})
        converged = converged and ok
        logger.info("eps=%g: F %.10g -> %.10g, |grad| %.2e", eps, e0, val, gnorm)
    final = energy(f, sched[-1]).value
    return MinimizeResult(
        map=f, energy=final, trace=trace, stages=stages, converged=converged, gradient_norm=stages[-1]["grad_norm"]
    )
