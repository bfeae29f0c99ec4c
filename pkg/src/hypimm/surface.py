"""Discrete closed hyperbolic surface built from a regular 4g-gon.

The fundamental domain lives in the plane ``x3 = 0`` of the hyperboloid.
Triangles keep their corner coordinates in the domain; corners that are
identified on the surface share a *quotient vertex* and remember the deck
transformation (a word in the side-pairing generators) relating the corner
copy to the representative copy of that vertex.

Field conventions
-----------------
* scalar fields: one (complex) value per quotient vertex, shape ``(V,)``
* vector fields: one tangent 2-vector per triangle, in the triangle frame
* operator fields: one 2x2 (complex) matrix per quotient vertex, in the
  frame of the representative copy; :meth:`SurfaceMesh.to_triangles` and
  :meth:`SurfaceMesh.to_vertices` move between vertex and triangle frames.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from . import hyperbolic as hyp

logger = logging.getLogger(__name__)

Word = tuple  # tuple of (generator index, +1 | -1)

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


class SolverError(RuntimeError):
    """A linear solve did not reach its residual target."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def reduce_word(word: Sequence) -> Word:
    out: list = []
    for letter in word:
        if out and out[-1][0] == letter[0] and out[-1][1] == -letter[1]:
            out.pop()
        else:
            out.append(tuple(letter))
    return tuple(out)


def invert_word(word: Sequence) -> Word:
    return tuple((k, -s) for k, s in reversed(word))


def word_matrix(word: Sequence, generators: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    for k, s in word:
        g = generators[k] if s > 0 else hyp.lorentz_inverse(generators[k])
        m = m @ g
    return m


def generator_names(genus: int) -> list[str]:
    return [f"{c}{i + 1}" for i in range(genus) for c in ("a", "b")]


def relation_product(generators: np.ndarray) -> np.ndarray:
    """``[a1, b1] ... [ag, bg]`` for generators ordered ``a1, b1, a2, ...``."""
    m = np.eye(4)
    inv = hyp.lorentz_inverse
    for i in range(len(generators) // 2):
        a, b = generators[2 * i], generators[2 * i + 1]
        m = m @ a @ b @ inv(a) @ inv(b)
    return m


def relation_residual(generators: np.ndarray) -> float:
    return float(np.linalg.norm(relation_product(generators) - np.eye(4)))


# --- fundamental domain ----------------------------------------------------


@dataclass(frozen=True)
class FuchsianDomain:
    """Regular hyperbolic 4g-gon with interior angles 2 pi / 4g and its side pairings.

    ``generators[2i]`` (``a_{i+1}``) maps side ``4i+2`` onto side ``4i``;
    ``generators[2i+1]`` (``b_{i+1}``) maps side ``4i+1`` onto side ``4i+3``.
    Side ``j`` joins polygon vertices ``j`` and ``j+1``.
    """

    genus: int
    radius: float
    polygon: np.ndarray
    generators: np.ndarray
    pairings: tuple  # (generator index, source side, target side)

    @property
    def n_sides(self) -> int:
        return 4 * self.genus

    @property
    def vertex_angle(self) -> float:
        n = self.n_sides
        return 2.0 * np.arctan(1.0 / (np.cosh(self.radius) * np.tan(np.pi / n)))

    @property
    def area(self) -> float:
        n = self.n_sides
        return (n - 2) * np.pi - n * self.vertex_angle

    @property
    def relation_residual(self) -> float:
        return relation_residual(self.generators)

    @property
    def generator_names(self) -> list[str]:
        return generator_names(self.genus)


def _regular_polygon_radius(n: int, angle: float) -> float:
    # interior angle of the regular n-gon of circumradius r
    def angle_defect(r):
        return 2.0 * np.arctan(1.0 / (np.cosh(r) * np.tan(np.pi / n))) - angle

    hi = 1.0
    while angle_defect(hi) > 0:
        hi *= 2.0
    return brentq(angle_defect, 1e-12, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def build_domain(genus: int) -> FuchsianDomain:
    if int(genus) != genus or genus < 2:
        raise ValueError("genus must be an integer >= 2 (negative Euler characteristic)")
    genus = int(genus)
    n = 4 * genus
    R = _regular_polygon_radius(n, 2.0 * np.pi / n)
    theta = 2.0 * np.pi * np.arange(n) / n
    polygon = np.stack(
        [np.full(n, np.cosh(R)), np.sinh(R) * np.cos(theta), np.sinh(R) * np.sin(theta), np.zeros(n)],
        axis=1,
    )
    mid = hyp.normalize_point(polygon[0] + polygon[1])
    d = float(np.arccosh(mid[0]))

    def side_map(src: int, dst: int) -> np.ndarray:
        phi_src = (2 * src + 1) * np.pi / n
        phi_dst = (2 * dst + 1) * np.pi / n
        return hyp.rotation(phi_dst) @ hyp.boost(2.0 * d) @ hyp.rotation(np.pi - phi_src)

    gens = []
    pairings = []
    for i in range(genus):
        gens.append(side_map(4 * i + 2, 4 * i))
        pairings.append((2 * i, 4 * i + 2, 4 * i))
        gens.append(side_map(4 * i + 1, 4 * i + 3))
        pairings.append((2 * i + 1, 4 * i + 1, 4 * i + 3))
    return FuchsianDomain(
        genus=genus, radius=R, polygon=polygon, generators=np.array(gens), pairings=tuple(pairings)
    )


# --- mesh --------------------------------------------------------------------


def _hyperbolic_angles(l01, l12, l20):
    """Interior angles at corners 0, 1, 2 from the opposite edge lengths."""
    a, b, c = l12, l20, l01  # a opposite corner 0, ...
    ca, cb, cc = np.cosh(a), np.cosh(b), np.cosh(c)
    sa, sb, sc = np.sinh(a), np.sinh(b), np.sinh(c)
    A0 = np.arccos(np.clip((cb * cc - ca) / (sb * sc), -1.0, 1.0))
    A1 = np.arccos(np.clip((ca * cc - cb) / (sa * sc), -1.0, 1.0))
    A2 = np.arccos(np.clip((ca * cb - cc) / (sa * sb), -1.0, 1.0))
    return np.stack([A0, A1, A2], axis=-1)


def _euclidean_layout(l01, l12, l20):
    """Planar triangles with the given side lengths, corner 0 at the origin."""
    T = l01.shape[0]
    P = np.zeros((T, 3, 2))
    P[:, 1, 0] = l01
    x = (l01**2 + l20**2 - l12**2) / (2.0 * l01)
    P[:, 2, 0] = x
    P[:, 2, 1] = np.sqrt(np.clip(l20**2 - x**2, 0.0, None))
    return P


@dataclass
class SurfaceMesh:
    """Triangulated fundamental domain with its gluing data and discrete operators."""

    domain: FuchsianDomain
    level: int
    dom_pos: np.ndarray  # (D, 4) domain vertex coordinates
    dom_quot: np.ndarray  # (D,) quotient vertex of each domain vertex
    dom_word: list  # word with dom = Gamma(word) rep
    dom_tri: np.ndarray  # (T, 3) domain vertex indices
    rep: np.ndarray  # (V,) representative domain vertex
    words: list  # unique words
    dom_word_idx: np.ndarray  # (D,) index into words
    nbr: np.ndarray  # (T, 3) neighbour across edge (c, c+1)
    nbr_word_idx: np.ndarray  # (T, 3) deck word moving the neighbour next to t
    boundary_pairs: list  # (gen, dom_src, dom_dst) with dom_dst = gen(dom_src)
    _cache: dict = field(default_factory=dict, repr=False)

    # -- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return int(self.rep.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.dom_tri.shape[0])

    @property
    def genus(self) -> int:
        return self.domain.genus

    @property
    def tri(self) -> np.ndarray:
        """Quotient vertex indices of triangle corners, shape ``(T, 3)``."""
        return self.dom_quot[self.dom_tri]

    @property
    def corner_word_idx(self) -> np.ndarray:
        return self.dom_word_idx[self.dom_tri]

    @property
    def vertices(self) -> np.ndarray:
        """Representative coordinates of the quotient vertices, ``(V, 4)``."""
        return self.dom_pos[self.rep]

    def word_matrices(self, generators: np.ndarray | None = None) -> np.ndarray:
        gens = self.domain.generators if generators is None else generators
        return np.array([word_matrix(w, gens) for w in self.words])

    # -- geometry ----------------------------------------------------------
    @cached_property
    def corner_pos(self) -> np.ndarray:
        return self.dom_pos[self.dom_tri]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        X = self.corner_pos
        return np.stack(
            [hyp.distance(X[:, 0], X[:, 1]), hyp.distance(X[:, 1], X[:, 2]), hyp.distance(X[:, 2], X[:, 0])],
            axis=1,
        )

    @cached_property
    def angles(self) -> np.ndarray:
        L = self.edge_lengths
        return _hyperbolic_angles(L[:, 0], L[:, 1], L[:, 2])

    @cached_property
    def areas(self) -> np.ndarray:
        return np.pi - self.angles.sum(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def mesh_size(self) -> float:
        return float(self.edge_lengths.max())

    @cached_property
    def centroids(self) -> np.ndarray:
        return hyp.normalize_point(self.corner_pos.sum(axis=1))

    @cached_property
    def tri_frames(self) -> np.ndarray:
        """Per-triangle orthonormal frame at the centroid, ``(T, 4, 2)``."""
        return hyp.frame_at(self.centroids)[:, :, :2]

    @cached_property
    def rep_frames(self) -> np.ndarray:
        """Frame at each representative vertex copy, ``(V, 4, 2)``."""
        return hyp.frame_at(self.vertices)[:, :, :2]

    @cached_property
    def dom_frames(self) -> np.ndarray:
        """Deck-consistent frames at every domain vertex: ``Gamma(word) E_rep``."""
        W = self.word_matrices()
        return np.einsum("dij,djk->dik", W[self.dom_word_idx], self.rep_frames[self.dom_quot])

    def _tangent_coords(self, frame, v):
        # components of tangent vectors v in an orthonormal frame (..., 4, 2)
        return np.einsum("...ia,ij,...j->...a", frame, hyp.ETA, v)

    @cached_property
    def layout(self) -> np.ndarray:
        """Planar triangle with the hyperbolic edge lengths, rotated onto the log-chart at the centroid.

        Shape ``(T, 3, 2)``, coordinates in the triangle frame.
        """
        L = self.edge_lengths
        P = _euclidean_layout(L[:, 0], L[:, 1], L[:, 2])
        P -= P.mean(axis=1, keepdims=True)
        c = self.centroids
        Q = np.stack(
            [self._tangent_coords(self.tri_frames, hyp.log_point(c, self.corner_pos[:, k])) for k in range(3)],
            axis=1,
        )
        Q -= Q.mean(axis=1, keepdims=True)
        dot = np.sum(P * Q, axis=(1, 2))
        crs = np.sum(P[..., 0] * Q[..., 1] - P[..., 1] * Q[..., 0], axis=1)
        th = np.arctan2(crs, dot)
        R = np.stack([np.stack([np.cos(th), -np.sin(th)], -1), np.stack([np.sin(th), np.cos(th)], -1)], -2)
        return np.einsum("tab,tkb->tka", R, P)

    @cached_property
    def layout_areas(self) -> np.ndarray:
        P = self.layout
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def layout_angles(self) -> np.ndarray:
        P = self.layout
        out = np.empty((self.n_triangles, 3))
        for k in range(3):
            u = P[:, (k + 1) % 3] - P[:, k]
            v = P[:, (k + 2) % 3] - P[:, k]
            out[:, k] = np.arctan2(np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]), np.sum(u * v, axis=1))
        return out

    @cached_property
    def grad_basis(self) -> np.ndarray:
        """Gradients of the barycentric hat functions, ``(T, 3, 2)`` in triangle frames."""
        P = self.layout
        B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)  # columns
        Binv = np.linalg.inv(B)
        g1, g2 = Binv[:, 0, :], Binv[:, 1, :]
        return np.stack([-(g1 + g2), g1, g2], axis=1)

    @cached_property
    def metric_solver(self) -> np.ndarray:
        """Maps squared edge lengths ``(l01^2, l12^2, l20^2)`` to ``(G11, G12, G22)``."""
        P = self.layout
        E = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 1], P[:, 0] - P[:, 2]], axis=1)
        M = np.stack([E[..., 0] ** 2, 2.0 * E[..., 0] * E[..., 1], E[..., 1] ** 2], axis=-1)
        return np.linalg.inv(M)

    @cached_property
    def corner_rot(self) -> np.ndarray:
        """``R[t, c]`` maps components in the corner's vertex frame to the triangle frame."""
        X = self.corner_pos
        F = self.dom_frames[self.dom_tri]  # (T, 3, 4, 2)
        c = self.centroids
        out = np.empty((self.n_triangles, 3, 2, 2))
        for k in range(3):
            moved = np.stack(
                [hyp.parallel_transport(F[:, k, :, a], X[:, k], c) for a in range(2)], axis=-1
            )
            out[:, k] = np.einsum("tia,ij,tjb->tab", self.tri_frames, hyp.ETA, moved)
        return out

    @cached_property
    def corner_to_centroid(self) -> np.ndarray:
        """Displacement from each corner to the centroid, in the corner's vertex frame."""
        F = self.dom_frames[self.dom_tri]
        X = self.corner_pos
        return np.stack(
            [self._tangent_coords(F[:, k], hyp.log_point(X[:, k], self.centroids)) for k in range(3)], axis=1
        )

    # -- assembled operators ---------------------------------------------
    @cached_property
    def mass(self) -> np.ndarray:
        """Lumped mass per vertex: circumcentric dual-cell area, rescaled to hyperbolic area.

        Falls back to one third of the incident areas if any dual cell has
        nonpositive area.
        """
        P = self.layout
        ang = self.layout_angles
        cell = np.zeros((self.n_triangles, 3))
        for k in range(3):
            e1 = P[:, (k + 1) % 3] - P[:, k]
            e2 = P[:, (k + 2) % 3] - P[:, k]
            cell[:, k] = (
                np.sum(e1 * e1, axis=1) / np.tan(ang[:, (k + 2) % 3])
                + np.sum(e2 * e2, axis=1) / np.tan(ang[:, (k + 1) % 3])
            ) / 8.0
        cell *= (self.areas / self.layout_areas)[:, None]
        m = np.zeros(self.n_vertices)
        np.add.at(m, self.tri.ravel(), cell.ravel())
        if (m <= 0).any():
            logger.warning("nonpositive dual cells; using barycentric lumping")
            m = np.zeros(self.n_vertices)
            np.add.at(m, self.tri.ravel(), np.repeat(self.areas / 3.0, 3))
        return m

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        G = self.grad_basis
        local = np.einsum("tia,tja->tij", G, G) * self.areas[:, None, None]
        rows = np.repeat(self.tri, 3, axis=1).ravel()
        cols = np.tile(self.tri, (1, 3)).ravel()
        K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_vertices,) * 2).tocsr()
        K.sum_duplicates()
        return K

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Discrete Laplace-Beltrami ``-M^{-1} K`` (negative semidefinite)."""
        return (-sp.diags(1.0 / self.mass) @ self.stiffness).tocsr()

    @cached_property
    def one_rings(self) -> list:
        rings: list = [[] for _ in range(self.n_vertices)]
        for t, corners in enumerate(self.tri):
            for k, v in enumerate(corners):
                rings[v].append((t, k))
        return rings

    def vertex_patch(self, v: int, rings: int = 2):
        """Triangles around vertex ``v`` developed next to its representative copy.

        Returns ``(placed, points)``: ``placed`` maps triangle index to the
        isometry moving its domain copy into position, ``points`` is a list
        of ``(quotient vertex, H^2 point)`` without duplicates.
        """
        W = self._word_mats
        Winv = self._word_mats_inv
        cw = self.corner_word_idx
        placed = {t: Winv[cw[t, k]] for t, k in self.one_rings[v]}
        frontier = dict(placed)
        for _ in range(rings):
            new = {}
            for t, g in frontier.items():
                for e in range(3):
                    t2 = int(self.nbr[t, e])
                    if t2 in placed or t2 in new:
                        continue
                    new[t2] = g @ W[self.nbr_word_idx[t, e]]
            placed.update(new)
            frontier = new
        seen: dict = {}
        X = self.corner_pos
        for t, g in placed.items():
            Y = X[t] @ g.T
            for j in range(3):
                key = tuple(np.round(Y[j], 7))
                if key not in seen:
                    seen[key] = (int(self.tri[t, j]), Y[j])
        return placed, list(seen.values())

    @cached_property
    def _word_mats(self) -> np.ndarray:
        return self.word_matrices()

    @cached_property
    def _word_mats_inv(self) -> np.ndarray:
        return hyp.lorentz_inverse(self._word_mats)

    @cached_property
    def hessian_operators(self) -> tuple:
        """Sparse maps ``u -> (H11, H12, H22)`` of the per-vertex Hessian.

        The traceless part comes from a weighted cubic least-squares fit of
        the values on the developed two-ring, in normal coordinates at the
        vertex (where the covariant and coordinate Hessians agree).  The
        trace is the finite-element Laplacian, so ``tr Hess = laplacian``
        exactly and ``2 - tr Hess`` stays symmetric positive.
        """
        rows: list = []
        cols: list = []
        v11: list = []
        v12: list = []
        for v in range(self.n_vertices):
            _, pts = self.vertex_patch(v)
            ids = np.array([p[0] for p in pts])
            Y = np.array([p[1] for p in pts])
            z = self._tangent_coords(self.rep_frames[v], hyp.log_point(self.vertices[v], Y))
            x, y = z[:, 0], z[:, 1]
            A = np.stack([np.ones_like(x), x, y, x * x / 2, x * y, y * y / 2, x**3, x * x * y, x * y * y, y**3], 1)
            r2 = x * x + y * y
            w = 1.0 / (1.0 + r2 / r2.max())
            coef = np.linalg.pinv(A * w[:, None]) * w[None, :]
            rows.extend([v] * len(ids))
            cols.extend(ids.tolist())
            v11.extend((0.5 * (coef[3] - coef[5])).tolist())
            v12.extend(coef[4].tolist())
        shape = (self.n_vertices,) * 2
        half_diff = sp.coo_matrix((v11, (rows, cols)), shape=shape).tocsr()
        h12 = sp.coo_matrix((v12, (rows, cols)), shape=shape).tocsr()
        half_lap = 0.5 * self.laplacian
        return ((half_diff + half_lap).tocsr(), h12, (half_lap - half_diff).tocsr())

    @cached_property
    def stencil_scale(self) -> float:
        """Typical triangle diameter ``sqrt(mean area)``."""
        return float(np.sqrt(self.areas.mean()))

    # -- discrete operators on fields ----------------------------------------
    def grad(self, u) -> np.ndarray:
        """Per-triangle gradient of the piecewise-linear interpolant, ``(T, 2)``."""
        u = np.asarray(u)
        return np.einsum("tka,tk->ta", self.grad_basis, u[self.tri])

    def hess(self, u) -> np.ndarray:
        """Symmetric per-vertex Hessian, ``(V, 2, 2)``."""
        u = np.asarray(u)
        H11, H12, H22 = self.hessian_operators
        h11, h12, h22 = H11 @ u, H12 @ u, H22 @ u
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)

    def laplace(self, u) -> np.ndarray:
        return self.laplacian @ np.asarray(u)

    def _factor(self, shift: float):
        key = ("factor", float(shift))
        if key not in self._cache:
            A = (self.stiffness + shift * sp.diags(self.mass)).tocsc()
            self._cache[key] = spla.splu(A)
        return self._cache[key]

    def apply_shifted(self, u, shift: float = 2.0) -> np.ndarray:
        """``(-Delta + shift) u`` with the lumped-mass Laplacian."""
        return -self.laplace(u) + shift * np.asarray(u)

    def laplacian_solve(self, rhs, shift: float = 2.0, rtol: float = 1e-10) -> np.ndarray:
        """Solve ``(-Delta + shift) u = rhs`` in the weak sense ``(K + shift M) u = M rhs``."""
        if shift <= 0:
            raise ValueError("shift must be positive")
        rhs = np.asarray(rhs)
        b = self.mass * rhs
        lu = self._factor(shift)
        if np.iscomplexobj(b):
            u = lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
        else:
            u = lu.solve(np.ascontiguousarray(b))
        A = self.stiffness + shift * sp.diags(self.mass)
        res = np.linalg.norm(A @ u - b) / max(np.linalg.norm(b), 1e-300)
        if res > rtol and np.linalg.norm(b) > 0:
            raise SolverError("shifted Laplacian solve failed", res)
        return u

    def integrate(self, f) -> complex | float:
        """``sum_t (mean of f over corners) * area_t``."""
        f = np.asarray(f)
        return (f[self.tri].mean(axis=1) * self.areas).sum()

    def integrate_triangles(self, f) -> complex | float:
        return (np.asarray(f) * self.areas).sum()

    def to_triangles(self, phi) -> np.ndarray:
        """Vertex operator field -> per-triangle field (average of the transported corner values)."""
        phi = np.asarray(phi)
        R = self.corner_rot
        corner = phi[self.tri]  # (T, 3, 2, 2)
        moved = np.einsum("tkab,tkbc,tkdc->tkad", R, corner, R)
        return moved.mean(axis=1)

    def to_vertices(self, phi_t) -> np.ndarray:
        """Per-triangle operator field -> vertex field (area-weighted, transported)."""
        phi_t = np.asarray(phi_t)
        R = self.corner_rot
        moved = np.einsum("tkba,tbc,tkcd->tkad", R, phi_t, R)
        w = np.repeat(self.areas[:, None], 3, axis=1)
        out = np.zeros((self.n_vertices, 2, 2), dtype=moved.dtype)
        np.add.at(out, self.tri.ravel(), (moved * w[..., None, None]).reshape(-1, 2, 2))
        total = np.zeros(self.n_vertices)
        np.add.at(total, self.tri.ravel(), w.ravel())
        return out / total[:, None, None]

    def from_triangles(self, phi_t) -> np.ndarray:
        """Vertex field whose corner averages best match a per-triangle field.

        Area-weighted least squares; undoes the smoothing of
        :meth:`to_vertices` for fields sampled at centroids.  The averaging
        map has a small kernel, which is fixed by a weak pull towards
        :meth:`to_vertices`; constant fields are reproduced exactly.
        """
        phi_t = np.asarray(phi_t)
        if np.iscomplexobj(phi_t):
            return self.from_triangles(phi_t.real) + 1j * self.from_triangles(phi_t.imag)
        reg = 1e-8
        if "from_triangles" not in self._cache:
            R = self.corner_rot  # (T, 3, 2, 2)
            K = np.einsum("tkab,tkcd->tkacbd", R, R).reshape(self.n_triangles, 3, 4, 4) / 3.0
            T = self.n_triangles
            rows = np.broadcast_to(4 * np.arange(T)[:, None, None, None] + np.arange(4)[None, None, :, None], K.shape)
            cols = np.broadcast_to(4 * self.tri[:, :, None, None] + np.arange(4)[None, None, None, :], K.shape)
            A = sp.csr_matrix((K.ravel(), (rows.ravel(), cols.ravel())), shape=(4 * T, 4 * self.n_vertices))
            w = sp.diags(np.repeat(self.areas, 4))
            M4 = sp.diags(np.repeat(self.mass, 4))
            lu = spla.splu((A.T @ w @ A + reg * M4).tocsc())
            self._cache["from_triangles"] = (A.T @ w, reg * M4, lu)
        AtW, M4, lu = self._cache["from_triangles"]
        x0 = self.to_vertices(phi_t).reshape(-1)
        return lu.solve(AtW @ phi_t.reshape(-1) + M4 @ x0).reshape(self.n_vertices, 2, 2)

    def corner_values(self, phi) -> np.ndarray:
        """Vertex operator values transported into each triangle frame, ``(T, 3, 2, 2)``."""
        R = self.corner_rot
        return np.einsum("tkab,tkbc,tkdc->tkad", R, np.asarray(phi)[self.tri], R)

    @cached_property
    def triangle_patches(self) -> tuple:
        """Vertices of all triangles sharing a corner with each triangle.

        Returns ``(idx, wa, wb, wc, n)`` padded to a common width: the
        point is ``Gamma(words[wa]) Gamma(words[wb])^-1 Gamma(words[wc])``
        applied to the representative of quotient vertex ``idx``; ``n``
        counts the valid entries per triangle.
        """
        W = self._word_mats
        Winv = self._word_mats_inv
        cw = self.corner_word_idx
        X = self.corner_pos
        rows = []
        for t in range(self.n_triangles):
            pts: dict = {}
            for k in range(3):
                for t2, k2 in self.one_rings[self.tri[t, k]]:
                    g = W[cw[t, k]] @ Winv[cw[t2, k2]]
                    Y = X[t2] @ g.T
                    for j in range(3):
                        key = tuple(np.round(Y[j], 7))
                        if key not in pts:
                            pts[key] = (int(self.tri[t2, j]), int(cw[t, k]), int(cw[t2, k2]), int(cw[t2, j]))
            rows.append(np.array(list(pts.values())))
        P = max(len(r) for r in rows)
        out = np.zeros((5, self.n_triangles, P), dtype=int)
        n = np.array([len(r) for r in rows])
        for t, r in enumerate(rows):
            out[:4, t, : len(r)] = r.T
        return out[0], out[1], out[2], out[3], n

    @cached_property
    def derivative_stencil(self) -> tuple:
        """Per-triangle quadratic fit used for first derivatives at the centroid.

        For every triangle the vertices of all triangles sharing a corner
        with it are developed next to it.  Returns ``(idx, rot, cx, cy)``
        padded to a common width: quotient vertex, rotation taking that
        vertex's frame to the triangle frame, and the weights producing
        ``d/dx`` and ``d/dy`` at the centroid of the weighted quadratic fit.
        """
        W = self._word_mats
        Winv = self._word_mats_inv
        cw = self.corner_word_idx
        X = self.corner_pos
        Fdom = self.dom_frames[self.dom_tri]  # (T, 3, 4, 2)
        rows = []
        for t in range(self.n_triangles):
            c = self.centroids[t]
            E = self.tri_frames[t]
            pts: dict = {}
            for k in range(3):
                G = W[cw[t, k]]
                for t2, k2 in self.one_rings[self.tri[t, k]]:
                    g = G @ Winv[cw[t2, k2]]
                    Y = X[t2] @ g.T
                    for j in range(3):
                        key = tuple(np.round(Y[j], 7))
                        if key not in pts:
                            pts[key] = (int(self.tri[t2, j]), Y[j], g @ Fdom[t2, j])
            ids = np.array([p[0] for p in pts.values()])
            Y = np.array([p[1] for p in pts.values()])
            F = np.array([p[2] for p in pts.values()])
            z = self._tangent_coords(E, hyp.log_point(c, Y))
            moved = np.stack([hyp.parallel_transport(F[:, :, a], Y, c) for a in range(2)], axis=-1)
            R = np.einsum("ia,ij,njb->nab", E, hyp.ETA, moved)
            x, y = z[:, 0], z[:, 1]
            A = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)
            r2 = x * x + y * y
            w = 1.0 / (1.0 + r2 / r2.max()) ** 2
            coef = np.linalg.pinv(A * w[:, None]) * w[None, :]
            rows.append((ids, R, coef[1], coef[2]))
        P = max(len(r[0]) for r in rows)
        T = self.n_triangles
        idx = np.zeros((T, P), dtype=int)
        rot = np.zeros((T, P, 2, 2))
        cx = np.zeros((T, P))
        cy = np.zeros((T, P))
        for t, (ids, R, ax, ay) in enumerate(rows):
            n = len(ids)
            idx[t, :n], rot[t, :n], cx[t, :n], cy[t, :n] = ids, R, ax, ay
        return idx, rot, cx, cy

    def dnabla(self, phi) -> np.ndarray:
        """Discrete exterior covariant derivative ``(d^nabla phi)(e1, e2)`` per triangle.

        ``phi`` is a vertex operator field (or a per-triangle field, which is
        first moved to the vertices).  The result is a ``(T, 2)`` vector
        field ``d1(phi e2) - d2(phi e1)`` at the centroid, from a quadratic
        fit of the values transported into the triangle frame.
        """
        phi = np.asarray(phi)
        if phi.shape[0] == self.n_triangles and phi.shape[0] != self.n_vertices:
            phi = self.to_vertices(phi)
        idx, rot, cx, cy = self.derivative_stencil
        C = np.einsum("tpab,tpbc,tpdc->tpad", rot, phi[idx], rot)
        return np.einsum("tp,tpa->ta", cx, C[..., :, 1]) - np.einsum("tp,tpa->ta", cy, C[..., :, 0])

    def dnabla_matrix(self, basis) -> sp.csr_matrix:
        """Sparse matrix of ``dnabla`` on fields ``phi_v = sum_j c_{v,j} basis[j]``.

        Rows are ``(triangle, component)`` flattened; columns ``v * len(basis) + j``.
        """
        basis = np.asarray(basis, dtype=float)
        nb = basis.shape[0]
        idx, rot, cx, cy = self.derivative_stencil
        T, P = idx.shape
        # (R B R^T) for each stencil point and basis element
        C = np.einsum("tpab,jbc,tpdc->tpjad", rot, basis, rot)
        vals = cx[:, :, None, None] * C[..., :, 1] - cy[:, :, None, None] * C[..., :, 0]  # (T, P, nb, 2)
        rows = np.broadcast_to((2 * np.arange(T))[:, None, None, None] + np.arange(2), vals.shape)
        cols = np.broadcast_to((idx * nb)[:, :, None, None] + np.arange(nb)[None, None, :, None], vals.shape)
        M = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * T, nb * self.n_vertices))
        return M.tocsr()

    def norm_triangles(self, v) -> float:
        v = np.asarray(v)
        return float(np.sqrt(np.sum(self.areas * np.sum(np.abs(v) ** 2, axis=tuple(range(1, v.ndim))))))

    def norm_vertices(self, phi) -> float:
        phi = np.asarray(phi)
        return float(np.sqrt(np.sum(self.mass * np.sum(np.abs(phi) ** 2, axis=tuple(range(1, phi.ndim))))))

    def inner_vertices(self, a, b) -> float:
        """Real L^2 pairing of vertex fields (Frobenius on operators)."""
        a, b = np.asarray(a), np.asarray(b)
        prod = np.real(a * np.conj(b))
        return float(np.sum(self.mass * np.sum(prod, axis=tuple(range(1, prod.ndim)))))

    # -- diagnostics ---------------------------------------------------------
    def vertex_angle_sums(self) -> np.ndarray:
        s = np.zeros(self.n_vertices)
        np.add.at(s, self.tri.ravel(), self.angles.ravel())
        return s

    def layout_angle_defects(self) -> np.ndarray:
        s = np.zeros(self.n_vertices)
        np.add.at(s, self.tri.ravel(), self.layout_angles.ravel())
        return 2.0 * np.pi - s

    @property
    def euler_characteristic(self) -> int:
        return 2 - 2 * self.genus

    def boundary_mismatch(self) -> float:
        """Largest deck-mismatch of glued vertex copies: ``|Gamma(word) x_rep - x_copy|``."""
        W = self.word_matrices()
        pred = np.einsum("dij,dj->di", W[self.dom_word_idx], self.dom_pos[self.rep[self.dom_quot]])
        return float(np.abs(pred - self.dom_pos).max())


def _fan(domain: FuchsianDomain):
    n = domain.n_sides
    pos = [hyp.ORIGIN.copy()] + [p for p in domain.polygon]
    sides: list[set] = [set()] + [{(j - 1) % n, j} for j in range(n)]
    tris = [(0, 1 + j, 1 + (j + 1) % n) for j in range(n)]
    return pos, sides, tris


def _subdivide(pos, sides, tris):
    cache: dict = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            pos.append(hyp.normalize_point(pos[a] + pos[b]))
            sides.append(sides[a] & sides[b])
            cache[key] = len(pos) - 1
        return cache[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return out


def refine(domain: FuchsianDomain, level: int) -> SurfaceMesh:
    """Fan-triangulate the polygon from its centre and subdivide ``level`` times at geodesic midpoints."""
    if int(level) != level or level < 0:
        raise ValueError("level must be a nonnegative integer")
    pos, sides, tris = _fan(domain)
    for _ in range(int(level)):
        tris = _subdivide(pos, sides, tris)
    pos = np.array(pos)
    tris = np.array(tris, dtype=int)
    D = len(pos)
    gens = domain.generators

    # side pairings of boundary vertices
    links: list = []  # (gen, src, dst)
    for k, src_side, dst_side in domain.pairings:
        src = [d for d in range(D) if src_side in sides[d]]
        dst = np.array([d for d in range(D) if dst_side in sides[d]])
        for d in src:
            img = gens[k] @ pos[d]
            dist = np.abs(pos[dst] - img).max(axis=1)
            j = int(np.argmin(dist))
            if dist[j] > 1e-8 * max(1.0, np.abs(img).max()):
                raise RuntimeError("side pairing does not match subdivision vertices")
            links.append((k, d, int(dst[j])))

    # quotient classes, representatives and deck words by breadth-first search
    adj: list = [[] for _ in range(D)]
    for k, s, t in links:
        adj[s].append((t, (k, 1)))
        adj[t].append((s, (k, -1)))
    quot = -np.ones(D, dtype=int)
    dom_word: list = [None] * D
    reps = []
    for d in range(D):
        if quot[d] >= 0:
            continue
        q = len(reps)
        reps.append(d)
        quot[d] = q
        dom_word[d] = ()
        queue = deque([d])
        while queue:
            cur = queue.popleft()
            for nxt, letter in adj[cur]:
                if quot[nxt] < 0:
                    quot[nxt] = q
                    dom_word[nxt] = reduce_word((letter,) + dom_word[cur])
                    queue.append(nxt)
    words: list = [()]
    index = {(): 0}
    for w in dom_word:
        if w not in index:
            index[w] = len(words)
            words.append(w)
    dom_word_idx = np.array([index[w] for w in dom_word])

    # triangle adjacency, including across paired sides
    edge_owner: dict = {}
    for t, tri in enumerate(tris):
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            edge_owner.setdefault((min(a, b), max(a, b)), []).append((t, k))
    nbr = -np.ones((len(tris), 3), dtype=int)
    nbr_word = np.zeros((len(tris), 3), dtype=int)
    link_map = {(s, k): t for k, s, t in links}
    boundary_edges = {}
    for key, owners in edge_owner.items():
        if len(owners) == 2:
            (t1, k1), (t2, k2) = owners
            nbr[t1, k1], nbr[t2, k2] = t2, t1
        else:
            boundary_edges[key] = owners[0]
    for k, src_side, dst_side in domain.pairings:
        for key, (t, e) in boundary_edges.items():
            a, b = key
            if src_side in sides[a] and src_side in sides[b]:
                img = (link_map[(a, k)], link_map[(b, k)])
                t2, e2 = boundary_edges[(min(img), max(img))]
                # gen k maps t's edge onto t2's edge, so gen(t) sits next to t2
                nbr[t, e], nbr_word[t, e] = t2, _word_index(words, index, ((k, -1),))
                nbr[t2, e2], nbr_word[t2, e2] = t, _word_index(words, index, ((k, 1),))
    if (nbr < 0).any():
        raise RuntimeError("mesh has unmatched edges")
    mesh = SurfaceMesh(
        domain=domain,
        level=int(level),
        dom_pos=pos,
        dom_quot=quot,
        dom_word=dom_word,
        dom_tri=tris,
        rep=np.array(reps),
        words=words,
        dom_word_idx=dom_word_idx,
        nbr=nbr,
        nbr_word_idx=nbr_word,
        boundary_pairs=links,
    )
    logger.debug("mesh genus=%d level=%d: V=%d T=%d", domain.genus, level, mesh.n_vertices, mesh.n_triangles)
    return mesh


def _word_index(words: list, index: dict, w) -> int:
    if w not in index:
        index[w] = len(words)
        words.append(w)
    return index[w]


_MESH_CACHE: dict = {}


def surface(genus: int, level: int) -> SurfaceMesh:
    """Cached ``refine(build_domain(genus), level)``."""
    key = (int(genus), int(level))
    if key not in _MESH_CACHE:
        _MESH_CACHE[key] = refine(build_domain(genus), level)
    return _MESH_CACHE[key]
