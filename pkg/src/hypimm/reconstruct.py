"""From immersion data to equivariant immersions and back.

``integrate_immersion`` develops adapted frames ``(f, sigma e1, sigma e2, N)``
over the fundamental domain by exponentiating the Maurer-Cartan form of
the data ``(b, a)`` along every edge, then spreads the loop defects with a
least-squares adjustment.  ``monodromy`` reads off the side-pairing
isometries, ``extract_data`` recovers ``(b, a)`` from a discrete map.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from . import hyperbolic as hyp
from .codazzi import QDBasis, combine_b_a, newton_det, qd_basis, tr2
from .energy import EquivariantMap, _edge_terms, triangle_geometry
from .representation import Representation
from .schatten import sqrtm_psd2
from .surface import SurfaceMesh, relation_product

logger = logging.getLogger(__name__)


class InconsistentDataError(ValueError):
    """Immersion data whose development does not close up."""


@dataclass
class FrameField:
    frames: np.ndarray  # (D, 4, 4) per domain vertex, columns (f, e1, e2, N)
    loop_defects: np.ndarray  # (T,) per triangle, before adjustment
    adjusted_defects: np.ndarray  # (T,) edge-increment mismatch after adjustment
    root: int

    @property
    def positions(self) -> np.ndarray:
        return self.frames[:, :, 0]

    def lorentz_residual(self) -> float:
        F = self.frames
        return float(np.abs(np.einsum("dji,jk,dkl->dil", F, hyp.ETA, F) - hyp.ETA).max())


def _as_vertex_field(mesh: SurfaceMesh, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape == (mesh.n_vertices, 2, 2):
        return x
    if x.shape == (mesh.n_triangles, 2, 2):
        return mesh.to_vertices(x)
    if x.shape == (2, 2):
        return np.broadcast_to(x, (mesh.n_vertices, 2, 2)).copy()
    raise ValueError("operator field has the wrong shape")


def _domain_edges(mesh: SurfaceMesh) -> np.ndarray:
    e = np.concatenate([mesh.dom_tri[:, [0, 1]], mesh.dom_tri[:, [1, 2]], mesh.dom_tri[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def _maurer_cartan(bw, baw, omega):
    Om = np.zeros((4, 4))
    Om[1, 0] = Om[0, 1] = bw[0]
    Om[2, 0] = Om[0, 2] = bw[1]
    Om[1, 3], Om[3, 1] = baw[0], -baw[0]
    Om[2, 3], Om[3, 2] = baw[1], -baw[1]
    Om[2, 1], Om[1, 2] = omega, -omega
    return Om


def edge_increments(mesh: SurfaceMesh, b, a, edges) -> np.ndarray:
    """Frame increments ``G_vw`` with ``F_w = F_v G_vw`` for directed domain edges.

    The data are averaged at the edge midpoint in the frame transported
    along the edge; the connection term vanishes in that frame for
    Codazzi ``b``.
    """
    X = mesh.dom_pos
    E = mesh.dom_frames
    out = np.empty((len(edges), 4, 4))
    for n, (v, w) in enumerate(edges):
        qv, qw = mesh.dom_quot[v], mesh.dom_quot[w]
        moved = np.stack([hyp.parallel_transport(E[v][:, j], X[v], X[w]) for j in range(2)], axis=-1)
        Rot = moved.T @ hyp.ETA @ E[w]  # E_w components -> transported E_v components
        bm = 0.5 * (b[qv] + Rot @ b[qw] @ Rot.T)
        am = 0.5 * (a[qv] + Rot @ a[qw] @ Rot.T)
        vec = E[v].T @ hyp.ETA @ hyp.log_point(X[v], X[w])
        G = expm(_maurer_cartan(bm @ vec, bm @ (am @ vec), 0.0))
        R4 = np.eye(4)
        R4[1:3, 1:3] = Rot
        out[n] = G @ R4
    return out


def expected_loop_defect(mesh: SurfaceMesh) -> float:
    """Typical largest loop defect of consistent data, from refinement runs."""
    return 0.012 * mesh.mesh_size**3


def integrate_immersion(
    mesh: SurfaceMesh,
    b,
    a,
    root: int = 0,
    root_frame: Optional[np.ndarray] = None,
    adjust: bool = True,
    defect_factor: Optional[float] = 100.0,
) -> tuple[EquivariantMap, FrameField]:
    """Develop data ``(b, a)`` into frames on the fundamental domain.

    Frames are propagated from ``root`` along a breadth-first spanning
    tree, then adjusted to the left-invariant least-squares fit of all
    edge increments.  Returns the map on the representative copies (its
    representation from :func:`monodromy`) and the frame field.  Raises
    :class:`InconsistentDataError` if a loop defect exceeds
    ``defect_factor`` times :func:`expected_loop_defect`.
    """
    b = _as_vertex_field(mesh, b)
    a = _as_vertex_field(mesh, a)
    if np.linalg.eigvalsh(0.5 * (b + np.swapaxes(b, -1, -2)))[:, 0].min() <= 0:
        raise ValueError("b must be positive definite")
    edges = _domain_edges(mesh)
    Gs = edge_increments(mesh, b, a, edges)
    D = len(mesh.dom_pos)
    inc: dict = {}
    for n, (v, w) in enumerate(edges):
        inc[(v, w)] = Gs[n]
        inc[(w, v)] = hyp.lorentz_inverse(Gs[n])
    defects = np.empty(mesh.n_triangles)
    for t, (p, q, r) in enumerate(mesh.dom_tri):
        loop = inc[(p, q)] @ inc[(q, r)] @ inc[(r, p)]
        defects[t] = np.linalg.norm(loop - np.eye(4))
    if defect_factor is not None:
        limit = defect_factor * expected_loop_defect(mesh)
        if defects.max() > limit:
            raise InconsistentDataError(f"loop defect {defects.max():.3e} exceeds {limit:.3e}")
    nbrs: list = [[] for _ in range(D)]
    for v, w in edges:
        nbrs[v].append(w)
        nbrs[w].append(v)
    F = np.zeros((D, 4, 4))
    F[root] = np.eye(4) if root_frame is None else hyp.check_isometry(root_frame)
    seen = np.zeros(D, dtype=bool)
    seen[root] = True
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in nbrs[v]:
            if not seen[w]:
                F[w] = F[v] @ inc[(v, w)]
                seen[w] = True
                queue.append(w)
    if adjust:
        F = _adjust_frames(F, edges, Gs, root)
    resid = np.linalg.norm(_edge_residuals(F, edges, Gs), axis=1)
    adj = np.zeros(mesh.n_triangles)
    edge_index = {(int(v), int(w)): n for n, (v, w) in enumerate(edges)}
    for t, tri in enumerate(mesh.dom_tri):
        for k in range(3):
            v, w = sorted((int(tri[k]), int(tri[(k + 1) % 3])))
            adj[t] = max(adj[t], resid[edge_index[(v, w)]])
    frames = FrameField(frames=F, loop_defects=defects, adjusted_defects=adj, root=root)
    rep = monodromy(frames, mesh)
    f = EquivariantMap(mesh, rep, F[mesh.rep, :, 0])
    return f, frames


def _log_near_identity(M) -> np.ndarray:
    """Batched logarithm of Lorentz matrices close to the identity, as so(1,3) coordinates."""
    E = M - np.eye(4)
    out = np.zeros_like(E)
    P = np.broadcast_to(np.eye(4), E.shape).copy()
    for k in range(1, 30):
        P = P @ E
        term = P / k * (-1) ** (k + 1)
        out += term
        if np.abs(term).max() < 1e-17:
            break
    return hyp.so13_coords(0.5 * (out - hyp.ETA @ np.swapaxes(out, -1, -2) @ hyp.ETA))


def _edge_residuals(F, edges, Gs) -> np.ndarray:
    """``log(G_vw^-1 F_v^-1 F_w)`` per edge, invariant under ``F -> g F``."""
    v, w = edges[:, 0], edges[:, 1]
    Ginv = hyp.ETA @ np.swapaxes(Gs, -1, -2) @ hyp.ETA
    Finv = hyp.ETA @ np.swapaxes(F[v], -1, -2) @ hyp.ETA
    return _log_near_identity(Ginv @ Finv @ F[w])


def _ad_matrices(R) -> np.ndarray:
    """``X -> [R, X]`` in so(1,3) coordinates, batched over ``R`` given as coordinates."""
    basis = hyp.so13_basis()
    Rm = np.tensordot(R, basis, axes=1)  # (m, 4, 4)
    br = np.einsum("mij,bjk->mbik", Rm, basis) - np.einsum("bij,mjk->mbik", basis, Rm)
    return np.swapaxes(hyp.so13_coords(br), -1, -2)


def _adjust_frames(F0, edges, Gs, root, tol: float = 1e-12, max_iter: int = 20):
    """Frames minimising ``sum |log(G_vw^-1 F_v^-1 F_w)|^2`` with the root pinned.

    Gauss-Newton with updates ``F_d -> F_d exp(xi_d)`` and the exact
    derivative of the logarithm.  The objective does not change under
    ``F -> g F``, so the result depends on the root only through that
    global isometry.
    """
    D = F0.shape[0]
    m = len(edges)
    free = np.array([d for d in range(D) if d != root])
    col = -np.ones(D, dtype=int)
    col[free] = np.arange(len(free))
    basis = hyp.so13_basis()
    AdGinv = np.array([hyp.adjoint_matrix(hyp.lorentz_inverse(G)) for G in Gs])  # (m, 6, 6)
    v, w = edges[:, 0], edges[:, 1]
    rr, cc = np.meshgrid(np.arange(6), np.arange(6), indexing="ij")
    blk_rows = 6 * np.arange(m)[:, None, None] + rr
    eye = np.eye(6)
    F = F0.copy()
    for _ in range(max_iter):
        r = _edge_residuals(F, edges, Gs)
        ad = _ad_matrices(r)
        ad2 = ad @ ad
        Jw = eye + 0.5 * ad + ad2 / 12.0
        Jv = -(eye - 0.5 * ad + ad2 / 12.0) @ AdGinv
        rows, cols, vals = [], [], []
        for side, J in ((w, Jw), (v, Jv)):
            ok = col[side] >= 0
            rows.append(blk_rows[ok].ravel())
            cols.append((6 * col[side][ok][:, None, None] + cc).ravel())
            vals.append(J[ok].ravel())
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(6 * m, 6 * len(free))
        )
        xi = -spla.spsolve((A.T @ A).tocsc(), A.T @ r.ravel()).reshape(-1, 6)
        F[free] = F[free] @ expm_batch(np.tensordot(xi, basis, axes=1))
        logger.debug("frame adjustment step %.3e", np.abs(xi).max())
        if np.abs(xi).max() < tol:
            break
    return F


def expm_batch(X) -> np.ndarray:
    """Batched matrix exponential for small so(1,3) elements."""
    out = np.broadcast_to(np.eye(4), X.shape).copy()
    P = out.copy()
    for k in range(1, 30):
        P = P @ X / k
        out += P
        if np.abs(P).max() < 1e-17:
            break
    return out


# --- monodromy -------------------------------------------------------------------


def _center_gauge(F) -> np.ndarray:
    """Isometry moving the origin to the barycentre of the developed points.

    Conjugating by it makes the relation projection equivariant: for
    ``F -> g F`` it changes by ``g`` times a rotation fixing the origin.
    """
    c = hyp.normalize_point(F[:, :, 0].sum(axis=0))
    s = np.arccosh(max(c[0], 1.0))
    if s < 1e-14:
        return np.eye(4)
    u = c[1:] / np.sinh(s)
    # boost along the unit direction u
    B = np.eye(4)
    B[0, 0] = np.cosh(s)
    B[0, 1:] = B[1:, 0] = np.sinh(s) * u
    B[1:, 1:] += (np.cosh(s) - 1.0) * np.outer(u, u)
    return B


def project_to_relation(gens: np.ndarray, tol: float = 1e-13, max_iter: int = 20) -> np.ndarray:
    """Smallest correction ``g_k -> g_k exp(X_k)`` making the surface relation hold.

    Gauss-Newton with minimum-norm steps in so(1,3) coordinates and a
    central-difference Jacobian.  Stops once the residual no longer halves,
    since further steps only add rounding noise.
    """
    basis = hyp.so13_basis()
    gens = np.array(gens, dtype=float)
    n = len(gens)
    h = 1e-6

    def resid(g):
        return hyp.so13_coords(hyp.so13_log(relation_product(g)))

    prev = np.linalg.norm(relation_product(gens) - np.eye(4))
    for _ in range(max_iter):
        if prev <= tol:
            break
        r = resid(gens)
        Jm = np.zeros((6, 6 * n))
        for k in range(n):
            for j in range(6):
                gp, gm = gens.copy(), gens.copy()
                gp[k] = gens[k] @ expm(h * basis[j])
                gm[k] = gens[k] @ expm(-h * basis[j])
                Jm[:, 6 * k + j] = (resid(gp) - resid(gm)) / (2 * h)
        step = -np.linalg.lstsq(Jm, r, rcond=None)[0]
        trial = np.array([g @ expm(np.tensordot(step[6 * k : 6 * k + 6], basis, axes=1)) for k, g in enumerate(gens)])
        cur = np.linalg.norm(relation_product(trial) - np.eye(4))
        if cur < prev:
            gens = trial
        if cur > 0.5 * prev:
            break
        prev = cur
    return gens


@dataclass
class MonodromyReport:
    rep: Representation
    fit_residuals: np.ndarray  # per generator, largest |log(rho^-1 F_dst F_src^-1)|
    raw_relation_residual: float
    correction: float  # size of the relation projection


def default_match_limit(mesh: SurfaceMesh) -> float:
    """Side-matching limit: 100 times the loop-defect expectation, at least 1e-4."""
    return max(1e-4, 100.0 * expected_loop_defect(mesh))


def monodromy(frames: FrameField, mesh: SurfaceMesh, project: bool = True, match_limit: Optional[float] = None):
    """Side-pairing isometries of the developed frames (see :func:`monodromy_report`)."""
    rep, _ = monodromy_report(frames, mesh, project=project, match_limit=match_limit)
    return rep


def monodromy_report(
    frames: FrameField, mesh: SurfaceMesh, project: bool = True, match_limit: Optional[float] = None
):
    """Side-pairing isometries of the developed frames.

    For each generator the pairwise estimates ``F_dst F_src^-1`` over paired
    boundary vertices are averaged in the Lie algebra (one mean-shift
    step), which lands in SO+(1,3).  The generators are then moved
    minimally onto the relation variety, in a gauge centred on the
    developed surface.
    """
    F = frames.frames
    limit = default_match_limit(mesh) if match_limit is None else match_limit
    ng = 2 * mesh.genus
    pairs: list = [[] for _ in range(ng)]
    for k, s, t in mesh.boundary_pairs:
        pairs[k].append(F[t] @ hyp.lorentz_inverse(F[s]))
    gens, fits = [], []
    for k in range(ng):
        est = np.array(pairs[k])
        g = est[0]
        for _ in range(5):
            gi = hyp.lorentz_inverse(g)
            step = _log_near_identity(gi @ est).mean(axis=0)
            g = g @ expm(np.tensordot(step, hyp.so13_basis(), axes=1))
            if np.abs(step).max() < 1e-15:
                break
        gi = hyp.lorentz_inverse(g)
        fits.append(float(np.linalg.norm(_log_near_identity(gi @ est), axis=1).max()))
        gens.append(hyp.lorentz_polar_project(g))
    gens = np.array(gens)
    fits = np.array(fits)
    if fits.max() > limit:
        raise InconsistentDataError(f"side matching residual {fits.max():.3e} exceeds {limit:.1e}")
    raw = float(np.linalg.norm(relation_product(gens) - np.eye(4)))
    corr = 0.0
    if project:
        C = _center_gauge(F)
        Ci = hyp.lorentz_inverse(C)
        local = np.array([Ci @ g @ C for g in gens])
        new = project_to_relation(local)
        corr = float(np.abs(new - local).max())
        gens = np.array([C @ g @ Ci for g in new])
    rep = Representation(gens)
    return rep, MonodromyReport(rep=rep, fit_residuals=fits, raw_relation_residual=raw, correction=corr)


# --- extraction -------------------------------------------------------------------


@dataclass
class ExtractedData:
    b: np.ndarray
    a: np.ndarray
    symmetrization_defect: float


def patch_points(f: EquivariantMap) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source points and images of every triangle's patch vertices, placed next to it.

    Returns ``(X, Y, mask)`` with ``mask`` marking valid padded entries.
    """
    m = f.mesh
    idx, wa, wb, wc, n = m.triangle_patches

    def place(W, pos):
        Winv = np.array([hyp.lorentz_inverse(w) for w in W])
        return np.einsum("tpij,tpj->tpi", W[wa] @ Winv[wb] @ W[wc], pos[idx])

    X = place(m._word_mats, m.vertices)
    Y = place(f.word_mats, f.positions)
    mask = np.arange(idx.shape[1])[None, :] < n[:, None]
    return X, Y, mask


@dataclass
class PatchFit:
    df: np.ndarray  # (T, 3, 2) recovered differential, image frame coordinates
    II: np.ndarray  # (T, 2, 2) second fundamental form in the source triangle frame


def patch_fit(f: EquivariantMap, geom=None) -> PatchFit:
    """Weighted quadratic fit of the map over each triangle's patch.

    Source points are taken in normal coordinates at the source centroid
    (triangle frame), images in normal coordinates at the image centroid
    (frame ``t1, t2, N``).  The fit recovers the differential to second
    order, which the piecewise linear map itself only gives to first.
    """
    m = f.mesh
    geom = triangle_geometry(f) if geom is None else geom
    X, Y, mask = patch_points(f)
    cs = m.centroids
    Ls = hyp.log_point(np.broadcast_to(cs[:, None, :], X.shape), X)
    sx = np.einsum("tia,ij,tpj->tpa", m.tri_frames, hyp.ETA, Ls)
    Li = hyp.log_point(np.broadcast_to(geom.centroid[:, None, :], Y.shape), Y)
    z = np.einsum("tia,ij,tpj->tpa", geom.frame, hyp.ETA, Li)
    x, y = sx[..., 0], sx[..., 1]
    A = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)
    r2 = x * x + y * y
    r2max = np.max(np.where(mask, r2, 0.0), axis=1, keepdims=True)
    w = np.where(mask, 1.0 / (1.0 + r2 / r2max) ** 2, 0.0)
    lhs = np.einsum("tpa,tp,tpb->tab", A, w, A)
    rhs = np.einsum("tpa,tp,tpc->tac", A, w, z)
    C = np.linalg.solve(lhs, rhs)  # (T, 6, 3)
    df = np.stack([C[:, 1], C[:, 2]], axis=-1)  # (T, 3, 2)
    n = np.cross(df[..., 0], df[..., 1])
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    n = n * np.sign(n[:, 2:3])
    d11, d12, d22 = 2 * C[:, 3], C[:, 4], 2 * C[:, 5]
    II = -np.stack(
        [
            np.stack([np.sum(n * d11, -1), np.sum(n * d12, -1)], -1),
            np.stack([np.sum(n * d12, -1), np.sum(n * d22, -1)], -1),
        ],
        -2,
    )
    return PatchFit(df=df, II=II)


def second_fundamental_form(f: EquivariantMap, geom=None) -> np.ndarray:
    """Second fundamental form per triangle in the source triangle frame."""
    return patch_fit(f, geom).II


def extract_data(f: EquivariantMap, return_report: bool = False):
    """Per-triangle ``(b, a)`` of a discrete immersion, in the triangle frames.

    ``b`` is the polar part of the recovered differential of
    :func:`patch_fit`, ``a = I^-1 II`` with ``I = b^2``.
    """
    geom = triangle_geometry(f)
    G = geom.G
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
    if (det <= 1e-12 * (G[:, 0, 0] + G[:, 1, 1]) ** 2).any():
        raise ValueError("extract_data needs an immersion (rank-deficient triangle found)")
    fit = patch_fit(f, geom)
    I = np.swapaxes(fit.df, -1, -2) @ fit.df
    b = sqrtm_psd2(I)
    a = np.linalg.solve(I, fit.II)
    if return_report:
        return ExtractedData(b=b, a=a, symmetrization_defect=0.0)
    return b, a


def curvature_check(f: EquivariantMap) -> tuple[np.ndarray, np.ndarray]:
    """Angle-defect curvature of the image metric per vertex, and ``-1/det b`` there.

    Angles are those of flat triangles with the image edge lengths; the
    cell area is a third of the adjacent image areas.
    """
    m = f.mesh
    ell, _ = _edge_terms(f.corner_positions())
    l01, l12, l20 = ell[:, 0], ell[:, 1], ell[:, 2]

    def angle(opp, s1, s2):
        return np.arccos(np.clip((s1**2 + s2**2 - opp**2) / (2 * s1 * s2), -1.0, 1.0))

    ang = np.stack([angle(l12, l20, l01), angle(l20, l01, l12), angle(l01, l12, l20)], axis=1)
    total = np.zeros(m.n_vertices)
    np.add.at(total, m.tri.ravel(), ang.ravel())
    G = triangle_geometry(f).G
    detb = np.sqrt(np.clip(G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0], 0.0, None))
    cell = np.zeros(m.n_vertices)
    np.add.at(cell, m.tri.ravel(), np.repeat(m.areas * detb / 3.0, 3))
    src = np.zeros(m.n_vertices)
    np.add.at(src, m.tri.ravel(), np.repeat(m.areas / 3.0, 3))
    return (2 * np.pi - total) / cell, -src / cell


# --- complex functional and the C-linearity probe -----------------------------------


def fc_value(mesh: SurfaceMesh, phi) -> complex:
    """``int tr(phi) omega_h``."""
    phi = np.asarray(phi)
    if phi.shape[0] == mesh.n_vertices:
        return complex(mesh.integrate(tr2(phi)))
    return complex(mesh.integrate_triangles(tr2(phi)))


def datum_monodromy(mesh: SurfaceMesh, phi, reference=None):
    """Monodromy of the immersion with data ``phi = b - i J b a``."""
    from .codazzi import split_b_a

    b, a = split_b_a(phi)
    f, frames = integrate_immersion(mesh, b, a)
    return f.rep


@dataclass
class CLinearityReport:
    steps: list
    defects: list
    delta_real: list = field(default_factory=list)
    delta_imag: list = field(default_factory=list)


def clinearity_probe(
    mesh: SurfaceMesh,
    q,
    qprime,
    direction,
    step: float = 0.02,
    qd: Optional[QDBasis] = None,
    halvings: int = 1,
) -> CLinearityReport:
    """Compare the variation of trace invariants along ``delta`` and ``i delta``.

    ``i delta`` moves ``q'`` by ``delta``.  Reports
    ``|D_{i delta} - i D_delta| / |D_delta|`` for ``step`` and its halvings.
    """
    qd = qd_basis(mesh) if qd is None else qd
    q = np.asarray(q, dtype=float)
    qprime = np.asarray(qprime, dtype=float)
    direction = np.asarray(direction, dtype=float)

    def invariants(qq, qp):
        md = newton_det(mesh, qq, qp, qd=qd)
        return datum_monodromy(mesh, md.phi).trace_invariants()

    steps, defects, dr, di = [], [], [], []
    s = step
    for _ in range(halvings + 1):
        if not direction.any():
            steps.append(s)
            defects.append(0.0)
            dr.append(0.0)
            di.append(0.0)
            s *= 0.5
            continue
        d_re = (invariants(q + s * direction, qprime) - invariants(q - s * direction, qprime)) / (2 * s)
        d_im = (invariants(q, qprime + s * direction) - invariants(q, qprime - s * direction)) / (2 * s)
        nrm = np.linalg.norm(d_re)
        steps.append(s)
        defects.append(float(np.linalg.norm(d_im - 1j * d_re) / nrm) if nrm > 0 else float("nan"))
        dr.append(float(nrm))
        di.append(float(np.linalg.norm(d_im)))
        s *= 0.5
    return CLinearityReport(steps=steps, defects=defects, delta_real=dr, delta_imag=di)
