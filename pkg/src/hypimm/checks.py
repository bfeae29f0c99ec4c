"""Acceptance checks shared by the test suite and ``hypimm verify``.

Each ``criterion_*`` function runs one acceptance criterion and returns a
:class:`CriterionResult` made of individual :class:`Check` lines, each
holding the measured value, its limit and the time spent.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import hyperbolic as hyp
from . import schatten as sch
from .codazzi import (
    assemble,
    cod,
    coercivity_form,
    decompose,
    el_residuals,
    mesh_tolerance,
    newton_det,
    qd_basis,
)
from .energy import (
    EquivariantMap,
    convexity_probe,
    energy,
    minimize,
    normal_field,
    retraction_test,
)
from .reconstruct import clinearity_probe, extract_data
from .representation import Representation
from .surface import SurfaceMesh, surface, word_matrix

SEED = 20240611


@dataclass
class Check:
    name: str
    value: float
    limit: float
    kind: str = "max"  # "max": value <= limit, "min": value >= limit, "eq": equal, "info": not asserted
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.kind == "info":
            return True
        if not np.isfinite(self.value):
            return False
        if self.kind == "eq":
            return self.value == self.limit
        return self.value <= self.limit if self.kind == "max" else self.value >= self.limit

    @property
    def margin(self) -> float:
        """Relative distance to the limit; negative when failing."""
        if self.kind == "info" or not np.isfinite(self.value):
            return float("nan")
        if self.kind == "eq":
            return 0.0 if self.passed else -1.0
        scale = max(abs(self.limit), 1e-300)
        return (self.limit - self.value) / scale if self.kind == "max" else (self.value - self.limit) / scale

    def line(self) -> str:
        tag = "INFO" if self.kind == "info" else ("PASS" if self.passed else "FAIL")
        op = {"max": "<=", "min": ">=", "eq": "==", "info": "~"}[self.kind]
        return f"{tag} {self.name}: {self.value:.4g} {op} {self.limit:.4g} ({self.seconds:.1f} s)"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["margin"] = self.margin
        return d


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list
    seconds: float
    gating: bool = True
    runtime_limit: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        head = "PASS" if self.passed else "FAIL"
        if not self.gating:
            head = "INFO"
        label = f"criterion {self.number}" if self.number else "suite"
        out = [f"[{head}] {label}: {self.title} ({self.seconds:.1f} s)"]
        out += ["    " + c.line() for c in self.checks]
        return out

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "title": self.title,
            "passed": self.passed,
            "gating": self.gating,
            "seconds": self.seconds,
            "runtime_limit": self.runtime_limit,
            "worst_margin": min((c.margin for c in self.checks if np.isfinite(c.margin)), default=float("nan")),
            "checks": [c.to_dict() for c in self.checks],
        }


class _Timer:
    def __init__(self):
        self.t = time.perf_counter()

    def lap(self) -> float:
        now = time.perf_counter()
        dt, self.t = now - self.t, now
        return dt


def _finish(number, title, checks, t0, runtime_limit=None, gating=True) -> CriterionResult:
    seconds = time.perf_counter() - t0
    if runtime_limit is not None:
        checks.append(Check("runtime [s]", seconds, runtime_limit, "max" if gating else "info"))
    return CriterionResult(number, title, checks, seconds, gating, runtime_limit)


def _mesh(level: int, genus: int = 2) -> SurfaceMesh:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return surface(genus, level)


def _basis(mesh: SurfaceMesh):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return qd_basis(mesh)


def random_coefficients(rng, n: int, norm: float) -> tuple[np.ndarray, np.ndarray]:
    """``(q, q')`` with a random direction and joint Euclidean norm ``norm``."""
    v = rng.normal(size=2 * n)
    v *= norm / np.linalg.norm(v)
    return v[:n], v[n:]


def smooth_bump(X, center, radius):
    """``(1 - (d/r)^2)^4`` in the distance ``d`` to ``center``; zero beyond ``radius``."""
    s = np.clip(hyp.distance(X, center) / radius, 0.0, 1.0)
    return (1.0 - s * s) ** 4


def injectivity_radius(mesh: SurfaceMesh, max_len: int = 3) -> float:
    """Half the shortest translation length among deck words up to ``max_len`` letters."""
    G = mesh.domain.generators
    n = len(G)
    letters = [(k, e) for k in range(n) for e in (1, -1)]
    words = [[l] for l in letters]
    best = np.inf
    for _ in range(max_len):
        nxt = []
        for w in words:
            M = word_matrix(tuple(w), G)
            tr = np.trace(M)
            if tr > 4.0 + 1e-9:  # hyperbolic element of the plane group: tr = 2 cosh l + 2
                best = min(best, float(np.arccosh((tr - 2.0) / 2.0)))
            for l in letters:
                if l != (w[-1][0], -w[-1][1]):
                    nxt.append(w + [l])
        words = nxt
    return 0.5 * best


# --- 1: Schatten norm suite -------------------------------------------------------------


def criterion_schatten(seed: int = SEED, n: int = 10_000) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tm = _Timer()
    checks = []

    L = rng.normal(size=(n, 3, 2))
    Lp = rng.normal(size=(n, 3, 2))

    def norms(M, eps=0.0):
        return sch.q_eps_gram(np.swapaxes(M, -1, -2) @ M, eps, sch.gram_det(M))

    sv = np.linalg.svd(L, compute_uv=False)
    nL, nLp = norms(L), norms(Lp)
    c = rng.normal(size=n)
    worst = max(
        float(np.abs(nL - sv.sum(-1)).max()),
        float(np.abs(norms(c[:, None, None] * L) - np.abs(c) * nL).max()),
        float(max(0.0, np.max(norms(L + Lp) - nL - nLp))),
        float(max(0.0, -np.min(nL))),
        abs(sch.schatten1(np.zeros((3, 2)))),
    )
    checks.append(Check("norm axioms, worst violation", worst, 1e-12, seconds=tm.lap()))

    worst = -np.inf
    for eps in (0.0, 0.1, 1.0):
        gap = 2 * norms(0.5 * (L + Lp), eps) - norms(L, eps) - norms(Lp, eps)
        worst = max(worst, float(gap.max()))
    checks.append(Check("q_eps midpoint convexity, max 2q(mid) - q - q'", worst, 1e-12, seconds=tm.lap()))

    # sorted pairs t1 <= t2; the comparison needs t2 <= t2' and t1 + t2 <= t1' + t2'
    worst = -np.inf
    for eps in (0.0, 0.1, 1.0):
        t = np.sort(rng.uniform(0, 3, size=(n, 2)), axis=1)
        tp = np.sort(rng.uniform(0, 3, size=(n, 2)), axis=1)
        ok = (t[:, 1] <= tp[:, 1]) & (t.sum(1) <= tp.sum(1))
        d = sch.n_eps(t[ok, 0], t[ok, 1], eps) - sch.n_eps(tp[ok, 0], tp[ok, 1], eps)
        worst = max(worst, float(d.max()))
    checks.append(Check("n_eps monotonicity, max n(t) - n(t')", worst, 1e-12, seconds=tm.lap()))

    A = rng.normal(size=(n, 3, 3))
    opn = np.linalg.norm(A, ord=2, axis=(1, 2))
    ratio = norms(A @ L) / (opn * nL)
    checks.append(Check("|AL|_1 / (|A|_op |L|_1)", float(ratio.max()), 1.0 + 1e-12, seconds=tm.lap()))

    worst = 0.0
    for eps in (0.0, 0.1, 1.0):
        M = eps * eps * np.eye(2) + np.swapaxes(L[:1000], -1, -2) @ L[:1000]
        w, U = np.linalg.eigh(M)
        direct = np.sqrt(np.clip(w, 0, None)).sum(-1)
        worst = max(worst, float(np.abs(sch.q_eps_gram(M - eps * eps * np.eye(2), eps) - direct).max()))
    checks.append(Check("closed form vs matrix square root", worst, 1e-12, seconds=tm.lap()))

    worst = 0.0
    h = 1e-5
    for _ in range(200):
        Lr = rng.normal(size=(3, 2))
        B = rng.normal(size=(3, 3))
        Ar = B @ B.T
        eps = float(rng.choice([0.0, 0.1, 1.0]))
        d = sch.q_eps_directional_derivative(Lr, Ar, eps)
        fd = (sch.q_eps(Lr + h * Ar @ Lr, eps) - sch.q_eps(Lr - h * Ar @ Lr, eps)) / (2 * h)
        worst = max(worst, abs(d - fd) / max(1.0, abs(fd)))
    checks.append(Check("derivative formula vs finite differences", worst, 1e-6, seconds=tm.lap()))

    grid = np.linspace(0.0, 1.0, 11)
    worst = 0.0
    for _ in range(5):
        T0 = rng.normal(size=(3, 2))
        pr = sch.jacobi_convexity_probe(T0, np.zeros((3, 2)), lambda s: np.eye(3), grid)
        worst = max(worst, float(np.abs(pr.u - np.cosh(grid) * pr.u[0]).max() / pr.u[0]))
    checks.append(Check("Jacobi probe vs cosh closed form", worst, 1e-6, seconds=tm.lap()))

    worst = np.inf
    for _ in range(100):
        B0, B1 = rng.normal(size=(2, 3, 3))
        Afun = lambda s, B0=B0, B1=B1: (B0 + s * B1) @ (B0 + s * B1).T
        pr = sch.jacobi_convexity_probe(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), Afun, grid)
        worst = min(worst, float(pr.second_differences.min() / np.abs(pr.u).max()))
    checks.append(Check("Jacobi probe, min second difference / max u", worst, -1e-8, "min", seconds=tm.lap()))
    return _finish(1, "Schatten norm suite", checks, t0, runtime_limit=10.0)


# --- 2, 3: Fuchsian and equidistant energies ----------------------------------------------


def criterion_identity_energy(level: int = 3) -> CriterionResult:
    t0 = time.perf_counter()
    m = _mesh(level)
    F = energy(EquivariantMap.identity(m)).value
    target = 8 * np.pi
    checks = [Check("|F - 8 pi| / 8 pi", abs(F - target) / target, 0.01, detail={"F": F}, seconds=time.perf_counter() - t0)]
    return _finish(2, "Fuchsian identity energy", checks, t0, runtime_limit=5.0)


def criterion_equidistant(level: int = 3) -> CriterionResult:
    t0 = time.perf_counter()
    tm = _Timer()
    m = _mesh(level)
    f0 = EquivariantMap.identity(m)
    F0 = energy(f0).value
    worst = 0.0
    for t in (0.25, 0.5, 1.0):
        ratio = energy(EquivariantMap.equidistant(m, t)).value / F0
        worst = max(worst, abs(ratio / np.cosh(t) - 1.0))
    checks = [Check("F(f_t)/F(f_0) vs cosh t, relative", worst, 0.01, seconds=tm.lap())]
    probe = convexity_probe(f0, normal_field(f0), np.linspace(-1.0, 1.0, 11))
    checks.append(
        Check(
            "convexity probe, min second difference / max F",
            float(probe.second_differences.min() / probe.values.max()),
            -1e-6,
            "min",
            seconds=tm.lap(),
        )
    )
    before, after = retraction_test(EquivariantMap.equidistant(m, 1.0))
    checks.append(Check("retraction at t = 1: F_after / F_before", after / before, 1.0 - 1e-9, seconds=tm.lap()))
    return _finish(3, "equidistant family", checks, t0, runtime_limit=30.0)


# --- 4: elliptic and decomposition ------------------------------------------------------


def divergence_study(levels=(3, 4, 5)) -> list[float]:
    """|lhs - rhs| of the divergence identity for a fixed smooth Codazzi field, per level."""
    o = hyp.ORIGIN
    c1 = hyp.boost(0.1, 1) @ o
    c2 = hyp.boost(0.1, 2) @ o
    from .codazzi import divergence_identity_check

    errs = []
    for lv in levels:
        m = _mesh(lv)
        X = m.vertices
        phi = np.eye(2)[None] + 0.2 * cod(m, smooth_bump(X, c2, 1.4)).real
        lhs, rhs = divergence_identity_check(m, phi, smooth_bump(X, o, 1.45), smooth_bump(X, c1, 1.4))
        errs.append(abs(lhs - rhs))
    return errs


def criterion_elliptic(seed: int = SEED, level: int = 3) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tm = _Timer()
    m = _mesh(level)
    u0 = rng.normal(size=m.n_vertices)
    u1 = m.laplacian_solve(m.apply_shifted(u0, 2.0), shift=2.0)
    checks = [Check("(-Delta+2) round trip, relative", float(np.abs(u1 - u0).max() / np.abs(u0).max()), 1e-8, seconds=tm.lap())]
    qd = _basis(m)
    checks.append(Check("QD basis dimension", qd.dimension, 6, "eq", seconds=tm.lap()))
    checks.append(Check("spectral gap ratio", qd.gap, 10.0, "min", seconds=tm.lap()))
    worst = 0.0
    for _ in range(3):
        u = rng.normal(size=m.n_vertices) * 0.1 + 1.0 + 1j * rng.normal(size=m.n_vertices) * 0.1
        q, qp = rng.normal(size=(2, qd.dimension))
        phi = assemble(m, qd, u, q, qp)
        dec = decompose(m, phi, qd)
        err = max(
            float(np.abs(dec.u - u).max() / np.abs(u).max()),
            float(np.abs(dec.q - q).max() / np.abs(q).max()),
            float(np.abs(dec.qprime - qp).max() / np.abs(qp).max()),
        )
        worst = max(worst, err)
    checks.append(Check("decompose(assemble) parameter error", worst, 1e-6, seconds=tm.lap()))
    levels = (3, 4, 5)
    errs = divergence_study(levels)
    orders = [float(np.log2(a / b)) for a, b in zip(errs[:-1], errs[1:])]
    checks.append(
        Check(
            "divergence identity, observed order",
            min(orders),
            1.0,
            "min",
            detail={"levels": list(levels), "errors": errs, "orders": orders},
            seconds=tm.lap(),
        )
    )
    return _finish(4, "elliptic and decomposition suite", checks, t0, runtime_limit=120.0)


# --- 5: Newton ------------------------------------------------------------------------


def criterion_newton(seed: int = SEED, level: int = 3, norm: float = 0.1) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tm = _Timer()
    m = _mesh(level)
    qd = _basis(m)
    q, qp = random_coefficients(rng, qd.dimension, norm)
    md = newton_det(m, q, qp, qd=qd, tol=1e-10)
    checks = [
        Check("Newton iterations", md.iterations, 8, seconds=tm.lap(), detail={"history": md.history}),
        Check("pointwise |det phi - 1|", md.det_residual, 1e-9),
        Check("positivity margin of Re phi", md.positivity_margin, 0.0, "min"),
    ]
    vals = []
    for _ in range(100):
        vals.append(coercivity_form(m, md.phi, rng.normal(size=m.n_vertices)))
    checks.append(Check("min Re<-L u, u> over 100 directions", float(min(vals)), 0.0, "min", seconds=tm.lap()))
    return _finish(5, "Newton on the determinant constraint", checks, t0, runtime_limit=60.0)


# --- 6: round trip --------------------------------------------------------------------


def criterion_roundtrip(seed: int = SEED, level: int = 3, norm: float = 0.1) -> CriterionResult:
    from .pipeline import roundtrip

    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    m = _mesh(level)
    qd = _basis(m)
    q, qp = random_coefficients(rng, qd.dimension, norm)
    rep = roundtrip(m, q, qp, qd=qd)
    detail = rep.summary()
    checks = [
        Check("relation residual", rep.relation_residual, 1e-6, detail={"raw": rep.raw_relation_residual}),
        Check("|phi' - phi| / |phi|", rep.field_error, 0.05, detail=detail),
        Check("|Re F_C - F| / F", rep.energy_gap, 0.02, detail={"fc": [rep.fc.real, rep.fc.imag], "F": rep.energy}),
    ]
    return _finish(6, "round trip data -> monodromy -> minimizer -> data", checks, t0, runtime_limit=900.0)


# --- 7: Fuchsian criticality ----------------------------------------------------------


def _perturbed(f: EquivariantMap, rng, scale: float) -> EquivariantMap:
    X = hyp.project_tangent(f.positions, rng.normal(size=f.positions.shape) * scale)
    return f.with_positions(hyp.exp_point(f.positions, X))


def criterion_fuchsian_critical(seed: int = SEED, level: int = 3) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tm = _Timer()
    m = _mesh(level)
    tol = mesh_tolerance(m)
    lim = 10.0 * tol
    rep = Representation.fuchsian(m.domain)
    f0 = EquivariantMap.identity(m, rep)
    res = minimize(rep, _perturbed(f0, rng, 0.1))
    b, a = extract_data(res.map)
    el = el_residuals(m, b, a)
    dist = float(hyp.distance(res.map.positions, f0.positions).max())
    checks = [
        Check("equal metrics: |det b - 1|", el["gauss"], lim, detail={"el": el, "sup_distance_to_identity": dist}),
        Check("equal metrics: d^nabla b", el["dnabla_b"], lim),
        Check("equal metrics: tr(Jb)", el["tr_Jb"], lim, seconds=tm.lap()),
    ]
    g = hyp.rotation(0.7) @ hyp.boost(0.3)
    rep2 = rep.conjugate(g)
    start = _perturbed(f0, rng, 0.1)
    f2 = EquivariantMap(m, rep2, np.einsum("ij,vj->vi", g, start.positions))
    res2 = minimize(rep2, f2)
    b2, a2 = extract_data(res2.map)
    el2 = el_residuals(m, b2, a2)
    for k in ("dnabla_b", "dnabla_ba", "tr_Jb", "tr_ba", "tr_Jb2a", "gauss"):
        checks.append(Check(f"conjugated target: {k}", el2[k], lim))
    checks[-1].seconds = tm.lap()
    checks[-1].detail = {"el": el2, "mesh_tolerance": tol}
    return _finish(7, "Fuchsian minimal-Lagrangian criticality", checks, t0, runtime_limit=600.0)


# --- 8: uniqueness ---------------------------------------------------------------------


def criterion_uniqueness(seed: int = SEED, level: int = 3, runs: int = 5) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    m = _mesh(level)
    rep = Representation.fuchsian(m.domain)
    f0 = EquivariantMap.identity(m, rep)
    maps, values = [], []
    for _ in range(runs):
        res = minimize(rep, _perturbed(f0, rng, 0.3))
        maps.append(res.map.positions)
        values.append(res.energy)
    worst = 0.0
    for i in range(runs):
        for j in range(i + 1, runs):
            worst = max(worst, float(hyp.distance(maps[i], maps[j]).max()))
    r_inj = injectivity_radius(m)
    spread = (max(values) - min(values)) / min(values)
    checks = [
        Check("pairwise sup distance / injectivity radius", worst / r_inj, 0.01, detail={"injectivity_radius": r_inj}),
        Check("relative spread of F", spread, 1e-3, detail={"F": values}),
    ]
    return _finish(8, "uniqueness of minimizers", checks, t0)


# --- 9: C-linearity diagnostic ----------------------------------------------------------


def criterion_clinearity(level: int = 3, step: float = 0.02, halvings: int = 2) -> CriterionResult:
    t0 = time.perf_counter()
    m = _mesh(level)
    qd = _basis(m)
    z = np.zeros(qd.dimension)
    d = np.zeros(qd.dimension)
    d[0] = 1.0
    rep = clinearity_probe(m, z, z, d, step=step, qd=qd, halvings=halvings)
    checks = [
        Check(f"defect at step {s:g}", v, 0.10, "info", detail={"steps": rep.steps, "defects": rep.defects})
        for s, v in zip(rep.steps, rep.defects)
    ]
    decreasing = all(b < a for a, b in zip(rep.defects[:-1], rep.defects[1:]))
    checks.append(Check("defect decreases under step halving", float(decreasing), 1.0, "info"))
    zero = clinearity_probe(m, z, z, z, step=step, qd=qd, halvings=0)
    checks.append(Check("defect for delta = 0", zero.defects[0], 0.0, "info"))
    return _finish(9, "C-linearity diagnostic (not gating)", checks, t0, gating=False)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_schatten,
    2: criterion_identity_energy,
    3: criterion_equidistant,
    4: criterion_elliptic,
    5: criterion_newton,
    6: criterion_roundtrip,
    7: criterion_fuchsian_critical,
    8: criterion_uniqueness,
    9: criterion_clinearity,
}


def run_criterion(number: int, seed: int = SEED) -> CriterionResult:
    import inspect

    fn = CRITERIA[number]
    if "seed" in inspect.signature(fn).parameters:
        return fn(seed=seed)
    return fn()


# --- module suites without a numbered criterion -------------------------------------------


def random_points(rng, n: int, scale: float = 1.5) -> np.ndarray:
    return hyp.point_from_spatial(rng.normal(size=(n, 3)) * scale)


def random_tangent(rng, x, max_norm: float = 3.0) -> np.ndarray:
    v = hyp.project_tangent(x, rng.normal(size=x.shape))
    n = hyp.tangent_norm(v)[..., None]
    return v / np.where(n > 0, n, 1.0) * rng.uniform(0.0, max_norm, size=n.shape)


def suite_hyperbolic(seed: int = SEED, n: int = 10_000) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tm = _Timer()
    x, y = random_points(rng, n), random_points(rng, n)
    v = random_tangent(rng, x)
    checks = [
        Check("log(exp) round trip", float(np.abs(hyp.log_point(x, hyp.exp_point(x, v)) - v).max()), 1e-9),
        Check(
            "|log| vs arccosh(-<x,y>)",
            float(np.abs(hyp.tangent_norm(hyp.log_point(x, y)) - np.arccosh(-hyp.minkowski(x, y))).max()),
            1e-9,
        ),
    ]
    u, w = random_tangent(rng, x), random_tangent(rng, x)
    Pu, Pw = hyp.parallel_transport(u, x, y), hyp.parallel_transport(w, x, y)
    g0 = hyp.minkowski(u, w)
    checks.append(Check("transport preserves inner products", float(np.abs(hyp.minkowski(Pu, Pw) - g0).max() / (1 + np.abs(g0).max())), 1e-9))
    c = hyp.cross_product(x, u, w)
    orth = max(float(np.abs(hyp.minkowski(c, u)).max()), float(np.abs(hyp.minkowski(c, w)).max()))
    checks.append(Check("cross product orthogonality", orth / (1 + np.abs(c).max()), 1e-9))
    area2 = hyp.minkowski(u, u) * hyp.minkowski(w, w) - g0**2
    checks.append(Check("|u x w|^2 vs Gram determinant", float(np.abs(hyp.minkowski(c, c) - area2).max() / (1 + area2.max())), 1e-9))
    d = hyp.distance(x, y)
    dr = hyp.distance(hyp.retract_to_h2(x), hyp.retract_to_h2(y))
    checks.append(Check("retraction is 1-Lipschitz, max d(r x, r y) - d(x, y)", float((dr - d).max()), 1e-9, seconds=tm.lap()))
    worst = 0.0
    for _ in range(100):
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        A /= np.sqrt(np.linalg.det(A))
        m = hyp.sl2_to_so13(A)
        B = hyp.sl2_fix_sign(hyp.so13_to_sl2(m), A)
        worst = max(worst, float(np.abs(B - A).max() / np.abs(A).max()))
    checks.append(Check("SL(2,C) <-> SO+(1,3) round trip", worst, 1e-9, seconds=tm.lap()))
    return _finish(0, "hyperbolic kernels", checks, t0)


def suite_surface(seed: int = SEED, level: int = 3) -> CriterionResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tm = _Timer()
    m = _mesh(level)
    d = m.domain
    checks = [
        Check("domain angle sum - 2 pi", abs(d.n_sides * d.vertex_angle - 2 * np.pi), 1e-9),
        Check("domain relation residual", d.relation_residual, 1e-9),
        Check("|area - 4 pi| / 4 pi", abs(m.total_area - 4 * np.pi) / (4 * np.pi), 0.002),
        Check("glued vertex mismatch", m.boundary_mismatch(), 1e-9),
    ]
    u0 = rng.normal(size=m.n_vertices)
    u1 = m.laplacian_solve(m.apply_shifted(u0, 2.0), shift=2.0)
    checks.append(Check("(-Delta+2) round trip", float(np.abs(u1 - u0).max()), 1e-8))
    one = np.broadcast_to(np.eye(2), (m.n_vertices, 2, 2))
    checks.append(Check("d^nabla of the identity field", float(np.abs(m.dnabla(one)).max()), 1e-9))
    K = m.stiffness
    w = np.linalg.eigvalsh(K.toarray()) if m.n_vertices <= 1500 else None
    if w is not None:
        checks.append(Check("stiffness: second eigenvalue (kernel = constants)", float(w[1]), 1e-6, "min"))
        checks.append(Check("stiffness: |smallest eigenvalue|", float(abs(w[0])), 1e-9))
    checks[-1].seconds = tm.lap()
    return _finish(0, "surface model and operators", checks, t0)


SUITES: dict[str, tuple] = {
    "schatten": (1,),
    "hyperbolic": ("hyperbolic",),
    "surface": ("surface",),
    "codazzi": (4, 5),
    "energy": (2, 3, 7, 8),
    "reconstruct": (6, 9),
}


def run_suite(name: str, seed: int = SEED) -> list[CriterionResult]:
    out = []
    for item in SUITES[name]:
        if item == "hyperbolic":
            out.append(suite_hyperbolic(seed=seed))
        elif item == "surface":
            out.append(suite_surface(seed=seed))
        else:
            out.append(run_criterion(item, seed=seed))
    return out
