import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypimm import hyperbolic as hyp
from hypimm.checks import smooth_bump
from hypimm.codazzi import (
    DecompositionError,
    NewtonError,
    assemble,
    cod,
    coercivity_form,
    combine_b_a,
    decompose,
    det2,
    divergence_identity_check,
    el_residuals,
    lphi_apply,
    lphi_matrix,
    mesh_tolerance,
    newton_det,
    pi1,
    qd_basis,
    split_b_a,
    tr2,
)

J = np.array([[0.0, -1.0], [1.0, 0.0]])
finite = st.floats(-3, 3, allow_nan=False)


def bump(m, center=None, r=1.45):
    return smooth_bump(m.vertices, hyp.ORIGIN if center is None else center, r)


@pytest.fixture(scope="module")
def datum(mesh3, qd3):
    rng = np.random.default_rng(7)
    c = rng.standard_normal(12)
    c *= 0.1 / np.linalg.norm(c)
    return newton_det(mesh3, c[:6], c[6:], qd=qd3)


# --- cod -----------------------------------------------------------------------


def test_cod_constants(mesh3):
    n = mesh3.n_vertices
    assert np.abs(cod(mesh3, np.ones(n)) - np.eye(2)).max() < 1e-9
    assert np.abs(cod(mesh3, np.full(n, -2.5)) + 2.5 * np.eye(2)).max() < 1e-9


def test_cod_trace_and_symmetry(mesh3, rng):
    u = rng.standard_normal(mesh3.n_vertices)
    C = cod(mesh3, u)
    assert np.array_equal(C[:, 0, 1], C[:, 1, 0])
    assert np.allclose(tr2(C), 2 * u - mesh3.laplace(u), atol=1e-9)


# --- pi1 ------------------------------------------------------------------------


def test_pi1_identity():
    assert np.allclose(pi1(np.broadcast_to(np.eye(2), (5, 2, 2))), -2.0)


@given(p=finite, r=finite)
def test_pi1_traceless(p, r):
    assert np.isclose(pi1(np.array([[p, r], [r, -p]])), 2 * (p * p + r * r), atol=1e-12)


@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite))
def test_pi1_is_minus_two_det(re, im):
    phi = np.array([[re[0], re[1]], [re[1], re[2]]]) + 1j * np.array([[im[0], im[1]], [im[1], im[2]]])
    assert abs(pi1(phi) + 2 * det2(phi)) <= 1e-12 * max(1.0, np.abs(phi).max() ** 2)


# --- L_phi -----------------------------------------------------------------------


def test_lphi_identity_constant(mesh3):
    n = mesh3.n_vertices
    phi = np.broadcast_to(np.eye(2), (n, 2, 2))
    assert np.allclose(lphi_apply(mesh3, phi, np.ones(n)), -4.0)
    assert np.abs(lphi_apply(mesh3, phi, np.zeros(n))).max() == 0


def test_lphi_finite_difference(mesh3, qd3, rng):
    phi = cod(mesh3, 1 + 0.1 * bump(mesh3)) + qd3.field(0.05 * rng.standard_normal(6), 0.05 * rng.standard_normal(6))
    udot = bump(mesh3, hyp.boost(0.3, 1) @ hyp.ORIGIN, 1.2) + 0.3j * bump(mesh3)
    t = 1e-4
    fd = (pi1(phi + cod(mesh3, t * udot)) - pi1(phi - cod(mesh3, t * udot))) / (2 * t)
    L = lphi_apply(mesh3, phi, udot)
    assert np.linalg.norm(L - fd) <= 1e-5 * np.linalg.norm(fd)
    assert np.allclose(lphi_matrix(mesh3, phi) @ udot, L, atol=1e-10)


# --- Codazzi kernel ------------------------------------------------------------------


def test_qd_basis_structure(mesh3, qd3):
    assert qd3.dimension == 6 * mesh3.genus - 6 == 6
    B = qd3.basis
    assert np.abs(B[..., 0, 0] + B[..., 1, 1]).max() < 1e-12
    assert np.array_equal(B[..., 0, 1], B[..., 1, 0])
    assert np.abs(qd3.gram - np.eye(6)).max() < 1e-8
    assert np.linalg.cond(qd3.gram) < 1e3
    assert qd3.gap > 10
    assert qd3.residuals.max() <= mesh_tolerance(mesh3)


def test_qd_basis_residuals_decrease(mesh2, mesh3, mesh4):
    from hypimm.surface import build_domain, refine

    with pytest.warns(RuntimeWarning, match="spectral gap"):
        coarse = qd_basis(refine(build_domain(2), 2))
    worst = [coarse.residuals.max()] + [qd_basis(m).residuals.max() for m in (mesh3, mesh4)]
    assert worst[2] < worst[1] < worst[0]
    for m, w in zip((mesh2, mesh3, mesh4), worst):
        assert w <= mesh_tolerance(m)


def test_qd_basis_needs_refinement():
    from hypimm.surface import surface

    with pytest.raises(ValueError):
        qd_basis(surface(2, 1))


def test_qd_field_rejects_wrong_length(qd3):
    with pytest.raises(ValueError):
        qd3.field(np.zeros(5))


# --- decomposition ------------------------------------------------------------------


def test_decompose_identity(mesh3, qd3):
    d = decompose(mesh3, np.broadcast_to(np.eye(2), (mesh3.n_vertices, 2, 2)), qd3)
    assert np.abs(d.u - 1).max() < 1e-9
    assert np.abs(d.q).max() < 1e-9 and np.abs(d.qprime).max() < 1e-9


def test_decompose_cod(mesh3, qd3):
    u0 = 1 + 0.5 * bump(mesh3) + 0.2j * bump(mesh3, hyp.boost(0.4, 2) @ hyp.ORIGIN, 1.3)
    d = decompose(mesh3, cod(mesh3, u0), qd3)
    assert np.abs(d.u - u0).max() < 1e-8
    assert np.abs(d.q).max() < 1e-8 and np.abs(d.qprime).max() < 1e-8


def test_decompose_assemble_roundtrip(mesh3, qd3, rng):
    u0 = 1 + 0.3 * bump(mesh3)
    q, qp = rng.standard_normal((2, 6))
    d = decompose(mesh3, assemble(mesh3, qd3, u0, q, qp), qd3)
    assert np.abs(d.q - q).max() < 1e-6
    assert np.abs(d.qprime - qp).max() < 1e-6
    assert np.abs(d.u - u0).max() < 1e-6
    assert d.reassembly_error <= 10 * max(d.projection_residual, 1e-12)


def test_decompose_rejects_non_codazzi(mesh3, qd3, rng):
    c = rng.standard_normal((mesh3.n_vertices, 2))
    junk = np.einsum("vj,jab->vab", c, np.array([[[1, 0], [0, -1]], [[0, 1], [1, 0]]]))
    with pytest.raises(DecompositionError):
        decompose(mesh3, junk, qd3)


def test_decompose_rejects_non_symmetric(mesh3, qd3):
    phi = np.broadcast_to(np.array([[1.0, 0.5], [0.0, 1.0]]), (mesh3.n_vertices, 2, 2))
    with pytest.raises(ValueError):
        decompose(mesh3, phi, qd3)


def test_shifted_laplacian_spectrum_bounds_cod(mesh3, rng):
    # |cod u| controls |u|: tr cod u = (-Delta + 2) u
    for _ in range(5):
        u = rng.standard_normal(mesh3.n_vertices)
        lhs = np.sqrt(np.sum(mesh3.mass * tr2(cod(mesh3, u)) ** 2))
        assert lhs >= (2 - 1e-8) * np.sqrt(np.sum(mesh3.mass * u**2)) * 0.99


# --- Newton ------------------------------------------------------------------------


def test_newton_fuchsian_point(mesh3, qd3):
    d = newton_det(mesh3, np.zeros(6), np.zeros(6), qd=qd3)
    assert d.iterations == 0
    assert np.abs(d.u - 1).max() < 1e-9
    assert np.abs(d.phi - np.eye(2)).max() < 1e-9


def test_newton_small_data(mesh3, datum):
    assert np.abs(pi1(datum.phi) + 2).max() <= 1e-9
    assert datum.det_residual <= 1e-9
    assert datum.iterations <= 8
    assert datum.positivity_margin > 0
    assert datum.codazzi_residual <= mesh_tolerance(mesh3)


def test_newton_quadratic_convergence(mesh3, qd3):
    c = np.random.default_rng(7).standard_normal(12)
    c /= np.linalg.norm(c)
    d = newton_det(mesh3, c[:6], c[6:], qd=qd3)
    h = [r for r in d.history if r > 1e-11]  # below that the residual is rounding
    assert len(h) >= 3
    ratios = [h[k + 1] / h[k] ** 2 for k in range(len(h) - 1)]
    assert max(ratios) < 50


def test_newton_coercivity(mesh3, datum):
    rng = np.random.default_rng(3)
    for _ in range(100):
        assert coercivity_form(mesh3, datum.phi, rng.standard_normal(mesh3.n_vertices)) > 0


def test_newton_continuation_and_failure(mesh3, qd3):
    q = np.zeros(6)
    q[0] = 0.6
    d = newton_det(mesh3, q, np.zeros(6), qd=qd3)
    assert d.det_residual <= 1e-9 and d.positivity_margin > 0
    with pytest.raises(NewtonError):
        newton_det(mesh3, np.zeros(6), np.zeros(6), u_init=-np.ones(mesh3.n_vertices), qd=qd3)


# --- real form and critical-point residuals -----------------------------------------------


def test_el_residuals_fuchsian(mesh3):
    n = mesh3.n_vertices
    r = el_residuals(mesh3, np.broadcast_to(np.eye(2), (n, 2, 2)), np.zeros((n, 2, 2)))
    for k in ("dnabla_b", "dnabla_ba", "tr_Jb", "tr_ba", "tr_Jb2a", "gauss"):
        assert r[k] < 1e-9
    assert abs(r["min_eig_b"] - 1) < 1e-12


@pytest.mark.parametrize("t", [0.3, 0.5, 1.0])
def test_el_residuals_equidistant(mesh3, t):
    n = mesh3.n_vertices
    b = np.broadcast_to(np.cosh(t) * np.eye(2), (n, 2, 2))
    a = np.broadcast_to(np.tanh(t) * np.eye(2), (n, 2, 2))
    r = el_residuals(mesh3, b, a)
    assert r["gauss"] < 1e-12
    assert np.isclose(r["tr_ba"], 2 * np.cosh(t) * np.tanh(t))
    assert r["tr_Jb"] < 1e-12 and r["tr_Jb2a"] < 1e-12


def test_split_combine_roundtrip(datum):
    b, a = split_b_a(datum.phi)
    assert np.allclose(combine_b_a(b, a), datum.phi, atol=1e-12)


def test_complex_det_splits_into_real_system(mesh3, datum):
    b, a = split_b_a(datum.phi)
    ba = b @ a
    lhs = det2(datum.phi)
    rhs = det2(b) - det2(ba) + 1j * tr2(J @ b @ b @ a)
    assert np.abs(lhs - rhs).max() < 1e-12
    r = el_residuals(mesh3, b, a)
    assert r["gauss"] < 1e-9 and r["tr_Jb2a"] < 1e-9 and r["tr_Jb"] < 1e-12
    assert r["min_eig_b"] > 0


# --- divergence identity -----------------------------------------------------------------


def test_divergence_identity_constant(mesh2, mesh3, mesh4):
    lhs = []
    for m in (mesh2, mesh3, mesh4):
        phi = np.real(cod(m, 1 + 0.2 * bump(m, hyp.boost(0.1, 2) @ hyp.ORIGIN, 1.4)))
        left, right = divergence_identity_check(m, phi, np.ones(m.n_vertices), bump(m))
        assert abs(right) < 1e-12
        lhs.append(abs(left))
    assert lhs[2] < lhs[1] < lhs[0]
    assert lhs[2] < 0.3 * lhs[0]


def test_divergence_identity_green(mesh3):
    n = mesh3.n_vertices
    u1 = bump(mesh3)
    u2 = bump(mesh3, hyp.boost(0.1, 1) @ hyp.ORIGIN, 1.4)
    lhs, rhs = divergence_identity_check(mesh3, np.broadcast_to(np.eye(2), (n, 2, 2)), u1, u2)
    assert abs(lhs - rhs) < 1e-9 * abs(rhs)


def test_divergence_identity_converges(mesh2, mesh3, mesh4):
    errs = []
    for m in (mesh2, mesh3, mesh4):
        phi = np.real(cod(m, 1 + 0.2 * bump(m, hyp.boost(0.1, 2) @ hyp.ORIGIN, 1.4)))
        u1 = bump(m)
        u2 = bump(m, hyp.boost(0.1, 1) @ hyp.ORIGIN, 1.4)
        lhs, rhs = divergence_identity_check(m, phi, u1, u2)
        errs.append(abs(lhs - rhs) / abs(rhs))
    assert errs[2] < errs[1] < errs[0]
    # roughly second order: 0.29, 0.13, 0.038
    assert errs[2] < 0.05
    assert np.log2(errs[1] / errs[2]) > 1
