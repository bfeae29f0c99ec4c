import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypimm import schatten as sch

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
maps = arrays(np.float64, (3, 2), elements=finite)


def svd_norm(L):
    return np.linalg.svd(L, compute_uv=False).sum()


# --- polar decomposition ---------------------------------------------------------


def test_polar_of_polar_map():
    L = np.array([[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]])
    p = sch.polar_decompose(L)
    assert np.allclose(p.b, np.diag([3.0, 4.0]), atol=1e-14)
    assert np.allclose(p.sigma, np.eye(3)[:, :2], atol=1e-14)


def test_polar_of_zero():
    p = sch.polar_decompose(np.zeros((3, 2)))
    assert np.all(p.b == 0) and p.sigma is None


@given(maps)
def test_polar_reassembles(L):
    p = sch.polar_decompose(L)
    assert np.allclose(p.b, p.b.T)
    assert np.linalg.eigvalsh(p.b)[0] >= -1e-9
    if p.sigma is not None:
        assert np.allclose(p.sigma.T @ p.sigma, np.eye(2), atol=1e-8)
        assert np.allclose(p.sigma @ p.b, L, atol=1e-10 * (1 + np.abs(L).max()))


def test_polar_rank_one_has_no_sigma():
    L = np.outer([1.0, 2.0, 3.0], [0.5, -1.0])
    assert sch.polar_decompose(L).sigma is None


# --- norm and regularisation ----------------------------------------------------------


def test_schatten_examples():
    R = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))[0]
    L = R @ np.array([[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]]) @ np.array([[0.6, -0.8], [0.8, 0.6]])
    assert sch.schatten1(L) == pytest.approx(7.0, abs=1e-12)
    assert sch.schatten1(np.zeros((3, 2))) == 0.0
    assert sch.schatten1(R[:, :2]) == pytest.approx(2.0, abs=1e-12)


@given(maps)
def test_schatten_matches_svd(L):
    assert sch.schatten1(L) == pytest.approx(svd_norm(L), abs=1e-12 * (1 + np.abs(L).max()))


def test_q_eps_examples():
    L = np.array([[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]])
    assert sch.q_eps(L, 0.0) == pytest.approx(7.0, abs=1e-14)
    assert sch.q_eps(np.zeros((3, 2)), 1.0) == pytest.approx(2.0, abs=1e-14)
    # eigenvalues of eps^2 + L^T L are 10 and 17
    assert sch.q_eps(L, 1.0) == pytest.approx(7.2853832858, abs=1e-10)
    assert sch.q_eps(L, 1.0) == pytest.approx(np.sqrt(10) + np.sqrt(17), abs=1e-13)


def test_q_eps_rejects_negative_eps():
    with pytest.raises(ValueError):
        sch.q_eps(np.zeros((3, 2)), -0.1)


@given(maps, st.floats(0, 3))
def test_q_eps_closed_form_vs_eigenvalues(L, eps):
    w = np.linalg.eigvalsh(eps**2 * np.eye(2) + L.T @ L)
    assert sch.q_eps(L, eps) == pytest.approx(np.sqrt(np.clip(w, 0, None)).sum(), abs=1e-12 * (1 + np.abs(L).max()))


@given(maps, st.floats(0, 3))
def test_q_eps_uniform_approximation(L, eps):
    q0 = sch.q_eps(L, 0.0)
    assert 0.0 <= sch.q_eps(L, eps) - q0 <= 2 * eps + 1e-12


@given(maps, maps, st.sampled_from([0.0, 0.1, 1.0]))
def test_q_eps_midpoint_convex(L, M, eps):
    lhs = 2 * sch.q_eps(0.5 * (L + M), eps)
    assert lhs <= sch.q_eps(L, eps) + sch.q_eps(M, eps) + 1e-9


@given(maps, maps, finite)
def test_norm_axioms(L, M, c):
    n = sch.schatten1
    tol = 1e-9 * (1 + np.abs(L).max() + np.abs(M).max())
    assert n(L) >= 0
    assert n(L + M) <= n(L) + n(M) + tol
    assert n(c * L) == pytest.approx(abs(c) * n(L), abs=tol * (1 + abs(c)))
    if n(L) == 0:
        assert not L.any()


@given(maps, arrays(np.float64, (3, 3), elements=finite))
def test_composition_bound(L, A):
    assert sch.schatten1(A @ L) <= np.linalg.norm(A, 2) * sch.schatten1(L) * (1 + 1e-10) + 1e-12


@given(
    st.lists(st.floats(0, 5), min_size=4, max_size=4),
    st.sampled_from([0.0, 0.1, 1.0]),
)
def test_n_eps_monotone(vals, eps):
    t = sorted(vals[:2])
    tp = sorted(vals[2:])
    if t[1] <= tp[1] and sum(t) <= sum(tp):
        assert sch.n_eps(*t, eps) <= sch.n_eps(*tp, eps) + 1e-12


def test_n_eps_is_q_eps_in_singular_values(rng):
    L = rng.normal(size=(3, 2))
    s1, s2 = sch.singular_values(L)
    assert sch.n_eps(s1, s2, 0.3) == pytest.approx(sch.q_eps(L, 0.3), abs=1e-13)


# --- derivative ----------------------------------------------------------------------------


def test_derivative_examples():
    L = np.eye(3)[:, :2]
    assert sch.q_eps_directional_derivative(L, np.zeros((3, 3)), 0.0) == 0.0
    assert sch.q_eps_directional_derivative(L, np.eye(3), 0.0) == pytest.approx(2.0, abs=1e-14)


def test_derivative_rejects_rank_deficient_at_zero():
    with pytest.raises(ValueError):
        sch.q_eps_directional_derivative(np.outer([1, 0, 0], [1, 1]), np.eye(3), 0.0)
    # fine once regularised
    sch.q_eps_directional_derivative(np.outer([1, 0, 0], [1, 1]), np.eye(3), 0.1)


@settings(max_examples=200)
@given(arrays(np.float64, (3, 2), elements=st.floats(-3, 3)), arrays(np.float64, (3, 3), elements=st.floats(-2, 2)), st.sampled_from([0.1, 1.0]))
def test_derivative_vs_finite_difference(L, B, eps):
    A = B @ B.T
    h = 1e-5
    fd = (sch.q_eps(L + h * A @ L, eps) - sch.q_eps(L - h * A @ L, eps)) / (2 * h)
    d = sch.q_eps_directional_derivative(L, A, eps)
    assert d == pytest.approx(fd, abs=1e-6 * max(1.0, abs(fd)))
    assert d >= -1e-12


def test_derivative_strictly_positive_iff_AL_nonzero(rng):
    L = rng.normal(size=(3, 2))
    n = np.cross(L[:, 0], L[:, 1])
    n /= np.linalg.norm(n)
    A = np.outer(n, n)  # kills the image of L
    assert abs(sch.q_eps_directional_derivative(L, A, 0.0)) < 1e-12
    assert sch.q_eps_directional_derivative(L, A + np.eye(3) * 1e-3, 0.0) > 0


# --- self-adjoint / cross-product split ---------------------------------------------------------


def test_as_inclusion():
    p = sch.as_decompose(np.eye(3)[:, :2], [0, 0, 1])
    assert np.allclose(p.a_part, np.eye(2)) and np.allclose(p.v, 0)


def test_as_pure_rotation():
    N = np.array([0.0, 0.0, 1.0])
    L = np.column_stack([np.cross(N, e) for e in np.eye(3)[:2]])
    p = sch.as_decompose(L, N)
    assert np.allclose(p.a_part, 0, atol=1e-14) and np.allclose(p.v, N)


def test_as_normal_column():
    # L(w) = <w, e1> N: solving A + v x . = L by hand gives A = 0, v = -e2
    N = np.array([0.0, 0.0, 1.0])
    L = np.column_stack([N, np.zeros(3)])
    p = sch.as_decompose(L, N)
    assert np.allclose(p.a_part, 0, atol=1e-14)
    assert np.allclose(p.v, [0.0, -1.0, 0.0])


@given(maps, arrays(np.float64, 3, elements=st.floats(-1, 1)))
def test_as_reassembles(L, n):
    if np.linalg.norm(n) < 1e-3:
        return
    N = n / np.linalg.norm(n)
    p = sch.as_decompose(L, N)
    assert np.allclose(p.a_part, p.a_part.T)
    assert np.allclose(sch.as_reassemble(p, N), L, atol=1e-10 * (1 + np.abs(L).max()))


def test_as_rejects_non_unit_normal():
    with pytest.raises(ValueError):
        sch.as_decompose(np.zeros((3, 2)), [0, 0, 2.0])


# --- Jacobi probe ----------------------------------------------------------------------------


def test_jacobi_zero_operator_is_affine(rng):
    T0, T1 = rng.normal(size=(2, 3, 2))
    s = np.linspace(0, 1, 11)
    pr = sch.jacobi_convexity_probe(T0, T1, lambda _: np.zeros((3, 3)), s)
    assert np.allclose(pr.T, T0 + s[:, None, None] * T1, atol=1e-12)
    assert pr.second_differences.min() >= -1e-12


def test_jacobi_identity_operator_cosh(rng):
    T0 = rng.normal(size=(3, 2))
    s = np.linspace(0, 1, 6)
    pr = sch.jacobi_convexity_probe(T0, np.zeros((3, 2)), lambda _: np.eye(3), s)
    assert np.allclose(pr.u, np.cosh(s) * pr.u[0], rtol=1e-6)


def test_jacobi_step_refinement(rng):
    B = rng.normal(size=(3, 3))
    A = lambda t: (B + t * np.eye(3)) @ (B + t * np.eye(3)).T
    T0, T1 = rng.normal(size=(2, 3, 2))
    s = np.linspace(0, 1, 5)
    coarse = sch.jacobi_convexity_probe(T0, T1, A, s)
    fine = sch.jacobi_convexity_probe(T0, T1, A, s, max_step=1e-4)
    assert np.allclose(coarse.u, fine.u, rtol=1e-9)
    assert coarse.second_differences.min() > 0


def test_jacobi_rejects_indefinite():
    with pytest.raises(ValueError):
        sch.jacobi_convexity_probe(np.eye(3)[:, :2], np.zeros((3, 2)), lambda _: -np.eye(3), [0.0, 1.0])
    with pytest.raises(ValueError):
        sch.jacobi_convexity_probe(np.eye(3)[:, :2], np.zeros((3, 2)), lambda _: np.triu(np.ones((3, 3))), [0.0, 1.0])


@pytest.mark.parametrize("scale", [1e-260, 1e-160, 1e160])
def test_schatten_extreme_scales(scale):
    L = np.array([[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]]) * scale
    assert sch.schatten1(L) == pytest.approx(7.0 * scale, rel=1e-12)
    assert sch.singular_values(L) == pytest.approx((3.0 * scale, 4.0 * scale), rel=1e-12)
