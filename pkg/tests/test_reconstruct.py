import numpy as np
import pytest

from hypimm import hyperbolic as hyp
from hypimm.codazzi import combine_b_a, newton_det, split_b_a
from hypimm.energy import EquivariantMap
from hypimm.reconstruct import (
    InconsistentDataError,
    clinearity_probe,
    curvature_check,
    expected_loop_defect,
    extract_data,
    fc_value,
    integrate_immersion,
    monodromy_report,
    project_to_relation,
)
from hypimm.representation import Representation
from hypimm.surface import build_domain, relation_residual


def identity_field(mesh, c=1.0):
    return np.broadcast_to(c * np.eye(2), (mesh.n_vertices, 2, 2)).copy()


@pytest.fixture(scope="module")
def datum(mesh3, qd3):
    rng = np.random.default_rng(7)
    c = rng.standard_normal(12)
    c *= 0.1 / np.linalg.norm(c)
    return newton_det(mesh3, c[:6], c[6:], qd=qd3)


@pytest.fixture(scope="module")
def developed(mesh3, datum):
    b, a = split_b_a(datum.phi)
    return b, a, integrate_immersion(mesh3, b, a)


# --- development ---------------------------------------------------------------------


def test_integrate_fuchsian_datum(mesh3):
    f, fr = integrate_immersion(mesh3, identity_field(mesh3), identity_field(mesh3, 0.0))
    assert np.abs(f.positions[:, 3]).max() < 1e-8
    assert fr.lorentz_residual() < 1e-9
    assert np.all(np.linalg.det(fr.frames) > 0)
    assert fr.loop_defects.max() < 1e-9
    assert f.equivariance_residual() < 1e-9
    assert f.rep.is_fuchsian()


@pytest.mark.parametrize("t", [0.3, 0.5, 1.0])
def test_integrate_equidistant_datum(mesh3, t):
    f, fr = integrate_immersion(
        mesh3, identity_field(mesh3, np.cosh(t)), identity_field(mesh3, np.tanh(t)), root_frame=hyp.boost(t, 3)
    )
    # signed distance to the plane x3 = 0 is arcsinh(x3)
    assert np.abs(np.arcsinh(fr.positions[:, 3]) - t).max() < 1e-6
    assert f.rep.is_fuchsian(tol=1e-6)


def test_integrate_rejects_indefinite_b(mesh2):
    with pytest.raises(ValueError):
        integrate_immersion(mesh2, identity_field(mesh2, -1.0), identity_field(mesh2, 0.0))


def test_gauss_violation_grows_linearly_and_is_flagged(mesh3):
    zero = identity_field(mesh3, 0.0)
    defects = []
    for d in (0.001, 0.002, 0.004):
        _, fr = integrate_immersion(mesh3, identity_field(mesh3, 1 + d), zero, defect_factor=None)
        defects.append(fr.loop_defects.max())
    assert defects[0] > 100 * expected_loop_defect(mesh3) * 1e-3
    assert np.allclose(np.array(defects) / defects[0], [1, 2, 4], rtol=0.05)
    with pytest.raises(InconsistentDataError):
        integrate_immersion(mesh3, identity_field(mesh3, 1.05), zero)


def test_codazzi_datum_develops_consistently(mesh3, developed):
    _, _, (f, fr) = developed
    assert fr.loop_defects.max() <= expected_loop_defect(mesh3) * 100
    assert fr.lorentz_residual() < 1e-9
    assert f.equivariance_residual() < 1e-6


# --- monodromy ---------------------------------------------------------------------------


def test_fuchsian_monodromy_block_diagonal(mesh3):
    f, _ = integrate_immersion(mesh3, identity_field(mesh3), identity_field(mesh3, 0.0))
    G = f.rep.generators
    assert np.abs(G[:, 3, :3]).max() < 1e-7 and np.abs(G[:, :3, 3]).max() < 1e-7
    assert np.abs(np.imag(np.trace(f.rep.sl2(), axis1=1, axis2=2))).max() < 1e-6
    # the developed Fuchsian group is conjugate to the domain's
    ref = Representation.fuchsian(mesh3.domain)
    assert np.allclose(f.rep.trace_invariants(), ref.trace_invariants(), rtol=1e-6)


def test_relation_residual_of_codazzi_datum(developed):
    _, _, (f, _) = developed
    assert f.rep.relation_residual <= 1e-6


def test_rerooting_keeps_traces(mesh3, developed):
    b, a, (f, _) = developed
    T0 = f.rep.trace_invariants()
    for root in (17, 120):
        g, _ = integrate_immersion(mesh3, b, a, root=root)
        assert np.abs(g.rep.trace_invariants() - T0).max() <= 1e-8


def test_root_conjugation_equivariance(mesh3, developed):
    b, a, (f, _) = developed
    g = hyp.rotation(0.4) @ hyp.boost(0.3, 2)
    f2, _ = integrate_immersion(mesh3, b, a, root_frame=g)
    assert np.abs(f2.rep.generators - f.rep.conjugate(g).generators).max() <= 1e-9


def test_monodromy_report(mesh3, developed):
    _, _, (_, fr) = developed
    rep, rpt = monodromy_report(fr, mesh3)
    assert rpt.fit_residuals.max() < 1e-4 + 100 * expected_loop_defect(mesh3)
    assert rep.relation_residual < rpt.raw_relation_residual
    with pytest.raises(InconsistentDataError):
        monodromy_report(fr, mesh3, match_limit=1e-12)


def test_project_to_relation_small_correction():
    gens = build_domain(2).generators
    rng = np.random.default_rng(2)
    basis = hyp.so13_basis()
    noisy = np.array([g @ hyp.so13_exp(np.tensordot(1e-4 * rng.standard_normal(6), basis, axes=1)) for g in gens])
    fixed = project_to_relation(noisy)
    assert relation_residual(fixed) < 1e-9
    assert np.abs(fixed - noisy).max() < 1e-2


# --- extraction ---------------------------------------------------------------------------


def test_extract_totally_geodesic(mesh3):
    b, a = extract_data(EquivariantMap.identity(mesh3))
    assert np.abs(b - np.eye(2)).max() < 1e-9
    assert np.abs(a).max() < 1e-9


def test_extract_equidistant_converges(mesh2, mesh3, mesh4):
    t = 0.5
    errs = []
    for m in (mesh2, mesh3, mesh4):
        b, a = extract_data(EquivariantMap.equidistant(m, t))
        errs.append(max(np.abs(b - np.cosh(t) * np.eye(2)).max(), np.abs(a - np.tanh(t) * np.eye(2)).max()))
    assert errs[2] < errs[1] < errs[0]
    assert errs[1] < 0.05


def test_extract_rejects_degenerate(mesh2):
    rep = Representation(np.broadcast_to(np.eye(4), (4, 4, 4)))
    f = EquivariantMap(mesh2, rep, np.broadcast_to(hyp.ORIGIN, (mesh2.n_vertices, 4)))
    with pytest.raises(ValueError):
        extract_data(f)


def test_extract_integrate_roundtrip(mesh3, datum, developed):
    _, _, (f, _) = developed
    b, a = extract_data(f)
    phi = mesh3.from_triangles(combine_b_a(b, a))
    assert mesh3.norm_vertices(phi - datum.phi) <= 0.02 * mesh3.norm_vertices(datum.phi)


def test_curvature_identity(mesh3, developed):
    _, _, (f, _) = developed
    K, target = curvature_check(f)
    assert np.sum(mesh3.mass * np.abs(K - target)) <= 0.05 * np.sum(mesh3.mass * np.abs(target))


def test_complex_det_split_on_datum(datum):
    from hypimm.codazzi import det2, tr2

    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    b, a = split_b_a(datum.phi)
    assert np.abs(det2(datum.phi) - (det2(b) - det2(b @ a) + 1j * tr2(J @ b @ b @ a))).max() < 1e-12


# --- complex functional -----------------------------------------------------------------


def test_fc_value_identity(mesh3):
    v = fc_value(mesh3, identity_field(mesh3))
    assert abs(v.real - 2 * mesh3.total_area) < 1e-9 and v.imag == 0
    assert abs(v.real - 8 * np.pi) < 0.002 * 8 * np.pi


def test_fc_value_linear(mesh3, rng):
    p = rng.standard_normal((mesh3.n_vertices, 2, 2)) + 1j * rng.standard_normal((mesh3.n_vertices, 2, 2))
    q = rng.standard_normal((mesh3.n_vertices, 2, 2))
    assert np.isclose(fc_value(mesh3, 2 * p - 1j * q), 2 * fc_value(mesh3, p) - 1j * fc_value(mesh3, q))
    pt = mesh3.to_triangles(p)
    assert np.isclose(fc_value(mesh3, pt), mesh3.integrate_triangles(pt[:, 0, 0] + pt[:, 1, 1]))


def test_clinearity_zero_direction(mesh3, qd3):
    r = clinearity_probe(mesh3, np.zeros(6), np.zeros(6), np.zeros(6), qd=qd3)
    assert r.defects == [0.0, 0.0]
    assert r.delta_real == [0.0, 0.0] and r.delta_imag == [0.0, 0.0]
