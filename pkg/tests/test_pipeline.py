import numpy as np
import pytest

from hypimm.pipeline import StageError, roundtrip
from hypimm.reconstruct import InconsistentDataError


def coefficients(seed, norm=0.1):
    c = np.random.default_rng(seed).standard_normal(12)
    return c[:6] * norm / np.linalg.norm(c), c[6:] * norm / np.linalg.norm(c)


@pytest.fixture(scope="module")
def report(mesh3, qd3):
    q, qp = coefficients(20240611)
    return roundtrip(mesh3, q, qp, qd=qd3)


def test_roundtrip_recovers_field(report):
    assert report.field_error <= 0.05
    assert report.relation_residual <= 1e-6
    assert report.newton_iterations <= 8


def test_roundtrip_energy_matches_complex_functional(report):
    assert report.energy_gap <= 0.02
    assert abs(report.fc.imag) < 0.01 * report.fc.real


def test_roundtrip_summary_is_plain(report):
    s = report.summary()
    assert "minimizer" not in s
    assert isinstance(s["q"], list) and len(s["fc"]) == 2


def test_zero_path_without_minimizer(mesh3, qd3):
    r = roundtrip(mesh3, np.zeros(6), np.zeros(6), qd=qd3, do_minimize=False)
    assert r.field_error <= 1e-6
    assert np.isnan(r.coefficient_error)


@pytest.mark.xfail(strict=True, reason="the discrete minimizer sits O(h^2) away from the identity; about 2.7% at level 3")
def test_zero_path_full_pipeline(mesh3, qd3):
    r = roundtrip(mesh3, np.zeros(6), np.zeros(6), qd=qd3)
    assert r.field_error <= 1e-6


def test_corrupted_gauss_data_flagged(mesh3, qd3):
    q, qp = coefficients(3)
    with pytest.raises(StageError) as info:
        roundtrip(mesh3, q, qp, qd=qd3, gauss_scale=1.05, do_minimize=False)
    assert info.value.stage == "integrate"
    assert isinstance(info.value.cause, InconsistentDataError)
