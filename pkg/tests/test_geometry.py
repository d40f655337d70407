import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scatterlab import geometry as geo

from conftest import random_spd

# 2 sinh(1) to 30 digits (mpmath)
TWO_SINH_1 = 2.35040238728760291376476370119


def test_identity_pair_is_trivial():
    dev = geo.pair_operator(np.eye(2), np.eye(2))
    np.testing.assert_allclose(dev.a_matrix, np.eye(2))
    np.testing.assert_allclose(dev.eigenvalues, [1, 1])
    assert dev.rho == 1.0 and dev.delta == 0.0 and dev.s_scalar == 0.0
    np.testing.assert_allclose(dev.s_hat_matrix, 0.0, atol=1e-15)


def test_conformal_phi_one():
    dev = geo.pair_operator(*geo.conformal_pair(1.0, dim=2))
    assert dev.delta == pytest.approx(TWO_SINH_1, rel=1e-14)


def test_anisotropic_unimodular_pair():
    dev = geo.pair_operator(np.eye(2), np.diag([0.25, 4.0]))
    np.testing.assert_allclose(dev.eigenvalues, [0.25, 4.0], rtol=1e-14)
    assert dev.rho == pytest.approx(1.0, abs=1e-14)
    assert dev.s_scalar == pytest.approx(0.0, abs=1e-14)
    assert dev.delta == pytest.approx(1.5, rel=1e-14)


def test_a_matrix_is_g_h_inverse(rng):
    G, H = random_spd(rng, 3), random_spd(rng, 3)
    dev = geo.pair_operator(G, H)
    np.testing.assert_allclose(dev.a_matrix, G @ np.linalg.inv(H), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(dev.a_matrix).real), dev.eigenvalues, rtol=1e-10)


@pytest.mark.parametrize(
    "bad",
    [np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones((2, 3)), np.full((2, 2), np.nan)],
)
def test_malformed_metric_rejected(bad):
    with pytest.raises(geo.MetricError):
        geo.MetricAtPoint(bad)


def test_dimension_mismatch_rejected():
    with pytest.raises(geo.MetricError, match="dimension mismatch"):
        geo.pair_operator(np.eye(2), np.eye(3))


def test_inverse_identities_trivial_and_conformal():
    assert geo.inverse_pair_identities(np.eye(3), np.eye(3))["max"] == 0.0
    assert geo.inverse_pair_identities(*geo.conformal_pair(1.0))["max"] <= 1e-12


def test_elementary_bound_trivial_and_conformal():
    rep = geo.elementary_bound_check(np.eye(2), np.eye(2))
    assert rep["lhs"] == 0.0 and rep["rhs"] == 0.0 and rep["holds"]
    rep = geo.elementary_bound_check(*geo.conformal_pair(1.0))
    assert rep["holds"]
    # m = 2 conformal: rho A = 1, so S_hat = 0 and |S| = 2 sinh(1) = delta
    assert rep["s_hat_norm_g"] == pytest.approx(0.0, abs=1e-14)
    assert rep["s_abs"] == pytest.approx(TWO_SINH_1, rel=1e-13)


@given(
    seed=st.integers(0, 2**32 - 1),
    m=st.sampled_from([2, 3, 4]),
    spread=st.floats(0.01, 3.0),
)
def test_identities_and_bound_property(seed, m, spread):
    rng = np.random.default_rng(seed)
    G, H = random_spd(rng, m, spread), random_spd(rng, m, spread)
    assert geo.inverse_pair_identities(G, H)["max"] <= 1e-10
    assert geo.elementary_bound_check(G, H)["holds"]


@given(seed=st.integers(0, 2**32 - 1), m=st.sampled_from([2, 3, 4]))
def test_delta_symmetric_and_nonnegative(seed, m):
    rng = np.random.default_rng(seed)
    G, H = random_spd(rng, m), random_spd(rng, m)
    d1 = geo.pair_operator(G, H).delta
    d2 = geo.pair_operator(H, G).delta
    assert d1 >= 0.0
    assert d1 == pytest.approx(d2, rel=1e-12, abs=1e-14)


@given(seed=st.integers(0, 2**32 - 1), m=st.sampled_from([2, 3, 4]), c=st.floats(0.05, 20.0))
def test_delta_invariant_under_common_congruence(seed, m, c):
    rng = np.random.default_rng(seed)
    G, H = random_spd(rng, m), random_spd(rng, m)
    P = rng.standard_normal((m, m)) + 3 * np.eye(m)
    d1 = geo.pair_operator(G, H).delta
    d2 = geo.pair_operator(P.T @ G @ P, P.T @ H @ P).delta
    assert d1 == pytest.approx(d2, rel=1e-8, abs=1e-10)
    # delta of (cG, cG) vanishes
    assert geo.pair_operator(c * G, c * G).delta == pytest.approx(0.0, abs=1e-10)


@given(phi=st.floats(-3.0, 3.0), m=st.sampled_from([2, 3, 4, 5]))
def test_conformal_oracle_property(phi, m):
    dev = geo.pair_operator(*geo.conformal_pair(phi, dim=m))
    assert abs(dev.delta - 2 * math.sinh(abs(phi))) <= 1e-12 * max(1.0, math.cosh(phi))


def test_u_and_sgn_zero_convention():
    dev = geo.pair_operator(np.eye(2), np.eye(2))
    assert dev.u_scalar == 0.0
    np.testing.assert_array_equal(dev.u_hat_matrix(), 0.0)


def test_s_hat_spectral_relations(rng):
    G, H = random_spd(rng, 3), random_spd(rng, 3)
    dev = geo.pair_operator(G, H)
    root = dev.abs_s_hat_sqrt()
    # |S_hat|^{1/2} |S_hat|^{1/2} sgn = S_hat, with U_hat = sgn (rho A)^{-1/2}
    sgn_abs = dev.spectral_function(lambda x: np.sign(np.sqrt(x) - 1 / np.sqrt(x)))
    np.testing.assert_allclose(sgn_abs @ root @ root, dev.s_hat_matrix, atol=1e-12)


def test_quasi_isometry_scan_trivial_and_bounded():
    cert = geo.quasi_isometry_scan(lambda p: (np.eye(2), np.eye(2)), range(5))
    assert cert.constant_c == 1.0 and cert.sup_delta == 0.0
    pts = np.linspace(-5, 5, 101)
    cert = geo.quasi_isometry_scan(lambda x: geo.conformal_pair(math.sin(x)), pts)
    assert cert.constant_c <= math.e**2 * (1 + 1e-12)
    assert cert.sup_delta <= TWO_SINH_1 * (1 + 1e-12)


def test_unbounded_phi_has_no_certificate():
    nested = [np.linspace(0, R, 50) for R in (1, 2, 4, 8)]
    cert, consts = geo.nested_quasi_isometry_scan(lambda x: geo.conformal_pair(abs(x)), nested)
    assert cert.constant_c is None
    assert all(b > a for a, b in zip(consts, consts[1:]))


def test_quasi_isometry_scan_empty_rejected():
    with pytest.raises(ValueError):
        geo.quasi_isometry_scan(lambda p: (np.eye(2), np.eye(2)), [])


def test_metric_grid_roundtrip(tmp_path, rng):
    coords = rng.standard_normal((7, 2))
    mats = np.stack([random_spd(rng, 2) for _ in range(7)])
    path = tmp_path / "g.txt"
    geo.write_metric_grid(path, coords, mats)
    c2, m2 = geo.read_metric_grid(path)
    np.testing.assert_array_equal(c2, coords)
    np.testing.assert_array_equal(m2, mats)


def test_metric_grid_missing_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(geo.MetricError, match="header"):
        geo.read_metric_grid(path)
