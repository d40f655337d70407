import math

import numpy as np
import pytest

from scatterlab import flow
from scatterlab import model_manifolds as mm


@pytest.fixture(scope="module")
def hyperbolic_einstein():
    return flow.einstein_flow(-1.0, -2.0, 1.0, dim=2)


@pytest.fixture(scope="module")
def hyperbolic_fd():
    return flow.conformal_flow_2d(mm.hyperbolic(2), -2.0, 1.0)


def test_einstein_hyperbolic_linear_scale(hyperbolic_einstein):
    tr = hyperbolic_einstein
    np.testing.assert_allclose(tr.scale[:, 0], 1 + 2 * tr.times, rtol=0, atol=1e-13)
    assert tr.scale[-1, 0] == pytest.approx(3.0, abs=1e-14)
    assert tr.sup_a == 1.0
    assert flow.einstein_residual(tr, -1.0) <= 1e-13
    assert tr.validity and tr.model.name == "hyperbolic-m2"


def test_einstein_flat_static():
    tr = flow.einstein_flow(0.0, -2.0, 1.0)
    np.testing.assert_array_equal(tr.scale, 1.0)
    assert tr.sup_a == 0.0


def test_einstein_sphere_blowup():
    tr = flow.einstein_flow(2.0, -2.0, 1.0, dim=3)
    assert tr.blowup_time == pytest.approx(0.25)
    assert not tr.validity
    assert tr.times[-1] < 0.25
    rep = flow.flow_spectral_pipeline(tr)
    assert not rep.certified and "invalid" in rep.status


def test_eigen_log_and_delta_examples(hyperbolic_einstein):
    # at s = 1: lambda = 1/3 so |log lambda| = log 3 <= 2, delta = 2/sqrt(3) <= 2 sinh 1
    for check in (flow.gronwall_sandwich_check, flow.eigen_log_bound_check, flow.flow_delta_bound_check):
        rep = check(hyperbolic_einstein)
        assert rep.holds, rep
        assert rep.tolerance == flow.EINSTEIN_TOL
        assert rep.geometry_discrepancy <= 1e-12
    d = flow.flow_delta_bound_check(hyperbolic_einstein)
    assert d.margin >= 0.0


def test_static_flow_checks_are_trivial():
    tr = flow.einstein_flow(-1.0, 0.0, 1.0)
    np.testing.assert_array_equal(tr.scale, 1.0)
    for check in (flow.gronwall_sandwich_check, flow.eigen_log_bound_check, flow.flow_delta_bound_check):
        rep = check(tr)
        assert rep.holds and rep.margin == pytest.approx(0.0, abs=1e-15)


def test_fd_flat_is_static():
    tr = flow.conformal_flow_2d(mm.euclidean(2), -2.0, 0.5, n=100)
    np.testing.assert_array_equal(tr.w, 0.0)
    tr = flow.conformal_flow_2d(mm.hyperbolic(2), 0.0, 0.5, n=100)
    np.testing.assert_array_equal(tr.w, 0.0)


def test_fd_hyperbolic_matches_einstein(hyperbolic_fd):
    tr = hyperbolic_fd
    k = tr.n_monitored
    assert k > 50
    exact = np.log1p(2 * tr.times)[:, None]
    assert np.max(np.abs(tr.w[:, :k] - exact)) <= 1e-3
    assert tr.sup_a == pytest.approx(1.0, abs=1e-3)


def test_fd_hyperbolic_proof_steps(hyperbolic_fd):
    for check in (flow.gronwall_sandwich_check, flow.eigen_log_bound_check, flow.flow_delta_bound_check):
        rep = check(hyperbolic_fd)
        assert rep.holds, rep
        assert rep.tolerance == flow.FD_TOL


def test_fd_rejects_backward_parabolic():
    with pytest.raises(ValueError, match="backward parabolic"):
        flow.conformal_flow_2d(mm.hyperbolic(2), 2.0, 0.5)
    with pytest.raises(ValueError):
        flow.conformal_flow_2d(mm.hyperbolic(3), -2.0, 0.5)


def test_cigar_exact_solves_flow_equation():
    # w_s = kappa K with K = e^{-w} (K0 - Delta0 w / 2), kappa = -2, f = tanh
    s, h = 0.3, 1e-4
    r = np.array([0.4, 1.0, 2.0, 3.0])

    def w(s, r):
        return np.log(np.cosh(r) ** 2 / (np.exp(4 * s) + np.sinh(r) ** 2))

    w_s = (w(s + h, r) - w(s - h, r)) / (2 * h)
    w_r = (w(s, r + h) - w(s, r - h)) / (2 * h)
    w_rr = (w(s, r + h) - 2 * w(s, r) + w(s, r - h)) / h**2
    lap = w_rr + w_r / (np.sinh(r) * np.cosh(r))
    K0 = 2 / np.cosh(r) ** 2
    K = np.exp(-w(s, r)) * (K0 - 0.5 * lap)
    np.testing.assert_allclose(w_s, -2 * K, rtol=1e-5)
    np.testing.assert_allclose(K, flow.cigar_curvature_exact(s, r), rtol=1e-5)
    tr = flow.cigar_flow_exact(0.5, n=100, n_store=11)
    np.testing.assert_allclose(tr.w[3], w(tr.times[3], tr.radii), rtol=1e-14, atol=1e-15)


def test_cigar_fd_tracks_exact():
    ex = flow.cigar_flow_exact(0.5, R=10.0, n=500, n_store=51)
    fd = flow.conformal_flow_2d(mm.cigar(), -2.0, 0.5, R=10.0, n=500, n_store=51)
    k = fd.n_monitored
    assert k > 100
    assert np.max(np.abs(fd.w[:, :k] - ex.w[:, :k])) <= 1e-3
    assert np.max(np.abs(fd.a_values[:k] - ex.a_values[:k])) <= 1e-3


def test_pipeline_verdicts():
    flat = flow.flow_spectral_pipeline(flow.einstein_flow(0.0, -2.0, 1.0))
    assert flat.certified and flat.integral.value == 0.0
    hyp = flow.flow_spectral_pipeline(flow.einstein_flow(-1.0, -2.0, 1.0))
    assert not hyp.certified and "diverges" in hyp.status
    assert hyp.qi_constant == pytest.approx(math.e**2)
    cig = flow.flow_spectral_pipeline(flow.cigar_flow_exact(0.5))
    assert cig.certified and math.isfinite(cig.integral.value)


def test_fd_pipeline_grid_only_is_inconclusive(hyperbolic_fd):
    rep = flow.flow_spectral_pipeline(hyperbolic_fd, checks=False)
    assert not rep.certified and "inconclusive" in rep.status


def test_time_refinement_study(hyperbolic_einstein):
    rows = flow.time_refinement_study(hyperbolic_einstein)
    assert [r["factor"] for r in rows] == [1, 2, 4, 8]
    assert all(r["sup_a"] == pytest.approx(1.0) for r in rows)
    rows = flow.time_refinement_study(flow.cigar_flow_exact(0.5, n=100))
    assert rows[-1]["max_change"] <= 1e-2


def test_trajectory_dump(tmp_path, hyperbolic_einstein):
    path = tmp_path / "traj.txt"
    hyperbolic_einstein.write_columns(path)
    data = np.loadtxt(path)
    assert data.shape == (hyperbolic_einstein.times.size, 3)


def test_times_must_increase():
    with pytest.raises(ValueError):
        flow.FlowTrajectory(-2.0, 1.0, np.array([0.0, 0.0]), "einstein", 2, np.zeros((2, 1)),
                            np.zeros(1), np.zeros(1), lambda r: r)
