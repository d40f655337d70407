import math

import numpy as np
import pytest

from scatterlab import model_manifolds as mm
from scatterlab import stochastic as st


def gaussian(y):
    return np.exp(-np.sum(y**2, axis=1) / 2)


def gaussian_gradient(x, s):
    # P_s f = (1 + 2s)^{-m/2} exp(-|x|^2 / (2 (1 + 2s))) for f = exp(-|y|^2/2), m = 2
    a = 1 + 2 * s
    return -np.asarray(x) / a**2 * math.exp(-np.dot(x, x) / (2 * a))


@pytest.fixture(scope="module")
def flat_paths():
    return st.simulate_bm(mm.euclidean(2), [0.0, 0.0], 1.0, 1e-3, seed=7, n_paths=10_000)


def test_generator_convention_variance(flat_paths):
    # generator Delta: each coordinate has variance 2s
    end = flat_paths.positions[-1]
    n = end.shape[0]
    for k in range(2):
        var = end[:, k].var(ddof=1)
        se = 2.0 * math.sqrt(2.0 / (n - 1))
        assert abs(var - 2.0) <= 3 * se


def test_flat_theta_is_identity(flat_paths):
    np.testing.assert_array_equal(flat_paths.theta, np.broadcast_to(np.eye(2), flat_paths.theta.shape))
    assert flat_paths.frame_defect(st.as_chart(mm.euclidean(2))) <= 1e-12


def test_hyperbolic_theta_exponential():
    with pytest.warns(UserWarning):
        p = st.simulate_bm(mm.hyperbolic(2), [0.0, 0.0], 0.2, 1e-3, seed=1, n_paths=200)
    for k in (50, 100, 200):
        expected = math.exp(p.times[k]) * np.eye(2)
        assert np.max(np.abs(p.theta[k] - expected)) <= 1e-6
    assert p.frame_defect(st.as_chart(mm.hyperbolic(2))) <= 1e-6


def test_paths_are_seed_deterministic():
    a = st.simulate_bm(mm.hyperbolic(2), [0.1, 0.0], 0.1, 1e-4, seed=3, n_paths=50)
    b = st.simulate_bm(mm.hyperbolic(2), [0.1, 0.0], 0.1, 1e-4, seed=3, n_paths=50)
    c = st.simulate_bm(mm.hyperbolic(2), [0.1, 0.0], 0.1, 1e-4, seed=4, n_paths=50)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert not np.array_equal(a.positions, c.positions)


def test_path_dump(tmp_path):
    p = st.simulate_bm(mm.euclidean(2), [0.0, 0.0], 0.01, 1e-5, seed=0, n_paths=2)
    p.write_columns(tmp_path / "path.txt")
    data = np.loadtxt(tmp_path / "path.txt")
    assert data.shape == (len(p.times), 4)


def test_invalid_step_rejected():
    with pytest.raises(ValueError):
        st.simulate_bm(mm.euclidean(2), [0.0, 0.0], 1.0, 0.3, seed=0)


def test_ramp_control_non_exiting():
    # short horizon so that most paths stay inside B(x0, 1/2)
    paths = st.simulate_bm(mm.euclidean(2), [0.0, 0.0], 0.01, 1e-5, seed=2, n_paths=200)
    ctl = st.control_process([1.0, 0.0], 0.01, paths, kind="ramp", t_ramp=1.0)
    stay = paths.exit_index < 0
    assert stay.sum() > 100
    np.testing.assert_allclose(ctl.ell_dot[:, stay, 0], -100.0, rtol=1e-9)
    np.testing.assert_allclose(ctl.energy[stay], 100.0, rtol=1e-9)


def test_ramp_unit_energy_when_s_is_one():
    paths = st.simulate_bm(mm.euclidean(2), [0.0, 0.0], 1.0, 1e-3, seed=2, n_paths=5)
    # treat every path as non-exiting to isolate the ramp profile
    paths.exit_index[:] = -1
    paths.distances[:] = 0.0
    ctl = st.control_process([1.0, 0.0], 1.0, paths, kind="ramp")
    np.testing.assert_allclose(ctl.ell_dot[:, :, 0], -1.0, rtol=1e-9)
    np.testing.assert_allclose(ctl.energy, 1.0, rtol=1e-9)


def test_controls_vanish_after_exit(flat_paths):
    for kind in ("ramp", "time-change"):
        ctl = st.control_process([0.6, 0.0], 1.0, flat_paths, kind=kind)
        exited = np.flatnonzero(flat_paths.exit_index >= 0)
        assert exited.size > 0
        for i in exited[:50]:
            k = flat_paths.exit_index[i]
            assert np.all(ctl.ell[k + 1:, i] == 0.0)
        np.testing.assert_allclose(ctl.ell[0], np.broadcast_to([0.6, 0.0], ctl.ell[0].shape))
        np.testing.assert_array_equal(ctl.ell[-1], 0.0)
        assert np.all(np.isfinite(ctl.energy))


def test_control_rejects_long_vector(flat_paths):
    with pytest.raises(ValueError, match="exceeds 1"):
        st.control_process([1.0, 1.0], 1.0, flat_paths)


def test_bismut_zero_vector_exact():
    est = st.bismut_gradient(gaussian, [0.5, 0.0], [0.0, 0.0], 0.5, 1000, seed=0)
    assert est.value == 0.0 and est.std_error == 0.0


def test_bismut_constant_function_mean_zero():
    est = st.bismut_gradient(lambda y: np.ones(len(y)), [0.3, 0.0], [1.0, 0.0], 0.5, 20_000, seed=3, dt=1e-3)
    assert abs(est.value) <= 3 * est.std_error


def test_bismut_gaussian_at_origin():
    est = st.bismut_gradient(gaussian, [0.0, 0.0], [1.0, 0.0], 0.5, 20_000, seed=11, dt=1e-3)
    assert abs(est.value - 0.0) <= 3 * est.std_error


def test_bismut_gaussian_off_origin():
    x = [math.sqrt(2.0), 0.0]
    est = st.bismut_gradient(gaussian, x, [1.0, 0.0], 0.5, 20_000, seed=5, dt=1e-3)
    exact = gaussian_gradient(x, 0.5)[0]
    assert abs(est.value - exact) <= 3 * est.std_error


def test_bismut_small_sample_flagged():
    est = st.bismut_gradient(gaussian, [0.0, 0.0], [1.0, 0.0], 0.1, 50, seed=0, dt=1e-4)
    assert not est.reliable
    assert any("n_paths" in n for n in est.notes)


def test_bismut_threads_do_not_change_estimate():
    args = (gaussian, [1.0, 0.0], [1.0, 0.0], 0.2, 3000, 9)
    a = st.bismut_gradient(*args, dt=1e-3, chunk=1000, threads=1)
    b = st.bismut_gradient(*args, dt=1e-3, chunk=1000, threads=3)
    assert a.value == b.value and a.std_error == b.std_error


def test_gradient_bound_zero_function():
    rep = st.gradient_bound_check(mm.euclidean(2), [1.0, 0.0], 0.5, lambda y: np.zeros(len(y)), 0.0,
                                  n_paths=2000, seed=0, dt=1e-3)
    assert rep.estimate == 0.0 and rep.bound == 0.0 and rep.holds


def test_gradient_bound_euclidean_large_slack():
    f_norm = math.sqrt(math.pi)  # L2 norm of exp(-|y|^2/2) in the plane
    rep = st.gradient_bound_check(mm.euclidean(2), [1.0, 0.0], 1.0, gaussian, f_norm, n_paths=5000, seed=1)
    assert rep.holds
    assert rep.psi3 == pytest.approx(49.348022005446793, rel=1e-12)
    assert rep.psi4 == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    exact = np.linalg.norm(gaussian_gradient([1.0, 0.0], 1.0))
    assert exact < 0.1 * rep.bound


def test_cauchy_schwarz_euclidean():
    rep = st.cauchy_schwarz_decomposition(gaussian, [1.0, 0.0], [1.0, 0.0], 1.0, 5000, seed=2)
    assert rep.product_dominates
    assert rep.psi3_dominates
    assert rep.factor2_sq <= rep.psi3 + 3 * rep.factor2_sq_se


def test_cauchy_schwarz_zero_function():
    rep = st.cauchy_schwarz_decomposition(lambda y: np.zeros(len(y)), [0.0, 0.0], [1.0, 0.0], 0.5, 1000, seed=0)
    assert rep.factor1 == 0.0
