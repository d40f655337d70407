import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scatterlab import model_manifolds as mm
from scatterlab.profiles import FAMILIES, ConformalRadialPair, RadialProfile

BOUNDED = [
    RadialProfile("constant", 0.7),
    RadialProfile("gaussian", 1.0, 1.5),
    RadialProfile("exponential", -0.4, 2.0),
    RadialProfile("sech", 0.8, 1.0),
    RadialProfile("bump", 0.5, 2.0),
    RadialProfile("cigar-curvature", scale=0.5),
]


@pytest.mark.parametrize("prof", BOUNDED + [RadialProfile("linear", 0.3)], ids=lambda p: p.family)
def test_derivatives_match_finite_differences(prof):
    r = np.linspace(0.2, 4.0, 40)
    h = 1e-5
    np.testing.assert_allclose(prof.d1(r), (prof(r + h) - prof(r - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(prof.d2(r), (prof.d1(r + h) - prof.d1(r - h)) / (2 * h), atol=1e-5)


@pytest.mark.parametrize("prof", BOUNDED, ids=lambda p: p.family)
@given(R=st.floats(0.0, 20.0), t=st.floats(0.0, 30.0))
def test_tail_envelopes_bracket_profile(prof, R, t):
    r = R + t
    val = abs(float(prof(r)))
    up = prof.upper_tail(R)
    assert val <= float(up(r)) * (1 + 1e-12) + 1e-300
    lo = prof.lower_tail(R)
    if lo is not None:
        assert float(lo(r)) <= val * (1 + 1e-12)
    assert val <= prof.sup_abs(R) * (1 + 1e-12)


def test_linear_is_unbounded():
    p = RadialProfile("linear", 1.0)
    assert not p.bounded and math.isinf(p.sup_abs())


def test_unknown_family_and_bad_scale():
    with pytest.raises(ValueError, match="unknown profile family"):
        RadialProfile("cubic", 1.0)
    with pytest.raises(ValueError):
        RadialProfile("gaussian", 1.0, 0.0)


def test_families_listed():
    assert set(FAMILIES) >= {"zero", "constant", "gaussian", "exponential", "cigar-curvature"}


def test_cigar_curvature_profile_values():
    p = RadialProfile("cigar-curvature", scale=0.0)
    r = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(p(r), 2 / np.cosh(r) ** 2, rtol=1e-14)
    assert p.describe() == "cigar-curvature(S=0)"


def test_conformal_pair_quantities():
    pair = ConformalRadialPair(mm.euclidean(2), RadialProfile("constant", 1.0))
    assert pair.delta(3.0) == pytest.approx(2 * math.sinh(1.0))
    assert pair.rho(0.0) == pytest.approx(math.exp(-2.0))
    assert pair.qi_constant == pytest.approx(math.e**2)
    assert pair.constant_factor == pytest.approx(math.exp(-2.0))
    assert ConformalRadialPair(mm.euclidean(2), RadialProfile("linear", 1.0)).qi_constant is None
    assert ConformalRadialPair(mm.euclidean(2), RadialProfile("zero")).is_identity


def test_h_of_constant_pair_is_scaled_euclidean():
    # h = e^{-2} g on the plane: flat, and the unit h-ball is a g-ball of radius e
    pair = ConformalRadialPair(mm.euclidean(2), RadialProfile("constant", 1.0))
    rad, tan = pair.ricci_h(np.array([0.5, 2.0]))
    np.testing.assert_allclose(rad, 0.0, atol=1e-10)
    np.testing.assert_allclose(tan, 0.0, atol=1e-10)
    assert pair.h_ball_volume_at_pole(1.0) == pytest.approx(math.pi, rel=1e-8)


def test_h_of_gaussian_pair_curvature():
    # Gauss curvature of e^{2 sigma} g on the plane is -e^{-2 sigma} Delta sigma
    prof = RadialProfile("gaussian", 0.4, 1.0)
    pair = ConformalRadialPair(mm.euclidean(2), prof)
    r = np.array([0.3, 1.0, 1.7])
    sigma = -prof(r)
    lap = -(prof.d2(r) + prof.d1(r) / r)
    expected = -np.exp(-2 * sigma) * lap
    rad, tan = pair.ricci_h(r)
    np.testing.assert_allclose(rad, expected, rtol=1e-8)
    np.testing.assert_allclose(tan, expected, rtol=1e-8)
