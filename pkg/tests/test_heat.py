import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from scatterlab import heat
from scatterlab import model_manifolds as mm

# McKean integral for the hyperbolic plane evaluated with mpmath (25 digits)
HYP2_ORACLE = {
    (1.0, 0.0): 0.0575357552057219746188863,
    (1.0, 1.0): 0.04149118395782211830381781,
    (0.5, 2.0): 0.01366827201069904587053301,
}
HYP3_S1_D0 = 0.00825830126612422998648361297852  # (4 pi)^{-3/2} e^{-1}


def test_closed_form_values():
    assert heat.heat_kernel_closed("euclidean", 1.0, 0.0, m=2) == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert heat.heat_kernel_closed("hyperbolic3", 1.0, 0.0) == pytest.approx(HYP3_S1_D0, rel=1e-14)
    assert heat.heat_kernel_closed("hyperbolic3", 1.0, 1e-10) == pytest.approx(HYP3_S1_D0, rel=1e-12)


@pytest.mark.parametrize("key", sorted(HYP2_ORACLE))
def test_hyperbolic2_quadrature(key):
    s, d = key
    assert heat.heat_kernel_closed("hyperbolic2", s, d) == pytest.approx(HYP2_ORACLE[key], rel=1e-9)


@pytest.mark.parametrize("space,m,weight", [
    ("euclidean", 2, lambda d: 2 * math.pi * d),
    ("euclidean", 3, lambda d: 4 * math.pi * d * d),
    ("hyperbolic3", 3, lambda d: 4 * math.pi * math.sinh(d) ** 2),
])
def test_closed_form_unit_mass(space, m, weight):
    val, _ = integrate.quad(lambda d: heat.heat_kernel_closed(space, 0.7, d, m=m) * weight(d), 0, 40, limit=200)
    assert val == pytest.approx(1.0, rel=1e-9)


def test_closed_form_errors():
    with pytest.raises(ValueError):
        heat.heat_kernel_closed("euclidean", 1.0, 0.0)
    with pytest.raises(ValueError):
        heat.heat_kernel_closed("hyperbolic3", 0.0, 0.0)
    with pytest.raises(ValueError):
        heat.heat_kernel_closed("torus", 1.0, 0.0)
    with pytest.raises(ValueError):
        heat.heat_kernel_closed("hyperbolic3", 1.0, -1.0)


@pytest.fixture(scope="module")
def solved():
    out = {}
    for man in (mm.euclidean(2), mm.hyperbolic(3), mm.hyperbolic(2), mm.cigar()):
        out[man.name] = (man, heat.radial_heat_solve(man, [0.5, 1.0]))
    return out


@pytest.mark.parametrize("name", ["euclidean-m2", "hyperbolic-m3", "hyperbolic-m2"])
def test_solver_matches_closed_form(solved, name):
    man, evs = solved[name]
    d = np.linspace(0.0, 3.0, 31)
    for ev in evs:
        exact = heat.heat_kernel_closed(heat.closed_form_space(man), ev.s, d, man.dim)
        assert np.max(np.abs(ev(d) / exact - 1)) <= 1e-3


@pytest.mark.parametrize("name", ["euclidean-m2", "hyperbolic-m3", "hyperbolic-m2", "cigar-m2"])
def test_solver_mass_and_sup(solved, name):
    _, evs = solved[name]
    for ev in evs:
        assert abs(ev.mass - 1.0) <= 1e-3
        assert ev.sup_at_pole
        assert ev.method == "radial-solver"


def test_psi4_closed_and_solver():
    assert heat.psi4(mm.euclidean(2), 1.0) == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert heat.psi4(mm.hyperbolic(3), 1.0, x=2.0) == pytest.approx(HYP3_S1_D0, rel=1e-14)
    sol = heat.psi4(mm.hyperbolic(2), 1.0, method="solver")
    assert sol == pytest.approx(HYP2_ORACLE[(1.0, 0.0)], rel=1e-3)
    with pytest.raises(ValueError):
        heat.psi4(mm.cigar(), 1.0, method="closed-form")
    with pytest.raises(ValueError):
        heat.psi4(mm.cigar(), 1.0, x=1.0)


def test_truncation_too_small_is_rejected():
    with pytest.raises(heat.HeatSolverError, match="try R"):
        heat.radial_heat_solve(mm.euclidean(2), 1.0, R=2.0)


def test_incomplete_model_rejected():
    with pytest.raises(heat.HeatSolverError):
        heat.radial_heat_solve(mm.sphere_cap(3), 0.5)


def test_chapman_kolmogorov():
    assert heat.chapman_kolmogorov_residual(mm.hyperbolic(3), 0.5, 0.5) <= 1e-4


def test_li_yau_upper_examples():
    c = heat.LiYauConstants(1.0, 0.0)
    assert heat.li_yau_upper(2, 0.0, math.pi, c) == pytest.approx(1 / math.pi)
    assert heat.li_yau_upper(2, 0.0, math.inf, c) == 0.0
    rep = heat.li_yau_validity(mm.euclidean(2), heat.LiYauConstants(2.0, 0.0))
    assert rep["bound"] == pytest.approx(2 / math.pi)
    assert rep["valid"]
    # a bound far too small is flagged invalid rather than trusted
    assert not heat.li_yau_validity(mm.euclidean(2), heat.LiYauConstants(1e-3, 0.0))["valid"]


def test_default_constants_carry_provenance():
    c = heat.default_li_yau_constants(2)
    assert "not a proven constant" in c.provenance


@given(v1=st.floats(0.1, 100.0), v2=st.floats(0.1, 100.0))
def test_li_yau_monotone_in_volume(v1, v2):
    lo, hi = sorted((v1, v2))
    assert heat.li_yau_upper(3, -1.0, hi) <= heat.li_yau_upper(3, -1.0, lo)
