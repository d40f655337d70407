import math

import pytest

from scatterlab import scenarios

FAST = {
    "conformal-deviation-phi1": {},
    "conformal-gaussian-e2": {},
    "conformal-constant-e2": {},
    "conformal-exp-h2": {},
    "einstein-hyperbolic-flow": {},
    "einstein-sphere-flow": {},
    "conformal-flow-h2": {"intervals": "200"},
    "cigar-flow": {},
    "discrete-flat-1d": {"n": "40"},
    "discrete-conformal-1d": {"n": "60"},
    "discrete-anisotropic-2d": {"n": "8"},
    "full-pipeline-gaussian-e2": {},
    "gradient-bound-e2": {"n_paths": "2000", "seed": "3"},
    "gradient-bound-h2": {"n_paths": "2000", "seed": "3"},
}


@pytest.mark.parametrize("name", sorted(FAST))
def test_fixture_scenarios_pass(name):
    params = scenarios.resolve({"fixture": name, **FAST[name]})
    res = scenarios.run_scenario(params)
    assert res.failed_theorem_checks == []
    assert res.checks or res.results


def test_deviation_oracle_in_results():
    res = scenarios.run_scenario(scenarios.resolve({"fixture": "conformal-deviation-phi1"}))
    assert res.results["delta"] == pytest.approx(2 * math.sinh(1.0), rel=1e-14)
    assert res.results["oracle_delta"] == 2 * math.sinh(1.0)


def test_bismut_scenario_reports_oracle():
    params = scenarios.resolve({"fixture": "gaussian-bismut-e2", "n_paths": "3000", "dt": "1e-3", "seed": "5"})
    res = scenarios.run_scenario(params)
    for key in ("estimate", "std_error", "oracle", "pass"):
        assert key in res.results
    # d/dx1 of (1 + 2s)^{-1} exp(-|x|^2 / (2 (1 + 2s))) at x = (sqrt 2, 0), s = 1/2
    assert res.results["oracle"] == pytest.approx(-math.sqrt(2) / 4 * math.exp(-0.5), rel=1e-14)


def test_flow_scenario_blowup_reported():
    res = scenarios.run_scenario(scenarios.resolve({"fixture": "einstein-sphere-flow"}))
    text = str(res.results) + " ".join(res.notes)
    assert "0.25" in text


def test_resolve_errors():
    with pytest.raises(scenarios.ScenarioError, match="unknown kind"):
        scenarios.resolve({"kind": "teleport"})
    with pytest.raises(scenarios.ScenarioError, match="has kind"):
        scenarios.resolve({"fixture": "cigar-flow", "kind": "discrete"})
    with pytest.raises(scenarios.ScenarioError, match="missing required"):
        scenarios.resolve({"kind": "bismut", "seed": "1"})
    with pytest.raises(scenarios.ScenarioError, match="seed"):
        scenarios.resolve({"kind": "full-pipeline", "n_paths": "10"})
    with pytest.raises(scenarios.ScenarioError, match="unknown manifold"):
        scenarios.manifold("klein-bottle")


def test_deviation_needs_input():
    with pytest.raises(scenarios.ScenarioError):
        scenarios.run_scenario(scenarios.resolve({"kind": "deviation"}))
