"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Sizes and tolerances are the stated ones; nothing is scaled down.  The
Monte Carlo criteria (4 to 6) take a few minutes on one core.
"""

import math
import time

import numpy as np
import pytest

from scatterlab import cli, criterion, discrete_operators as do, flow, geometry, heat, scenarios, stochastic
from scatterlab import model_manifolds as mm
from scatterlab.profiles import ConformalRadialPair, RadialProfile

from conftest import random_spd

N_PAIRS = 10_000


def report(capsys, number: int, title: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, f"criterion {number} ({title}) failed: {detail}"


def gaussian(y):
    return np.exp(-np.sum(y**2, axis=1) / 2)


def gaussian_gradient(x, s):
    a = 1 + 2 * s
    return -np.asarray(x, dtype=float) / a**2 * math.exp(-float(np.dot(x, x)) / (2 * a))


def bump(y):
    d = np.linalg.norm(y, axis=1)
    return np.clip(1 - d**2, 0.0, None) ** 2


def bump_h2_norm():
    """``||(1 - r^2)_+^2||`` in ``L^2`` of the hyperbolic plane."""
    from scipy import integrate

    val, _ = integrate.quad(lambda r: (1 - r * r) ** 4 * math.sinh(r), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    return math.sqrt(2 * math.pi * val)


@pytest.fixture(scope="module")
def spd_pairs():
    rng = np.random.default_rng(20240601)
    pairs = []
    for k in range(N_PAIRS):
        m = (2, 3, 4)[k % 3]
        spread = rng.uniform(0.05, 2.5)
        pairs.append((random_spd(rng, m, spread), random_spd(rng, m, spread)))
    return pairs


def test_01_conformal_deviation_oracle(capsys):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        phi = rng.uniform(-3, 3)
        m = int(rng.integers(2, 7))
        dev = geometry.pair_operator(*geometry.conformal_pair(phi, dim=m))
        worst = max(worst, abs(dev.delta - 2 * math.sinh(abs(phi))))
    elapsed = time.perf_counter() - t0
    report(capsys, 1, "conformal deviation oracle", worst <= 1e-12 and elapsed < 1.0,
           f"max |delta - 2 sinh|phi|| = {worst:.2e} over 100 samples in {elapsed:.2f} s")


def test_02_identity_suite(capsys, spd_pairs):
    t0 = time.perf_counter()
    worst = max(geometry.inverse_pair_identities(g, h)["max"] for g, h in spd_pairs)
    elapsed = time.perf_counter() - t0
    report(capsys, 2, "inversion identities", worst <= 1e-10 and elapsed < 10.0,
           f"max residual {worst:.2e} over {N_PAIRS} pairs (m = 2, 3, 4) in {elapsed:.2f} s")


def test_03_elementary_bound(capsys, spd_pairs):
    violations, worst = 0, -math.inf
    for g, h in spd_pairs:
        rep = geometry.elementary_bound_check(g, h)
        excess = rep["lhs"] - rep["rhs"]
        worst = max(worst, excess)
        violations += excess > 1e-12
    report(capsys, 3, "elementary bound", violations == 0,
           f"{violations} violations over {N_PAIRS} pairs; max(lhs - delta) = {worst:.2e}")


@pytest.mark.slow
def test_04_bismut_vs_closed_form(capsys):
    x, v, s = np.array([math.sqrt(2.0), 0.0]), np.array([1.0, 0.0]), 0.5
    t0 = time.perf_counter()
    est = stochastic.bismut_gradient(gaussian, x, v, s, n_paths=100_000, seed=2024, man=mm.euclidean(2), dt=5e-4)
    elapsed = time.perf_counter() - t0
    exact = float(gaussian_gradient(x, s) @ v)
    err = abs(est.value - exact)
    ok = err <= 3 * est.std_error and est.std_error <= 0.05 * abs(exact)
    report(capsys, 4, "Bismut estimator", ok,
           f"estimate {est.value:.5f} vs exact {exact:.5f}, |err| = {err / est.std_error:.2f} se, "
           f"se = {100 * est.std_error / abs(exact):.2f}% of exact, {elapsed:.0f} s")


@pytest.mark.slow
def test_05_gradient_bound(capsys):
    cases = []
    for s in (0.5, 1.0):
        for x in ([1.0, 0.0], [math.sqrt(2.0), 0.0]):
            cases.append(("euclidean-m2", mm.euclidean(2), x, s, gaussian, math.sqrt(math.pi)))
        for x in ([0.3, 0.0], [0.8, 0.0]):
            cases.append(("hyperbolic-m2", mm.hyperbolic(2), x, s, bump, bump_h2_norm()))
    lines, violations = [], 0
    for name, man, x, s, f, norm in cases:
        rep = stochastic.gradient_bound_check(man, x, s, f, norm, n_paths=10_000, seed=11)
        violations += not rep.holds
        lines.append(f"{name} x={x[0]:.2f} s={s}: {rep.estimate:.4f} <= {rep.bound:.4f}")
    report(capsys, 5, "one-sided gradient bound", violations == 0,
           f"{violations} violations over {len(cases)} cases; " + "; ".join(lines[:2]) + "; ...")


@pytest.mark.slow
def test_06_cauchy_schwarz(capsys):
    cases = [
        ("euclidean-m2", mm.euclidean(2), [math.sqrt(2.0), 0.0], gaussian),
                ("hyperbolic-m2", mm.hyperbolic(2), [0.3, 0.0], bump),
    ]
    bad, worst = 0, -math.inf
    for name, man, x, f in cases:
        for s in (0.5, 1.0):
            rep = stochastic.cauchy_schwarz_decomposition(f, x, [1.0, 0.0], s, 10_000, seed=17, man=man)
            gap = rep.factor2_sq - rep.psi3 - 3 * rep.factor2_sq_se
            worst = max(worst, gap / rep.psi3)
            bad += gap > 0 or not rep.product_dominates
    report(capsys, 6, "Cauchy-Schwarz second factor", bad == 0,
           f"{bad} failures over {2 * len(cases)} cases; max (factor2^2 - Psi3 - 3se)/Psi3 = {worst:.3f}")


def test_07_heat_solver(capsys):
    d = np.linspace(0.0, 3.0, 61)
    worst_rel, worst_mass = 0.0, 0.0
    for man, space in ((mm.hyperbolic(3), "hyperbolic3"), (mm.euclidean(2), "euclidean"), (mm.euclidean(3), "euclidean")):
        for ev in heat.radial_heat_solve(man, [0.5, 1.0]):
            exact = heat.heat_kernel_closed(space, ev.s, d, man.dim)
            worst_rel = max(worst_rel, float(np.max(np.abs(ev(d) / exact - 1))))
            worst_mass = max(worst_mass, abs(ev.mass - 1))
    report(capsys, 7, "heat solver vs closed forms", worst_rel <= 1e-3 and worst_mass <= 1e-3,
           f"max relative error {worst_rel:.2e} on d in [0, 3], max |mass - 1| = {worst_mass:.2e}")


def test_08_hpw_formula(capsys):
    worst = {}
    for name, geo in (("conformal-1d", do.conformal_1d()), ("anisotropic-2d", do.anisotropic_2d())):
        ops = do.build_operators(geo)
        worst[name] = max(do.hpw_formula_check(ops, s, trials=20, seed=3).max_residual for s in (0.25, 0.5, 1.0))
    ok = max(worst.values()) <= 1e-8
    report(capsys, 8, "HPW formula", ok, ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()))


def test_09_hs_chain(capsys):
    bad, min_slack, max_row = 0, math.inf, 0.0
    for geo in (do.conformal_1d(), do.conformal_1d(profile="constant"), do.anisotropic_2d()):
        ops = do.build_operators(geo)
        for s in (0.25, 0.5, 1.0):
            rep = do.hs_norm_chain(ops, s)
            bad += not rep.holds
            max_row = max(max_row, rep.max_row_sum)
            min_slack = min(min_slack, min(q.slack for q in rep.inequalities))
    ok = bad == 0 and max_row <= 1 + 1e-10
    report(capsys, 9, "HS-norm chain", ok,
           f"{bad} failing chains; min slack {min_slack:.2e} (rounding-level where a step is an equality); "
           f"max kernel row sum {max_row:.12f}")


def test_10_flow_proof_steps(capsys):
    checks = (flow.gronwall_sandwich_check, flow.eigen_log_bound_check, flow.flow_delta_bound_check)
    exact = [flow.einstein_flow(-1.0, -2.0, 1.0), flow.cigar_flow_exact(0.5)]
    fd = [flow.conformal_flow_2d(mm.hyperbolic(2), -2.0, 1.0), flow.conformal_flow_2d(mm.cigar(), -2.0, 0.5)]
    failures = []
    for traj in exact + fd:
        for chk in checks:
            rep = chk(traj)
            if not rep.holds:
                failures.append(f"{traj.family}:{rep.name} margin {rep.margin:.2e}")
    tol_ok = all(t.tolerance == flow.EINSTEIN_TOL for t in exact) and all(t.tolerance == flow.FD_TOL for t in fd)
    c_res = flow.einstein_residual(exact[0], -1.0)
    c_end = float(exact[0].scale[-1, 0])
    ok = not failures and tol_ok and c_res <= 1e-12 and abs(c_end - 3.0) <= 1e-12
    report(capsys, 10, "flow proof steps", ok,
           f"{len(failures)} failing checks {failures}; max |c(s) - (1 + 2s)| = {c_res:.1e}, c(1) = {c_end!r}")


def test_11_criterion_verdicts(capsys):
    E2 = mm.euclidean(2)
    same = criterion.theorem_main_integral(ConformalRadialPair(E2, RadialProfile("zero")), 1.0, "g")
    gauss = criterion.theorem_main_integral(ConformalRadialPair(E2, RadialProfile("gaussian", 1.0, 1.0)), 1.0, "g")
    const = criterion.theorem_main_integral(ConformalRadialPair(E2, RadialProfile("constant", 1.0)), 1.0, "g")
    sweep = criterion.theorem_main_sweep(ConformalRadialPair(E2, RadialProfile("gaussian", 1.0, 1.0)), [0.5, 1.0])
    js = {(r.criterion_id[-1], r.inputs_digest["s"]) for r in sweep}
    ok = (
        same.verdict == "satisfied" and same.value == 0.0
        and gauss.verdict == "satisfied"
        and const.verdict == "diverged"
        and js == {("g", 0.5), ("h", 0.5), ("g", 1.0), ("h", 1.0)}
    )
    report(capsys, 11, "criterion verdicts", ok,
           f"g=h: {same.verdict} ({same.value}); gaussian: {gauss.verdict} ({gauss.value:.4f}); "
           f"phi=1: {const.verdict}; sweep: " + ", ".join(f"{r.criterion_id}@s={r.inputs_digest['s']}:{r.verdict}" for r in sweep))


def test_12_determinism(capsys, tmp_path):
    items = [
        ("mc", {"fixture": "gaussian-bismut-e2", "n_paths": "5000", "seed": "99"}),
        ("bound", {"fixture": "gradient-bound-h2", "n_paths": "2000", "seed": "99"}),
        ("flow", {"fixture": "conformal-flow-h2", "intervals": "200"}),
        ("disc", {"fixture": "discrete-anisotropic-2d", "n": "8"}),
    ]
    same = []
    for sid, raw in items:
        params = scenarios.resolve(raw)
        cli.run_one(sid, params, tmp_path / "a", threads=1)
        cli.run_one(sid, params, tmp_path / "b", threads=2)
        files = sorted(p.name for p in (tmp_path / "a" / sid).iterdir())
        same.append(all((tmp_path / "a" / sid / n).read_bytes() == (tmp_path / "b" / sid / n).read_bytes() for n in files))
    report(capsys, 12, "determinism", all(same),
           ", ".join(f"{sid}: {'identical' if s else 'DIFFERENT'}" for (sid, _), s in zip(items, same)))
