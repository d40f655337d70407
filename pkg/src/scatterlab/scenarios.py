"""Fixture catalogue and scenario runners.

A scenario is a ``kind`` plus a flat parameter dictionary.  Each runner
returns a :class:`ScenarioResult` holding JSON-ready results, a list of
checks and optional tables.  Checks flagged ``theorem_backed`` encode
inequalities or identities that must hold; any failure among them makes the
command-line run exit with a nonzero status.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import criterion, discrete_operators, flow, geometry, heat, stochastic
from .model_manifolds import (
    RadialManifold,
    cigar,
    euclidean,
    hyperbolic,
    poly_exp,
    sphere_cap,
    unit_sphere_area,
)
from .profiles import ConformalRadialPair, RadialProfile


class ScenarioError(ValueError):
    """Invalid scenario parameters."""


# -- catalogue ----------------------------------------------------------------------

MANIFOLDS: dict[str, Callable[[], RadialManifold]] = {
    "euclidean-m2": lambda: euclidean(2),
    "euclidean-m3": lambda: euclidean(3),
    "hyperbolic-m2": lambda: hyperbolic(2),
    "hyperbolic-m3": lambda: hyperbolic(3),
    "sphere-cap-m3": lambda: sphere_cap(3),
    "cigar-m2": cigar,
    "poly-exp-m2": lambda: poly_exp(2, [0.0, 0.0, 0.2], 1.0),
}


@dataclass(frozen=True)
class Fixture:
    name: str
    category: str
    description: str
    oracle: str
    kind: str | None = None
    params: tuple = ()

    def defaults(self) -> dict:
        return dict(self.params)


_FIXTURE_LIST = [
    Fixture("euclidean-m2", "manifold", "flat plane", "closed form: Gaussian heat kernel"),
    Fixture("euclidean-m3", "manifold", "flat 3-space", "closed form: Gaussian heat kernel"),
    Fixture("hyperbolic-m2", "manifold", "hyperbolic plane, curvature -1", "closed form: one-dimensional kernel integral"),
    Fixture("hyperbolic-m3", "manifold", "hyperbolic 3-space, curvature -1", "closed form: explicit kernel"),
    Fixture("sphere-cap-m3", "manifold", "open cap of the round 3-sphere (incomplete)", "closed form: constant curvature; rejected by criteria"),
    Fixture("cigar-m2", "manifold", "cigar soliton, warp tanh r", "closed form: curvature 2 / cosh^2 r"),
    Fixture("poly-exp-m2", "manifold", "warp r + 0.2 r^3 e^{-r}", "numerical only: heat solver"),
    Fixture("conformal-deviation-phi1", "scenario", "conformal pair h = e^{-2} g in dimension 2", "closed form: delta = 2 sinh 1",
            "deviation", (("phi", 1.0), ("dim", 2))),
    Fixture("gaussian-bismut-e2", "scenario", "Bismut gradient of the Gaussian e^{-|y|^2/2} at (sqrt 2, 0), s = 0.5",
            "closed form: Gaussian convolution", "bismut",
            (("manifold", "euclidean-m2"), ("x", "1.4142135623730951,0"), ("s", 0.5), ("n_paths", 100000), ("dt", 5e-4))),
    Fixture("gradient-bound-e2", "scenario", "one-sided gradient bound, flat plane, Gaussian test function",
            "closed form: both sides analytic", "gradient-bound",
            (("manifold", "euclidean-m2"), ("x", "1.4142135623730951,0"), ("s_values", "0.5,1"), ("n_paths", 20000))),
    Fixture("gradient-bound-h2", "scenario", "one-sided gradient bound, hyperbolic plane, radial bump at the pole",
            "numerical: heat solver for the on-diagonal kernel", "gradient-bound",
            (("manifold", "hyperbolic-m2"), ("x", "0.3,0"), ("s_values", "0.5,1"), ("n_paths", 10000),
             ("function", "bump"), ("width", 1.0), ("center", "0,0"))),
    Fixture("conformal-gaussian-e2", "scenario", "flat plane, h = e^{-2 phi} g with phi = e^{-r^2}", "quadrature with certified tail",
            "criterion", (("manifold", "euclidean-m2"), ("phi_family", "gaussian"), ("phi_amplitude", 1.0), ("phi_scale", 1.0))),
    Fixture("conformal-constant-e2", "scenario", "flat plane, constant phi = 1", "trivial: constant integrand on infinite volume",
            "criterion", (("manifold", "euclidean-m2"), ("phi_family", "constant"), ("phi_amplitude", 1.0))),
    Fixture("conformal-exp-h2", "scenario", "hyperbolic plane, phi = e^{-r}", "divergence: integrand minorant against e^r volume",
            "criterion", (("manifold", "hyperbolic-m2"), ("phi_family", "exponential"), ("phi_amplitude", 1.0), ("phi_scale", 1.0),
                          ("check", "corollary"))),
    Fixture("einstein-hyperbolic-flow", "scenario", "hyperbolic plane under kappa = -2", "closed form: c(s) = 1 + 2s",
            "flow", (("family", "einstein"), ("lam", -1.0), ("kappa", -2.0), ("horizon", 1.0))),
    Fixture("einstein-sphere-flow", "scenario", "Einstein constant 2 under kappa = -2", "closed form: blowup at s = 1/4",
            "flow", (("family", "einstein"), ("lam", 2.0), ("kappa", -2.0), ("horizon", 1.0))),
    Fixture("conformal-flow-h2", "scenario", "finite-difference conformal flow of the hyperbolic plane", "closed form: w = log(1 + 2s)",
            "flow", (("family", "conformal-2d"), ("manifold", "hyperbolic-m2"), ("kappa", -2.0), ("horizon", 1.0))),
    Fixture("cigar-flow", "scenario", "cigar under kappa = -2, exact and finite-difference", "closed form: cigar flow",
            "flow", (("family", "cigar-exact"), ("kappa", -2.0), ("horizon", 0.5))),
    Fixture("discrete-flat-1d", "scenario", "unit interval, g = h", "closed form: finite-difference eigenvalues",
            "discrete", (("grid", "flat-1d"), ("n", 100))),
    Fixture("discrete-conformal-1d", "scenario", "interval [-4, 4], h = e^{-0.6 e^{-x^2}} g", "algebraic identities",
            "discrete", (("grid", "conformal-1d"), ("n", 100), ("amplitude", 0.3))),
    Fixture("discrete-anisotropic-2d", "scenario", "unit square, sheared bump in h", "algebraic identities",
            "discrete", (("grid", "anisotropic-2d"), ("n", 12))),
    Fixture("full-pipeline-gaussian-e2", "scenario", "deviation scan, criteria and heat bounds for the Gaussian conformal pair",
            "quadrature with certified tail", "full-pipeline",
            (("manifold", "euclidean-m2"), ("phi_family", "gaussian"), ("phi_amplitude", 1.0), ("phi_scale", 1.0))),
]

FIXTURES: dict[str, Fixture] = {fx.name: fx for fx in _FIXTURE_LIST}


def manifold(name: str) -> RadialManifold:
    try:
        return MANIFOLDS[name]()
    except KeyError:
        raise ScenarioError(f"unknown manifold {name!r}; available: {', '.join(sorted(MANIFOLDS))}") from None


# -- parameter schema ----------------------------------------------------------------------

#: kind -> parameter -> (type, default); ``None`` defaults are optional, ``...`` required
SCHEMA: dict[str, dict[str, tuple]] = {
    "common": {
        "kind": ("str", ...),
        "fixture": ("str", None),
        "seed": ("int", None),
        "description": ("str", None),
        "output_dir": ("str", None),
    },
    "deviation": {
        "phi": ("float", None),
        "dim": ("int", 2),
        "g": ("matrix", None),
        "h": ("matrix", None),
    },
    "bismut": {
        "manifold": ("str", "euclidean-m2"),
        "x": ("vector", ...),
        "v": ("vector", "1,0"),
        "s": ("float", 0.5),
        "n_paths": ("int", 10000),
        "dt": ("float", 5e-4),
        "function": ("str", "gaussian"),
        "width": ("float", 1.0),
        "center": ("vector", None),
        "control": ("str", "time-change"),
    },
    "gradient-bound": {
        "manifold": ("str", "euclidean-m2"),
        "x": ("vector", ...),
        "s_values": ("floats", "0.5,1"),
        "n_paths": ("int", 10000),
        "dt": ("float", None),
        "function": ("str", "gaussian"),
        "width": ("float", 1.0),
        "center": ("vector", None),
    },
    "criterion": {
        "manifold": ("str", "euclidean-m2"),
        "phi_family": ("str", "gaussian"),
        "phi_amplitude": ("float", 1.0),
        "phi_scale": ("float", 1.0),
        "s_values": ("floats", "1"),
        "check": ("str", "all"),
    },
    "flow": {
        "family": ("str", "einstein"),
        "lam": ("float", None),
        "dim": ("int", 2),
        "manifold": ("str", "hyperbolic-m2"),
        "kappa": ("float", -2.0),
        "horizon": ("float", 1.0),
        "radius": ("float", 10.0),
        "intervals": ("int", 500),
    },
    "discrete": {
        "grid": ("str", "conformal-1d"),
        "n": ("int", None),
        "amplitude": ("float", 0.3),
        "profile": ("str", "gaussian"),
        "s_values": ("floats", "0.25,0.5,1"),
        "trials": ("int", 20),
    },
    "full-pipeline": {
        "manifold": ("str", "euclidean-m2"),
        "phi_family": ("str", "gaussian"),
        "phi_amplitude": ("float", 1.0),
        "phi_scale": ("float", 1.0),
        "s": ("float", 1.0),
        "samples": ("int", 41),
        "n_paths": ("int", 0),
    },
}

STOCHASTIC_KINDS = ("bismut", "gradient-bound")


def schema_document() -> dict:
    """The parameter schema as a JSON-ready dictionary."""
    doc = {}
    for kind, params in SCHEMA.items():
        doc[kind] = {
            key: {"type": typ, "required": default is ..., "default": None if default is ... else default}
            for key, (typ, default) in params.items()
        }
    return doc


def _parse_value(typ: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if typ == "str":
        return raw
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    if typ in ("vector", "floats"):
        return [float(t) for t in raw.split(",") if t.strip()]
    if typ == "matrix":
        rows = [[float(t) for t in row.split(",")] for row in raw.split(";")]
        return rows
    raise ScenarioError(f"unknown parameter type {typ!r}")


def resolve(section: dict) -> dict:
    """Merge fixture defaults, schema defaults and explicit values; parse types.

    Raises:
        ScenarioError: unknown kind, fixture or parameter, missing required
            value, or an unparsable value (the message names the key).
    """
    raw = dict(section)
    fixture_name = raw.get("fixture")
    kind = raw.get("kind")
    base = {}
    if fixture_name is not None:
        fx = FIXTURES.get(fixture_name)
        if fx is None or fx.kind is None:
            runnable = sorted(n for n, f in FIXTURES.items() if f.kind)
            raise ScenarioError(f"unknown scenario fixture {fixture_name!r}; available: {', '.join(runnable)}")
        base = {"kind": fx.kind, **fx.defaults()}
        kind = kind or fx.kind
        if kind != fx.kind:
            raise ScenarioError(f"fixture {fixture_name!r} has kind {fx.kind!r}, not {kind!r}")
    if kind not in SCHEMA or kind == "common":
        raise ScenarioError(f"unknown kind {kind!r}; expected one of {', '.join(k for k in SCHEMA if k != 'common')}")
    spec = {**SCHEMA["common"], **SCHEMA[kind]}
    merged = {**base, **raw, "kind": kind}
    unknown = sorted(set(merged) - set(spec))
    if unknown:
        raise ScenarioError(f"unknown parameter(s) for kind {kind!r}: {', '.join(unknown)}")
    out = {}
    for key, (typ, default) in spec.items():
        if key in merged:
            try:
                out[key] = _parse_value(typ, merged[key])
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"parameter {key!r}: cannot parse {merged[key]!r} as {typ}") from exc
        elif default is ...:
            raise ScenarioError(f"missing required parameter {key!r}")
        else:
            out[key] = _parse_value(typ, default) if default is not None else None
    if kind in STOCHASTIC_KINDS and out.get("seed") is None:
        raise ScenarioError(f"kind {kind!r} is stochastic and needs an explicit seed")
    if kind == "full-pipeline" and out["n_paths"] > 0 and out.get("seed") is None:
        raise ScenarioError("full-pipeline with n_paths > 0 needs an explicit seed")
    return out


# -- results ----------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    theorem_backed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class ScenarioResult:
    results: dict
    checks: list
    tables: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def failed_theorem_checks(self) -> list:
        return [c.name for c in self.checks if c.theorem_backed and not c.passed]


def _pair_from(p: dict) -> ConformalRadialPair:
    man = manifold(p["manifold"])
    prof = RadialProfile(p["phi_family"], p["phi_amplitude"], p["phi_scale"])
    return ConformalRadialPair(man, prof)


# -- test functions for Monte Carlo kinds ------------------------------------------------------

@dataclass
class TestFunction:
    f: Callable
    l2_norm: float
    gradient: Callable | None
    description: str


def _test_function(p: dict, man: RadialManifold) -> TestFunction:
    m = man.dim
    center = np.zeros(m) if p.get("center") is None else np.asarray(p["center"], dtype=float)
    if center.size != m:
        raise ScenarioError("center has the wrong dimension")
    width = p["width"]
    if p["function"] == "gaussian":
        if not man.name.startswith("euclidean"):
            raise ScenarioError("the gaussian test function is only available on flat fixtures")
        b = width**2

        def f(Y):
            return np.exp(-0.5 * np.sum((Y - center) ** 2, axis=1) / b)

        def grad(x, s):
            a = b + 2 * s
            dx = np.asarray(x, float) - center
            return -(dx / a) * (b / a) ** (m / 2) * math.exp(-0.5 * float(dx @ dx) / a)

        return TestFunction(f, (math.pi * b) ** (m / 4), grad, f"exp(-|y - c|^2 / (2 * {b:g}))")
    if p["function"] == "bump":
        if np.any(center) and not man.homogeneous:
            raise ScenarioError("off-pole bumps need a homogeneous model for the L2 norm")
        chart = stochastic.RadialChart(man)

        def bump(r):
            return np.maximum(0.0, 1.0 - (r / width) ** 2) ** 2

        def f(Y):
            return bump(chart.distance(center, Y))

        sq = integrate.quad(lambda r: bump(r) ** 2 * man.f(r) ** (m - 1), 0.0, width, epsabs=0, epsrel=1e-12)[0]
        return TestFunction(f, math.sqrt(unit_sphere_area(m) * sq), None, f"(1 - (d/{width:g})^2)_+^2 around c")
    raise ScenarioError(f"unknown test function {p['function']!r}; use gaussian or bump")


# -- runners ---------------------------------------------------------------------------

def run_deviation(p: dict, threads: int = 1) -> ScenarioResult:
    if p["phi"] is not None:
        g, h = geometry.conformal_pair(p["phi"], dim=p["dim"])
    elif p["g"] is not None and p["h"] is not None:
        g, h = np.asarray(p["g"]), np.asarray(p["h"])
    else:
        raise ScenarioError("deviation needs either phi or both g and h")
    dev = geometry.pair_operator(g, h)
    ids = geometry.inverse_pair_identities(g, h)
    bound = geometry.elementary_bound_check(g, h)
    results = {
        "delta": dev.delta,
        "rho": dev.rho,
        "s": dev.s_scalar,
        "eigenvalues": dev.eigenvalues.tolist(),
        "identity_residuals": ids,
        "elementary_bound": bound,
    }
    checks = [
        Check("inverse-pair-identities", ids["max"] <= 1e-10, True, {"max_residual": ids["max"]}),
        Check("elementary-bound", bound["holds"], True, {"lhs": bound["lhs"], "rhs": bound["rhs"]}),
    ]
    if p["phi"] is not None:
        oracle = 2 * math.sinh(abs(p["phi"]))
        results["oracle_delta"] = oracle
        checks.append(Check("conformal-delta-oracle", abs(dev.delta - oracle) <= 1e-12 * max(1.0, oracle), True,
                            {"oracle": oracle, "delta": dev.delta}))
    return ScenarioResult(results, checks)


def run_bismut(p: dict, threads: int = 1) -> ScenarioResult:
    man = manifold(p["manifold"])
    tf = _test_function(p, man)
    x, v = np.asarray(p["x"]), np.asarray(p["v"])
    est = stochastic.bismut_gradient(tf.f, x, v, p["s"], p["n_paths"], p["seed"], man=man, dt=p["dt"],
                                     control=p["control"], threads=threads)
    results = {
        "estimate": est.value,
        "std_error": est.std_error,
        "n_paths": est.n_paths,
        "control_energy": est.control_energy,
        "exit_fraction": est.exit_fraction,
        "dead_fraction": est.dead_fraction,
        "function": tf.description,
    }
    checks = []
    if tf.gradient is not None:
        # flat chart: the directional derivative is the Euclidean dot product
        exact = float(tf.gradient(x, p["s"]) @ v)
        z = (est.value - exact) / est.std_error if est.std_error > 0 else math.inf
        results.update({"oracle": exact, "z_score": z, "relative_std_error": est.std_error / abs(exact) if exact else math.inf})
        results["pass"] = bool(abs(est.value - exact) <= 3 * est.std_error)
        checks.append(Check("bismut-oracle-3se", results["pass"], True, {"oracle": exact, "z": z}))
    return ScenarioResult(results, checks, notes=list(est.notes))


def run_gradient_bound(p: dict, threads: int = 1) -> ScenarioResult:
    man = manifold(p["manifold"])
    tf = _test_function(p, man)
    x = np.asarray(p["x"])
    rows, checks, per_s = [], [], {}
    for s in p["s_values"]:
        chk = stochastic.gradient_bound_check(man, x, s, tf.f, tf.l2_norm, n_paths=p["n_paths"], seed=p["seed"],
                                              dt=p["dt"], threads=threads)
        key = f"s={s:g}"
        per_s[key] = {"estimate": chk.estimate, "std_error": chk.std_error, "bound": chk.bound, "psi3": chk.psi3,
                      "psi4": chk.psi4, "slack": chk.slack, "holds": chk.holds}
        if tf.gradient is not None:
            per_s[key]["analytic_gradient_norm"] = float(np.linalg.norm(tf.gradient(x, s)))
        checks.append(Check(f"gradient-bound[{key}]", chk.holds, True, {"slack": chk.slack}))
        for k, (val, se) in enumerate(chk.estimates):
            rows.append([s, k, val, se])
    results = {"f_l2_norm": tf.l2_norm, "function": tf.description, "by_time": per_s}
    tables = {"directional_estimates": (["s", "direction", "estimate", "std_error"], rows)}
    return ScenarioResult(results, checks, tables)


def _criterion_record(rep: criterion.CriterionReport) -> dict:
    return rep.to_record()


def run_criterion(p: dict, threads: int = 1) -> ScenarioResult:
    pair = _pair_from(p)
    which = p["check"]
    if which not in ("all", "main", "sweep", "corollary", "transfer"):
        raise ScenarioError(f"unknown criterion check {which!r}")
    results, checks, rows = {}, [], []
    if which in ("all", "main", "sweep"):
        sweep = criterion.theorem_main_sweep(pair, p["s_values"])
        results["theorem_main"] = [_criterion_record(r) for r in sweep]
        for r in sweep:
            rows.append([r.criterion_id, r.inputs_digest["s"], r.verdict, r.value, r.truncation_error])
        js = sorted({r.criterion_id.rsplit("-", 1)[-1] for r in sweep})
        checks.append(Check("sweep-covers-both-metrics", js == ["g", "h"], False, {"j": js}))
    if which in ("all", "corollary"):
        for j in ("g", "h"):
            try:
                rep = criterion.corollary_lower_integral(pair, j)
            except ValueError as exc:
                results[f"corollary_lower_{j}"] = {"error": str(exc)}
                continue
            results[f"corollary_lower_{j}"] = _criterion_record(rep)
            rows.append([rep.criterion_id, "", rep.verdict, rep.value, rep.truncation_error])
    if which in ("all", "transfer"):
        tr = criterion.quasi_isometry_transfer_check(pair)
        results["transfer"] = {"skipped": tr.skipped, "notice": tr.notice, "agree": tr.agree}
        if not tr.skipped:
            decided = all(r.verdict != "inconclusive" for r in (tr.report_g, tr.report_h))
            # the transfer argument only constrains certified verdicts
            checks.append(Check("quasi-isometry-transfer", bool(tr.agree) or not decided, decided,
                                {"verdict_g": tr.report_g.verdict, "verdict_h": tr.report_h.verdict}))
    tables = {"criteria": (["criterion", "s", "verdict", "value", "truncation_error"], rows)}
    return ScenarioResult(results, checks, tables)


def _step_record(chk: flow.StepCheck) -> dict:
    return {"holds": chk.holds, "margin": chk.margin, "worst_time_radius": list(chk.worst), "tolerance": chk.tolerance,
            "geometry_samples": chk.geometry_samples, "geometry_discrepancy": chk.geometry_discrepancy, "notes": chk.notes}


def run_flow(p: dict, threads: int = 1) -> ScenarioResult:
    fam = p["family"]
    results, checks = {}, []
    if fam == "einstein":
        if p["lam"] is None:
            raise ScenarioError("einstein flow needs lam")
        traj = flow.einstein_flow(p["lam"], p["kappa"], p["horizon"], dim=p["dim"])
        resid = flow.einstein_residual(traj, p["lam"])
        results["einstein_residual"] = resid
        results["c_final"] = float(traj.scale[-1, 0])
        results["blowup_time"] = traj.blowup_time
        checks.append(Check("einstein-exact", resid <= 1e-14 * max(1.0, results["c_final"]), True, {"residual": resid}))
    elif fam == "conformal-2d":
        traj = flow.conformal_flow_2d(manifold(p["manifold"]), p["kappa"], p["horizon"], R=p["radius"], n=p["intervals"])
        if traj.validity and traj.model.homogeneous and traj.model.constant_ricci is not None:
            lam = traj.model.constant_ricci
            nm = traj.n_monitored
            oracle = np.log1p(traj.kappa * lam * traj.times)
            err = float(np.max(np.abs(traj.w[:, :nm] - oracle[:, None])))
            results["einstein_oracle_error"] = err
            checks.append(Check("einstein-oracle", err <= 1e-3, True, {"max_error": err}))
    elif fam == "cigar-exact":
        traj = flow.cigar_flow_exact(p["horizon"], R=p["radius"], n=p["intervals"])
        if p["kappa"] != -2.0:
            raise ScenarioError("the exact cigar flow exists for kappa = -2 only")
        fd = flow.conformal_flow_2d(cigar(), -2.0, p["horizon"], R=p["radius"], n=p["intervals"])
        nm = fd.n_monitored
        err = float(np.max(np.abs(fd.w[:, :nm] - traj.w[:, :nm])))
        results["finite_difference_error"] = err
        checks.append(Check("cigar-finite-difference", err <= 1e-3, True, {"max_error": err}))
    else:
        raise ScenarioError(f"unknown flow family {fam!r}")
    results.update({"validity": traj.validity, "sup_a": traj.sup_a, "notes": traj.notes})
    tables = {}
    if traj.validity:
        for fn in (flow.gronwall_sandwich_check, flow.eigen_log_bound_check, flow.flow_delta_bound_check):
            chk = fn(traj)
            results[chk.name] = _step_record(chk)
            checks.append(Check(chk.name, chk.holds, True, {"margin": chk.margin}))
        pipe = flow.flow_spectral_pipeline(traj, checks=False)
        results["pipeline"] = {
            "status": pipe.status,
            "qi_constant": pipe.qi_constant,
            "integral": None if pipe.integral is None else _criterion_record(pipe.integral),
            "notes": pipe.notes,
        }
        results["time_refinement"] = flow.time_refinement_study(traj)
        stride = max(1, len(traj.times) // 21)
        rows = [[float(t), float(r), float(w)] for i, t in enumerate(traj.times) if i % stride == 0
                for r, w in zip(traj.radii[::max(1, len(traj.radii) // 50)], traj.w[i, ::max(1, len(traj.radii) // 50)])]
        tables["trajectory"] = (["time", "radius", "w"], rows)
    return ScenarioResult(results, checks, tables)


def run_discrete(p: dict, threads: int = 1) -> ScenarioResult:
    name = p["grid"]
    builder = discrete_operators.FIXTURES.get(name)
    if builder is None:
        raise ScenarioError(f"unknown discrete grid {name!r}; available: {', '.join(sorted(discrete_operators.FIXTURES))}")
    kw = {}
    if p["n"] is not None:
        kw["n"] = p["n"]
    if name == "conformal-1d":
        kw.update(amplitude=p["amplitude"], profile=p["profile"])
    ops = discrete_operators.build_operators(builder(**kw))
    results, checks = {"nodes": ops.geo.n_nodes, "m_matrix": ops.m_matrix, "notes": ops.notes}, []
    dd = discrete_operators.dstar_d_residual(ops)
    sym = discrete_operators.symmetry_residual(ops)
    adj = discrete_operators.adjoint_identity_check(ops)
    results.update({"dstar_d_residual": dd, "symmetry_residual": sym, "adjoint_residual": adj})
    checks += [
        Check("dstar-d-identity", dd <= 1e-12, True, {"residual": dd}),
        Check("weighted-symmetry", sym <= 1e-12, True, {"residual": sym}),
        Check("adjoint-identity", adj <= 1e-12, True, {"residual": adj}),
    ]
    for s in p["s_values"]:
        key = f"s={s:g}"
        hpw = discrete_operators.hpw_formula_check(ops, s, trials=p["trials"], seed=p.get("seed") or 0)
        chain = discrete_operators.hs_norm_chain(ops, s)
        results[f"hpw[{key}]"] = hpw.max_residual
        results[f"hs_chain[{key}]"] = {
            "inequalities": [{"name": q.name, "j": q.j, "lhs": q.lhs, "majorant": q.majorant,
                              "delta_majorant": q.delta_majorant, "holds": q.holds} for q in chain.inequalities],
            "max_row_sum": chain.max_row_sum,
            "min_kernel": chain.min_kernel,
            "literal_first_majorant": chain.literal_first_majorant,
            "literal_first_holds": chain.literal_first_holds,
        }
        checks.append(Check(f"hpw[{key}]", hpw.max_residual <= 1e-8, True, {"residual": hpw.max_residual}))
        checks.append(Check(f"hs-chain[{key}]", chain.holds, ops.m_matrix, {"max_row_sum": chain.max_row_sum}))
    spec = discrete_operators.spectrum_compare(ops)
    results["spectrum"] = {"ratio_min": spec.ratio_min, "ratio_max": spec.ratio_max, "qi_constant": spec.qi_constant,
                           "band": list(spec.band), "lowest_g": spec.eigenvalues_g[:5].tolist(),
                           "lowest_h": spec.eigenvalues_h[:5].tolist()}
    checks.append(Check("spectrum-band", spec.inside_band, True, {"band": list(spec.band)}))
    if name == "flat-1d":
        length = ops.geo.spacing[0] * (ops.geo.shape[0] + 1)
        k = np.arange(1, 6)
        exact = 4 / ops.geo.spacing[0] ** 2 * np.sin(k * math.pi * ops.geo.spacing[0] / (2 * length)) ** 2
        err = float(np.max(np.abs(spec.eigenvalues_g[:5] - exact) / exact))
        results["fd_eigenvalue_error"] = err
        checks.append(Check("fd-eigenvalue-oracle", err <= 1e-10, True, {"relative_error": err}))
    rows = [[k, a, b, b / a] for k, (a, b) in enumerate(zip(spec.eigenvalues_g, spec.eigenvalues_h))]
    return ScenarioResult(results, checks, {"spectrum": (["k", "lambda_g", "lambda_h", "ratio"], rows)})


def run_full_pipeline(p: dict, threads: int = 1) -> ScenarioResult:
    pair = _pair_from(p)
    man = pair.base
    results, checks = {}, []
    radii = np.linspace(0.0, 8.0, p["samples"])
    dim = man.dim
    worst_bound = 0.0
    for r in radii:
        g, h = pair.metric_pair_at(float(r))
        chk = geometry.elementary_bound_check(g, h)
        worst_bound = max(worst_bound, chk["lhs"] - chk["rhs"])
    cert = geometry.quasi_isometry_scan(lambda r: pair.metric_pair_at(float(r)), list(radii))
    results["deviation_scan"] = {"samples": int(radii.size), "sampled_qi_constant": cert.constant_c,
                                 "sup_delta": cert.sup_delta, "worst_bound_excess": worst_bound,
                                 "analytic_qi_constant": pair.qi_constant}
    checks.append(Check("elementary-bound-scan", worst_bound <= 1e-12, True, {"worst_excess": worst_bound}))
    sweep = criterion.theorem_main_sweep(pair, [p["s"]])
    results["theorem_main"] = [_criterion_record(r) for r in sweep]
    tr = criterion.quasi_isometry_transfer_check(pair)
    results["transfer"] = {"skipped": tr.skipped, "notice": tr.notice, "agree": tr.agree}
    p4 = heat.psi4(man, p["s"])
    results["psi4_pole"] = p4
    ly = heat.li_yau_validity(man, heat.default_li_yau_constants(dim), p["s"])
    results["li_yau"] = ly
    rows = [[r.criterion_id, r.verdict, r.value, r.truncation_error] for r in sweep]
    if p["n_paths"] > 0:
        sub = dict(p, function="gaussian" if man.name.startswith("euclidean") else "bump", width=1.0, center=None,
                   x=[0.5] + [0.0] * (dim - 1), s_values=[p["s"]], dt=None)
        gb = run_gradient_bound(sub, threads)
        results["gradient_bound"] = gb.results
        checks += gb.checks
    return ScenarioResult(results, checks, {"criteria": (["criterion", "verdict", "value", "truncation_error"], rows)})


RUNNERS = {
    "deviation": run_deviation,
    "bismut": run_bismut,
    "gradient-bound": run_gradient_bound,
    "criterion": run_criterion,
    "flow": run_flow,
    "discrete": run_discrete,
    "full-pipeline": run_full_pipeline,
}


def run_scenario(params: dict, threads: int = 1) -> ScenarioResult:
    return RUNNERS[params["kind"]](params, threads)
