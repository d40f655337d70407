"""Ricci-type flows ``d/ds g_s = kappa Ric(g_s)`` on tractable families.

Two families are supported:

* Einstein initial data ``Ric(g0) = lam g0``.  Since the Ricci tensor is
  invariant under constant rescaling, ``g_s = c(s) g0`` with
  ``c(s) = 1 + kappa lam s`` exactly.
* Two-dimensional radial metrics.  The flow stays in the conformal class,
  ``g_s = e^{w} g0``, and the conformal factor obeys
  ``w_s = kappa K_s`` with ``K_s = e^{-w} (K0 - Lap0 w / 2)``.  This is
  integrated by explicit finite differences on a radial grid.

Along a valid trajectory the curvature bound ``A(x)`` controls the
deviation of ``g_s`` from ``g0`` through a Gronwall sandwich, a bound on the
logarithms of the eigenvalues of the pair operator and the induced bound on
``delta``.  The check functions verify these pointwise, computing the pair
operator with :mod:`scatterlab.geometry`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry
from .criterion import CriterionReport, flow_integral
from .model_manifolds import RadialManifold, euclidean, hyperbolic, ricci_eigenvalues
from .profiles import RadialProfile

EINSTEIN_TOL = 1e-8
FD_TOL = 1e-3
#: cap on the number of (time, node) pairs sent through the geometry module
GEOMETRY_SAMPLES = 4000


@dataclass
class FlowTrajectory:
    """A sampled flow ``(g_s)_{s in [0, S]}``.

    Attributes:
        kappa: flow coefficient.
        horizon: requested final time ``S``.
        times: strictly increasing sample times in ``[0, S]``.
        family: ``"einstein"``, ``"conformal-2d"`` or ``"cigar-exact"``.
        dim: manifold dimension.
        w: log of the conformal factor, shape ``(len(times), len(radii))``.
            For Einstein flows a single column holding ``log c(s)``.
        radii: ``g0``-distances from the pole of the grid nodes.
        a_values: ``A`` at the nodes.
        a_field: callable ``r -> A(r)``.
        validity: metric stayed positive up to ``horizon``.
        model: initial metric, if known.
        a_profile: named profile for ``A`` when it is known in closed form.
        blowup_time: critical time of the Einstein family, if any.
        monitored: number of leading nodes outside the boundary buffer.
        notes: free-text diagnostics.
    """

    kappa: float
    horizon: float
    times: np.ndarray
    family: str
    dim: int
    w: np.ndarray
    radii: np.ndarray
    a_values: np.ndarray
    a_field: Callable
    validity: bool = True
    model: RadialManifold | None = None
    a_profile: RadialProfile | None = None
    blowup_time: float | None = None
    monitored: int | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def scale(self) -> np.ndarray:
        """Conformal factor ``e^{w}`` (``c(s)`` for Einstein flows)."""
        return np.exp(self.w)

    @property
    def tolerance(self) -> float:
        return EINSTEIN_TOL if self.family in ("einstein", "cigar-exact") else FD_TOL

    @property
    def sup_a(self) -> float:
        return float(np.max(self.a_values[: self.n_monitored]))

    @property
    def n_monitored(self) -> int:
        return len(self.radii) if self.monitored is None else self.monitored

    def write_columns(self, path) -> None:
        """Dump ``time radius w`` rows as whitespace-separated text."""
        T, R = np.meshgrid(self.times, self.radii, indexing="ij")
        data = np.column_stack([T.ravel(), R.ravel(), self.w.ravel()])
        np.savetxt(path, data, header="time radius w", fmt="%.17g")


# -- Einstein family ------------------------------------------------------------

def einstein_flow(lam: float, kappa: float, S: float, dim: int = 2, n_times: int = 1001,
                  model: RadialManifold | None = None) -> FlowTrajectory:
    """Exact flow of Einstein initial data, ``g_s = (1 + kappa lam s) g0``.

    If ``1 + kappa lam S <= 0`` the horizon is truncated just before the
    critical time ``-1/(kappa lam)`` and the trajectory is marked invalid.
    """
    if S <= 0:
        raise ValueError("horizon must be positive")
    rate = kappa * lam
    blowup = -1.0 / rate if rate < 0 else None
    valid = blowup is None or blowup > S
    end = S if valid else blowup * (1 - 1e-6)
    times = np.linspace(0.0, end, n_times)
    c = 1.0 + rate * times
    a = float(np.max(np.abs(lam) / c))
    if model is None:
        if lam == 0:
            model = euclidean(dim)
        elif lam == -(dim - 1):
            model = hyperbolic(dim)
    traj = FlowTrajectory(
        kappa=kappa,
        horizon=S,
        times=times,
        family="einstein",
        dim=dim,
        w=np.log(c)[:, None],
        radii=np.zeros(1),
        a_values=np.array([a]),
        a_field=lambda r: np.full(np.shape(r), a),
        validity=valid,
        model=model,
        a_profile=RadialProfile("constant", a) if a > 0 else RadialProfile("zero"),
        blowup_time=blowup,
    )
    if not valid:
        traj.notes.append(f"blowup at s = {blowup:.12g}; trajectory truncated, invalid past it")
    return traj


def einstein_residual(traj: FlowTrajectory, lam: float) -> float:
    """Sup of ``|c(s) - 1 - kappa lam s|`` along an Einstein trajectory."""
    return float(np.max(np.abs(traj.scale[:, 0] - (1.0 + traj.kappa * lam * traj.times))))


# -- two-dimensional conformal family -----------------------------------------

def _laplacian(w: np.ndarray, dr: float, drift: np.ndarray) -> np.ndarray:
    """Radial Laplacian ``w'' + (f'/f) w'`` with pole symmetry and reflecting rim."""
    ext = np.empty(w.size + 2)
    ext[1:-1] = w
    ext[0] = w[1]
    ext[-1] = w[-2]
    d2 = (ext[2:] - 2 * w + ext[:-2]) / dr**2
    d1 = (ext[2:] - ext[:-2]) / (2 * dr)
    out = d2 + drift * d1
    # at the pole (f'/f) w' -> w'' so the Laplacian is twice the second derivative
    out[0] = 2 * d2[0]
    return out


def conformal_flow_2d(g0: RadialManifold, kappa: float, S: float, R: float = 10.0, n: int = 500,
                      dt: float | None = None, n_store: int = 201, cfl: float = 0.2) -> FlowTrajectory:
    """Explicit finite-difference flow of a radial surface in its conformal class.

    Args:
        g0: initial radial metric, dimension two.
        kappa: flow coefficient.  The conformal factor equation is parabolic
            only for ``kappa <= 0``; positive values are rejected unless the
            initial curvature vanishes identically.
        S: horizon.
        R: outer radius of the grid (reflecting boundary).
        n: number of grid intervals.
        dt: time step.  Defaults to ``cfl * dr**2 / D`` with ``D`` the largest
            diffusivity seen so far; an explicit value is reduced if it
            violates that bound.
        n_store: number of stored time samples.  ``A`` is maximized over
            every step, not only the stored ones.
    """
    if g0.dim != 2:
        raise ValueError("conformal flow is implemented for surfaces only")
    if S <= 0:
        raise ValueError("horizon must be positive")
    r = np.linspace(0.0, R, n + 1)
    dr = r[1] - r[0]
    K0 = np.asarray(ricci_eigenvalues(g0, np.maximum(r, 1e-3))[0], dtype=float)
    drift = np.zeros_like(r)
    drift[1:] = g0.df(r[1:]) / g0.f(r[1:])
    if kappa > 0 and np.max(np.abs(K0)) > 0:
        raise ValueError("conformal factor equation is backward parabolic for kappa > 0")
    w = np.zeros_like(r)
    store_t = np.linspace(0.0, S, n_store)
    stored = np.empty((n_store, r.size))
    stored[0] = w
    a_max = np.abs(K0).copy()
    t, k_store, valid = 0.0, 1, True
    spread = 0.0
    outer = r.size // 2
    while k_store < n_store:
        D = 0.5 * abs(kappa) * float(np.max(np.exp(-w)))
        step = cfl * dr**2 / D if D > 0 else store_t[-1]
        if dt is not None:
            step = min(step, dt)
        step = min(step, store_t[k_store] - t)
        K = np.exp(-w) * (K0 - 0.5 * _laplacian(w, dr, drift))
        w = w + step * kappa * K
        t += step
        # boundary influence travels at the diffusivity of the outer half of the grid
        spread += 0.5 * abs(kappa) * float(np.max(np.exp(-w[outer:]))) * step
        if not np.all(np.isfinite(w)):
            valid = False
            break
        K_new = np.exp(-w) * (K0 - 0.5 * _laplacian(w, dr, drift))
        np.maximum(a_max, np.abs(K_new), out=a_max)
        if abs(t - store_t[k_store]) <= 1e-12 * max(S, 1.0):
            t = store_t[k_store]
            stored[k_store] = w
            k_store += 1
    times = store_t[:k_store]
    # four diffusion lengths: a boundary perturbation is damped by about e^-8 there
    buffer = 4.0 * math.sqrt(2.0 * spread) if spread > 0 else 0.0
    monitored = int(np.searchsorted(r, R - buffer, side="right"))
    traj = FlowTrajectory(
        kappa=kappa,
        horizon=S,
        times=times,
        family="conformal-2d",
        dim=2,
        w=stored[:k_store],
        radii=r,
        a_values=a_max,
        a_field=lambda x: np.interp(x, r, a_max),
        validity=valid,
        model=g0,
        monitored=max(monitored, 0),
    )
    if not valid:
        traj.notes.append(f"conformal factor lost finiteness at s = {t:.6g}")
    if monitored < 1:
        warnings.warn("boundary influence reaches the whole grid; enlarge R", RuntimeWarning, stacklevel=2)
        traj.notes.append("boundary influence reaches the whole grid")
    elif buffer > 0:
        traj.notes.append(f"measurements trusted for r <= {r[monitored - 1]:.4g} (causal buffer {buffer:.3g})")
    return traj


def cigar_flow_exact(S: float, R: float = 10.0, n: int = 500, n_store: int = 201) -> FlowTrajectory:
    """Closed-form ``kappa = -2`` flow of the cigar ``g0 = (dx^2)/(1 + |x|^2)``.

    In Euclidean coordinates ``g_s = (dx^2) / (e^{4s} + |x|^2)``, so with
    ``rho = sinh(r)`` the conformal factor is
    ``w = log((1 + rho^2) / (e^{4s} + rho^2))`` and the curvature is
    ``K_s = 2 e^{4s} / (e^{4s} + rho^2)``, increasing in ``s``.
    """
    from .model_manifolds import cigar

    r = np.linspace(0.0, R, n + 1)
    times = np.linspace(0.0, S, n_store)
    rho2 = np.sinh(r) ** 2
    E = np.exp(4 * times)[:, None]
    w = np.log((1 + rho2) / (E + rho2))
    profile = RadialProfile("cigar-curvature", scale=S)
    return FlowTrajectory(
        kappa=-2.0,
        horizon=S,
        times=times,
        family="cigar-exact",
        dim=2,
        w=w,
        radii=r,
        a_values=profile(r),
        a_field=profile,
        model=cigar(),
        a_profile=profile,
    )


def cigar_curvature_exact(s, r):
    """Curvature of the flowed cigar at time ``s`` and ``g0``-distance ``r``."""
    E = np.exp(4 * np.asarray(s, dtype=float))
    return 2 * E / (E + np.sinh(r) ** 2)


# -- proof-step checks -----------------------------------------------------------

@dataclass
class StepCheck:
    """Outcome of one pointwise inequality along a trajectory.

    ``margin`` is the smallest value of ``bound - quantity`` (negative means a
    violation) and ``worst`` the ``(time, radius)`` where it is attained.
    """

    name: str
    holds: bool
    margin: float
    worst: tuple
    tolerance: float
    geometry_samples: int
    geometry_discrepancy: float
    notes: list = field(default_factory=list)


def _require_valid(traj: FlowTrajectory):
    if not traj.validity:
        raise ValueError("trajectory is not valid on its horizon")


def _sample_pairs(traj: FlowTrajectory):
    nt, nr = traj.w.shape
    nr = traj.n_monitored
    total = nt * nr
    stride = max(1, int(math.ceil(math.sqrt(total / GEOMETRY_SAMPLES))))
    ti = np.arange(0, nt, stride)
    if ti[-1] != nt - 1:
        ti = np.append(ti, nt - 1)
    ri = np.arange(0, nr, stride)
    return ti, ri


def _geometry_values(traj: FlowTrajectory):
    """Pair-operator eigenvalues and ``delta`` on a subgrid, via the geometry module."""
    ti, ri = _sample_pairs(traj)
    eye = np.eye(traj.dim)
    lam = np.empty((ti.size, ri.size, traj.dim))
    dlt = np.empty((ti.size, ri.size))
    for a, i in enumerate(ti):
        for b, j in enumerate(ri):
            dev = geometry.pair_operator(eye, math.exp(traj.w[i, j]) * eye)
            lam[a, b] = dev.eigenvalues
            dlt[a, b] = dev.delta
    return ti, ri, lam, dlt


def _finish(name, traj, slack, ti_grid, ri_grid, geo_count, geo_disc, notes=()):
    k = np.unravel_index(np.argmin(slack), slack.shape)
    margin = float(slack[k])
    worst = (float(traj.times[ti_grid[k[0]]]), float(traj.radii[ri_grid[k[1]]]))
    return StepCheck(name, margin >= -traj.tolerance, margin, worst, traj.tolerance, geo_count, geo_disc, list(notes))


def gronwall_sandwich_check(traj: FlowTrajectory) -> StepCheck:
    """Check ``e^{-s A(x)|kappa|} <= e^{w(s,x)} <= e^{s A(x)|kappa|}`` at every node and time.

    Slack is measured relative to the conformal factor.
    """
    _require_valid(traj)
    nr = traj.n_monitored
    s = traj.times[:, None]
    A = traj.a_values[None, :nr]
    w = traj.w[:, :nr]
    growth = s * A * abs(traj.kappa)
    # relative slack of both sides: log form is scale free
    slack = np.minimum(growth - w, w + growth)
    slack = np.expm1(np.minimum(slack, 50.0))
    return _finish("gronwall-sandwich", traj, slack, np.arange(len(traj.times)), np.arange(nr), 0, 0.0)


def eigen_log_bound_check(traj: FlowTrajectory) -> StepCheck:
    """Check ``|log lam| <= A(x) |kappa| s`` for the eigenvalues of the pair operator of ``(g0, g_s)``.

    The eigenvalues are computed by :func:`scatterlab.geometry.pair_operator`
    on a subgrid and compared with the closed form ``e^{-w}``; the bound is
    then asserted on the full grid.
    """
    _require_valid(traj)
    ti, ri, lam, _ = _geometry_values(traj)
    closed = np.exp(-traj.w[np.ix_(ti, ri)])
    disc = float(np.max(np.abs(lam - closed[..., None]) / closed[..., None]))
    nr = traj.n_monitored
    logs = np.abs(traj.w[:, :nr])
    geo_logs = np.max(np.abs(np.log(lam)), axis=-1)
    bound = traj.a_values[None, :nr] * abs(traj.kappa) * traj.times[:, None]
    slack = bound - logs
    geo_slack = bound[np.ix_(np.arange(len(traj.times)), ri)][ti] - geo_logs
    notes = [f"geometry-module minimum slack {float(np.min(geo_slack)):.3e}"]
    chk = _finish("eigen-log-bound", traj, slack, np.arange(len(traj.times)), np.arange(nr), lam.shape[0] * lam.shape[1], disc, notes)
    chk.holds = chk.holds and float(np.min(geo_slack)) >= -traj.tolerance
    return chk


def flow_delta_bound_check(traj: FlowTrajectory) -> StepCheck:
    """Check ``delta(g_s, g0)(x) <= 2 sinh((m/4) S |kappa| A(x))`` at every node and time."""
    _require_valid(traj)
    m = traj.dim
    ti, ri, _, dlt = _geometry_values(traj)
    closed = 2 * np.sinh(0.25 * m * np.abs(traj.w))
    disc = float(np.max(np.abs(dlt - closed[np.ix_(ti, ri)])))
    nr = traj.n_monitored
    bound = 2 * np.sinh(0.25 * m * traj.horizon * abs(traj.kappa) * traj.a_values[None, :nr])
    slack = (bound - closed[:, :nr]) / np.maximum(1.0, bound)
    geo_slack = float(np.min((bound[:, ri] - dlt) / np.maximum(1.0, bound[:, ri])))
    notes = [f"geometry-module minimum slack {geo_slack:.3e}"]
    chk = _finish("flow-delta-bound", traj, np.broadcast_to(slack, closed[:, :nr].shape), np.arange(len(traj.times)), np.arange(nr), dlt.size, disc, notes)
    chk.holds = chk.holds and geo_slack >= -traj.tolerance
    return chk


def quasi_isometry_constant(traj: FlowTrajectory) -> float:
    """Constant ``e^{A |kappa| S}`` with ``C^{-1} g0 <= g_s <= C g0`` on the whole trajectory."""
    _require_valid(traj)
    return math.exp(traj.sup_a * abs(traj.kappa) * traj.horizon)


def time_refinement_study(traj: FlowTrajectory, factors=(1, 2, 4, 8)) -> list[dict]:
    """How the sup-over-time estimate of ``A`` depends on the stored time grid.

    For each factor ``k`` ``A`` is recomputed from every ``k``-th stored
    time.  Only closed-form trajectories can be resampled; for the others
    the stored ``a_values`` already maximize over every integration step.
    """
    rows = []
    if traj.family == "einstein":
        lam = traj.a_values[0] * np.exp(traj.w[0, 0])  # |lam| / c(0) with c(0) = 1
        for k in factors:
            sub = traj.times[::k]
            c = np.exp(traj.w[::k, 0])
            rows.append({"factor": k, "n_times": int(sub.size), "sup_a": float(np.max(lam / c))})
    elif traj.family == "cigar-exact":
        for k in factors:
            sub = traj.times[::k]
            vals = np.max(cigar_curvature_exact(sub[:, None], traj.radii[None, :]), axis=0)
            rows.append({"factor": k, "n_times": int(sub.size), "sup_a": float(np.max(vals)),
                         "max_change": float(np.max(np.abs(vals - traj.a_values)))})
    else:
        rows.append({"factor": 1, "n_times": int(traj.times.size), "sup_a": traj.sup_a,
                     "note": "maximized over every integration step"})
    return rows


# -- spectral pipeline ------------------------------------------------------------

@dataclass
class FlowPipelineReport:
    """Whether a trajectory meets the hypotheses of the flow stability result."""

    status: str
    sup_a: float
    sup_a_finite: bool
    integral: CriterionReport | None
    checks: list
    qi_constant: float | None
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == "hypotheses certified"


def flow_spectral_pipeline(traj: FlowTrajectory, checks: bool = True) -> FlowPipelineReport:
    """Certify the curvature hypotheses along ``traj``.

    The first hypothesis is ``sup A < inf``; the second is finiteness of the
    integral of ``mu(x, 1)^{-1} A(x) e^{A(x) |kappa| S ...}``, evaluated by
    :func:`scatterlab.criterion.flow_integral`.  The proof-step checks are
    run as well unless ``checks`` is false.
    """
    notes = list(traj.notes)
    if not traj.validity:
        return FlowPipelineReport("hypotheses not certified: trajectory invalid", math.inf, False, None, [], None, notes)
    step_checks = []
    if checks:
        step_checks = [gronwall_sandwich_check(traj), eigen_log_bound_check(traj), flow_delta_bound_check(traj)]
        failed = [c.name for c in step_checks if not c.holds]
        if failed:
            notes.append("proof-step checks failed: " + ", ".join(failed))
    sup_a = traj.sup_a
    finite = math.isfinite(sup_a)
    qi = quasi_isometry_constant(traj) if finite else None
    if not finite:
        return FlowPipelineReport("hypotheses not certified: curvature bound A unbounded", sup_a, False, None, step_checks, None, notes)
    if traj.model is None:
        return FlowPipelineReport("hypotheses not certified: initial metric unknown", sup_a, True, None, step_checks, qi, notes)
    if traj.a_profile is None:
        notes.append("A is only known on a grid; its tail cannot be certified")
        return FlowPipelineReport("hypotheses not certified: integral hypothesis inconclusive", sup_a, True, None, step_checks, qi, notes)
    rep = flow_integral(traj.model, traj.a_profile, traj.kappa, traj.horizon)
    if rep.verdict == "satisfied":
        status = "hypotheses certified"
    elif rep.verdict == "diverged":
        status = "hypotheses not certified: integral hypothesis diverges"
    else:
        status = "hypotheses not certified: integral hypothesis inconclusive"
    if step_checks and any(not c.holds for c in step_checks):
        status = "hypotheses not certified: proof-step check failed"
    return FlowPipelineReport(status, sup_a, True, rep, step_checks, qi, notes)
