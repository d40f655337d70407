"""Brownian motion with frames, the Ricci-damped transport and Bismut gradients.

Convention: the diffusion has generator ``Delta`` (not ``Delta/2``), so that
``E[f(X_s)]`` represents ``e^{s Delta} f``.  The process is simulated on the
orthonormal frame bundle in exponential coordinates at the pole of a radial
model, with a Heun scheme for the Stratonovich system

    dX = sqrt(2) u o dW,    du = -Gamma(dX, u),

so ``//_r = u_r u_0^{-1}`` is the stochastic parallel transport.  Because the
diffusion runs at twice the speed of a standard (``Delta/2``) Brownian motion,
the gradient formula carries a factor ``1/sqrt(2)``:

    (dP_s f)_x v = -(1/sqrt 2) E[f(X_s) 1_{s<zeta} int_0^{tau ^ s} (Theta ldot, dW)].
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model_manifolds import RadialManifold, psi_bounds, ricci_eigenvalues

EXIT_RADIUS = 0.5
SMALL_R = 1e-3
RENORM_EVERY = 100
DEFAULT_CHUNK = 10_000


class PathError(ValueError):
    pass


# -- chart geometry ------------------------------------------------------------------


class RadialChart:
    """Exponential coordinates at the pole: ``G = b pi + n n^T`` with ``b = (f/r)^2``."""

    def __init__(self, man: RadialManifold, chart_radius: float | None = None):
        self.man = man
        self.dim = man.dim
        limit = man.max_radius if man.max_radius is not None else 30.0
        self.chart_radius = float(min(limit, 30.0) if chart_radius is None else chart_radius)
        if man.max_radius is not None and self.chart_radius > man.max_radius:
            raise PathError("chart radius exceeds the model's coordinate range")
        self.flat = man.name.startswith("euclidean")
        self.hyperbolic = man.name.startswith("hyperbolic")

    # radial coefficient functions, stable near the pole
    def _coeffs(self, r):
        man = self.man
        small = r < SMALL_R
        rs = np.where(small, SMALL_R, r)
        f, df = man.f(rs), man.df(rs)
        b = np.where(small, 1.0, (f / rs) ** 2)
        half_log_db = np.where(small, man.d2f(np.maximum(r, 1e-300)) / 3.0, df / f - 1.0 / rs)
        normal_term = np.where(small, -2.0 * man.d2f(np.maximum(r, 1e-300)) / 3.0, (rs - f * df) / rs**2)
        if np.any(small):
            # leading Taylor terms: f/r - 1 ~ f'' r / 6
            b = np.where(small, (1.0 + man.d2f(np.maximum(r, 1e-300)) * r / 6.0) ** 2, b)
        return b, half_log_db, normal_term

    @staticmethod
    def _unit(X):
        r = np.sqrt(np.sum(X * X, axis=-1))
        n = X / np.where(r > 0, r, 1.0)[:, None]
        if not np.all(r > 0):
            n[r == 0, 0] = 1.0
        return r, n

    def _gram(self, X, u):
        """``u^T G u = b u^T u + (1 - b)(u^T n)(u^T n)^T``."""
        r, n = self._unit(X)
        b, _, _ = self._coeffs(r)
        ut = np.swapaxes(u, 1, 2)
        nu = np.matmul(ut, n[:, :, None])
        return b[:, None, None] * np.matmul(ut, u) + (1.0 - b)[:, None, None] * nu * np.swapaxes(nu, 1, 2)

    def metric(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r, n = self._unit(X)
        b, _, _ = self._coeffs(r)
        nn = n[:, :, None] * n[:, None, :]
        eye = np.eye(self.dim)[None]
        return b[:, None, None] * (eye - nn) + nn

    def christoffel(self, X):
        """Full symbols ``Gamma[p, l, i, j]`` (upper index ``l``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r, n = self._unit(X)
        _, a, q = self._coeffs(r)
        eye = np.eye(self.dim)[None]
        pi = eye - n[:, :, None] * n[:, None, :]
        t1 = np.einsum("pi,plj->plij", n, pi) + np.einsum("pj,pli->plij", n, pi)
        t2 = np.einsum("pl,pij->plij", n, pi)
        return a[:, None, None, None] * t1 + q[:, None, None, None] * t2

    def contract(self, X, dX, u):
        """``Gamma(dX, u)^l_a = Gamma^l_{ij} dX^i u^j_a`` for a batch of frames."""
        if self.flat:
            return np.zeros_like(u)
        r, n = self._unit(X)
        _, a, q = self._coeffs(r)
        ndx = np.sum(n * dX, axis=1)
        nu = np.matmul(n[:, None, :], u)  # [p, 1, a]
        dxu = np.matmul(dX[:, None, :], u)
        pi_u = u - n[:, :, None] * nu
        pi_dx = dX - n * ndx[:, None]
        dx_pi_u = dxu - ndx[:, None, None] * nu
        return a[:, None, None] * (ndx[:, None, None] * pi_u + pi_dx[:, :, None] * nu) + (
            q[:, None, None] * n[:, :, None] * dx_pi_u
        )

    def ricci_propagator(self, X, u, dt):
        """``expm(-dt R)`` with ``R = u^T G Ric^sharp u = lam_tan I + (lam_rad - lam_tan) p p^T``."""
        m = self.dim
        if self.flat:
            return np.broadcast_to(np.eye(m), (X.shape[0], m, m))
        r, n = self._unit(X)
        rad, tan = ricci_eigenvalues(self.man, np.minimum(r, self.chart_radius))
        rad, tan = np.broadcast_to(rad, r.shape), np.broadcast_to(tan, r.shape)
        # G n = n, so u^T G n = u^T n
        p = np.matmul(np.swapaxes(u, 1, 2), n[:, :, None])[:, :, 0]
        p /= np.sqrt(np.sum(p * p, axis=1, keepdims=True))
        scale = np.exp(-dt * tan)
        corr = np.expm1(-dt * (rad - tan))
        return scale[:, None, None] * (np.eye(m)[None] + corr[:, None, None] * p[:, :, None] * p[:, None, :])

    def frame_at(self, x0):
        G = self.metric(np.asarray(x0, dtype=float)[None])[0]
        w, V = np.linalg.eigh(G)
        return (V / np.sqrt(w)) @ V.T

    def orthonormalize(self, X, u, gram=None):
        if gram is None:
            gram = self._gram(X, u)
        w, V = np.linalg.eigh(gram)
        inv_sqrt = np.matmul(V / np.sqrt(w)[:, None, :], np.swapaxes(V, 1, 2))
        return np.matmul(u, inv_sqrt)

    def polar_correct(self, X, u):
        """Pull frames back to ``u^T G u = I``.

        One Newton-Schulz step (error quadratic in the defect), or the exact
        polar factor for the rare frames whose defect exceeds ``1e-4``.
        """
        gram = self._gram(X, u)
        eye = np.eye(self.dim)
        out = np.matmul(u, 1.5 * eye - 0.5 * gram)
        big = np.max(np.abs(gram - eye), axis=(1, 2)) > 1e-4
        if np.any(big):
            out[big] = self.orthonormalize(X[big], u[big], gram[big])
        return out

    def distance(self, x0, X):
        """Geodesic distance from ``x0`` to each row of ``X``."""
        x0 = np.asarray(x0, dtype=float)
        X = np.atleast_2d(X)
        if self.flat:
            return np.linalg.norm(X - x0, axis=1)
        r2 = np.linalg.norm(X, axis=1)
        r1 = float(np.linalg.norm(x0))
        if r1 == 0.0:
            return r2
        if not self.hyperbolic:
            raise PathError("off-pole distances need the Euclidean or hyperbolic model")
        cos_t = np.clip(X @ x0 / np.maximum(r1 * r2, 1e-300), -1.0, 1.0)
        ch = np.cosh(r1 - r2) + math.sinh(r1) * np.sinh(r2) * (1.0 - cos_t)
        return np.arccosh(np.maximum(ch, 1.0))

    def check_start(self, x0):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.dim,):
            raise PathError(f"start point must have shape ({self.dim},)")
        if np.linalg.norm(x0) != 0.0 and not (self.flat or self.hyperbolic):
            raise PathError("general warps support only the pole as start point")
        if np.linalg.norm(x0) + EXIT_RADIUS >= self.chart_radius:
            raise PathError("chart does not cover B(x0, 1/2)")
        return x0


def as_chart(obj) -> RadialChart:
    if isinstance(obj, RadialChart):
        return obj
    if isinstance(obj, RadialManifold):
        return RadialChart(obj)
    raise TypeError(f"cannot build a chart from {type(obj).__name__}")


# -- controls ------------------------------------------------------------------------


class _Control:
    """Scalar profile ``g`` with ``l_t = g_t v``; ``g`` is updated adaptedly.

    ``time-change``: ``g = (e^{-c h} - e^{-c s})^+ / (1 - e^{-c s})`` with the
    random clock ``h_t = int_0^t cos(pi d(x0, X_r))^{-2} dr``; since ``h_t >= t``
    and ``h`` blows up at the exit time, ``g`` vanishes before ``tau ^ s``.

    ``ramp``: ``g = (1 - t/T)^+``, reset to zero on the step after a detected exit.
    """

    def __init__(self, kind: str, n: int, s: float, dt: float, rate: float | None, t_ramp: float | None):
        if kind not in ("time-change", "ramp"):
            raise ValueError(f"unknown control kind {kind!r}")
        self.kind, self.s, self.dt = kind, s, dt
        self.g = np.ones(n)
        self.h = np.zeros(n)
        if kind == "time-change":
            if rate is None or rate <= 0:
                raise ValueError("time-change control needs a positive rate")
            self.rate = float(rate)
            self.floor = math.exp(-self.rate * s)
            self.norm = -math.expm1(-self.rate * s)
        else:
            self.t_ramp = s if t_ramp is None else float(min(t_ramp, s))
            if self.t_ramp <= 0:
                raise ValueError("ramp length must be positive")

    def step(self, k: int, n_steps: int, exited: np.ndarray, dist: np.ndarray) -> np.ndarray:
        """Return ``g_{k+1}`` from information at time ``t_k``; updates the state."""
        if k + 1 == n_steps:
            g_next = np.zeros_like(self.g)
        elif self.kind == "time-change":
            phi = np.cos(math.pi * np.minimum(dist, EXIT_RADIUS))
            with np.errstate(divide="ignore"):
                self.h = np.where(exited, np.inf, self.h + self.dt / phi**2)
            g_next = np.maximum(np.exp(-self.rate * self.h) - self.floor, 0.0) / self.norm
        else:
            g_next = np.maximum(0.0, 1.0 - (k + 1) * self.dt / self.t_ramp) * np.ones_like(self.g)
            g_next = np.where(exited, 0.0, np.minimum(g_next, np.where(self.g == 0.0, 0.0, 1.0)))
        rate = (g_next - self.g) / self.dt
        self.g = g_next
        return rate


# -- path simulation -----------------------------------------------------------------


@dataclass
class PathSample:
    """Recorded paths; arrays indexed ``[time, path, ...]``.

    ``transport`` holds the orthonormal frames ``u_t`` (so ``//_t = u_t u_0^{-1}``),
    ``theta`` the damped transport in frame coordinates at ``x0``.
    ``exit_index`` is ``-1`` for paths that never left ``B(x0, 1/2)``.
    """

    x0: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    transport: np.ndarray
    theta: np.ndarray
    noise: np.ndarray
    exit_index: np.ndarray
    alive: np.ndarray
    distances: np.ndarray

    @property
    def exited(self) -> np.ndarray:
        return self.exit_index >= 0

    @property
    def n_paths(self) -> int:
        return self.positions.shape[1]

    def frame_defect(self, chart: RadialChart) -> float:
        """Max ``|u^T G u - I|`` over all recorded frames."""
        T, n, m = self.positions.shape
        X = self.positions.reshape(T * n, m)
        u = self.transport.reshape(T * n, m, m)
        gram = np.einsum("pia,pij,pjb->pab", u, chart.metric(X), u)
        return float(np.max(np.abs(gram - np.eye(m))))

    def write_columns(self, path, index: int = 0) -> None:
        """Dump one path as whitespace-separated columns (time, coordinates, distance)."""
        cols = [self.times[:, None], self.positions[:, index, :], self.distances[:, index, None]]
        header = "t " + " ".join(f"x{i}" for i in range(self.positions.shape[2])) + " dist"
        np.savetxt(path, np.hstack(cols), header=header)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _n_steps(s: float, dt: float) -> int:
    n = int(round(s / dt))
    if n < 1 or abs(n * dt - s) > 1e-9 * s:
        raise ValueError("s must be an integer multiple of dt")
    return n


class _Engine:
    """Vectorised stepper shared by ``simulate_bm`` and the estimator."""

    def __init__(self, chart: RadialChart, x0, n: int, dt: float):
        m = chart.dim
        self.chart, self.dt, self.m = chart, dt, m
        self.X = np.tile(x0, (n, 1))
        self.u = np.tile(chart.frame_at(x0), (n, 1, 1))
        self.theta = np.tile(np.eye(m), (n, 1, 1))
        self.alive = np.ones(n, dtype=bool)
        self.x0 = x0
        self.sqrt2 = math.sqrt(2.0)

    def advance(self, k: int, dW: np.ndarray) -> None:
        c = self.chart
        dW = np.where(self.alive[:, None], dW, 0.0)
        if not c.flat:
            self.theta = np.matmul(c.ricci_propagator(self.X, self.u, self.dt), self.theta)
        dX = self.sqrt2 * np.matmul(self.u, dW[:, :, None])[:, :, 0]
        du = -c.contract(self.X, dX, self.u)
        Xt, ut = self.X + dX, self.u + du
        dXt = self.sqrt2 * np.matmul(ut, dW[:, :, None])[:, :, 0]
        dut = -c.contract(Xt, dXt, ut)
        self.X = self.X + 0.5 * (dX + dXt)
        self.u = self.u + 0.5 * (du + dut)
        if not c.flat:
            if (k + 1) % RENORM_EVERY == 0:
                self.u = c.orthonormalize(self.X, self.u)
            else:
                self.u = c.polar_correct(self.X, self.u)
        out = np.sum(self.X * self.X, axis=1) >= c.chart_radius**2
        self.alive &= ~out


def simulate_bm(man, x0, s: float, dt: float, seed: int, n_paths: int = 1) -> PathSample:
    """Simulate ``n_paths`` Brownian paths (generator ``Delta``) with frames and ``Theta``."""
    chart = as_chart(man)
    x0 = chart.check_start(x0)
    if s <= 0 or dt <= 0:
        raise ValueError("s and dt must be positive")
    N = _n_steps(s, dt)
    if dt > 1e-3 * s:
        warnings.warn("dt above 1e-3 s: exit detection bias may be visible", stacklevel=2)
    rng = _rng(seed, 0)
    eng = _Engine(chart, x0, n_paths, dt)
    m = chart.dim
    pos = np.empty((N + 1, n_paths, m))
    frames = np.empty((N + 1, n_paths, m, m))
    thetas = np.empty((N + 1, n_paths, m, m))
    noise = np.empty((N, n_paths, m))
    dists = np.empty((N + 1, n_paths))
    alive = np.empty((N + 1, n_paths), dtype=bool)
    exit_index = np.full(n_paths, -1)
    for k in range(N + 1):
        pos[k], frames[k], thetas[k], alive[k] = eng.X, eng.u, eng.theta, eng.alive
        dists[k] = chart.distance(x0, eng.X)
        newly = (exit_index < 0) & (dists[k] >= EXIT_RADIUS)
        exit_index[newly] = k
        if k == N:
            break
        noise[k] = rng.standard_normal((n_paths, m)) * math.sqrt(dt)
        eng.advance(k, noise[k])
    return PathSample(x0, np.arange(N + 1) * dt, pos, frames, thetas, noise, exit_index, alive[-1], dists)


# -- control on recorded paths -------------------------------------------------------


@dataclass
class ControlSample:
    times: np.ndarray
    ell: np.ndarray  # [time, path, m] in frame coordinates at x0
    ell_dot: np.ndarray  # [step, path, m]
    energy: np.ndarray  # per path: int |ldot|^2

    @property
    def mean_energy(self) -> float:
        return float(np.mean(self.energy))


def _frame_vector(chart: RadialChart, x0, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    G = chart.metric(x0[None])[0]
    norm = math.sqrt(float(v @ G @ v))
    if norm > 1.0 + 1e-12:
        raise ValueError(f"|v|_g = {norm:.6g} exceeds 1")
    return np.linalg.solve(chart.frame_at(x0), v)


def control_process(
    v,
    s: float,
    path: PathSample,
    man=None,
    kind: str = "time-change",
    rate: float | None = None,
    t_ramp: float | None = None,
) -> ControlSample:
    """Control ``l`` along recorded paths; ``l_0 = v`` and ``l`` vanishes by ``tau ^ s``.

    ``v`` is a chart vector at ``x0`` with ``|v|_g <= 1``.
    """
    chart = as_chart(man) if man is not None else RadialChart(_flat_like(path))
    x0 = path.x0
    v0 = _frame_vector(chart, x0, v)
    N = len(path.times) - 1
    dt = float(path.times[1] - path.times[0])
    if abs(path.times[-1] - s) > 1e-9 * s:
        raise ValueError("path horizon differs from s")
    if kind == "time-change" and rate is None:
        rate = default_rate(chart, x0)
    ctl = _Control(kind, path.n_paths, s, dt, rate, t_ramp)
    g = np.empty((N + 1, path.n_paths))
    g[0] = 1.0
    gdot = np.empty((N, path.n_paths))
    for k in range(N):
        exited = (path.exit_index >= 0) & (path.exit_index <= k)
        gdot[k] = ctl.step(k, N, exited, path.distances[k])
        g[k + 1] = ctl.g
    ell = g[:, :, None] * v0
    ell_dot = gdot[:, :, None] * v0
    energy = np.sum(gdot**2, axis=0) * dt * float(v0 @ v0)
    return ControlSample(path.times, ell, ell_dot, energy)


def _flat_like(path: PathSample) -> RadialManifold:
    from .model_manifolds import euclidean

    return euclidean(path.positions.shape[2])


def default_rate(chart: RadialChart, x0) -> float:
    """Clock rate of the time-change control: ``Psi_2`` at the start point."""
    return psi_bounds(chart.man, float(np.linalg.norm(x0))).psi2


# -- Bismut estimator ----------------------------------------------------------------


@dataclass
class GradientEstimate:
    """Monte Carlo estimate of ``(dP_s f)_x v``.

    ``gradient`` holds the estimated covector in frame coordinates at ``x``
    (so ``value = gradient . v0``); ``control_energy`` is the sample mean of
    ``int |ldot|^2``.
    """

    value: float
    std_error: float
    n_paths: int
    control_energy: float
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dead_fraction: float = 0.0
    exit_fraction: float = 0.0
    reliable: bool = True
    notes: list = field(default_factory=list)


@dataclass
class _ChunkResult:
    f: np.ndarray  # f(X_s) 1_{s<zeta}
    J: np.ndarray  # (1/sqrt2) sum g_dot Theta^T dW, [path, m]
    energy: np.ndarray  # sum g_dot^2 dt
    dead: int
    exits: int


def _draw(rng, n, m, dt, refine):
    if refine == 1:
        return rng.standard_normal((n, m)) * math.sqrt(dt)
    sub = rng.standard_normal((refine, n, m)) * math.sqrt(dt / refine)
    return sub.sum(axis=0)


def _run_chunk(chart, x0, s, dt, n, seed, stream, f, kind, rate, t_ramp, refine=1) -> _ChunkResult:
    N = _n_steps(s, dt)
    rng = _rng(seed, stream)
    eng = _Engine(chart, x0, n, dt)
    ctl = _Control(kind, n, s, dt, rate, t_ramp)
    m = chart.dim
    J = np.zeros((n, m))
    energy = np.zeros(n)
    exited = np.zeros(n, dtype=bool)
    for k in range(N):
        dist = chart.distance(x0, eng.X)
        exited |= dist >= EXIT_RADIUS
        gdot = ctl.step(k, N, exited, dist)
        dW = _draw(rng, n, m, dt, refine)
        active = gdot != 0.0
        if np.any(active):
            J[active] += gdot[active, None] * np.matmul(dW[active, None, :], eng.theta[active])[:, 0, :]
            energy += gdot**2 * dt
        eng.advance(k, dW)
    fx = np.where(eng.alive, f(eng.X), 0.0)
    exited |= chart.distance(x0, eng.X) >= EXIT_RADIUS
    return _ChunkResult(fx, J / math.sqrt(2.0), energy, int(np.sum(~eng.alive)), int(np.sum(exited)))


def _chunks(n_paths: int, chunk: int):
    sizes = [chunk] * (n_paths // chunk)
    if n_paths % chunk:
        sizes.append(n_paths % chunk)
    return sizes


def _simulate_estimator(man, f, x, s, n_paths, seed, dt, kind, rate, t_ramp, chunk, threads, refine=1):
    chart = as_chart(man)
    x0 = chart.check_start(x)
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if kind == "time-change" and rate is None:
        rate = default_rate(chart, x0)
    sizes = _chunks(n_paths, chunk)
    if refine < 1:
        raise ValueError("refine must be a positive integer")
    job = lambda i: _run_chunk(chart, x0, s, dt, sizes[i], seed, i, f, kind, rate, t_ramp, refine)
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    fx = np.concatenate([p.f for p in parts])
    J = np.concatenate([p.J for p in parts])
    energy = np.concatenate([p.energy for p in parts])
    dead = sum(p.dead for p in parts)
    exits = sum(p.exits for p in parts)
    return chart, x0, fx, J, energy, dead, exits


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = math.fsum(samples.tolist()) / n
    if n < 2:
        return mean, float("inf")
    var = math.fsum(((samples - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def bismut_gradient(
    f: Callable,
    x,
    v,
    s: float,
    n_paths: int,
    seed: int,
    man=None,
    dt: float = 5e-4,
    control: str = "time-change",
    rate: float | None = None,
    t_ramp: float | None = None,
    chunk: int = DEFAULT_CHUNK,
    threads: int = 1,
    refine: int = 1,
) -> GradientEstimate:
    """Monte Carlo Bismut estimate of ``(dP_s f)_x v`` (``f`` maps ``[n, m]`` to ``[n]``).

    Paths are generated in fixed-size chunks, chunk ``i`` drawing from
    ``Philox(SeedSequence([seed, i]))``; results are concatenated in chunk
    order, so the estimate does not depend on ``threads``.  With ``refine = k``
    each increment is the sum of ``k`` finer increments drawn in time order,
    so a run at ``(dt, k)`` shares its Brownian path with one at ``(dt/k, 1)``.
    """
    chart = as_chart(man if man is not None else _default_manifold(x))
    x_arr = np.asarray(x, dtype=float)
    v0 = _frame_vector(chart, x_arr, v)
    if not np.any(v0):
        return GradientEstimate(0.0, 0.0, n_paths, 0.0, np.zeros(chart.dim), notes=["v = 0"])
    chart, x0, fx, J, energy, dead, exits = _simulate_estimator(
        chart, f, x_arr, s, n_paths, seed, dt, control, rate, t_ramp, chunk, threads, refine
    )
    samples = -fx * (J @ v0)
    value, se = _mean_se(samples)
    grad = np.array([-_mean_se(fx * J[:, a])[0] for a in range(chart.dim)])
    notes = []
    if n_paths < 100:
        notes.append("n_paths < 100: standard error unreliable")
    dead_frac = dead / n_paths
    if dead_frac > 1e-3:
        notes.append(f"dead-path fraction {dead_frac:.2e} exceeds 1e-3")
    return GradientEstimate(
        value=value,
        std_error=se,
        n_paths=n_paths,
        control_energy=float(np.mean(energy)) * float(v0 @ v0),
        gradient=grad,
        dead_fraction=dead_frac,
        exit_fraction=exits / n_paths,
        reliable=n_paths >= 100,
        notes=notes,
    )


def _default_manifold(x) -> RadialManifold:
    from .model_manifolds import euclidean

    return euclidean(len(np.asarray(x)))


# -- theorem-level checks ------------------------------------------------------------


def unit_directions(chart: RadialChart, x0, count: int = 8) -> list[np.ndarray]:
    """``count`` g-unit vectors at ``x0`` (circle in m = 2, plus coordinate axes otherwise)."""
    u0 = chart.frame_at(np.asarray(x0, dtype=float))
    m = chart.dim
    if m == 2:
        ang = np.arange(count) * 2.0 * math.pi / count
        frame_vs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        frame_vs = np.vstack([np.eye(m), -np.eye(m)])
    return [u0 @ w for w in frame_vs]


@dataclass
class BoundCheck:
    estimate: float
    std_error: float
    bound: float
    psi3: float
    psi4: float
    f_norm: float
    slack: float
    holds: bool
    direction: np.ndarray
    estimates: list = field(default_factory=list)


def gradient_bound_check(
    man,
    x,
    s: float,
    f: Callable,
    f_norm: float,
    n_paths: int = 20_000,
    seed: int = 0,
    dt: float | None = None,
    directions: Sequence | None = None,
    psi4_value: float | None = None,
    threads: int = 1,
) -> BoundCheck:
    """Compare ``max_v |(dP_s f)_x v|`` with ``sqrt(Psi_3 Psi_4) ||f||``.

    One set of paths serves all directions (the control is ``g_t v`` with a
    scalar profile ``g``).  The check passes when the estimate is at most the
    bound plus three combined standard errors.
    """
    from .heat import psi4 as heat_psi4

    chart = as_chart(man)
    x0 = chart.check_start(x)
    r0 = float(np.linalg.norm(x0))
    bounds = psi_bounds(chart.man, r0)
    p3 = float(bounds.psi3(s))
    p4 = float(heat_psi4(chart.man, s, x=r0) if psi4_value is None else psi4_value)
    rhs = math.sqrt(p3 * p4) * f_norm
    dirs = unit_directions(chart, x0) if directions is None else [np.asarray(d, float) for d in directions]
    dt = min(5e-4, 1e-3 * s) if dt is None else dt
    chart, x0, fx, J, _, _, _ = _simulate_estimator(
        chart, f, x0, s, n_paths, seed, dt, "time-change", None, None, DEFAULT_CHUNK, threads
    )
    ests = []
    for v in dirs:
        v0 = _frame_vector(chart, x0, v)
        ests.append(_mean_se(-fx * (J @ v0)))
    idx = int(np.argmax([abs(e[0]) for e in ests]))
    est, se = ests[idx]
    slack = rhs + 3.0 * se - abs(est)
    return BoundCheck(abs(est), se, rhs, p3, p4, f_norm, slack, bool(slack >= 0), dirs[idx], ests)


@dataclass
class CauchySchwarzReport:
    factor1: float
    factor2: float
    factor2_sq: float
    factor2_sq_se: float
    gradient: float
    gradient_se: float
    psi3: float
    product_dominates: bool
    psi3_dominates: bool


def cauchy_schwarz_decomposition(
    f: Callable,
    x,
    v,
    s: float,
    n_paths: int,
    seed: int,
    man=None,
    dt: float | None = None,
    threads: int = 1,
) -> CauchySchwarzReport:
    """Both factors of the Cauchy-Schwarz split of the Bismut representation.

    ``factor1 = (E[f^2(X_s) 1_{s<zeta}])^{1/2}``, ``factor2 = (E[I^2])^{1/2}``
    with ``I`` the (normalised) stochastic integral.
    """
    chart = as_chart(man if man is not None else _default_manifold(x))
    x0 = chart.check_start(x)
    v0 = _frame_vector(chart, x0, v)
    dt = min(5e-4, 1e-3 * s) if dt is None else dt
    chart, x0, fx, J, _, _, _ = _simulate_estimator(
        chart, f, x0, s, n_paths, seed, dt, "time-change", None, None, DEFAULT_CHUNK, threads
    )
    I = J @ v0
    f2, _ = _mean_se(fx**2)
    i2, i2_se = _mean_se(I**2)
    grad, grad_se = _mean_se(-fx * I)
    f1, f2n = math.sqrt(f2), math.sqrt(i2)
    p3 = float(psi_bounds(chart.man, float(np.linalg.norm(x0))).psi3(s))
    return CauchySchwarzReport(
        factor1=f1,
        factor2=f2n,
        factor2_sq=i2,
        factor2_sq_se=i2_se,
        gradient=grad,
        gradient_se=grad_se,
        psi3=p3,
        product_dominates=bool(abs(grad) <= f1 * f2n + 3.0 * grad_se),
        psi3_dominates=bool(i2 <= p3 + 3.0 * i2_se),
    )
