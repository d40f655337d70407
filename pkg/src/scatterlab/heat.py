"""Heat kernels of ``e^{s Delta}`` (generator ``Delta``, i.e. ``e^{-sH}`` with ``H = -Delta``).

Closed forms on Euclidean space and the hyperbolic plane/space, a radial
finite-volume solver for kernels centred at the pole of a rotationally
symmetric metric, the on-diagonal supremum Psi_4 and a configurable
Li-Yau type upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, sparse
from scipy.interpolate import CubicSpline

from .model_manifolds import RadialManifold, unit_sphere_area

TAIL_TOL = 1e-10
INITIAL_TIME = 1e-4


class HeatSolverError(ValueError):
    pass


# -- closed forms -----------------------------------------------------------------


def _euclid(m: int, s, d):
    return (4.0 * math.pi * s) ** (-m / 2.0) * np.exp(-np.square(d) / (4.0 * s))


def _hyperbolic3(s, d):
    d = np.asarray(d, dtype=float)
    ratio = np.where(d > 1e-8, d / np.sinh(np.where(d > 1e-8, d, 1.0)), 1.0 - d**2 / 6.0)
    return (4.0 * math.pi * s) ** -1.5 * ratio * np.exp(-s - d**2 / (4.0 * s))


def _hyperbolic2_scalar(s: float, d: float) -> float:
    # McKean's integral with t = d + u^2; cosh(d+u^2) - cosh d = 2 sinh(d + u^2/2) sinh(u^2/2)
    def integrand(u):
        if u == 0.0:
            # the denominator behaves like u sqrt(sinh d) for d > 0 and u^2/sqrt(2) for d = 0
            return 2.0 * d * math.exp(-d * d / (4.0 * s)) / math.sqrt(math.sinh(d)) if d > 0 else 0.0
        t = d + u * u
        den = math.sqrt(2.0 * math.sinh(d + 0.5 * u * u) * math.sinh(0.5 * u * u))
        return 2.0 * u * t * math.exp(-t * t / (4.0 * s)) / den

    # t^2 - d^2 >= u^4 so the weight is below e^{-40} relative to its peak beyond this
    upper = (160.0 * s) ** 0.25 + 1.0
    val, _ = integrate.quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-12, limit=400)
    return math.sqrt(2.0) * math.exp(-s / 4.0) * (4.0 * math.pi * s) ** -1.5 * val


def heat_kernel_closed(space: str, s: float, d, m: int | None = None):
    """Heat kernel density at time ``s`` and geodesic distance ``d``.

    ``space`` is ``"euclidean"`` (needs ``m``), ``"hyperbolic2"`` or
    ``"hyperbolic3"`` (sectional curvature -1).
    """
    if s <= 0:
        raise ValueError("heat kernel needs s > 0")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    if space == "euclidean":
        if m is None:
            raise ValueError("euclidean kernel needs the dimension m")
        out = _euclid(m, s, d)
    elif space == "hyperbolic3":
        out = _hyperbolic3(s, d)
    elif space == "hyperbolic2":
        out = np.vectorize(lambda x: _hyperbolic2_scalar(s, float(x)))(d)
    else:
        raise ValueError(f"unknown space tag {space!r}")
    return float(out) if out.ndim == 0 else out


def closed_form_space(man: RadialManifold) -> str | None:
    if man.name.startswith("euclidean"):
        return "euclidean"
    if man.name == "hyperbolic-m2":
        return "hyperbolic2"
    if man.name == "hyperbolic-m3":
        return "hyperbolic3"
    return None


# -- radial solver ------------------------------------------------------------------


@dataclass
class RadialOperator:
    """Radial heat operator ``u_t = w^{-1} (k u_r)_r`` in a radial coordinate ``r``.

    For a warped product ``w = k = f^{m-1}``; a conformal change ``e^{2 sigma} g``
    gives ``w = e^{m sigma} f^{m-1}`` and ``k = e^{(m-2) sigma} f^{m-1}``.
    ``distance`` maps ``r`` to the geodesic distance from the pole.
    """

    name: str
    dim: int
    volume_density: Callable
    conductivity: Callable
    distance: Callable
    stochastically_complete: bool = True

    @classmethod
    def from_manifold(cls, man: RadialManifold) -> "RadialOperator":
        m = man.dim
        dens = lambda r: np.abs(man.f(r)) ** (m - 1)
        return cls(man.name, m, dens, dens, lambda r: np.asarray(r, dtype=float), man.complete)


def as_operator(obj) -> RadialOperator:
    if isinstance(obj, RadialOperator):
        return obj
    if isinstance(obj, RadialManifold):
        if not obj.complete:
            raise HeatSolverError(f"{obj.name}: heat solver needs a complete noncompact model")
        return RadialOperator.from_manifold(obj)
    raise TypeError(f"cannot build a radial heat operator from {type(obj).__name__}")


@dataclass
class HeatKernelEvaluation:
    """Heat kernel ``p_s(o, .)`` centred at the pole.

    ``distances``/``densities`` tabulate the profile; ``values`` exposes it as a
    mapping.  ``sup_value`` is the Psi_4 estimate, ``mass`` the total integral.
    """

    s: float
    x: float
    distances: np.ndarray
    densities: np.ndarray
    sup_value: float
    mass: float
    method: str
    tail_bound: float = 0.0
    sup_at_pole: bool = True
    profile: Callable | None = field(default=None, repr=False)

    @property
    def values(self) -> dict:
        return dict(zip(self.distances.tolist(), self.densities.tolist()))

    def __call__(self, d):
        if self.profile is None:
            raise ValueError("no interpolating profile attached")
        return self.profile(d)


@dataclass
class RadialGrid:
    faces: np.ndarray
    centers: np.ndarray
    volumes: np.ndarray
    matrix: sparse.csr_matrix  # symmetric stiffness (negative semidefinite)


def _gauss_cell_volumes(op: RadialOperator, faces: np.ndarray) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(4)
    a, b = faces[:-1, None], faces[1:, None]
    pts = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
    return (0.5 * (b - a) * op.volume_density(pts) * weights[None, :]).sum(axis=1)


def build_radial_grid(op: RadialOperator, R: float, n: int, stretch: float = 4.0) -> RadialGrid:
    xi = np.linspace(0.0, 1.0, n + 1)
    faces = R * np.sinh(stretch * xi) / math.sinh(stretch)
    centers = 0.5 * (faces[:-1] + faces[1:])
    vols = _gauss_cell_volumes(op, faces)
    cond = op.conductivity(faces[1:-1]) / np.diff(centers)
    main = np.zeros(n)
    main[:-1] -= cond
    main[1:] -= cond
    stiff = sparse.diags([cond, main, cond], [-1, 0, 1], format="csr")
    return RadialGrid(faces, centers, vols, stiff)


def tail_bound(op: RadialOperator, s: float, R: float) -> float:
    """Gaussian tail proxy for the mass beyond ``R`` at time ``s``.

    Uses the largest radial drift ``k'/w`` and diffusivity ``k/w`` on ``[1, R]``.
    """
    rr = np.linspace(min(1.0, R / 2), R, 4001)
    w, k = op.volume_density(rr), op.conductivity(rr)
    dk = np.gradient(k, rr)
    drift = float(np.max(np.abs(dk / w)))
    diff = float(np.max(k / w))
    reach = R - drift * s
    if reach <= 0:
        return 1.0
    return math.exp(-reach**2 / (4.0 * diff * s))


def suggest_radius(op: RadialOperator, s: float) -> float:
    R = 4.0
    while tail_bound(op, s, R) > TAIL_TOL * 1e-2:
        R *= 1.25
        if R > 200:
            raise HeatSolverError("no admissible truncation radius below 200")
    return R


def radial_heat_solve(
    man,
    s: float | Sequence[float],
    R: float | None = None,
    n: int = 2000,
    s0: float = INITIAL_TIME,
    rtol: float = 1e-9,
    stretch: float = 4.0,
    distances: Sequence[float] | None = None,
):
    """Solve for ``p_s(o, .)`` from a pole delta, mollified at time ``s0``.

    ``s`` may be a single time or a sequence; a list of evaluations is returned
    in the latter case.  The initial profile is the Euclidean kernel at time
    ``s0`` in the local geodesic distance; BDF time stepping handles the stiff
    range ``s0 .. s``.  Reflecting outer boundary, so mass is conserved up to
    the time-stepping tolerance.
    """
    op = as_operator(man)
    times = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(times <= s0):
        raise HeatSolverError(f"solve times must exceed the mollification time s0={s0}")
    s_max = float(times.max())
    if R is None:
        R = suggest_radius(op, s_max)
    tail = tail_bound(op, s_max, R)
    if tail > TAIL_TOL:
        raise HeatSolverError(
            f"truncation R={R} too small: tail proxy {tail:.2e} > {TAIL_TOL:g}; "
            f"try R >= {suggest_radius(op, s_max):.1f}"
        )
    grid = build_radial_grid(op, R, n, stretch)
    m = op.dim
    omega = unit_sphere_area(m)
    rdist = op.distance(grid.centers)
    u0 = (4.0 * math.pi * s0) ** (-m / 2.0) * np.exp(-rdist**2 / (4.0 * s0))
    # unit discrete mass: the mollified delta must integrate to one on the grid
    u0 /= float(np.sum(omega * grid.volumes * u0))
    inv_vol = 1.0 / (omega * grid.volumes)
    L = sparse.diags(inv_vol) @ (omega * grid.matrix)
    L = L.tocsr()

    uniq = np.unique(times)
    sol = integrate.solve_ivp(
        lambda t, u: L @ u,
        (s0, s_max),
        u0,
        method="BDF",
        t_eval=uniq,
        jac=L,
        rtol=rtol,
        atol=rtol * 1e-4,
    )
    if not sol.success:
        raise HeatSolverError(f"time integration failed: {sol.message}")
    out = [None] * len(times)
    dist_eval = np.linspace(0.0, min(3.0, float(rdist[-1])), 61) if distances is None else np.asarray(distances)
    for idx in range(len(times)):
        u = sol.y[:, int(np.searchsorted(uniq, times[idx]))]
        profile = _even_spline(rdist, u)
        mass = float(np.sum(omega * grid.volumes * u))
        on_diag = float(profile(0.0))
        sup = max(on_diag, float(u.max()))
        out[idx] = HeatKernelEvaluation(
            s=float(times[idx]),
            x=0.0,
            distances=dist_eval,
            densities=profile(dist_eval),
            sup_value=sup,
            mass=mass,
            method="radial-solver",
            tail_bound=tail_bound(op, float(times[idx]), R),
            sup_at_pole=bool(on_diag >= u.max() * (1 - 1e-12)),
            profile=profile,
        )
    return out[0] if np.ndim(s) == 0 else out


def _even_spline(r, u):
    # even extension through the pole pins the zero slope of a radial profile at d = 0
    rr = np.concatenate([-r[::-1], r])
    uu = np.concatenate([u[::-1], u])
    return CubicSpline(rr, uu)


def closed_form_evaluation(man: RadialManifold, s: float, distances=None) -> HeatKernelEvaluation:
    space = closed_form_space(man)
    if space is None:
        raise ValueError(f"{man.name}: no closed-form kernel")
    m = man.dim
    dist = np.linspace(0.0, 3.0, 61) if distances is None else np.asarray(distances, dtype=float)
    dens = heat_kernel_closed(space, s, dist, m)
    omega = unit_sphere_area(m)
    mass, _ = integrate.quad(
        lambda r: heat_kernel_closed(space, s, r, m) * omega * abs(float(man.f(r))) ** (m - 1),
        0.0,
        2.0 * (m - 1) * s + math.sqrt(200.0 * s) + 5.0,
        epsabs=0.0,
        epsrel=1e-12,
        limit=400,
    )
    on_diag = heat_kernel_closed(space, s, 0.0, m)
    return HeatKernelEvaluation(
        s=s,
        x=0.0,
        distances=dist,
        densities=np.atleast_1d(dens),
        sup_value=on_diag,
        mass=mass,
        method="closed-form",
        profile=lambda d: heat_kernel_closed(space, s, d, m),
    )


def psi4(man, s: float, x: float = 0.0, method: str = "auto", **solver_kw) -> float:
    """``sup_y p_s(x, y)``.

    Homogeneous models with a closed form use the on-diagonal value (any
    ``x``); otherwise ``x`` must be the pole and the radial solver is used.
    """
    if s <= 0:
        raise ValueError("Psi_4 needs s > 0")
    space = closed_form_space(man) if isinstance(man, RadialManifold) else None
    if method not in ("auto", "closed-form", "solver"):
        raise ValueError(f"unknown method {method!r}")
    if method != "solver" and space is not None:
        return heat_kernel_closed(space, s, 0.0, man.dim)
    if method == "closed-form":
        raise ValueError("no closed form available")
    homogeneous = isinstance(man, RadialManifold) and man.homogeneous
    if x != 0.0 and not homogeneous:
        raise ValueError("off-pole Psi_4 needs a homogeneous model")
    ev = radial_heat_solve(man, s, **solver_kw)
    return ev.sup_value


def chapman_kolmogorov_residual(man, s: float, t: float, **solver_kw) -> float:
    """Relative defect of ``p_{s+t}(o,o) = int p_s(o,y) p_t(y,o) dmu(y)`` at the pole."""
    op = as_operator(man)
    kw = dict(solver_kw)
    R = kw.pop("R", None) or suggest_radius(op, s + t)
    n = kw.pop("n", 2000)
    evs = radial_heat_solve(man, [s, t, s + t], R=R, n=n, **kw)
    grid = build_radial_grid(op, R, n, kw.get("stretch", 4.0))
    omega = unit_sphere_area(op.dim)
    r = op.distance(grid.centers)
    lhs = evs[2].profile(0.0)
    rhs = float(np.sum(omega * grid.volumes * evs[0].profile(r) * evs[1].profile(r)))
    return abs(lhs - rhs) / abs(lhs)


# -- Li-Yau type bound --------------------------------------------------------------


@dataclass(frozen=True)
class LiYauConstants:
    """Constants in ``Psi_4(x, 1) <= a * mu(x, 1)^{-1} * exp(b)``.

    The existence of such constants depending on ``m`` and the lower Ricci
    bound is a literature result; the numbers are configuration.
    """

    a: float
    b: float
    provenance: str = "configured"


def default_li_yau_constants(m: int) -> LiYauConstants:
    return LiYauConstants(
        a=8.0 ** (m / 2.0),
        b=1.0,
        provenance="default a = 8^(m/2), b = 1; illustrative, not a proven constant",
    )


def li_yau_upper(m: int, ricci_lower: float, ball_vol_1: float, constants: LiYauConstants | None = None) -> float:
    """``a * ball_vol_1^{-1} * exp(b)``."""
    if ricci_lower > 0:
        raise ValueError("ricci_lower is a lower bound <= 0")
    if ball_vol_1 <= 0:
        raise ValueError("ball volume must be positive")
    c = default_li_yau_constants(m) if constants is None else constants
    if c.a <= 0:
        raise ValueError("Li-Yau constant a must be positive")
    if math.isinf(ball_vol_1):
        return 0.0
    return c.a / ball_vol_1 * math.exp(c.b)


def li_yau_validity(man: RadialManifold, constants: LiYauConstants, s: float = 1.0) -> dict:
    """Compare the configured bound with the true Psi_4 on a model."""
    from .model_manifolds import ball_volume, ricci_lower_bound_on_ball

    K, _ = ricci_lower_bound_on_ball(man, 0.0)
    bound = li_yau_upper(man.dim, min(0.0, K), ball_volume(man, 1.0), constants)
    true = psi4(man, s)
    return {"bound": bound, "psi4": true, "valid": bool(bound >= true)}
