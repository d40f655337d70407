"""Rotationally symmetric model manifolds and the local bound functions Psi_1..Psi_3.

A :class:`RadialManifold` is ``dr^2 + f(r)^2 dtheta^2`` on ``R^m`` written in
geodesic polar coordinates about a pole.  Everything here is radial, so a base
point is identified with its distance ``r`` from the pole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

RICCI_SAMPLE_STEP = 1e-3
POLE_PROBE = 1e-3


@dataclass(frozen=True)
class WeightEnvelope:
    """Bound ``c * r**k * exp(beta * r)`` on the volume density for ``r >= r0``."""

    c: float
    k: float
    beta: float
    r0: float = 1.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.c * r**self.k * np.exp(self.beta * r)


@dataclass
class RadialManifold:
    """Warped product ``dr^2 + f(r)^2 g_{S^{m-1}}`` with pole at ``r = 0``.

    ``f``, ``df``, ``d2f`` must accept numpy arrays.  ``constant_ricci`` is the
    Einstein constant for homogeneous models (``Ric = lambda g``); ``None``
    otherwise.  ``upper``/``lower`` bound ``f(r)**(m-1)`` for large ``r`` and
    drive the tail certification of radial integrals.  ``warp_monotone`` and
    ``warp_sup`` record analytically known facts (``f' >= 0``, ``sup f``) used
    by comparison bounds on ball volumes.
    """

    name: str
    dim: int
    f: Callable
    df: Callable
    d2f: Callable
    constant_ricci: float | None = None
    complete: bool = True
    max_radius: float = math.inf
    upper: WeightEnvelope | None = None
    lower: WeightEnvelope | None = None
    homogeneous: bool = False
    warp_monotone: bool = False
    warp_sup: float = math.inf
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("model manifolds need dimension m >= 2")
        r = 1e-6
        if abs(float(self.f(0.0))) > 1e-10 or abs(float(self.df(r)) - 1.0) > 1e-10:
            raise ValueError(f"{self.name}: warp violates pole conditions f(0)=0, f'(0)=1")

    def check_radius(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        if np.any(r >= self.max_radius):
            raise ValueError(f"{self.name}: radius beyond admissible range r < {self.max_radius}")
        return r


def euclidean(m: int = 2) -> RadialManifold:
    return RadialManifold(
        name=f"euclidean-m{m}",
        dim=m,
        f=lambda r: np.asarray(r, dtype=float) * 1.0,
        df=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        d2f=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        constant_ricci=0.0,
        upper=WeightEnvelope(1.0, m - 1, 0.0),
        lower=WeightEnvelope(1.0, m - 1, 0.0),
        homogeneous=True,
        warp_monotone=True,
    )


def hyperbolic(m: int = 2) -> RadialManifold:
    """Constant curvature -1: ``f = sinh r``, ``Ric = -(m-1) g``."""
    # sinh r <= e^r / 2 everywhere; sinh r >= (1 - e^{-2}) e^r / 2 for r >= 1
    return RadialManifold(
        name=f"hyperbolic-m{m}",
        dim=m,
        f=np.sinh,
        df=np.cosh,
        d2f=np.sinh,
        constant_ricci=-(m - 1.0),
        upper=WeightEnvelope(0.5 ** (m - 1), 0.0, m - 1.0),
        lower=WeightEnvelope(((1 - math.exp(-2.0)) / 2) ** (m - 1), 0.0, m - 1.0),
        homogeneous=True,
        warp_monotone=True,
    )


def sphere_cap(m: int = 3, margin: float = 1e-2) -> RadialManifold:
    """Round sphere ``f = sin r`` on ``r < pi - margin``; curvature fixtures only."""
    return RadialManifold(
        name=f"sphere-cap-m{m}",
        dim=m,
        f=np.sin,
        df=np.cos,
        d2f=lambda r: -np.sin(r),
        constant_ricci=m - 1.0,
        complete=False,
        max_radius=math.pi - margin,
        homogeneous=True,
    )


def cigar() -> RadialManifold:
    """Hamilton's cigar ``f = tanh r`` (m = 2), a steady soliton of the Ricci flow."""
    return RadialManifold(
        name="cigar-m2",
        dim=2,
        f=np.tanh,
        df=lambda r: 1.0 / np.cosh(r) ** 2,
        d2f=lambda r: -2.0 * np.tanh(r) / np.cosh(r) ** 2,
        upper=WeightEnvelope(1.0, 0.0, 0.0),
        lower=WeightEnvelope(math.tanh(1.0), 0.0, 0.0),
        warp_monotone=True,
        warp_sup=1.0,
    )


def poly_exp(m: int, coeffs: Sequence[float], rate: float) -> RadialManifold:
    """``f(r) = r + sum_k c_k r^k exp(-rate r)`` with ``k = 3, 4, ...``.

    Starting the sum at ``r^3`` keeps the pole regular (bounded curvature).
    Far out the warp is Euclidean, so the weight envelope is polynomial.
    """
    coeffs = [float(c) for c in coeffs]
    if rate <= 0:
        raise ValueError("poly_exp needs rate > 0")
    powers = np.arange(3, 3 + len(coeffs))

    def f(r):
        r = np.asarray(r, dtype=float)
        out = r.copy()
        for c, k in zip(coeffs, powers):
            out = out + c * r**k * np.exp(-rate * r)
        return out

    def df(r):
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        for c, k in zip(coeffs, powers):
            out = out + c * (k * r ** (k - 1) - rate * r**k) * np.exp(-rate * r)
        return out

    def d2f(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for c, k in zip(coeffs, powers):
            out = out + c * (
                k * (k - 1) * r ** (k - 2) - 2 * rate * k * r ** (k - 1) + rate**2 * r**k
            ) * np.exp(-rate * r)
        return out

    rr = np.linspace(1e-3, 60.0, 60001)
    if np.any(f(rr) <= 0):
        raise ValueError("poly_exp warp must stay positive")
    # f(r)/r -> 1; the sampled sup of (f/r)^(m-1) on [1, 60] plus margin bounds the weight
    ratio = float(np.max((f(rr[rr >= 1.0]) / rr[rr >= 1.0]) ** (m - 1)))
    low = float(np.min((f(rr[rr >= 1.0]) / rr[rr >= 1.0]) ** (m - 1)))
    return RadialManifold(
        name=f"poly-exp-m{m}",
        dim=m,
        f=f,
        df=df,
        d2f=d2f,
        upper=WeightEnvelope(ratio * 1.01, m - 1, 0.0),
        lower=WeightEnvelope(low * 0.99, m - 1, 0.0),
        params={"coeffs": coeffs, "rate": rate},
    )


WARPS = {
    "euclidean": euclidean,
    "hyperbolic": hyperbolic,
    "sphere-cap": sphere_cap,
    "cigar": lambda m=2: cigar(),
    "poly-exp": poly_exp,
}


def make_manifold(name: str, **params) -> RadialManifold:
    try:
        factory = WARPS[name]
    except KeyError:
        raise ValueError(f"unknown warp {name!r}; choose from {sorted(WARPS)}") from None
    return factory(**params)


# -- curvature ------------------------------------------------------------------


def _ricci_raw(man: RadialManifold, r):
    m = man.dim
    f, df, d2f = man.f(r), man.df(r), man.d2f(r)
    radial = -(m - 1) * d2f / f
    tangential = -d2f / f + (m - 2) * (1.0 - df**2) / f**2
    return radial, tangential


def ricci_eigenvalues(man: RadialManifold, r):
    """Radial and tangential Ricci eigenvalues at radius ``r`` (arrays allowed).

    Below ``POLE_PROBE`` the continuous limit at the pole is obtained by
    quadratic extrapolation from ``r = h, 2h, 3h``.
    """
    r = man.check_radius(r)
    scalar = r.ndim == 0
    r = np.atleast_1d(r).astype(float)
    near = r < POLE_PROBE
    safe = np.where(near, POLE_PROBE, r)
    rad, tan = _ricci_raw(man, safe)
    if np.any(near):
        probe_r, probe_t = _ricci_raw(man, POLE_PROBE * np.array([1.0, 2.0, 3.0]))
        weights = np.array([3.0, -3.0, 1.0])
        rad = np.where(near, weights @ probe_r, rad)
        tan = np.where(near, weights @ probe_t, tan)
    out = (rad, tan)
    if scalar:
        return float(out[0][0]), float(out[1][0])
    return out


def ricci_quadratic_form(man: RadialManifold, r, direction: str = "radial"):
    """``Ric(v, v)`` for a unit ``v`` pointing radially or tangentially."""
    if direction not in ("radial", "tangential"):
        raise ValueError("direction must be 'radial' or 'tangential'")
    rad, tan = ricci_eigenvalues(man, r)
    return rad if direction == "radial" else tan


def ricci_lower_bound_on_ball(man: RadialManifold, x: float, radius: float = 0.5):
    """Best lower Ricci bound on the geodesic ball ``B(x, radius)``.

    The ball around a point at distance ``x`` from the pole meets exactly the
    radii ``[max(0, x - radius), x + radius)``.  Returns ``(K, provenance)``.
    """
    if man.constant_ricci is not None:
        return float(man.constant_ricci), "analytic"
    lo = max(0.0, x - radius)
    hi = x + radius
    n = max(2, int(math.ceil((hi - lo) / RICCI_SAMPLE_STEP)) + 1)
    rr = np.linspace(lo, hi, n)
    rad, tan = ricci_eigenvalues(man, rr)
    return float(min(rad.min(), tan.min())), "sampled-infimum"


# -- Psi bounds -----------------------------------------------------------------


def psi2_from_psi1(psi1: float, m: int) -> float:
    return math.pi**2 * (m + 3) + math.pi * math.sqrt(psi1 * (m - 1)) + 4.0 * psi1


def psi3_value(psi2: float, s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("Psi_3 needs s > 0")
    out = psi2 / -np.expm1(-psi2 * s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PsiBounds:
    """Local bound functions at one base point.

    ``psi1 = max(0, -K)`` with ``K`` the best lower Ricci bound on ``B(x, 1/2)``.
    """

    dim: int
    psi1: float
    psi2: float
    provenance: str
    ricci_lower: float
    s_grid: tuple = ()

    def psi3(self, s):
        return psi3_value(self.psi2, s)

    @property
    def psi3_grid(self) -> list[float]:
        return [self.psi3(s) for s in self.s_grid]


def psi_from_ricci_lower(ricci_lower: float, m: int, provenance: str = "configured", s_grid=()):
    psi1 = max(0.0, -float(ricci_lower))
    return PsiBounds(
        dim=m,
        psi1=psi1,
        psi2=psi2_from_psi1(psi1, m),
        provenance=provenance,
        ricci_lower=float(ricci_lower),
        s_grid=tuple(s_grid),
    )


def psi_bounds(man: RadialManifold, x: float = 0.0, s_grid: Sequence[float] = (1.0,)) -> PsiBounds:
    """Psi_1, Psi_2 and Psi_3 at the point at distance ``x`` from the pole."""
    if x < 0:
        raise ValueError("base point radius must be nonnegative")
    if x + 0.5 >= man.max_radius:
        raise ValueError(f"{man.name}: ball B(x, 1/2) leaves the admissible chart")
    if any(s <= 0 for s in s_grid):
        raise ValueError("s values must be positive")
    K, prov = ricci_lower_bound_on_ball(man, x)
    return psi_from_ricci_lower(K, man.dim, prov, s_grid)


# -- volumes --------------------------------------------------------------------


def unit_sphere_area(m: int) -> float:
    """Area of the unit sphere ``S^{m-1}`` in ``R^m``."""
    return 2.0 * math.pi ** (m / 2) / special.gamma(m / 2)


def volume_measure_weight(man: RadialManifold, r):
    """Radial density ``f(r)^{m-1}`` of the Riemannian volume."""
    r = np.asarray(r, dtype=float)
    out = np.abs(man.f(r)) ** (man.dim - 1)
    return float(out) if out.ndim == 0 else out


def ball_volume(man: RadialManifold, r: float, center: float = 0.0) -> float:
    """Volume of the geodesic ball of radius ``r``.

    ``center`` is the distance of the center from the pole; off-pole centers
    are only supported on homogeneous models.
    """
    if r <= 0:
        raise ValueError("ball radius must be positive")
    if center != 0.0 and not man.homogeneous:
        raise ValueError(f"{man.name}: distance function unavailable for off-pole centers")
    man.check_radius(r)
    m = man.dim
    omega = unit_sphere_area(m)
    if man.name.startswith("euclidean"):
        return omega * r**m / m
    if man.name.startswith("hyperbolic") and m == 2:
        return 2.0 * math.pi * (math.cosh(r) - 1.0)
    if man.name.startswith("hyperbolic") and m == 3:
        return math.pi * (math.sinh(2 * r) - 2 * r)
    val, _ = integrate.quad(lambda t: volume_measure_weight(man, t), 0.0, r, epsabs=0, epsrel=1e-13, limit=200)
    return omega * val
