"""Named radial profile families and conformal pairs on radial models.

A profile ``p(r)`` is a function of the distance from the pole drawn from a
small set of families with analytic derivatives, suprema and tail envelopes.
The envelopes are what lets radial integrals be certified: on ``[R, inf)``

    |p(r)| <= amp * r**power * exp(-rate * r)      (exponential class)
    |p(r)| <= amp * exp(-(r / width)**2)           (gaussian class)

and similarly from below.  ``ConformalRadialPair`` couples a model ``g`` with
``h = exp(-(4/m) phi) g`` for a profile ``phi``; then ``delta = 2 sinh|phi|``
and the volume density is ``rho = exp(-2 phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .heat import RadialOperator
from .model_manifolds import POLE_PROBE, RadialManifold, ricci_eigenvalues, unit_sphere_area

FAMILIES = ("zero", "constant", "gaussian", "exponential", "sech", "bump", "linear", "cigar-curvature")


@dataclass(frozen=True)
class TailClass:
    """Envelope of ``|p|`` on ``[r0, inf)``.

    ``kind`` is ``zero``, ``exp`` (``amp r^power e^{-rate r}``, ``rate`` may be
    0 for constants) or ``gauss`` (``amp e^{-(r/width)^2}``).
    """

    kind: str
    amp: float = 0.0
    power: float = 0.0
    rate: float = 0.0
    width: float = 1.0
    r0: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "gauss":
            return self.amp * np.exp(-((r / self.width) ** 2))
        return self.amp * r**self.power * np.exp(-self.rate * r)


@dataclass(frozen=True)
class RadialProfile:
    """Radial function from a named family.

    ``amplitude`` is ``a`` and ``scale`` the family's length scale:
    ``gaussian a e^{-r^2/w^2}``, ``exponential a e^{-r/l}``, ``sech a/cosh(r/l)``,
    ``bump a (1 - (r/R)^2)^3_+``, ``linear a r``, and
    ``cigar-curvature 2 e^{4S} / (e^{4S} + sinh^2 r)`` with ``scale = S``.
    """

    family: str
    amplitude: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown profile family {self.family!r}; choose from {FAMILIES}")
        if self.family not in ("zero", "constant", "linear", "cigar-curvature") and self.scale <= 0:
            raise ValueError("profile scale must be positive")

    # -- values -------------------------------------------------------------
    def _eval(self, r, order: int):
        r = np.asarray(r, dtype=float)
        a, w = self.amplitude, self.scale
        fam = self.family
        if fam == "zero":
            return np.zeros_like(r)
        if fam == "constant":
            return a * np.ones_like(r) if order == 0 else np.zeros_like(r)
        if fam == "linear":
            return [a * r, a * np.ones_like(r), np.zeros_like(r)][order]
        if fam == "gaussian":
            e = a * np.exp(-((r / w) ** 2))
            return [e, -2 * r / w**2 * e, (4 * r**2 / w**4 - 2 / w**2) * e][order]
        if fam == "exponential":
            return (-1.0 / w) ** order * a * np.exp(-r / w)
        if fam == "sech":
            t = r / w
            sech = 1.0 / np.cosh(t)
            tanh = np.tanh(t)
            return [a * sech, -a / w * sech * tanh, a / w**2 * sech * (tanh**2 - sech**2)][order]
        if fam == "bump":
            x = np.clip(r / w, 0.0, 1.0)
            q = 1.0 - x**2
            inside = r < w
            vals = [a * q**3, a * (-6 * x * q**2) / w, a * (-6 * q**2 + 24 * x**2 * q) / w**2]
            return np.where(inside, vals[order], 0.0)
        # cigar-curvature
        E = math.exp(4.0 * self.scale)
        sh, ch = np.sinh(r), np.cosh(r)
        den = E + sh**2
        val = 2.0 * E / den
        d1 = -2.0 * E * 2 * sh * ch / den**2
        d2 = -4.0 * E * ((ch**2 + sh**2) / den**2 - 4 * sh**2 * ch**2 / den**3)
        return [val, d1, d2][order]

    def __call__(self, r):
        return self._eval(r, 0)

    def d1(self, r):
        return self._eval(r, 1)

    def d2(self, r):
        return self._eval(r, 2)

    # -- bounds -------------------------------------------------------------
    @property
    def bounded(self) -> bool:
        return self.family != "linear" or self.amplitude == 0.0

    @property
    def smooth_at_pole(self) -> bool:
        return self.family != "exponential" and self.family != "linear" or self.amplitude == 0.0

    def sup_abs(self, R: float = 0.0) -> float:
        """``sup_{r >= R} |p(r)|`` (all bounded families are monotone in ``|p|``)."""
        if not self.bounded:
            return math.inf
        if self.family == "zero":
            return 0.0
        if self.family == "constant":
            return abs(self.amplitude)
        return float(abs(self(max(R, 0.0))))

    def upper_tail(self, R: float) -> TailClass | None:
        """Envelope of ``|p|`` valid on ``[R, inf)``; ``None`` when unbounded."""
        a, w = abs(self.amplitude), self.scale
        fam = self.family
        if fam == "zero" or a == 0.0 and fam != "cigar-curvature":
            return TailClass("zero", r0=R)
        if fam == "constant":
            return TailClass("exp", a, 0.0, 0.0, r0=R)
        if fam == "gaussian":
            return TailClass("gauss", a, width=w, r0=R)
        if fam == "exponential":
            return TailClass("exp", a, 0.0, 1.0 / w, r0=R)
        if fam == "sech":
            return TailClass("exp", 2.0 * a, 0.0, 1.0 / w, r0=R)
        if fam == "bump":
            return TailClass("zero", r0=R) if R >= w else TailClass("exp", a, 0.0, 0.0, r0=R)
        if fam == "cigar-curvature":
            # sinh^2 r >= (1 - e^{-2})^2 e^{2r} / 4 for r >= 1
            E = math.exp(4.0 * self.scale)
            if R < 1.0:
                return TailClass("exp", 2.0, 0.0, 0.0, r0=R)
            return TailClass("exp", 8.0 * E / (1 - math.exp(-2.0)) ** 2, 0.0, 2.0, r0=R)
        return None

    def lower_tail(self, R: float) -> TailClass | None:
        """Minorant of ``|p|`` on ``[R, inf)``; ``None`` when no useful one is known."""
        a, w = abs(self.amplitude), self.scale
        fam = self.family
        if fam == "constant" and a > 0:
            return TailClass("exp", a, 0.0, 0.0, r0=R)
        if fam == "exponential" and a > 0:
            return TailClass("exp", a, 0.0, 1.0 / w, r0=R)
        if fam == "sech" and a > 0:
            return TailClass("exp", a, 0.0, 1.0 / w, r0=R)
        if fam == "linear" and a > 0:
            return TailClass("exp", a, 1.0, 0.0, r0=R)
        if fam == "cigar-curvature" and R >= 1.0:
            E = math.exp(4.0 * self.scale)
            # e^{4S} <= e^{4S - 2} e^{2r} and sinh^2 r <= e^{2r}/4 for r >= 1
            return TailClass("exp", 2.0 * E / (E * math.exp(-2.0) + 0.25), 0.0, 2.0, r0=R)
        return None

    def describe(self) -> str:
        if self.family == "zero":
            return "zero"
        if self.family == "constant":
            return f"constant(a={self.amplitude:g})"
        if self.family == "cigar-curvature":
            return f"cigar-curvature(S={self.scale:g})"
        return f"{self.family}(a={self.amplitude:g}, scale={self.scale:g})"


def as_profile(obj) -> RadialProfile:
    if isinstance(obj, RadialProfile):
        return obj
    if isinstance(obj, (int, float)):
        return RadialProfile("constant", float(obj)) if obj != 0 else RadialProfile("zero")
    if isinstance(obj, dict):
        return RadialProfile(**obj)
    raise TypeError(f"cannot interpret {obj!r} as a radial profile")


# -- conformal pairs -----------------------------------------------------------------


@dataclass
class ConformalRadialPair:
    """``g`` a radial model and ``h = exp(-(4/m) phi) g`` with ``phi`` radial."""

    base: RadialManifold
    phi: RadialProfile
    _dist_cache: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        # unbounded profiles are allowed; the quasi-isometry certificate is then absent
        self.phi = as_profile(self.phi)

    @property
    def dim(self) -> int:
        return self.base.dim

    def sigma(self, r):
        return -(2.0 / self.dim) * self.phi(r)

    def delta(self, r):
        return 2.0 * np.sinh(np.abs(self.phi(r)))

    def rho(self, r):
        return np.exp(-2.0 * self.phi(r))

    @property
    def qi_constant(self) -> float | None:
        """``C`` with ``g/C <= h <= C g``, or ``None`` for unbounded ``phi``."""
        sup = self.phi.sup_abs(0.0)
        return None if math.isinf(sup) else math.exp(4.0 * sup / self.dim)

    @property
    def is_identity(self) -> bool:
        return self.phi.family == "zero" or self.phi.amplitude == 0.0 and self.phi.family != "cigar-curvature"

    @property
    def constant_factor(self) -> float | None:
        """``c`` with ``h = c g`` when ``phi`` is constant."""
        if self.is_identity:
            return 1.0
        if self.phi.family == "constant":
            return math.exp(-4.0 * self.phi.amplitude / self.dim)
        return None

    def metric_pair_at(self, r: float, direction=None):
        """Point metrics ``(g, h)`` in an orthonormal frame of ``g``."""
        from .geometry import conformal_pair

        return conformal_pair(float(self.phi(r)), dim=self.dim)

    # -- Riemannian quantities of h ---------------------------------------------
    def ricci_h(self, r):
        """Radial and tangential Ricci eigenvalues of ``h`` (relative to ``h``)."""
        m = self.dim
        base = self.base
        c = -(2.0 / m)

        def raw(rr):
            s1, s2 = c * self.phi.d1(rr), c * self.phi.d2(rr)
            fr = base.df(rr) / base.f(rr)
            lap = s2 + (m - 1) * fr * s1 + (m - 2) * s1**2
            rad_g, tan_g = ricci_eigenvalues(base, rr)
            rad = rad_g - (m - 2) * (s2 - s1**2) - lap
            tan = tan_g - (m - 2) * s1 * fr - lap
            scale = np.exp(-2.0 * c * self.phi(rr))
            return np.stack([rad * scale, tan * scale])

        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        near = r_arr < POLE_PROBE
        vals = raw(np.where(near, POLE_PROBE, r_arr))
        if np.any(near):
            probe = raw(POLE_PROBE * np.array([1.0, 2.0, 3.0]))
            ext = probe @ np.array([3.0, -3.0, 1.0])
            vals = np.where(near[None, :], ext[:, None], vals)
        if np.ndim(r) == 0:
            return float(vals[0, 0]), float(vals[1, 0])
        return vals[0], vals[1]

    def h_distance(self, r):
        """h-distance from the pole (radial lines are h-geodesics)."""
        if self._dist_cache is None:
            R = 80.0
            grid = np.concatenate([np.linspace(0.0, 5.0, 5001)[:-1], np.linspace(5.0, R, 7501)])
            vals = np.exp(self.sigma(grid))
            cum = integrate.cumulative_simpson(vals, x=grid, initial=0.0)
            self._dist_cache = PchipInterpolator(grid, cum, extrapolate=True)
        return self._dist_cache(np.asarray(r, dtype=float))

    def h_operator(self) -> RadialOperator:
        m = self.dim
        base = self.base

        def w(r):
            return np.exp(m * self.sigma(r)) * np.abs(base.f(r)) ** (m - 1)

        def k(r):
            return np.exp((m - 2) * self.sigma(r)) * np.abs(base.f(r)) ** (m - 1)

        return RadialOperator(f"{base.name}+conformal[{self.phi.describe()}]", m, w, k, self.h_distance, base.complete)

    def h_ball_volume_at_pole(self, radius: float = 1.0) -> float:
        """h-volume of the h-ball of the given radius about the pole."""
        m = self.dim
        grid = np.linspace(0.0, 80.0, 80001)
        dh = self.h_distance(grid)
        if dh[-1] <= radius:
            raise ValueError("h-ball exceeds the tabulated range")
        r1 = float(np.interp(radius, dh, grid))
        dens = lambda r: np.exp(m * self.sigma(r)) * np.abs(self.base.f(r)) ** (m - 1)
        val, _ = integrate.quad(dens, 0.0, r1, epsabs=0.0, epsrel=1e-12, limit=200)
        return unit_sphere_area(m) * val
