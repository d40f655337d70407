"""Radial quadrature of the scattering integral criteria, with certified tails.

Three integrals over a radial model ``M`` are evaluated:

* ``int Psi_3,j(x,s) Psi_4,j(x,s) delta(x) dmu_j`` (``theorem-main-j``),
* ``int mu_j(x,1)^{-1} delta(x) dmu_j`` (``corollary-lower-j``),
* ``int mu_g0(x,1)^{-1} sinh((m/4) S |kappa| A(x)) dmu_g0`` (``corollary-flow``).

The finite part ``[0, R]`` is integrated by composite Gauss-Legendre rules.
The tail ``[R, inf)`` is never integrated numerically; it is bounded by
products of named envelopes (profile family x volume growth x weight bounds).
Verdicts:

* ``satisfied``: the envelope tail is finite *and* every weight bound used in
  it is certified;
* ``diverged``: a certified minorant has a divergent integral;
* ``inconclusive``: anything else (a ``provisional`` field says what the
  uncertified bounds suggest).

The criteria are sufficient conditions only, so a divergent integral says
nothing about the spectra; reports carry that caveat.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.ndimage import minimum_filter1d

from .heat import closed_form_space, heat_kernel_closed, radial_heat_solve
from .model_manifolds import (
    RadialManifold,
    WeightEnvelope,
    ball_volume,
    psi2_from_psi1,
    psi3_value,
    ricci_eigenvalues,
    unit_sphere_area,
)
from .profiles import ConformalRadialPair, RadialProfile, TailClass, as_profile

SUFFICIENCY_CAVEAT = "the criterion is sufficient, not necessary: divergence implies nothing about the spectra"
FLOW_DIVERGED_NOTE = "criterion inconclusive for spectra"
TAIL_RTOL = 1e-10
R_MAX = 80.0
PANEL = 0.05
RICCI_STEP = 1e-3


@dataclass
class CriterionReport:
    """Outcome of one radial criterion integral.

    ``value`` is the finite-part quadrature plus nothing else; ``truncation_error``
    bounds the omitted tail (``inf`` when no bound is available) plus the
    quadrature error estimate.
    """

    criterion_id: str
    value: float
    truncation_error: float
    tail_model: str
    verdict: str
    inputs_digest: dict
    cutoff: float = 0.0
    provisional: str | None = None
    caveats: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in ("satisfied", "diverged", "inconclusive"):
            raise ValueError(f"bad verdict {self.verdict!r}")

    @property
    def value_is_infinite(self) -> bool:
        return math.isinf(self.value)

    def to_record(self) -> dict:
        rec = asdict(self)
        for key in ("value", "truncation_error", "cutoff"):
            v = rec[key]
            rec[key] = "inf" if math.isinf(v) else v
        return rec

    def digest(self) -> str:
        blob = json.dumps(self.to_record(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- weight models -------------------------------------------------------------------


@dataclass
class Weight:
    """Pointwise weight on ``[0, R]`` plus constant bounds on the tail.

    ``hi``/``lo`` map a tail start ``R`` to bounds valid on ``[R, inf)``.
    ``certified`` records whether those bounds are proven or only sampled.
    """

    values: Callable
    hi: Callable
    lo: Callable
    certified: bool
    provenance: str


def _windowed_min(values: np.ndarray, step: float, radius: float) -> np.ndarray:
    size = 2 * int(math.ceil(radius / step)) + 1
    return minimum_filter1d(values, size=size, mode="nearest")


def _psi1_profile(radii: np.ndarray, ricci_min: np.ndarray, window_coord: np.ndarray) -> Callable:
    """``Psi_1(r) = max(0, -inf Ric over the 1/2-window in the given distance coordinate)``."""
    uniform = np.arange(0.0, window_coord[-1], RICCI_STEP)
    ric_u = np.interp(uniform, window_coord, ricci_min)
    psi1_u = np.maximum(0.0, -_windowed_min(ric_u, RICCI_STEP, 0.5))
    return lambda r: np.interp(np.interp(r, radii, window_coord), uniform, psi1_u)


def _ricci_min_g(man: RadialManifold, radii):
    rad, tan = ricci_eigenvalues(man, radii)
    return np.minimum(rad, tan)


def _psi3_weight(pair: ConformalRadialPair, j: str, s: float, R_far: float) -> Weight:
    m = pair.dim
    man = pair.base
    if j == "g" or pair.is_identity:
        if man.constant_ricci is not None:
            p3 = psi3_value(psi2_from_psi1(max(0.0, -man.constant_ricci), m), s)
            return Weight(lambda r: np.full(np.shape(r), p3), lambda R: p3, lambda R: p3, True, "analytic constant curvature")
        radii = np.arange(0.0, R_far + 1.0, RICCI_STEP)
        psi1 = _psi1_profile(radii, _ricci_min_g(man, radii), radii)
    else:
        c = pair.constant_factor
        if c is not None and man.constant_ricci is not None:
            p1 = max(0.0, -man.constant_ricci / c)
            p3 = psi3_value(psi2_from_psi1(p1, m), s)
            return Weight(lambda r: np.full(np.shape(r), p3), lambda R: p3, lambda R: p3, True, "analytic scaled curvature")
        radii = np.arange(0.0, R_far + 1.0, RICCI_STEP)
        rad, tan = pair.ricci_h(radii)
        psi1 = _psi1_profile(radii, np.minimum(rad, tan), pair.h_distance(radii))
    def vals(r):
        p1 = psi1(np.asarray(r, dtype=float))
        p2 = math.pi**2 * (m + 3) + math.pi * np.sqrt(p1 * (m - 1)) + 4.0 * p1
        return p2 / -np.expm1(-p2 * s)

    probe = np.linspace(0.0, R_far, 4001)
    p1_probe = psi1(probe)

    def hi(R):
        return psi3_value(psi2_from_psi1(float(np.max(p1_probe[probe >= R - 0.5])), m), s)

    lo_const = psi3_value(psi2_from_psi1(0.0, m), s)  # Psi_3 >= Psi_2(0) always
    return Weight(vals, hi, lambda R: lo_const, False, "sampled windowed Ricci infimum")


def _psi4_weight(pair: ConformalRadialPair, j: str, s: float) -> Weight:
    man = pair.base
    space = closed_form_space(man)
    c = 1.0 if (j == "g" or pair.is_identity) else pair.constant_factor
    if space is not None and c is not None:
        # h = c g: p^h_s(x, x) = c^{-m/2} p^g_{s/c}(x, x)
        val = c ** (-pair.dim / 2.0) * heat_kernel_closed(space, s / c, 0.0, man.dim)
        return Weight(lambda r: np.full(np.shape(r), val), lambda R: val, lambda R: val, True, "closed form on-diagonal")
    if j == "g" or pair.is_identity:
        val = radial_heat_solve(man, s).sup_value
    else:
        val = radial_heat_solve(pair.h_operator(), s).sup_value
    return Weight(
        lambda r: np.full(np.shape(r), val),
        lambda R: val,
        lambda R: val,
        False,
        "radial solver at the pole, used at every x",
    )


def _inverse_ball_weight(pair: ConformalRadialPair, j: str) -> Weight:
    man = pair.base
    m = pair.dim
    if j == "g" or pair.is_identity:
        vol = ball_volume(man, 1.0)
        if man.homogeneous:
            return Weight(lambda r: np.full(np.shape(r), 1 / vol), lambda R: 1 / vol, lambda R: 1 / vol, True, "closed form")
        if m == 2 and man.warp_monotone:
            # B(x,1) contains {|r-d| < 1/2, f(r)|dtheta| < 1/2}, so mu >= min(1, 2 pi f(d - 1/2)) for d >= 1/2;
            # B(x,1) lies in {|r-d| < 1}, so mu <= 4 pi sup f
            hi = lambda R: 1.0 / min(1.0, 2.0 * math.pi * float(man.f(max(R - 0.5, 0.0)))) if R > 0.5 else math.inf
            lo = 1.0 / (4.0 * math.pi * man.warp_sup)
            return Weight(
                lambda r: np.full(np.shape(r), 1 / vol),
                hi,
                lambda R: lo,
                True,
                "pole-centered ball volume; tail via radial comparison balls",
            )
        return Weight(
            lambda r: np.full(np.shape(r), 1 / vol), lambda R: 1 / vol, lambda R: 1 / vol, False, "pole-centered ball volume"
        )
    c = pair.constant_factor
    if c is not None and man.homogeneous:
        vol = c ** (m / 2.0) * ball_volume(man, 1.0 / math.sqrt(c))
        return Weight(lambda r: np.full(np.shape(r), 1 / vol), lambda R: 1 / vol, lambda R: 1 / vol, True, "scaled closed form")
    vol_pole = pair.h_ball_volume_at_pole(1.0)
    C = pair.qi_constant
    if C is not None and man.homogeneous:
        # B_g(x, C^{-1/2}) in B_h(x, 1) in B_g(x, C^{1/2}); dmu_h between C^{-+m/2} dmu_g
        hi = C ** (m / 2.0) / ball_volume(man, 1.0 / math.sqrt(C))
        lo = 1.0 / (C ** (m / 2.0) * ball_volume(man, math.sqrt(C)))
        return Weight(
            lambda r: np.full(np.shape(r), 1 / vol_pole),
            lambda R: hi,
            lambda R: lo,
            True,
            "pole-centered h-ball volume; tail via quasi-isometry sandwich",
        )
    return Weight(
        lambda r: np.full(np.shape(r), 1 / vol_pole),
        lambda R: 1 / vol_pole,
        lambda R: 1 / vol_pole,
        False,
        "pole-centered h-ball volume",
    )


# -- tail algebra ----------------------------------------------------------------------


def _exp_tail_integral(amp: float, power: float, rate: float, R: float) -> float:
    """``int_R^inf amp r^power e^{-rate r} dr`` for ``rate > 0``."""
    if amp == 0.0:
        return 0.0
    a = power + 1.0
    if a <= 0:
        val, _ = integrate.quad(lambda r: r**power * math.exp(-rate * r), R, math.inf)
        return amp * val
    return amp * special.gammaincc(a, rate * R) * special.gamma(a) / rate**a


def _envelope_tail(prof: TailClass, vol: WeightEnvelope, R: float) -> tuple[str, float]:
    """Integral over ``[R, inf)`` of ``prof(r) * vol(r)``: ``("finite", bound)`` or ``("infinite", inf)``."""
    if prof.kind == "zero":
        return "finite", 0.0
    if prof.kind == "gauss":
        f = lambda r: prof.amp * vol.c * r**vol.k * math.exp(vol.beta * r - (r / prof.width) ** 2)
        val, _ = integrate.quad(f, R, math.inf, epsabs=0.0, epsrel=1e-10, limit=200)
        return "finite", val
    rate = prof.rate - vol.beta
    power = prof.power + vol.k
    if rate > 0:
        return "finite", vol.c * _exp_tail_integral(prof.amp, power, rate, R)
    if rate == 0 and power < -1:
        return "finite", vol.c * prof.amp * R ** (power + 1) / (-(power + 1))
    return "infinite", math.inf


@dataclass
class _Transform:
    """Pointwise map ``T`` applied to ``|p|``; linear bounds on the tail."""

    fn: Callable
    hi_slope: Callable  # R -> c with T(z) <= c z for z <= sup_{r>=R}|p|
    lo_slope: float  # T(z) >= lo_slope * z
    constant: Callable | None = None  # for constant profiles: exact T(a)


def _delta_transform(prof: RadialProfile) -> _Transform:
    # 2 sinh z <= 2 z cosh(z_max), 2 sinh z >= 2 z
    return _Transform(
        fn=lambda r: 2.0 * np.sinh(np.abs(prof(r))),
        hi_slope=lambda R: 2.0 * math.cosh(prof.sup_abs(R)),
        lo_slope=2.0,
    )


def _flow_transform(prof: RadialProfile, c: float) -> _Transform:
    return _Transform(
        fn=lambda r: np.sinh(c * np.abs(prof(r))),
        hi_slope=lambda R: c * math.cosh(c * prof.sup_abs(R)),
        lo_slope=c,
    )


def _composite_gauss(fn: Callable, R: float, panel: float = PANEL, order: int = 8) -> tuple[float, float]:
    """Composite Gauss-Legendre on ``[0, R]``; error estimate from a coarser rule."""
    if R <= 0:
        return 0.0, 0.0
    n_pan = max(1, int(math.ceil(R / panel)))
    edges = np.linspace(0.0, R, n_pan + 1)

    def rule(k):
        x, w = np.polynomial.legendre.leggauss(k)
        a, b = edges[:-1, None], edges[1:, None]
        pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
        vals = fn(pts.ravel()).reshape(pts.shape)
        return math.fsum((0.5 * (b - a) * vals * w[None, :]).ravel().tolist())

    fine = rule(order)
    coarse = rule(order // 2)
    return fine, abs(fine - coarse)


def _run(
    criterion_id: str,
    man: RadialManifold,
    profile: RadialProfile,
    transform: _Transform,
    weight: Weight,
    density: Callable,
    density_bounds: Callable,
    digest: dict,
    caveats: list,
) -> CriterionReport:
    """Shared engine: integrand ``weight * T(|p|) * density`` on a radial model."""
    omega = unit_sphere_area(man.dim)
    integrand = lambda r: weight.values(r) * transform.fn(r) * density(r) * omega
    if man.upper is None or man.lower is None:
        raise ValueError(f"{man.name}: no volume envelopes; cannot certify tails")
    r0 = max(man.upper.r0, man.lower.r0, 1.0)

    def upper_tail(R):
        env = profile.upper_tail(R)
        if env is None:
            return "unknown", math.inf
        if env.kind == "zero":
            return "finite", 0.0
        dens_hi = density_bounds(R)[1]
        kind, val = _envelope_tail(env, man.upper, R)
        factor = weight.hi(R) * transform.hi_slope(R) * dens_hi * omega
        return kind, val * factor

    def divergent_minorant(R):
        env = profile.lower_tail(R)
        if env is None:
            return False
        kind, _ = _envelope_tail(env, man.lower, R)
        lo = weight.lo(R) * transform.lo_slope * density_bounds(R)[0]
        return kind == "infinite" and lo > 0

    # choose the cutoff: grow R until the certified tail is negligible
    R = max(r0, 2.0)
    kind, tail = upper_tail(R)
    while kind == "finite" and R < R_MAX:
        finite, _ = _composite_gauss(integrand, R)
        if tail <= TAIL_RTOL * max(finite, 1e-300) or tail == 0.0:
            break
        R = min(R * 1.5, R_MAX)
        kind, tail = upper_tail(R)
    if kind != "finite":
        R = min(max(R, 10.0), R_MAX)
    finite, quad_err = _composite_gauss(integrand, R)

    caveats = list(caveats)
    provisional = None
    tail_model = f"envelope {profile.describe()} x volume {_env_str(man.upper)} on [{R:g}, inf)"
    if kind == "finite" and weight.certified:
        verdict, value, trunc = "satisfied", finite, tail + quad_err
    elif kind == "finite":
        verdict, value, trunc = "inconclusive", finite, tail + quad_err
        provisional = "satisfied (tail finite under uncertified weight bounds)"
        caveats.append(f"weight bounds not certified: {weight.provenance}")
    elif divergent_minorant(max(R, r0)):
        verdict, value, trunc = "diverged", math.inf, math.inf
        tail_model = f"divergent minorant {profile.describe()} x volume {_env_str(man.lower)} on [{R:g}, inf)"
        caveats.append(SUFFICIENCY_CAVEAT)
    else:
        verdict, value, trunc = "inconclusive", finite, math.inf
        if kind == "infinite":
            provisional = "diverged (majorant diverges, no certified minorant)"
        tail_model += " (no finite tail bound)"
    if verdict != "diverged" and not weight.certified and kind != "finite":
        caveats.append(f"weight bounds not certified: {weight.provenance}")
    return CriterionReport(
        criterion_id=criterion_id,
        value=value,
        truncation_error=trunc,
        tail_model=tail_model,
        verdict=verdict,
        inputs_digest=digest,
        cutoff=R,
        provisional=provisional,
        caveats=caveats,
    )


def _env_str(env: WeightEnvelope) -> str:
    return f"{env.c:.4g} r^{env.k:g} e^({env.beta:g} r)"


def _density(pair: ConformalRadialPair, j: str):
    man = pair.base
    m = man.dim
    base_dens = lambda r: np.abs(man.f(r)) ** (m - 1)
    if j == "g" or pair.is_identity:
        return base_dens, lambda R: (1.0, 1.0)

    def bounds(R):
        sup = pair.phi.sup_abs(R)
        return math.exp(-2.0 * sup), math.exp(2.0 * sup)

    return lambda r: base_dens(r) * pair.rho(r), bounds


def _check_j(j: str):
    if j not in ("g", "h"):
        raise ValueError("j must be 'g' or 'h'")


def _as_pair(pair) -> ConformalRadialPair:
    if isinstance(pair, ConformalRadialPair):
        return pair
    if isinstance(pair, RadialManifold):
        return ConformalRadialPair(pair, RadialProfile("zero"))
    raise TypeError("criterion integrals need a ConformalRadialPair on a radial model")


# -- public operations ---------------------------------------------------------------


def theorem_main_integral(
    pair,
    s: float,
    j: str = "g",
    psi3_provenance: str | None = None,
    psi3_fn: Callable | None = None,
    psi4_provenance: str | None = None,
    psi4_fn: Callable | None = None,
) -> CriterionReport:
    """``int Psi_3,j(x,s) Psi_4,j(x,s) delta(x) dmu_j(x)`` on a conformal radial pair.

    Custom ``psi3_fn``/``psi4_fn`` (functions of ``r``) need a provenance
    string and are treated as uncertified.
    """
    _check_j(j)
    if s <= 0:
        raise ValueError("s must be positive")
    pair = _as_pair(pair)
    for fn, prov, name in ((psi3_fn, psi3_provenance, "Psi_3"), (psi4_fn, psi4_provenance, "Psi_4")):
        if fn is not None and not prov:
            raise ValueError(f"custom {name} needs a provenance string")
    prof = pair.phi
    caveats = []
    if pair.is_identity:
        w3 = w4 = Weight(lambda r: np.ones(np.shape(r)), lambda R: 1.0, lambda R: 1.0, True, "unused (delta = 0)")
    else:
        w3 = (
            Weight(psi3_fn, lambda R: math.inf, lambda R: 0.0, False, psi3_provenance)
            if psi3_fn is not None
            else _psi3_weight(pair, j, s, R_MAX)
        )
        w4 = (
            Weight(psi4_fn, lambda R: math.inf, lambda R: 0.0, False, psi4_provenance)
            if psi4_fn is not None
            else _psi4_weight(pair, j, s)
        )
        if not w4.certified:
            caveats.append("Psi_4 off the pole approximated by the pole value")
    weight = Weight(
        lambda r: w3.values(r) * w4.values(r),
        lambda R: w3.hi(R) * w4.hi(R),
        lambda R: w3.lo(R) * w4.lo(R),
        w3.certified and w4.certified,
        f"Psi_3: {w3.provenance}; Psi_4: {w4.provenance}",
    )
    dens, dens_bounds = _density(pair, j)
    digest = {
        "model": pair.base.name,
        "delta": f"conformal {prof.describe()}",
        "psi3": w3.provenance,
        "psi4": w4.provenance,
        "measure": f"mu_{j}",
        "s": s,
    }
    return _run(f"theorem-main-{j}", pair.base, prof, _delta_transform(prof), weight, dens, dens_bounds, digest, caveats)


def theorem_main_sweep(pair, s_grid) -> list[CriterionReport]:
    """Both ``j in {g, h}`` for every ``s`` (the theorem needs both measures)."""
    return [theorem_main_integral(pair, s, j) for s in s_grid for j in ("g", "h")]


def corollary_lower_integral(pair, j: str = "g") -> CriterionReport:
    """``int mu_j(x,1)^{-1} delta(x) dmu_j(x)``."""
    _check_j(j)
    pair = _as_pair(pair)
    prof = pair.phi
    if pair.is_identity:
        weight = Weight(lambda r: np.ones(np.shape(r)), lambda R: 1.0, lambda R: 1.0, True, "unused (delta = 0)")
    else:
        weight = _inverse_ball_weight(pair, j)
    caveats = [] if weight.certified or pair.is_identity else ["mu(x,1) off the pole approximated by the pole value"]
    dens, dens_bounds = _density(pair, j)
    digest = {
        "model": pair.base.name,
        "delta": f"conformal {prof.describe()}",
        "mu": weight.provenance,
        "measure": f"mu_{j}",
    }
    return _run(f"corollary-lower-{j}", pair.base, prof, _delta_transform(prof), weight, dens, dens_bounds, digest, caveats)


@dataclass
class TransferReport:
    skipped: bool
    notice: str
    report_g: CriterionReport | None = None
    report_h: CriterionReport | None = None
    agree: bool | None = None


def quasi_isometry_transfer_check(pair) -> TransferReport:
    """Corollary-lower verdicts for ``j = g`` and ``j = h`` must agree under quasi-isometry."""
    pair = _as_pair(pair)
    C = pair.qi_constant
    if C is None:
        return TransferReport(True, "quasi-isometry certificate absent (unbounded phi); check skipped")
    rg = corollary_lower_integral(pair, "g")
    rh = corollary_lower_integral(pair, "h")
    return TransferReport(False, f"certified quasi-isometry constant C = {C:.6g}", rg, rh, rg.verdict == rh.verdict)


def flow_integral(g0: RadialManifold, A_field, kappa: float, S_horizon: float) -> CriterionReport:
    """``int mu_g0(x,1)^{-1} sinh((m/4) S |kappa| A(x)) dmu_g0(x)``.

    ``A_field`` must be a named bounded profile: ``sup A < inf`` is checked first.
    """
    if callable(A_field) and not isinstance(A_field, RadialProfile):
        raise ValueError("A must be a named profile family; sup A cannot be certified for arbitrary callables")
    A = as_profile(A_field)
    sup_A = A.sup_abs(0.0)
    if not math.isfinite(sup_A):
        raise ValueError("sup A is not finite; the flow criterion does not apply")
    if S_horizon <= 0:
        raise ValueError("flow horizon must be positive")
    m = g0.dim
    c = (m / 4.0) * S_horizon * abs(kappa)
    pair = ConformalRadialPair(g0, A)
    weight = _inverse_ball_weight(_as_pair(g0), "g")
    dens, dens_bounds = _density(pair, "g")
    digest = {
        "model": g0.name,
        "A": A.describe(),
        "sup_A": sup_A,
        "kappa": kappa,
        "S": S_horizon,
        "mu": weight.provenance,
    }
    trivial = A.family == "zero" or (A.amplitude == 0.0 and A.family != "cigar-curvature") or c == 0.0
    if trivial:
        weight = Weight(lambda r: np.ones(np.shape(r)), lambda R: 1.0, lambda R: 1.0, True, weight.provenance)
    rep = _run("corollary-flow", g0, A, _flow_transform(A, c), weight, dens, dens_bounds, digest, [])
    if rep.verdict == "diverged":
        rep.caveats.append(FLOW_DIVERGED_NOTE)
    return rep
