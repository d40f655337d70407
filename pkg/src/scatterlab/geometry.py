"""Pointwise calculus for a pair of Riemannian metrics.

Given the component matrices ``G`` and ``H`` of two metrics ``g`` and ``h`` at a
point (same chart basis), the deviation operator acting on covectors is
``A = G H^{-1}``: it is defined by ``g*(A a, b) = h*(a, b)`` with the dual
metrics represented by ``G^{-1}`` and ``H^{-1}``.  Everything else (volume
density, scalar deviation, the ``S``/``U`` multipliers) is a spectral function
of ``A`` and is evaluated in the Cholesky-whitened basis where ``A`` becomes
the symmetric positive matrix ``L^T H^{-1} L`` (``G = L L^T``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

SYMMETRY_RTOL = 1e-14
SPD_RTOL = 1e-12


class MetricError(ValueError):
    """Raised for malformed metric input (non-SPD, shape or dimension mismatch)."""


@dataclass(frozen=True)
class MetricAtPoint:
    """Metric components on a tangent space in a fixed chart basis.

    ``dim`` is normally >= 2; one-dimensional metrics are accepted for the
    discrete 1-d analogues in :mod:`scatterlab.discrete_operators`.
    """

    matrix: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim == 0:
            mat = mat.reshape(1, 1)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise MetricError(f"metric must be a square matrix, got shape {mat.shape}")
        scale = np.max(np.abs(mat))
        if not np.all(np.isfinite(mat)) or scale == 0.0:
            raise MetricError("metric has non-finite or all-zero entries")
        asym = np.max(np.abs(mat - mat.T))
        if asym > SYMMETRY_RTOL * scale:
            raise MetricError(f"metric not symmetric (max asymmetry {asym:.3e})")
        mat = 0.5 * (mat + mat.T)
        eig = np.linalg.eigvalsh(mat)
        if eig[0] <= SPD_RTOL * np.trace(mat):
            raise MetricError(
                f"metric not positive definite: smallest eigenvalue {eig[0]:.3e} "
                f"below {SPD_RTOL:g} * trace"
            )
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "dim", mat.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "MetricAtPoint":
        return cls(np.eye(dim))


def as_metric(value) -> MetricAtPoint:
    if isinstance(value, MetricAtPoint):
        return value
    return MetricAtPoint(value)


@dataclass(frozen=True)
class MetricPairDeviation:
    """Deviation package for a pair ``(g, h)`` at one point.

    ``a_matrix`` acts on covector components; ``eigenvalues`` are sorted
    ascending.  ``s_hat_matrix`` is ``(rho A)^{1/2} - (rho A)^{-1/2}``.
    """

    dim: int
    a_matrix: np.ndarray
    eigenvalues: np.ndarray
    rho: float
    delta: float
    s_scalar: float
    s_hat_matrix: np.ndarray
    # Whitening data kept for further spectral functions of A.
    chol_g: np.ndarray = field(repr=False)
    eigvecs_white: np.ndarray = field(repr=False)

    def spectral_function(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Return ``fn(rho * A)`` as a matrix on covectors."""
        vals = fn(self.rho * self.eigenvalues)
        return _from_whitened(self.chol_g, self.eigvecs_white, vals)

    @property
    def u_scalar(self) -> float:
        """``sgn(S) rho^{-1/2}``, with ``sgn(0) = 0``."""
        return float(np.sign(self.s_scalar) * self.rho ** -0.5)

    def u_hat_matrix(self) -> np.ndarray:
        """``sgn(S_hat) (rho A)^{-1/2}``, with ``sgn(0) = 0``."""
        return self.spectral_function(lambda x: np.sign(_s_of(x)) * x ** -0.5)

    def abs_s_hat_sqrt(self) -> np.ndarray:
        """``|S_hat|^{1/2}``."""
        return self.spectral_function(lambda x: np.sqrt(np.abs(_s_of(x))))


def _s_of(x):
    return np.sqrt(x) - 1.0 / np.sqrt(x)


def _from_whitened(chol_g, vecs, vals):
    # A = L W L^{-1}, W = Q diag Q^T  =>  f(A) = L Q f(diag) Q^T L^{-1}
    left = chol_g @ vecs
    right = np.linalg.solve(chol_g.T, vecs).T  # Q^T L^{-1}
    return (left * vals) @ right


def deviation_from_eigenvalues(eigenvalues: Sequence[float], dim: int | None = None) -> float:
    """``2 sinh((m/4) max |log lambda|)`` for a list of deviation eigenvalues."""
    lam = np.asarray(eigenvalues, dtype=float)
    m = lam.size if dim is None else dim
    return float(2.0 * np.sinh(0.25 * m * np.max(np.abs(np.log(lam)))))


def pair_operator(g, h) -> MetricPairDeviation:
    """Compute the deviation package of the metric pair ``(g, h)`` at a point."""
    g = as_metric(g)
    h = as_metric(h)
    if g.dim != h.dim:
        raise MetricError(f"dimension mismatch: g has dim {g.dim}, h has dim {h.dim}")
    G, H = g.matrix, h.matrix
    L = np.linalg.cholesky(G)
    Hinv_L = np.linalg.solve(H, L)
    white = L.T @ Hinv_L
    white = 0.5 * (white + white.T)
    lam, Q = np.linalg.eigh(white)
    if lam[0] <= 0.0:
        raise MetricError("whitened deviation operator lost positivity")
    a_matrix = G @ np.linalg.inv(H)
    rho = float(np.prod(lam) ** -0.5)
    delta = deviation_from_eigenvalues(lam, g.dim)
    s_scalar = rho ** 0.5 - rho ** -0.5
    s_hat = _from_whitened(L, Q, _s_of(rho * lam))
    return MetricPairDeviation(
        dim=g.dim,
        a_matrix=a_matrix,
        eigenvalues=lam,
        rho=rho,
        delta=delta,
        s_scalar=s_scalar,
        s_hat_matrix=s_hat,
        chol_g=L,
        eigvecs_white=Q,
    )


def covector_operator_norm(op: np.ndarray, metric) -> float:
    """Operator norm of ``op`` on covectors w.r.t. the dual of ``metric``.

    With ``G = L L^T`` the dual inner product is ``G^{-1} = L^{-T} L^{-1}``, so
    ``|a| = |L^{-1} a|`` and the norm is the spectral norm of ``L^{-1} op L``.
    """
    M = as_metric(metric).matrix
    L = np.linalg.cholesky(M)
    whitened = np.linalg.solve(L, op @ L)
    return float(np.linalg.norm(whitened, 2))


def inverse_pair_identities(g, h) -> dict:
    """Residuals of the four inversion identities for the pair ``(g, h)``.

    ``rho_hg rho_gh = 1``, ``A_hg A_gh = I``, ``rho_gh = det(A_gh)^{-1/2}`` and
    ``delta_gh = delta_hg``.  All residuals are relative where a scale exists.
    """
    gh = pair_operator(g, h)
    hg = pair_operator(h, g)
    m = gh.dim
    res = {
        "rho_product": abs(gh.rho * hg.rho - 1.0),
        "a_inverse": float(np.max(np.abs(hg.a_matrix @ gh.a_matrix - np.eye(m)))),
        "rho_det": abs(gh.rho * np.sqrt(np.linalg.det(gh.a_matrix)) - 1.0),
        "delta_symmetry": abs(gh.delta - hg.delta) / max(1.0, gh.delta),
    }
    res["max"] = max(res.values())
    return res


def elementary_bound_check(g, h, atol: float = 1e-12) -> dict:
    """Check ``max(|S|, |S_hat|_g, |S_hat|_h) <= delta`` at a point."""
    dev = pair_operator(g, h)
    norm_g = covector_operator_norm(dev.s_hat_matrix, g)
    norm_h = covector_operator_norm(dev.s_hat_matrix, h)
    lhs = max(abs(dev.s_scalar), norm_g, norm_h)
    rhs = dev.delta
    return {
        "lhs": lhs,
        "rhs": rhs,
        "s_abs": abs(dev.s_scalar),
        "s_hat_norm_g": norm_g,
        "s_hat_norm_h": norm_h,
        "holds": bool(lhs <= rhs + atol * max(1.0, rhs)),
    }


@dataclass
class QuasiIsometryCertificate:
    """Sampled quasi-isometry constant.

    ``constant_c`` is a lower bound on the true constant (only the sampled
    points are inspected); ``None`` means no certificate could be issued.
    """

    constant_c: float | None
    sample_points: list
    sup_delta: float
    min_eigenvalue: float
    max_eigenvalue: float
    dim: int
    note: str = ""

    @property
    def certified(self) -> bool:
        return self.constant_c is not None


PairField = Callable[[object], tuple]


def quasi_isometry_scan(pair_field: PairField, points: Iterable) -> QuasiIsometryCertificate:
    """Scan sampled points; ``pair_field(p)`` returns the metric pair ``(g, h)`` at ``p``."""
    pts = list(points)
    if not pts:
        raise ValueError("quasi_isometry_scan needs a nonempty sample set")
    lo, hi, sup_delta, dim = np.inf, 0.0, 0.0, None
    for p in pts:
        dev = pair_operator(*pair_field(p))
        dim = dev.dim
        lo = min(lo, float(dev.eigenvalues[0]))
        hi = max(hi, float(dev.eigenvalues[-1]))
        sup_delta = max(sup_delta, dev.delta)
    c = max(hi, 1.0 / lo, 1.0)
    return QuasiIsometryCertificate(
        constant_c=c,
        sample_points=pts,
        sup_delta=sup_delta,
        min_eigenvalue=lo,
        max_eigenvalue=hi,
        dim=dim,
        note="sampled lower bound on the quasi-isometry constant",
    )


def nested_quasi_isometry_scan(
    pair_field: PairField, nested_points: Sequence[Iterable], rtol: float = 1e-6
) -> tuple[QuasiIsometryCertificate, list[float]]:
    """Scan growing sample sets; withhold the certificate while the constant grows.

    Returns the certificate of the largest set and the sequence of sampled
    constants.  If the constant still increases (relative change above
    ``rtol``) on the last refinement, ``constant_c`` is set to ``None``.
    """
    certs = [quasi_isometry_scan(pair_field, pts) for pts in nested_points]
    consts = [c.constant_c for c in certs]
    last = certs[-1]
    if len(consts) >= 2 and consts[-1] > consts[-2] * (1.0 + rtol):
        last.constant_c = None
        last.note = "no certificate: sampled constant still grows on nested sets"
    return last, consts


def conformal_pair(phi: float, g=None, dim: int = 2) -> tuple[MetricAtPoint, MetricAtPoint]:
    """Pair ``(g, exp(-(4/m) phi) g)`` at a point."""
    G = np.eye(dim) if g is None else as_metric(g).matrix
    m = G.shape[0]
    return MetricAtPoint(G), MetricAtPoint(np.exp(-4.0 * phi / m) * G)


# -- columnar grid files --------------------------------------------------------


def write_metric_grid(path, coords: np.ndarray, matrices: np.ndarray) -> None:
    """Write a grid-sampled metric field: coordinates then row-major entries per row."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[0] == 1 and matrices.shape[0] != 1:
        coords = coords.T
    n = coords.shape[0]
    mats = np.asarray(matrices, dtype=float).reshape(n, -1)
    dim = int(round(np.sqrt(mats.shape[1])))
    header = f"coord_dim={coords.shape[1]} metric_dim={dim}"
    np.savetxt(path, np.hstack([coords, mats]), header=header, fmt="%.17g")


def read_metric_grid(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a file written by :func:`write_metric_grid`; returns ``(coords, matrices)``."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise MetricError(f"{path}: missing header line 'coord_dim=.. metric_dim=..'")
    meta = dict(tok.split("=") for tok in first[1:].split())
    cdim, mdim = int(meta["coord_dim"]), int(meta["metric_dim"])
    data = np.atleast_2d(np.loadtxt(path))
    if data.shape[1] != cdim + mdim * mdim:
        raise MetricError(
            f"{path}: expected {cdim + mdim * mdim} columns, found {data.shape[1]}"
        )
    coords = data[:, :cdim]
    mats = data[:, cdim:].reshape(-1, mdim, mdim)
    for i, mat in enumerate(mats):
        try:
            MetricAtPoint(mat)
        except MetricError as exc:
            raise MetricError(f"{path}: row {i + 1}: {exc}") from None
    return coords, mats
