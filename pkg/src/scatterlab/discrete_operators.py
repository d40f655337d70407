"""Weighted finite-difference models of ``H = d* d`` for a pair of metrics.

Both metrics live on one rectangular grid (1-d or 2-d) with homogeneous
Dirichlet data on the outer ring of nodes.  Functions are vectors on the
interior nodes with the lumped mass ``w(x) = sqrt(det G(x)) * cell volume``.
One-forms are covectors at quadrature points: interval midpoints in 1-d and
the 2x2 Gauss points of each bilinear cell in 2-d, carrying the weight
``omega(q) = sqrt(det G(q)) * (quadrature volume)`` and the dual metric
``G(q)^{-1}``.  Quadrature-point metrics are arithmetic means of the adjacent
nodal metrics.

The exterior derivative ``D`` is the same matrix for both metrics, and the
Laplacian is assembled as ``H_j = M_j^{-1} D^T Omega_j D``, so
``<H_j u, v>_j = <D u, D v>_j`` holds by construction.  Every pointwise
identity relating the two metrics therefore carries over exactly, which is
what the checks in this module exercise.  The truncated Dirichlet domain is
a self-adjoint realization like any other; it does not affect the algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import geometry

MAX_DENSE = 2000
ROW_SUM_TOL = 1e-10
GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


class DiscreteGeometryError(ValueError):
    """Raised for malformed grids or degenerate weights."""


def _check_spd(mats: np.ndarray, name: str):
    try:
        np.linalg.cholesky(mats)
    except np.linalg.LinAlgError as exc:
        raise DiscreteGeometryError(f"{name} is not positive definite at some node") from exc


@dataclass
class DiscreteGeometry:
    """A pair of metrics sampled on a rectangular grid, boundary ring included.

    Attributes:
        shape: number of interior nodes per axis, ``(n,)`` or ``(nx, ny)``.
        spacing: grid spacing per axis.
        origin: coordinates of the first (boundary) node.
        metric_g, metric_h: nodal metric matrices, shape
            ``(n + 2,) + (d, d)`` in 1-d or ``(nx + 2, ny + 2, d, d)`` in 2-d.
        name: label used in reports.
    """

    shape: tuple
    spacing: tuple
    origin: tuple
    metric_g: np.ndarray
    metric_h: np.ndarray
    name: str = "grid"

    def __post_init__(self):
        self.shape = tuple(int(v) for v in self.shape)
        self.spacing = tuple(float(v) for v in self.spacing)
        self.origin = tuple(float(v) for v in self.origin)
        d = len(self.shape)
        if d not in (1, 2) or len(self.spacing) != d or len(self.origin) != d:
            raise DiscreteGeometryError("grid must be 1-d or 2-d with matching spacing and origin")
        if min(self.shape) < 1 or min(self.spacing) <= 0:
            raise DiscreteGeometryError("grid needs at least one interior node and positive spacing")
        full = tuple(n + 2 for n in self.shape) + (d, d)
        self.metric_g = np.asarray(self.metric_g, dtype=float).reshape(full)
        self.metric_h = np.asarray(self.metric_h, dtype=float).reshape(full)
        _check_spd(self.metric_g, "metric_g")
        _check_spd(self.metric_h, "metric_h")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coordinates(self, interior: bool = True) -> np.ndarray:
        """Node coordinates, shape ``(N, d)`` in row-major node order."""
        axes = []
        for n, h, o in zip(self.shape, self.spacing, self.origin):
            ax = o + h * np.arange(n + 2)
            axes.append(ax[1:-1] if interior else ax)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([a.ravel() for a in mesh])

    def interior(self, field_: np.ndarray) -> np.ndarray:
        """Restrict a full-grid field to interior nodes, flattened."""
        if self.dim == 1:
            inner = field_[1:-1]
        else:
            inner = field_[1:-1, 1:-1]
        return inner.reshape((self.n_nodes,) + field_.shape[self.dim:])

    def write(self, g_path, h_path) -> None:
        """Store both metrics in the columnar grid format of :mod:`geometry`."""
        coords = self.coordinates(interior=False)
        d = self.dim
        geometry.write_metric_grid(g_path, coords, self.metric_g.reshape(-1, d, d))
        geometry.write_metric_grid(h_path, coords, self.metric_h.reshape(-1, d, d))

    @classmethod
    def read(cls, g_path, h_path, name: str = "grid") -> "DiscreteGeometry":
        """Load a pair written by :meth:`write` (boundary ring included)."""
        cg, mg = geometry.read_metric_grid(g_path)
        ch, mh = geometry.read_metric_grid(h_path)
        if cg.shape != ch.shape or not np.allclose(cg, ch):
            raise DiscreteGeometryError("g and h grids differ")
        d = cg.shape[1]
        axes = [np.unique(cg[:, k]) for k in range(d)]
        shape = tuple(len(a) for a in axes)
        if int(np.prod(shape)) != cg.shape[0]:
            raise DiscreteGeometryError("coordinates do not form a rectangular grid")
        order = np.lexsort(tuple(cg[:, k] for k in reversed(range(d))))
        spacing = tuple(float(a[1] - a[0]) for a in axes)
        origin = tuple(float(a[0]) for a in axes)
        full = shape + (d, d)
        return cls(tuple(n - 2 for n in shape), spacing, origin, mg[order].reshape(full), mh[order].reshape(full), name)


# -- fixtures -------------------------------------------------------------------------

def flat_1d(n: int = 100, length: float = 1.0) -> DiscreteGeometry:
    """``g = h = dx^2`` on ``[0, length]`` with ``n`` interior nodes."""
    h = length / (n + 1)
    eye = np.ones((n + 2, 1, 1))
    return DiscreteGeometry((n,), (h,), (0.0,), eye, eye.copy(), name=f"flat-1d-{n}")


def conformal_1d(n: int = 100, amplitude: float = 0.3, profile: str = "gaussian", half_width: float = 4.0) -> DiscreteGeometry:
    """``g = dx^2`` and ``h = e^{-2 phi} dx^2`` on ``[-half_width, half_width]``.

    ``phi = amplitude * e^{-x^2}`` for ``profile="gaussian"`` and
    ``phi = amplitude`` for ``profile="constant"``, so the pair is
    quasi-isometric with constant ``e^{2 amplitude}``.
    """
    step = 2 * half_width / (n + 1)
    x = -half_width + step * np.arange(n + 2)
    if profile == "gaussian":
        phi = amplitude * np.exp(-(x**2))
    elif profile == "constant":
        phi = np.full_like(x, amplitude)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    g = np.ones((n + 2, 1, 1))
    h = np.exp(-2 * phi)[:, None, None]
    return DiscreteGeometry((n,), (step,), (-half_width,), g, h, name=f"conformal-1d-{profile}-{n}")


def flat_2d(n: int = 10) -> DiscreteGeometry:
    """Unit square, ``n x n`` interior nodes, ``g = h`` Euclidean."""
    step = 1.0 / (n + 1)
    eye = np.broadcast_to(np.eye(2), (n + 2, n + 2, 2, 2)).copy()
    return DiscreteGeometry((n, n), (step, step), (0.0, 0.0), eye, eye.copy(), name=f"flat-2d-{n}")


def anisotropic_2d(n: int = 12, strength: float = 0.3) -> DiscreteGeometry:
    """Unit square with a mildly sheared, non-conformal bump in ``h`` and a tilt in ``g``.

    ``g = diag(1 + 0.2 x, 1 + 0.1 y)`` and ``h = g + b(x, y) B`` with a
    Gaussian bump ``b`` and a fixed symmetric ``B`` with off-diagonal entries.
    The default strength keeps the stiffness matrices M-matrices.
    """
    step = 1.0 / (n + 1)
    ax = step * np.arange(n + 2)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    g = np.zeros((n + 2, n + 2, 2, 2))
    g[..., 0, 0] = 1 + 0.2 * X
    g[..., 1, 1] = 1 + 0.1 * Y
    bump = np.exp(-((X - 0.5) ** 2 + (Y - 0.45) ** 2) / 0.05)
    B = np.array([[1.0, 0.25], [0.25, -0.5]])
    h = g + strength * bump[..., None, None] * B
    return DiscreteGeometry((n, n), (step, step), (0.0, 0.0), g, h, name=f"anisotropic-2d-{n}")


FIXTURES = {
    "flat-1d": flat_1d,
    "conformal-1d": conformal_1d,
    "flat-2d": flat_2d,
    "anisotropic-2d": anisotropic_2d,
}


# -- assembly ---------------------------------------------------------------------------

def _gradient_1d(n: int, h: float) -> np.ndarray:
    D = np.zeros((n + 1, n))
    idx = np.arange(n)
    D[idx, idx] = -1.0 / h
    D[idx + 1, idx] = 1.0 / h
    return D


def _gradient_2d(nx: int, ny: int, hx: float, hy: float) -> np.ndarray:
    """Bilinear gradient at the four Gauss points of every cell, shape ``(Q * 2, N)``."""
    cells = [(i, j) for i in range(nx + 1) for j in range(ny + 1)]
    Q = 4 * len(cells)
    D = np.zeros((Q, 2, nx * ny))

    def col(i, j):
        # interior node (i, j) of the full grid, or None on the boundary ring
        if 1 <= i <= nx and 1 <= j <= ny:
            return (i - 1) * ny + (j - 1)
        return None

    q = 0
    for i, j in cells:
        corners = {(0, 0): col(i, j), (1, 0): col(i + 1, j), (0, 1): col(i, j + 1), (1, 1): col(i + 1, j + 1)}
        for xi in GAUSS:
            for eta in GAUSS:
                dx = {(0, 0): -(1 - eta), (1, 0): 1 - eta, (0, 1): -eta, (1, 1): eta}
                dy = {(0, 0): -(1 - xi), (1, 0): -xi, (0, 1): 1 - xi, (1, 1): xi}
                for key, c in corners.items():
                    if c is not None:
                        D[q, 0, c] += dx[key] / hx
                        D[q, 1, c] += dy[key] / hy
                q += 1
    return D.reshape(Q * 2, nx * ny)


def _quadrature_metrics(geo: DiscreteGeometry, mats: np.ndarray) -> np.ndarray:
    if geo.dim == 1:
        return 0.5 * (mats[:-1] + mats[1:])
    cell = 0.25 * (mats[:-1, :-1] + mats[1:, :-1] + mats[:-1, 1:] + mats[1:, 1:])
    cell = cell.reshape(-1, 2, 2)
    return np.repeat(cell, 4, axis=0)


def _block_apply(blocks: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Apply per-point matrices to stacked covectors (``vec`` of shape ``(Q*d, ...)``)."""
    Q, d, _ = blocks.shape
    v = vec.reshape((Q, d) + vec.shape[1:])
    out = np.einsum("qab,qb...->qa...", blocks, v)
    return out.reshape(vec.shape)


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    Q, d, _ = blocks.shape
    out = np.zeros((Q * d, Q * d))
    for q in range(Q):
        out[q * d:(q + 1) * d, q * d:(q + 1) * d] = blocks[q]
    return out


@dataclass
class _Pointwise:
    """Pair-operator data at a set of points, computed with :mod:`geometry`."""

    rho: np.ndarray
    delta: np.ndarray
    s: np.ndarray
    s_hat_abs_sqrt: np.ndarray
    u_hat: np.ndarray
    s_hat_norm: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def compute(cls, G: np.ndarray, H: np.ndarray) -> "_Pointwise":
        n, d, _ = G.shape
        rho, delta, s = np.empty(n), np.empty(n), np.empty(n)
        sq, uh = np.empty((n, d, d)), np.empty((n, d, d))
        norm, eig = np.empty(n), np.empty((n, d))
        for k in range(n):
            dev = geometry.pair_operator(G[k], H[k])
            rho[k], delta[k], s[k] = dev.rho, dev.delta, dev.s_scalar
            sq[k] = dev.abs_s_hat_sqrt()
            uh[k] = dev.u_hat_matrix()
            norm[k] = float(np.max(np.abs(np.sqrt(dev.rho * dev.eigenvalues) - 1 / np.sqrt(dev.rho * dev.eigenvalues))))
            eig[k] = dev.eigenvalues
        return cls(rho, delta, s, sq, uh, norm, eig)


@dataclass
class DiscreteOperatorSet:
    """All matrices needed to compare the two discrete Laplacians.

    ``mass_*`` are nodal weights, ``omega_*`` the per-point Gram blocks of the
    one-form inner products, ``gradient`` the shared exterior derivative and
    ``laplacian_*`` the weighted compositions ``M^{-1} D^T Omega D``.
    """

    geo: DiscreteGeometry
    gradient: np.ndarray
    mass_g: np.ndarray
    mass_h: np.ndarray
    omega_g: np.ndarray
    omega_h: np.ndarray
    laplacian_g: np.ndarray
    laplacian_h: np.ndarray
    nodes: _Pointwise
    points: _Pointwise
    m_matrix: bool
    notes: list = field(default_factory=list)

    def mass(self, j: str) -> np.ndarray:
        return self._pick(j, self.mass_g, self.mass_h)

    def omega(self, j: str) -> np.ndarray:
        return self._pick(j, self.omega_g, self.omega_h)

    def laplacian(self, j: str) -> np.ndarray:
        return self._pick(j, self.laplacian_g, self.laplacian_h)

    @staticmethod
    def _pick(j, g, h):
        if j == "g":
            return g
        if j == "h":
            return h
        raise ValueError(f"j must be 'g' or 'h', got {j!r}")

    @property
    def identification(self) -> np.ndarray:
        """The identity map viewed from ``L^2(g)`` to ``L^2(h)``."""
        return np.eye(self.geo.n_nodes)

    @cached_property
    def _eig_g(self):
        return _weighted_eigh(self.stiffness("g"), self.mass_g)

    @cached_property
    def _eig_h(self):
        return _weighted_eigh(self.stiffness("h"), self.mass_h)

    def eig(self, j: str):
        """Eigenvalues and ``M``-orthonormal eigenvectors of ``H_j``."""
        return self._eig_g if self._pick(j, True, False) else self._eig_h

    def stiffness(self, j: str) -> np.ndarray:
        D = self.gradient
        return D.T @ _block_apply(self.omega(j), D)

    def heat(self, j: str, s: float) -> np.ndarray:
        """Matrix of ``e^{-s H_j}``."""
        if s < 0:
            raise ValueError("heat time must be nonnegative")
        lam, V = self.eig(j)
        return (V * np.exp(-s * lam)) @ V.T * self.mass(j)[None, :]

    def heat_kernel(self, j: str, s: float) -> np.ndarray:
        """Symmetric kernel ``k`` with ``(e^{-s H_j} f)(x) = sum_y k(x, y) f(y) w_j(y)``."""
        lam, V = self.eig(j)
        return (V * np.exp(-s * lam)) @ V.T


def _weighted_eigh(K: np.ndarray, w: np.ndarray):
    r = 1 / np.sqrt(w)
    lam, Y = np.linalg.eigh(r[:, None] * K * r[None, :])
    return np.maximum(lam, 0.0), r[:, None] * Y


def build_operators(geo: DiscreteGeometry) -> DiscreteOperatorSet:
    """Assemble the Dirichlet operators of both metrics on ``geo``."""
    d = geo.dim
    if geo.n_nodes > MAX_DENSE:
        raise DiscreteGeometryError(f"{geo.n_nodes} nodes exceeds the dense limit {MAX_DENSE}; coarsen the grid")
    if d == 1:
        D = _gradient_1d(geo.shape[0], geo.spacing[0])
        qvol = geo.spacing[0]
    else:
        D = _gradient_2d(*geo.shape, *geo.spacing)
        qvol = geo.cell_volume / 4
    Gn, Hn = geo.interior(geo.metric_g), geo.interior(geo.metric_h)
    Gq, Hq = _quadrature_metrics(geo, geo.metric_g), _quadrature_metrics(geo, geo.metric_h)
    mass_g = np.sqrt(np.linalg.det(Gn)) * geo.cell_volume
    mass_h = np.sqrt(np.linalg.det(Hn)) * geo.cell_volume
    if np.any(mass_g <= 0) or np.any(mass_h <= 0) or not np.all(np.isfinite(mass_g * mass_h)):
        raise DiscreteGeometryError("degenerate node weights")
    omega_g = (np.sqrt(np.linalg.det(Gq)) * qvol)[:, None, None] * np.linalg.inv(Gq)
    omega_h = (np.sqrt(np.linalg.det(Hq)) * qvol)[:, None, None] * np.linalg.inv(Hq)
    Kg = D.T @ _block_apply(omega_g, D)
    Kh = D.T @ _block_apply(omega_h, D)
    off = lambda K: float(np.max(K - np.diag(np.diag(K))))
    scale = max(float(np.max(np.abs(Kg))), float(np.max(np.abs(Kh))))
    m_matrix = max(off(Kg), off(Kh)) <= 1e-13 * scale
    ops = DiscreteOperatorSet(
        geo=geo,
        gradient=D,
        mass_g=mass_g,
        mass_h=mass_h,
        omega_g=omega_g,
        omega_h=omega_h,
        laplacian_g=Kg / mass_g[:, None],
        laplacian_h=Kh / mass_h[:, None],
        nodes=_Pointwise.compute(Gn, Hn),
        points=_Pointwise.compute(Gq, Hq),
        m_matrix=m_matrix,
    )
    if not m_matrix:
        ops.notes.append("stiffness has positive off-diagonal entries; heat semigroup need not preserve positivity")
    return ops


# -- basic identities -------------------------------------------------------------------

def dstar_d_residual(ops: DiscreteOperatorSet, trials: int = 5, seed: int = 0) -> float:
    """Max relative gap between ``<H_j u, v>_j`` and ``<D u, D v>_j`` over random vectors."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j in ("g", "h"):
        M, H, Om = ops.mass(j), ops.laplacian(j), ops.omega(j)
        for _ in range(trials):
            u, v = rng.standard_normal((2, ops.geo.n_nodes))
            du, dv = ops.gradient @ u, ops.gradient @ v
            lhs = float(np.dot(H @ u, M * v))
            rhs = float(np.dot(du, _block_apply(Om, dv)))
            worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return worst


def symmetry_residual(ops: DiscreteOperatorSet) -> float:
    """Relative asymmetry of ``H_j`` in its weighted inner product."""
    worst = 0.0
    for j in ("g", "h"):
        A = ops.mass(j)[:, None] * ops.laplacian(j)
        worst = max(worst, float(np.max(np.abs(A - A.T)) / np.max(np.abs(A))))
    return worst


def adjoint_identity_check(ops: DiscreteOperatorSet) -> float:
    """Compare the weighted adjoint of the identification with multiplication by ``rho``.

    The adjoint of ``I: L^2(g) -> L^2(h)`` is ``M_g^{-1} I^T M_h``; it should
    be the diagonal of nodal ``rho`` values returned by :mod:`geometry`.
    Returns the maximum absolute entrywise residual.
    """
    I = ops.identification
    adjoint = (I.T * ops.mass_h[None, :]) / ops.mass_g[:, None]
    return float(np.max(np.abs(adjoint - np.diag(ops.nodes.rho))))


def semigroup_apply(ops: DiscreteOperatorSet, j: str, s: float, vector) -> np.ndarray:
    """``e^{-s H_j} v`` by weighted eigendecomposition."""
    v = np.asarray(vector, dtype=float)
    if v.shape[0] != ops.geo.n_nodes:
        raise ValueError("vector length does not match the number of interior nodes")
    if s < 0:
        raise ValueError("heat time must be nonnegative")
    lam, V = ops.eig(j)
    coeff = V.T @ (ops.mass(j)[:, None] * v if v.ndim > 1 else ops.mass(j) * v)
    damp = np.exp(-s * lam)
    return V @ (damp[:, None] * coeff if v.ndim > 1 else damp * coeff)


# -- the two-metric heat identity ---------------------------------------------------------

@dataclass
class HPWResult:
    s: float
    trials: int
    max_residual: float
    residuals: np.ndarray
    reference: np.ndarray


def hpw_operator(ops: DiscreteOperatorSet, s: float) -> np.ndarray:
    """Matrix of the comparison operator ``T`` on node vectors.

    ``T = (Shat_h P^h_hat)^* Uhat Shat_g P^g_hat - (S_h P^h)^* U S_g P^g_{s/2} H_g P^g_{s/2}``,
    with ``P_hat = D P`` and adjoints taken in the weighted inner products
    of ``L^2(h)`` and the ``h`` one-forms.  Every factor is formed explicitly.
    """
    D = ops.gradient
    Ph, Pg, Pg2 = ops.heat("h", s), ops.heat("g", s), ops.heat("g", s / 2)
    Hg = ops.laplacian_g
    Mh = ops.mass_h
    shat_h = _block_apply(ops.points.s_hat_abs_sqrt, D @ Ph)
    shat_g = _block_apply(ops.points.s_hat_abs_sqrt, D @ Pg)
    uhat = _block_apply(ops.points.u_hat, shat_g)
    shat_h_adj = (shat_h.T @ _block_diag(ops.omega_h)) / Mh[:, None]
    s_sqrt = np.sqrt(np.abs(ops.nodes.s))
    u = np.sign(ops.nodes.s) / np.sqrt(ops.nodes.rho)
    s_h = s_sqrt[:, None] * Ph
    s_h_adj = (s_h.T * Mh[None, :]) / Mh[:, None]
    scalar = s_sqrt[:, None] * (Pg2 @ Hg @ Pg2)
    return shat_h_adj @ uhat - s_h_adj @ (u[:, None] * scalar)


def hpw_formula_check(ops: DiscreteOperatorSet, s: float, trials: int = 20, seed: int = 0) -> HPWResult:
    """Relative residual of ``<f_h, T f_g>_h = <H_h f_h, P^h I P^g f_g>_h - <f_h, P^h I P^g H_g f_g>_h``.

    The right-hand side is formed from the heat semigroups and Laplacians
    only; the left-hand side from the pointwise deviation operators.
    """
    if s <= 0:
        raise ValueError("heat time must be positive")
    T = hpw_operator(ops, s)
    Ph, Pg = ops.heat("h", s), ops.heat("g", s)
    Hh, Hg, Mh = ops.laplacian_h, ops.laplacian_g, ops.mass_h
    rng = np.random.default_rng(seed)
    res, ref = np.empty(trials), np.empty(trials)
    for k in range(trials):
        fg, fh = rng.standard_normal((2, ops.geo.n_nodes))
        lhs = float(np.dot(fh * Mh, T @ fg))
        a = float(np.dot((Hh @ fh) * Mh, Ph @ (Pg @ fg)))
        b = float(np.dot(fh * Mh, Ph @ (Pg @ (Hg @ fg))))
        scale = abs(a) + abs(b)
        ref[k] = a - b
        res[k] = abs(lhs - (a - b)) / scale if scale > 0 else abs(lhs)
    return HPWResult(s, trials, float(np.max(res)), res, ref)


# -- Hilbert-Schmidt chain --------------------------------------------------------------------

@dataclass
class HSInequality:
    """``lhs <= majorant`` for a squared Hilbert-Schmidt norm."""

    name: str
    j: str
    lhs: float
    majorant: float
    delta_majorant: float

    @property
    def slack(self) -> float:
        """Smaller of the two gaps; may be a few ulps negative where a step is an equality."""
        return min(self.majorant - self.lhs, self.delta_majorant - self.majorant)

    @property
    def tolerance(self) -> float:
        # in 1-d |S_hat| = delta exactly, so the last step is an equality up to rounding
        return 1e-12 * max(1.0, abs(self.delta_majorant))

    @property
    def holds(self) -> bool:
        return self.slack >= -self.tolerance


@dataclass
class HSChainReport:
    s: float
    inequalities: list
    max_row_sum: float
    min_kernel: float
    substochastic: bool
    literal_first_majorant: float
    literal_first_holds: bool
    notes: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.substochastic and all(q.holds for q in self.inequalities)

    def norms(self) -> dict:
        return {f"{q.name}[{q.j}]": math.sqrt(max(q.lhs, 0.0)) for q in self.inequalities}


def _hs_sq_nodes(X: np.ndarray, m_out: np.ndarray, m_in: np.ndarray) -> float:
    return float(np.sum((np.sqrt(m_out)[:, None] * X / np.sqrt(m_in)[None, :]) ** 2))


def hs_norm_chain(ops: DiscreteOperatorSet, s: float) -> HSChainReport:
    """Squared HS norms of the three compact pieces and their explicit majorants.

    ``Psi4_j(x) = max_y k_j(x, y)`` is the discrete on-diagonal proxy.  Using
    ``sum_y k(x, y) w(y) <= 1`` one gets ``sum_y k(x, y)^2 w(y) <= Psi4_j(x)``,
    and the pointwise bounds ``|S| <= delta`` and ``|Shat| <= delta`` give:

    * ``(rho - 1) P^g``: ``<= sup|rho S| sum |S| Psi4_g w_g <= sup|rho S| sum delta Psi4_g w_g``
      (``rho - 1 = rho^{1/2} S``);
    * ``|S|^{1/2} P^j``: ``<= sum |S| Psi4_j w_j <= sum delta Psi4_j w_j``;
    * ``|Shat|^{1/2} D P^j``: ``<= sum_q omega_q |Shat_q| G_j(q) <= sum_q omega_q delta_q G_j(q)``
      with ``G_j(q)`` the dual-metric norm of the gradient kernel row.

    The first majorant with ``sup|rho^{-1} S|`` in place of ``sup|rho S|`` is
    reported separately; it is not a valid bound when ``rho > 1`` somewhere.
    """
    if s <= 0:
        raise ValueError("heat time must be positive")
    nodes, pts = ops.nodes, ops.points
    ineqs = []
    max_row, min_k = 0.0, math.inf
    notes = []
    psi4 = {}
    for j in ("g", "h"):
        k = ops.heat_kernel(j, s)
        w = ops.mass(j)
        rows = k @ w
        max_row = max(max_row, float(np.max(rows)))
        min_k = min(min_k, float(np.min(k)))
        psi4[j] = np.max(k, axis=1)
    substochastic = max_row <= 1 + ROW_SUM_TOL and min_k >= -1e-12 * max(float(np.max(psi4["g"])), 1.0)
    if not substochastic:
        notes.append("discrete heat kernel is not sub-stochastic; the chain's first step fails")

    wg = ops.mass_g
    Pg = ops.heat("g", s)
    lhs1 = _hs_sq_nodes((nodes.rho - 1)[:, None] * Pg, wg, wg)
    abs_s = np.abs(nodes.s)
    c_rho = float(np.max(np.abs(nodes.rho * nodes.s)))
    c_lit = float(np.max(np.abs(nodes.s / nodes.rho)))
    base = float(np.sum(abs_s * psi4["g"] * wg))
    ineqs.append(HSInequality("(I*I-1)P", "g", lhs1, c_rho * base, c_rho * float(np.sum(nodes.delta * psi4["g"] * wg))))
    literal = c_lit * base

    for j in ("g", "h"):
        w = ops.mass(j)
        P = ops.heat(j, s)
        lhs2 = _hs_sq_nodes(np.sqrt(abs_s)[:, None] * P, w, w)
        ineqs.append(HSInequality("S P", j, lhs2, float(np.sum(abs_s * psi4[j] * w)), float(np.sum(nodes.delta * psi4[j] * w))))

        grad = ops.gradient @ P / w[None, :]  # gradient kernel rows, (Q*d, N)
        om = ops.omega(j)
        Q, dd, _ = om.shape
        # omega_q * |row|^2 in the dual metric, summed against w(y)
        weighted = np.einsum("qa...,qab,qb...->q...", grad.reshape(Q, dd, -1), om, grad.reshape(Q, dd, -1))
        per_q = weighted @ w
        X = _block_apply(pts.s_hat_abs_sqrt, ops.gradient @ P)
        chol = np.linalg.cholesky(om)
        Xw = np.einsum("qba,qb...->qa...", chol, X.reshape(Q, dd, -1)).reshape(Q * dd, -1)
        lhs3 = float(np.sum((Xw / np.sqrt(w)[None, :]) ** 2))
        ineqs.append(HSInequality("Shat Phat", j, lhs3, float(np.sum(pts.s_hat_norm * per_q)), float(np.sum(pts.delta * per_q))))
    return HSChainReport(s, ineqs, max_row, min_k, substochastic, literal, ineqs[0].lhs <= literal * (1 + 1e-12), notes)


def hs_refinement_study(builder, sizes=(50, 100, 200), s: float = 0.5, **kwargs) -> dict:
    """HS norms of the chain on successively refined grids and their successive gaps."""
    norms = []
    for n in sizes:
        rep = hs_norm_chain(build_operators(builder(n=n, **kwargs)), s)
        norms.append(rep.norms())
    keys = list(norms[0])
    gaps = [max(abs(b[k] - a[k]) for k in keys) for a, b in zip(norms, norms[1:])]
    return {"sizes": list(sizes), "norms": norms, "gaps": gaps}


# -- spectra ------------------------------------------------------------------------------

@dataclass
class SpectrumComparison:
    eigenvalues_g: np.ndarray
    eigenvalues_h: np.ndarray
    ratio_min: float
    ratio_max: float
    qi_constant: float
    band: tuple

    @property
    def inside_band(self) -> bool:
        lo, hi = self.band
        return self.ratio_min >= lo * (1 - 1e-12) and self.ratio_max <= hi * (1 + 1e-12)

    def write_table(self, path) -> None:
        k = np.arange(self.eigenvalues_g.size)
        ratio = self.eigenvalues_h / self.eigenvalues_g
        data = np.column_stack([k, self.eigenvalues_g, self.eigenvalues_h, ratio])
        np.savetxt(path, data, delimiter=",", header="k,lambda_g,lambda_h,ratio", comments="", fmt=["%d", "%.17g", "%.17g", "%.17g"])


def spectrum_compare(ops: DiscreteOperatorSet) -> SpectrumComparison:
    """Sorted spectra of both Laplacians and the range of ``lambda_k(h) / lambda_k(g)``.

    If ``C^{-1} g <= h <= C g`` at every node and quadrature point, the energy
    and mass forms are comparable with constants ``C^{1 + m/2}`` and ``C^{m/2}``,
    so by min-max every ratio lies in ``[C^{-(m+1)}, C^{m+1}]``.
    """
    lg, lh = ops.eig("g")[0], ops.eig("h")[0]
    ratio = lh / lg
    eig = np.concatenate([ops.nodes.eigenvalues.ravel(), ops.points.eigenvalues.ravel()])
    C = float(max(np.max(eig), np.max(1 / eig)))
    m = ops.geo.dim
    band = (C ** -(m + 1), C ** (m + 1))
    return SpectrumComparison(lg, lh, float(np.min(ratio)), float(np.max(ratio)), C, band)
