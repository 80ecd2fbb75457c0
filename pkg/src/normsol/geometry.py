"""Geometry of the L2 spheres S = {u : int u^2 = r^2} at a ground state.

Stereographic chart, H^1-orthogonal tangent projection, the tangent Hessian of
the constrained energy, its Morse index, and the sign of the degree of the
projected gradient map of the uncoupled product system.

The discrete H^1 space consists of fields vanishing at R; its Gram matrix is
K + W (stiffness plus diagonal quadrature weights) on the nodes 0..M-2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ChartError, DegenerateError
from .ground import GroundState
from .radial import RadialField, grad_norm_sq, integrate, l2_norm_sq

ANTIPODE_DELTA = 1e-8
# Up to this many dofs the tangent eigenproblem is solved densely.  The upper
# spectrum clusters near 1 when kappa >> 1, which stalls Lanczos for k ~ 100.
DENSE_MAX_DOF = 4096


@dataclass(frozen=True)
class Chart:
    """Stereographic chart of the sphere of radius r centred at base point omega."""

    base: RadialField
    radius: float

    def __post_init__(self) -> None:
        m = l2_norm_sq(self.base)
        if abs(m - self.radius**2) > 1e-8 * self.radius**2:
            raise ChartError(f"base point has |w|_2^2 = {m:.12g}, expected r^2 = {self.radius**2:.12g}")

    @classmethod
    def at(cls, base: RadialField) -> "Chart":
        return cls(base, float(np.sqrt(l2_norm_sq(base))))


def _l2(u: RadialField, v: RadialField) -> float:
    return integrate(u * v)


def stereo_fwd(chart: Chart, u: RadialField, delta: float = ANTIPODE_DELTA) -> RadialField:
    """sigma(u) = (r^2 u - (int w u) w) / (r^2 + int w u), a tangent vector at w."""
    r2 = chart.radius**2
    m = l2_norm_sq(u)
    if abs(m - r2) > 1e-8 * r2:
        raise ChartError(f"point is not on the sphere: |u|_2^2 = {m:.12g}, r^2 = {r2:.12g}")
    wu = _l2(chart.base, u)
    denom = r2 + wu
    if denom <= delta * r2:
        raise ChartError("near antipode: the chart excludes -w")
    return (r2 * u - wu * chart.base) / denom


def stereo_inv(chart: Chart, v: RadialField) -> RadialField:
    """sigma^{-1}(v) = (2 r^2 v + (r^2 - |v|_2^2) w) / (r^2 + |v|_2^2)."""
    r2 = chart.radius**2
    wv = _l2(chart.base, v)
    if abs(wv) > 1e-8 * chart.radius * max(1.0, np.sqrt(l2_norm_sq(v))):
        raise ChartError(f"vector is not tangent: int w v = {wv:.3e}")
    v2 = l2_norm_sq(v)
    return (2 * r2 * v + (r2 - v2) * chart.base) / (r2 + v2)


def _dof(field_or_values) -> np.ndarray:
    v = field_or_values.values if isinstance(field_or_values, RadialField) else field_or_values
    return np.asarray(v)[:-1]


def _embed(grid, dof_values: np.ndarray) -> RadialField:
    return RadialField(grid, np.append(dof_values, 0.0))


def _gram(grid) -> sp.csc_matrix:
    """H^1 Gram matrix restricted to fields with u(R) = 0."""
    n = grid.M - 1
    K = grid.stiffness()[:n, :n]
    return (K + sp.diags(grid.weights[:n])).tocsc()


def riesz_of_l2(base: RadialField) -> RadialField:
    """g with <g, v>_{H^1} = int base v for all v, i.e. (-Lap + 1) g = base, g(R) = 0."""
    grid = base.grid
    G = _gram(grid)
    rhs = grid.weights[:-1] * _dof(base)
    return _embed(grid, spla.spsolve(G, rhs))


def tangent_project(base: RadialField, v: RadialField) -> RadialField:
    """H^1-orthogonal projection of v onto {w : int base w = 0}."""
    g = riesz_of_l2(base)
    bg = _l2(base, g)
    if not bg > 0:
        raise AssertionError("int base * g must be positive for a nonzero base")
    return v - (_l2(base, v) / bg) * g


@dataclass(frozen=True)
class TangentBasis:
    """H^1-orthonormal vectors e_1..e_k (rows of ``vectors``) with int w e_a = 0."""

    base: RadialField
    vectors: np.ndarray
    eigenvalues: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    def field(self, a: int) -> RadialField:
        return RadialField(self.base.grid, self.vectors[a])

    def gram(self) -> np.ndarray:
        G = _gram(self.base.grid)
        E = self.vectors[:, :-1]
        return E @ (G @ E.T)

    def tangency(self) -> np.ndarray:
        return self.vectors @ (self.base.grid.weights * self.base.values)


def hessian_form(gs: GroundState) -> sp.csc_matrix:
    """Matrix of I''(w)[v, v] = int |grad v|^2 + kappa int v^2 - p mu int w^{p-1} v^2 on u(R) = 0."""
    grid = gs.grid
    n = grid.M - 1
    K = grid.stiffness()[:n, :n]
    w = np.maximum(_dof(gs.field), 0.0)
    pot = grid.weights[:n] * (gs.kappa - gs.p * gs.mu * w ** (gs.p - 1))
    return (K + sp.diags(pot)).tocsc()


def tangent_hessian(gs: GroundState, basis: TangentBasis) -> np.ndarray:
    """k x k matrix H_ab = I''(w)[e_a, e_b] over the tangent basis."""
    E = basis.vectors[:, :-1]
    H = E @ (hessian_form(gs) @ E.T)
    return 0.5 * (H + H.T)


def orthonormal_tangent_basis(base: RadialField, vectors) -> TangentBasis:
    """Project arbitrary fields to the tangent space and H^1-orthonormalize them (in order)."""
    grid = base.grid
    G = _gram(grid)
    g = riesz_of_l2(base)
    bg = _l2(base, g)
    cols = []
    for v in vectors:
        vals = v.values if isinstance(v, RadialField) else np.asarray(v, dtype=float)
        vals = vals.copy()
        vals[-1] = 0.0
        vals = vals - (grid.weights @ (base.values * vals)) / bg * g.values
        cols.append(vals[:-1])
    E = np.array(cols).T
    # Cholesky-based orthonormalization in the G inner product, twice for stability
    for _ in range(2):
        S = E.T @ (G @ E)
        L = np.linalg.cholesky(0.5 * (S + S.T))
        E = np.linalg.solve(L, E.T).T
    full = np.hstack([E.T, np.zeros((E.shape[1], 1))])
    return TangentBasis(base, full)


class _ShiftedInverse(spla.LinearOperator):
    """(S + U C U^T)^{-1} for sparse S and a rank-2 symmetric update, via Woodbury."""

    def __init__(self, S, U, C):
        self.lu = spla.splu(S.tocsc())
        self.U = U
        SiU = self.lu.solve(U)
        self.SiU = SiU
        self.core = np.linalg.inv(np.linalg.inv(C) + U.T @ SiU)
        super().__init__(dtype=float, shape=S.shape)

    def _matvec(self, x):
        x = np.ravel(x)
        y = self.lu.solve(x)
        return y - self.SiU @ (self.core @ (self.U.T @ y))


def lowest_tangent_basis(gs: GroundState, k: int) -> TangentBasis:
    """Lowest-k eigenpairs of the tangent Hessian w.r.t. the H^1 inner product.

    The constrained problem is posed on the full dof space through the
    H^1-orthogonal projector P = I - g c^T / (c^T g), with c = W w and g its
    Riesz representative:  A = P^T H P + tau c c^T/(c^T g).  The normal
    direction g becomes an eigenvector with eigenvalue tau, placed above the
    spectrum; every other eigenvector is tangent.  Shift-invert Lanczos is run
    below the spectrum with a Woodbury solve for the rank-2 part; small grids
    go to LAPACK directly.
    """
    grid = gs.grid
    n = grid.M - 1
    if not 1 <= k < n - 1:
        raise ValueError(f"need 1 <= k < {n - 1}")
    H = hessian_form(gs)
    G = _gram(grid)
    c = grid.weights[:n] * _dof(gs.field)
    g = spla.spsolve(G, c)
    cg = float(c @ g)
    Hg = H @ g
    gHg = float(g @ Hg)
    w = np.maximum(_dof(gs.field), 0.0)
    upper = max(1.0, gs.kappa)
    lower = -gs.p * gs.mu * float(np.max(w ** (gs.p - 1)))
    tau = 10.0 * (upper - lower) + upper
    beta = gHg / cg**2 + tau / cg

    # A = H - (c Hg^T + Hg c^T)/cg + beta c c^T
    U = np.column_stack([c, Hg])
    C = np.array([[beta, -1.0 / cg], [-1.0 / cg, 0.0]])

    if n <= DENSE_MAX_DOF:
        A = H.toarray() + U @ C @ U.T
        vals, vecs = sla.eigh(A, G.toarray(), subset_by_index=[0, k - 1], driver="gvx")
    else:
        def matvec(x):
            x = np.ravel(x)
            return H @ x + U @ (C @ (U.T @ x))

        A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
        sigma = lower - 1.0
        OPinv = _ShiftedInverse((H - sigma * G).tocsc(), U, C)
        vals, vecs = spla.eigsh(A, k=k, M=G, sigma=sigma, which="LM", OPinv=OPinv, tol=1e-12)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # G-normalize against roundoff
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, G @ vecs))
    vecs = vecs / norms
    full = np.hstack([vecs.T, np.zeros((k, 1))])
    return TangentBasis(gs.field, full, vals)


def morse_index(H: np.ndarray) -> tuple[int, float]:
    """(number of negative eigenvalues, smallest |eigenvalue|) of a symmetric matrix."""
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    return int(np.sum(ev < 0)), float(np.min(np.abs(ev)))


def morse_spectrum(gs: GroundState, k: int) -> np.ndarray:
    basis = lowest_tangent_basis(gs, k)
    return np.linalg.eigvalsh(tangent_hessian(gs, basis))


def dilation_direction(gs: GroundState) -> RadialField:
    """d/ds (s * w) at s = 0, i.e. (N/2) w + r w'(r)."""
    grid = gs.grid
    w = gs.field.values
    dw = np.gradient(w, grid.h, edge_order=2)
    dw[0] = 0.0
    vals = 0.5 * grid.N * w + grid.r * dw
    vals[-1] = 0.0
    return RadialField(grid, vals)


def constrained_energy(u: RadialField, p: float, mu: float) -> float:
    """J(u) = 1/2 int |grad u|^2 - mu/(p+1) int (u^+)^{p+1}."""
    return 0.5 * grad_norm_sq(u) - mu / (p + 1) * integrate(u.positive_part() ** (p + 1))


def chart_energy(gs: GroundState, chart: Chart, v: RadialField) -> float:
    """Phi(v) = J(sigma^{-1}(v)).  Its Hessian at 0 is 4 I''(w) on tangent vectors
    (the inverse chart has derivative 2 Id at the origin)."""
    return constrained_energy(stereo_inv(chart, v), gs.p, gs.mu)


def degree_sign(params, ground_states, k: int) -> int:
    """Product over components of sign det A_{k,i}, A_{k,i} the k x k tangent Hessian block.

    ``params`` is accepted for interface symmetry (component count check only).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if params is not None and len(ground_states) != params.ell:
        raise ValueError(f"expected {params.ell} ground states, got {len(ground_states)}")
    sign = 1
    cache = {}
    for gs in ground_states:
        key = (id(gs.field), gs.kappa, gs.mu, gs.p)
        if key not in cache:
            H = tangent_hessian(gs, lowest_tangent_basis(gs, k))
            ev = np.linalg.eigvalsh(H)
            scale = np.max(np.abs(ev))
            if np.min(np.abs(ev)) < 1e-12 * scale:
                raise DegenerateError("degenerate projection, increase k")
            s, _ = np.linalg.slogdet(H)
            cache[key] = int(s)
        sign *= cache[key]
    return sign
