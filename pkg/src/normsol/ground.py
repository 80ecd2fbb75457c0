"""Positive radial ground state of  -Lap u + kappa u = mu (u^+)^p  and its scaling laws."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .exceptions import ConvergenceError, HypothesisError, ShootingError, TruncationError
from .radial import (
    RadialField,
    RadialGrid,
    apply_laplacian,
    grad_norm_sq,
    integrate,
    make_grid,
)

TAIL_WARN = 1e-10
TAIL_ERROR = 1e-8


def check_scalar_hypotheses(N: int, p: float, mu: float = 1.0) -> None:
    """Raise HypothesisError unless 2 <= N <= 4 and 1+4/N < p < (N+2)/(N-2)."""
    if N not in (2, 3, 4):
        raise HypothesisError(f"(H): 2 ≤ N ≤ 4 violated, N={N}")
    if not p > 1 + 4 / N:
        raise HypothesisError(f"(H): p ≤ 1+4/N (need p > {1 + 4 / N:.6g}, got p={p:g})")
    if N > 2 and not p < (N + 2) / (N - 2):
        raise HypothesisError(f"(H): p ≥ (N+2)/(N-2) (need p < {(N + 2) / (N - 2):.6g}, got p={p:g})")
    if not mu > 0:
        raise HypothesisError(f"(H): μ_i > 0 violated, μ={mu:g}")


def tail_value(u: RadialField, frac: float = 0.95) -> float:
    """Largest |u| on the outer part r >= frac * R of the grid."""
    mask = u.grid.r >= frac * u.grid.R
    return float(np.max(np.abs(u.values[mask])))


@dataclass(frozen=True)
class GroundState:
    """Positive solution of the scalar problem with its multiplier and mass."""

    field: RadialField
    p: float
    mu: float
    kappa: float
    mass: float

    @property
    def grid(self) -> RadialGrid:
        return self.field.grid

    @property
    def N(self) -> int:
        return self.field.grid.N

    @property
    def amplitude(self) -> float:
        return float(self.field.values[0])

    @property
    def residual(self) -> float:
        return scalar_residual_norm(self.field, self.p, self.mu, self.kappa)


def scalar_residual(u: RadialField, p: float, mu: float, kappa: float) -> np.ndarray:
    """Pointwise -Lap u + kappa u - mu (u^+)^p; last entry is the Dirichlet row u(R)."""
    v = u.values
    res = -apply_laplacian(u).values + kappa * v - mu * np.maximum(v, 0.0) ** p
    res[-1] = v[-1]
    return res


def scalar_residual_norm(u: RadialField, p: float, mu: float, kappa: float) -> float:
    res = scalar_residual(u, p, mu, kappa)
    return float(np.max(np.abs(res)) / max(1.0, np.max(np.abs(u.values))))


def _laplacian_matrix(grid: RadialGrid) -> sp.csr_matrix:
    """Matrix of -Lap_h (rows scaled by 1/w_j); the last row is left as is."""
    return sp.diags(1.0 / grid.weights) @ grid.stiffness()


def roundoff_floor(grid: RadialGrid, kappa: float) -> float:
    """Relative residual attainable in double precision with spacing h."""
    return 8.0 * np.finfo(float).eps * (4.0 / grid.h**2 + abs(kappa))


def newton_scalar(
    u0: RadialField, p: float, mu: float, kappa: float, tol: float = 1e-9, max_iter: int = 30
) -> RadialField:
    """Newton on the discretized scalar BVP with kappa fixed and u(R) = 0."""
    grid = u0.grid
    A = _laplacian_matrix(grid).tolil()
    A[grid.M - 1, :] = 0.0
    A = A.tocsr()
    bc = np.zeros(grid.M)
    bc[-1] = 1.0
    interior = np.ones(grid.M)
    interior[-1] = 0.0

    u = u0.values.copy()
    u[-1] = 0.0
    tol = max(tol, roundoff_floor(grid, kappa))
    history = []
    for _ in range(max_iter):
        up = np.maximum(u, 0.0)
        res = A @ u + interior * (kappa * u - mu * up**p)
        res[-1] = u[-1]
        scale = max(1.0, np.max(np.abs(u)))
        rnorm = np.max(np.abs(res)) / scale
        history.append(rnorm)
        if rnorm <= tol:
            return RadialField(grid, u)
        J = A + sp.diags(interior * (kappa - p * mu * up ** (p - 1)) + bc)
        du = spla.spsolve(J.tocsc(), -res)
        if not np.all(np.isfinite(du)):
            raise ConvergenceError("singular Jacobian in scalar Newton", "singular", history)
        u = u + du
        u[-1] = 0.0  # the Dirichlet row is the identity; drop solver round-off
        if np.max(np.abs(du)) <= 1e-15 * scale:
            break
    up = np.maximum(u, 0.0)
    res = A @ u + interior * (kappa * u - mu * up**p)
    res[-1] = u[-1]
    rnorm = np.max(np.abs(res)) / max(1.0, np.max(np.abs(u)))
    if rnorm <= tol:
        return RadialField(grid, u)
    raise ConvergenceError(
        f"scalar Newton did not reach tol={tol:g} (last residual {rnorm:.3e})", "max-iterations", history
    )


def _shoot(N, p, mu, kappa, a, r_max):
    """Integrate the radial ODE from u(0)=a; return (+1 crossed, -1 turned, 0 neither), solution."""
    r0 = 1e-6 * min(1.0, 1.0 / np.sqrt(kappa))
    c = kappa * a - mu * a**p
    y0 = [a + c * r0**2 / (2 * N), c * r0 / N]

    def rhs(r, y):
        u, v = y
        return [v, -(N - 1) / r * v + kappa * u - mu * max(u, 0.0) ** p]

    def crossed(r, y):
        return y[0]

    crossed.terminal = True
    crossed.direction = -1

    def turned(r, y):
        return y[1]

    turned.terminal = True
    turned.direction = 1

    sol = solve_ivp(
        rhs, (r0, r_max), y0, method="DOP853", events=[crossed, turned],
        rtol=1e-12, atol=1e-14, dense_output=True,
    )
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def shoot_amplitude(N: int, p: float, mu: float, r_max: float, kappa: float = 1.0, max_bisect: int = 200):
    """Bisect the central amplitude between 'turns back up' and 'crosses zero'.

    Returns the amplitude on the non-crossing side of the bracket together with
    its trajectory (valid up to where it departs from the decaying branch).
    """
    a_eq = (kappa / mu) ** (1.0 / (p - 1))
    lo = a_eq * (1 + 1e-9)
    hi = 10.0 * a_eq
    for _ in range(60):
        if _shoot(N, p, mu, kappa, hi, r_max)[0] > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ShootingError("no amplitude found whose trajectory crosses zero")
    if _shoot(N, p, mu, kappa, lo, r_max)[0] > 0:
        raise ShootingError("lower amplitude already crosses zero; bracket invalid")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _shoot(N, p, mu, kappa, mid, r_max)[0] > 0:
            hi = mid
        else:
            lo = mid
    return lo, _shoot(N, p, mu, kappa, lo, r_max)[1]


def _guess_from_trajectory(grid: RadialGrid, sol, kappa: float) -> np.ndarray:
    """Shooting profile up to 90% of its valid range, then a Yukawa-type tail."""
    r = grid.r
    r_d = 0.9 * sol.t[-1]
    u_d = float(sol.sol(r_d)[0])
    out = np.empty(grid.M)
    inner = r <= r_d
    out[inner] = sol.sol(np.maximum(r[inner], sol.t[0]))[0]
    rr = r[~inner]
    out[~inner] = u_d * (r_d / rr) ** ((grid.N - 1) / 2) * np.exp(-np.sqrt(kappa) * (rr - r_d))
    out[-1] = 0.0
    return np.maximum(out, 0.0)


def solve_omega0(N: int, p: float, mu: float, grid: RadialGrid, tol: float = 1e-9) -> GroundState:
    """Positive decaying solution of -Lap u + u = mu (u^+)^p on the grid.

    Shooting with bisection isolates the crossing-free branch; Newton on the
    discrete boundary value problem then polishes it to ``tol`` (sup norm of the
    residual relative to max(1, |u|_inf)).
    """
    check_scalar_hypotheses(N, p, mu)
    if grid.N != N:
        raise HypothesisError(f"grid dimension {grid.N} does not match N={N}")
    _, sol = shoot_amplitude(N, p, mu, grid.R)
    u0 = RadialField(grid, _guess_from_trajectory(grid, sol, 1.0))
    u = newton_scalar(u0, p, mu, 1.0, tol=tol)
    v = u.values
    if np.min(v[:-1]) <= 0 or np.any(np.diff(v) >= 0):
        raise ConvergenceError("Newton left the positive decreasing branch", "positivity")
    tail = tail_value(u)
    if tail > TAIL_WARN:
        warnings.warn(f"ground state tail {tail:.2e} exceeds {TAIL_WARN:g}; increase R", RuntimeWarning)
    return GroundState(u, float(p), float(mu), 1.0, integrate(u * u))


@lru_cache(maxsize=64)
def cached_omega0(N: int, p: float, mu: float, R: float, M: int, tol: float = 1e-9) -> GroundState:
    return solve_omega0(N, p, mu, make_grid(N, R, M), tol)


def rescale_ground(gs: GroundState, gamma: float, target_grid: RadialGrid) -> GroundState:
    """x -> gamma^{2/(p-1)} omega(gamma x) on ``target_grid`` with kappa scaled by gamma^2.

    Cubic interpolation with zero extension beyond the source radius.  When
    ``target_grid`` is the source grid shrunk by gamma the nodes coincide and
    the rescaled field is a discrete solution again.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    src = gs.grid
    if target_grid.N != src.N:
        raise ValueError("target grid dimension differs from the ground state")
    spline = CubicSpline(src.r, gs.field.values, bc_type=((1, 0.0), "not-a-knot"))
    s = gamma * target_grid.r
    inside = s <= src.R * (1 + 1e-14)
    vals = np.zeros(target_grid.M)
    vals[inside] = spline(np.minimum(s[inside], src.R))
    vals *= gamma ** (2.0 / (gs.p - 1))
    vals[-1] = 0.0
    u = RadialField(target_grid, vals)
    tail = tail_value(u)
    if tail > TAIL_ERROR:
        raise TruncationError(
            f"rescaled ground state does not decay on the target grid (tail {tail:.2e} > {TAIL_ERROR:g})"
        )
    return GroundState(u, gs.p, gs.mu, gs.kappa * gamma**2, integrate(u * u))


def mass_exponent(N: int, p: float) -> float:
    """Exponent e in  |omega_gamma|_2^2 = gamma^e |omega|_2^2."""
    return 4.0 / (p - 1) - N


def gamma_for_mass(gs: GroundState, r_target: float) -> float:
    """Scaling factor that gives the rescaled ground state mass r_target^2."""
    if not r_target > 0:
        raise ValueError("target L2 norm must be positive")
    return float((r_target**2 / gs.mass) ** (1.0 / mass_exponent(gs.N, gs.p)))


def pohozaev_coefficient(N: int, p: float) -> float:
    return 0.5 * N * (p - 1) / (p + 1)


def _dilation_integrals(gs: GroundState) -> tuple[float, float]:
    """(int |grad w|^2, int mu w^{p+1})."""
    w = gs.field.positive_part()
    return grad_norm_sq(gs.field), gs.mu * integrate(w ** (gs.p + 1))


def _first_dilation_derivative(grad: float, nonlin: float, N: int, p: float) -> float:
    # shared by pohozaev_defect and dilation_curve_check
    return grad - pohozaev_coefficient(N, p) * nonlin


def pohozaev_defect(gs: GroundState) -> float:
    """int |grad w|^2 - (N/2)(p-1)/(p+1) int mu w^{p+1}; vanishes on true solutions."""
    g, nl = _dilation_integrals(gs)
    return _first_dilation_derivative(g, nl, gs.N, gs.p)


def pohozaev_ratio(gs: GroundState) -> float:
    g, nl = _dilation_integrals(gs)
    return g / nl


def dilation_curve_check(gs: GroundState) -> tuple[float, float]:
    """First and second s-derivatives at s=0 of J(s * w), s * w = e^{Ns/2} w(e^s x).

    J(u) = 1/2 int |grad u|^2 - 1/(p+1) int mu (u^+)^{p+1}.
    """
    g, nl = _dilation_integrals(gs)
    N, p = gs.N, gs.p
    first = _first_dilation_derivative(g, nl, N, p)
    second = 2.0 * g - (N**2 / 4.0) * (p - 1) ** 2 / (p + 1) * nl
    return first, second


def dilate(u: RadialField, s: float) -> RadialField:
    """(s * u)(r) = e^{Ns/2} u(e^s r), resampled on the same grid by cubic interpolation."""
    g = u.grid
    spline = CubicSpline(g.r, u.values, bc_type=((1, 0.0), "not-a-knot"))
    x = np.exp(s) * g.r
    vals = np.where(x <= g.R, spline(np.minimum(x, g.R)), 0.0)
    return RadialField(g, np.exp(g.N * s / 2) * vals)
