"""The coupled system with mass constraints.

    -Lap u_i + kappa_i u_i = mu_i (u_i^+)^p + t sum_{j != i} lam_ij (u_i^+)^a_ij (u_j^+)^b_ij
    int u_i^2 = r_i^2

Unknowns are the ell fields (all M nodes, the last one pinned to zero) and the
ell multipliers.  The multipliers are Newton unknowns; the closed-form
multiplier of a state is only used as a consistency check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConvergenceError
from .radial import RadialField, RadialGrid, grad_norm_sq, integrate

POSITIVITY_FLAG = 1e-12


class RegimeKind(str, Enum):
    COOPERATIVE = "cooperative"
    COOPERATIVE_BORDERLINE = "cooperative-borderline"
    COMPETITIVE = "competitive"
    INVALID = "invalid"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.kind is not RegimeKind.INVALID

    def __str__(self) -> str:
        if self.valid:
            return self.kind.value
        return f"invalid: {self.reason}"


def _matrix(values, ell: int, name: str) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim == 0:
        a = np.full((ell, ell), float(a))
    if a.shape != (ell, ell):
        raise ValueError(f"{name} must be a scalar or an {ell}x{ell} matrix, got shape {a.shape}")
    a = a.copy()
    np.fill_diagonal(a, 0.0)
    a.setflags(write=False)
    return a


def _vector(values, ell: int, name: str) -> tuple[float, ...]:
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if v.size == 1 and ell > 1:
        v = np.full(ell, float(v[0]))
    if v.shape != (ell,):
        raise ValueError(f"{name} must have {ell} entries, got {v.size}")
    return tuple(float(x) for x in v)


@dataclass(frozen=True)
class SystemParams:
    """Parameters (N, p, ell, mu, r, lambda, alpha, beta).

    Coupling matrices are ell x ell with an ignored (zeroed) diagonal.  The
    regime is computed once at construction and never changes.
    """

    N: int
    p: float
    mu: tuple
    r: tuple
    lam: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    unsafe_override: bool = False
    regime: Regime = field(init=False, compare=False)

    @classmethod
    def build(cls, N, p, mu, r, lam=0.0, alpha=2.0, beta=1.0, ell=None, unsafe_override=False):
        if ell is None:
            ell = len(np.atleast_1d(mu))
        return cls(
            int(N), float(p), _vector(mu, ell, "mu"), _vector(r, ell, "r"),
            _matrix(lam, ell, "lambda"), _matrix(alpha, ell, "alpha"), _matrix(beta, ell, "beta"),
            bool(unsafe_override),
        )

    def __post_init__(self) -> None:
        object.__setattr__(self, "regime", validate_hypotheses(self))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SystemParams):
            return NotImplemented
        return (
            (self.N, self.p, self.mu, self.r, self.unsafe_override)
            == (other.N, other.p, other.mu, other.r, other.unsafe_override)
            and np.array_equal(self.lam, other.lam)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
        )

    __hash__ = None

    @property
    def ell(self) -> int:
        return len(self.mu)

    def pairs(self):
        return [(i, j) for i in range(self.ell) for j in range(self.ell) if i != j]

    @property
    def uncoupled(self) -> bool:
        return not np.any(self.lam)

    @property
    def runnable(self) -> bool:
        """Valid regime, or a regime-level failure with the unsafe override set."""
        if self.regime.valid:
            return True
        return self.unsafe_override and not self.regime.reason.startswith("(H)")

    def replace(self, **changes) -> "SystemParams":
        kw = dict(N=self.N, p=self.p, mu=self.mu, r=self.r, lam=self.lam, alpha=self.alpha,
                  beta=self.beta, unsafe_override=self.unsafe_override)
        kw.update(changes)
        return SystemParams.build(**kw)


def _pair(i: int, j: int) -> str:
    return f"{i + 1}{j + 1}"


def validate_hypotheses(params: SystemParams) -> Regime:
    """Classify parameters against (H) and the cooperative/competitive existence regimes.

    The first violated condition is named in the reason.  ``(H)`` failures are
    prefixed with ``(H)``; they cannot be overridden.
    """
    N, p, ell = params.N, params.p, params.ell
    invalid = lambda why: Regime(RegimeKind.INVALID, why)  # noqa: E731

    if N not in (2, 3, 4):
        return invalid(f"(H): 2 ≤ N ≤ 4 violated (N={N})")
    if not p > 1 + 4 / N:
        return invalid(f"(H): p ≤ 1+4/N (p={p:g}, 1+4/N={1 + 4 / N:.6g})")
    if N > 2 and not p < (N + 2) / (N - 2):
        return invalid(f"(H): p ≥ (N+2)/(N−2) (p={p:g}, (N+2)/(N−2)={(N + 2) / (N - 2):.6g})")
    for i, m in enumerate(params.mu):
        if not m > 0:
            return invalid(f"(H): μ_i > 0 violated (μ_{i + 1}={m:g})")
    for i, ri in enumerate(params.r):
        if not ri > 0:
            return invalid(f"prescribed norms must be positive (r_{i + 1}={ri:g})")
    pairs = params.pairs()
    for i, j in pairs:
        if not params.alpha[i, j] >= 1:
            return invalid(f"(H): α_ij ≥ 1 violated (α_{_pair(i, j)}={params.alpha[i, j]:g})")
        if not params.beta[i, j] > 0:
            return invalid(f"(H): β_ij > 0 violated (β_{_pair(i, j)}={params.beta[i, j]:g})")
    if not pairs:
        return Regime(RegimeKind.COOPERATIVE)

    lam = np.array([params.lam[i, j] for i, j in pairs])
    if np.all(lam > 0):
        borderline = False
        for i, j in pairs:
            a, b = params.alpha[i, j], params.beta[i, j]
            if not a > 1 + 4 / N:
                return invalid(
                    f"α_ij ≤ 1+4/N (cooperative case needs α_ij > 1+4/N; "
                    f"α_{_pair(i, j)}={a:g}, 1+4/N={1 + 4 / N:.6g})"
                )
            if math.isclose(a + b, p, rel_tol=1e-12, abs_tol=0.0):
                if N == 2 or (N == 3 and p <= N / (N - 2)):
                    borderline = True
                    continue
                return invalid(
                    f"α_ij+β_ij ≥ p (cooperative case needs α_ij+β_ij < p; equality only allowed "
                    f"for N=2 or N=3, p ≤ 3; α+β for {_pair(i, j)} = {a + b:g})"
                )
            if not a + b < p:
                return invalid(
                    f"α_ij+β_ij ≥ p (cooperative case needs α_ij+β_ij < p; "
                    f"α+β for {_pair(i, j)} = {a + b:g}, p={p:g})"
                )
        kind = RegimeKind.COOPERATIVE_BORDERLINE if borderline else RegimeKind.COOPERATIVE
        return Regime(kind)
    if np.all(lam < 0):
        if N not in (2, 3):
            return invalid(f"competitive case needs N ∈ {{2,3}} for λ_ij < 0 (N={N})")
        lo = 1 + 4 / (N - 1)
        for i, j in pairs:
            s = params.alpha[i, j] + params.beta[i, j]
            if not s > lo:
                return invalid(
                    f"α_ij+β_ij ≤ 1+4/(N−1) (competitive case needs α_ij+β_ij > 1+4/(N−1); "
                    f"α+β for {_pair(i, j)} = {s:g}, 1+4/(N−1)={lo:.6g})"
                )
            if not s < p:
                return invalid(
                    f"α_ij+β_ij ≥ p (competitive case needs α_ij+β_ij < p; "
                    f"α+β for {_pair(i, j)} = {s:g}, p={p:g})"
                )
        return Regime(RegimeKind.COMPETITIVE)
    if np.all(lam == 0):
        return invalid("λ_ij = 0 for all pairs: uncoupled system, no existence regime applies")
    return invalid("mixed-sign λ_ij: the existence regimes need all λ_ij > 0 or all λ_ij < 0")


@dataclass(frozen=True)
class SolutionState:
    """Fields u_1..u_ell, multipliers kappa_1..kappa_ell, and homotopy parameter t."""

    fields: tuple
    kappa: tuple
    t: float

    def __post_init__(self) -> None:
        fields = tuple(self.fields)
        if not fields:
            raise ValueError("a state needs at least one field")
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValueError("all fields of a state must share one grid")
        if len(self.kappa) != len(fields):
            raise ValueError("one multiplier per field required")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"homotopy parameter outside [0, 1]: {self.t}")
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        object.__setattr__(self, "t", float(self.t))

    @property
    def grid(self) -> RadialGrid:
        return self.fields[0].grid

    @property
    def ell(self) -> int:
        return len(self.fields)

    def stacked(self) -> np.ndarray:
        """Unknown vector [u_1, ..., u_ell, kappa_1, ..., kappa_ell]."""
        return np.concatenate([f.values for f in self.fields] + [np.asarray(self.kappa)])

    @classmethod
    def from_stacked(cls, grid: RadialGrid, x: np.ndarray, ell: int, t: float) -> "SolutionState":
        M = grid.M
        fields = tuple(RadialField(grid, x[i * M:(i + 1) * M]) for i in range(ell))
        return cls(fields, tuple(x[ell * M:]), t)

    def masses(self) -> np.ndarray:
        return np.array([integrate(u * u) for u in self.fields])

    def is_admissible(self, params: SystemParams, mass_tol: float = 1e-10) -> bool:
        if any(k <= 0 for k in self.kappa):
            return False
        target = np.asarray(params.r) ** 2
        return bool(np.all(np.abs(self.masses() - target) <= mass_tol * target))


def _pos_pow(v: np.ndarray, e: float) -> np.ndarray:
    """(v^+)^e with the convention 0 wherever v <= 0 (also for e = 0)."""
    out = np.zeros_like(v)
    m = v > 0
    out[m] = v[m] ** e
    return out


def _values_of(u) -> np.ndarray:
    return u.values if isinstance(u, RadialField) else np.asarray(u, dtype=float)


def coupling_values(us: Sequence[np.ndarray], i: int, t: float, params: SystemParams) -> np.ndarray:
    ui = us[i]
    f = params.mu[i] * _pos_pow(ui, params.p)
    if t != 0.0:
        for j in range(params.ell):
            if j != i and params.lam[i, j] != 0.0:
                f = f + t * params.lam[i, j] * _pos_pow(ui, params.alpha[i, j]) * _pos_pow(
                    us[j], params.beta[i, j]
                )
    return f


def coupling_term(fields: Sequence[RadialField], i: int, t: float, params: SystemParams) -> RadialField:
    """Pointwise right-hand side f_i^t of equation i, built from positive parts."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    us = [_values_of(u) for u in fields]
    return RadialField(fields[i].grid, coupling_values(us, i, t, params))


def kappa_formula(fields: Sequence[RadialField], i: int, t: float, params: SystemParams) -> float:
    """r_i^{-2} (int f_i^t u_i - int |grad u_i|^2)."""
    ui = fields[i]
    f = coupling_term(fields, i, t, params)
    return (integrate(f * ui) - grad_norm_sq(ui)) / params.r[i] ** 2


def _neg_laplacian(grid: RadialGrid) -> sp.csr_matrix:
    return (sp.diags(1.0 / grid.weights) @ grid.stiffness()).tocsr()


def residual(state: SolutionState, params: SystemParams) -> tuple[list, np.ndarray]:
    """PDE residual fields (last entry is the Dirichlet row u_i(R)) and mass residuals."""
    grid = state.grid
    L = _neg_laplacian(grid)
    us = [f.values for f in state.fields]
    pde = []
    for i, u in enumerate(us):
        res = L @ u + state.kappa[i] * u - coupling_values(us, i, state.t, params)
        res[-1] = u[-1]
        pde.append(RadialField(grid, res))
    mass = np.array([grid.weights @ (u * u) for u in us]) - np.asarray(params.r) ** 2
    return pde, mass


def residual_vector(state: SolutionState, params: SystemParams) -> np.ndarray:
    pde, mass = residual(state, params)
    return np.concatenate([f.values for f in pde] + [mass])


def pde_residual_norms(state: SolutionState, params: SystemParams) -> np.ndarray:
    """Sup norm of each PDE residual relative to max(1, |u_i|_inf)."""
    pde, _ = residual(state, params)
    return np.array([
        np.max(np.abs(r.values)) / max(1.0, np.max(np.abs(u.values)))
        for r, u in zip(pde, state.fields)
    ])


@dataclass
class BorderedMatrix:
    """Block system [[A, B], [C, 0]] for the Newton step.

    A is the (ell*M)^2 sparse field block, B holds the multiplier columns and C
    the mass-constraint rows.  ``solve`` uses the bordering algorithm: factor A
    once, then a Schur complement on the ell-dimensional border.
    """

    A: sp.csc_matrix
    B: np.ndarray
    C: np.ndarray
    subdifferentiable: bool = False
    _lu: object = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        n = self.A.shape[0] + self.B.shape[1]
        return n, n

    def toarray(self) -> np.ndarray:
        k = self.B.shape[1]
        return np.block([[self.A.toarray(), self.B], [self.C, np.zeros((k, k))]])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        n = self.A.shape[0]
        if self._lu is None:
            try:
                self._lu = spla.splu(self.A.tocsc())
            except RuntimeError as exc:
                raise ConvergenceError(f"singular field block: {exc}", "singular") from exc
        f, g = rhs[:n], rhs[n:]
        Ainv_f = self._lu.solve(f)
        Ainv_B = self._lu.solve(self.B)
        schur = -self.C @ Ainv_B
        try:
            y = np.linalg.solve(schur, g - self.C @ Ainv_f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular border (Schur complement)", "singular") from exc
        x = Ainv_f - Ainv_B @ y
        out = np.concatenate([x, y])
        if not np.all(np.isfinite(out)):
            raise ConvergenceError("non-finite Newton step", "singular")
        return out


def jacobian(state: SolutionState, params: SystemParams) -> BorderedMatrix:
    """Analytic Jacobian of ``residual_vector`` with respect to ``state.stacked()``."""
    grid, ell, t, M = state.grid, state.ell, state.t, state.grid.M
    L = _neg_laplacian(grid).tolil()
    L[M - 1, :] = 0.0
    L = L.tocsr()
    interior = np.ones(M)
    interior[-1] = 0.0
    bc = 1.0 - interior
    us = [f.values for f in state.fields]

    blocks = [[None] * ell for _ in range(ell)]
    for i in range(ell):
        ui = us[i]
        dfi = params.p * params.mu[i] * _pos_pow(ui, params.p - 1)
        for j in range(ell):
            if j == i or t == 0.0 or params.lam[i, j] == 0.0:
                continue
            a, b, lam = params.alpha[i, j], params.beta[i, j], params.lam[i, j]
            dfi = dfi + t * lam * a * _pos_pow(ui, a - 1) * _pos_pow(us[j], b)
            off = -t * lam * b * _pos_pow(ui, a) * _pos_pow(us[j], b - 1)
            blocks[i][j] = sp.diags(interior * off)
        blocks[i][i] = L + sp.diags(interior * (state.kappa[i] - dfi) + bc)
    A = sp.bmat(blocks, format="csc")

    B = np.zeros((ell * M, ell))
    C = np.zeros((ell, ell * M))
    for i in range(ell):
        B[i * M:(i + 1) * M, i] = interior * us[i]
        C[i, i * M:(i + 1) * M] = 2.0 * grid.weights * us[i]

    flagged = False
    for i, j in params.pairs():
        if params.beta[i, j] < 1 and params.lam[i, j] != 0 and t != 0:
            if np.any(us[j][:-1] < POSITIVITY_FLAG):
                flagged = True
    return BorderedMatrix(A, B, C, flagged)


def gn_monitor(state: SolutionState, params: SystemParams) -> list[dict]:
    """Quantities entering the Gagliardo-Nirenberg bound for each component.

    ``fitted_constant`` is |grad u_i|^2 divided by the bracket on the right of
    the bound, i.e. the smallest constant consistent with this state.
    """
    out = []
    N, p = params.N, params.p
    for i, u in enumerate(state.fields):
        up = u.positive_part()
        g = grad_norm_sq(u)
        lp = integrate(up ** (p + 1))
        coupling = {}
        bracket = g ** (N * (p - 1) / 4)
        for j in range(params.ell):
            if j == i:
                continue
            a, b = params.alpha[i, j], params.beta[i, j]
            vj = state.fields[j].positive_part()
            coupling[j] = integrate(up ** (a + 1) * vj**b)
            e = N * (a + 1) * (0.5 - 1.0 / (a + b + 1))
            bracket += g ** (e / 2)
        out.append({
            "grad_sq": g,
            "lp_norm": lp,
            "coupling": coupling,
            "fitted_constant": g / bracket if bracket > 0 else math.inf,
        })
    return out
