"""Homotopy in the coupling strength t from the uncoupled ground states to t = 1."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContinuationStall, ConvergenceError, HypothesisError
from .ground import (
    GroundState,
    cached_omega0,
    gamma_for_mass,
    pohozaev_defect,
    rescale_ground,
    tail_value,
)
from .radial import RadialField, RadialGrid, auto_radius, grad_norm_sq, integrate, make_grid
from .system import (
    SolutionState,
    SystemParams,
    gn_monitor,
    jacobian,
    kappa_formula,
    pde_residual_norms,
    residual,
    residual_vector,
)

log = logging.getLogger(__name__)

REFERENCE_R = 25.0
REFERENCE_M = 4001
DEFAULT_M = 4001
TAIL_WARN = 1e-10


@dataclass(frozen=True)
class ContinuationConfig:
    dt0: float = 0.1
    dt_min: float = 1e-4
    dt_max: float = 0.25
    grow: float = 1.5
    easy_iters: int = 4
    max_iter: int = 25
    tol_pde: float = 1e-8
    tol_mass: float = 1e-10
    armijo: float = 1e-4
    min_damping: float = 2.0**-12
    clamp_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not 0 < self.dt_min <= self.dt0 <= 1:
            raise ValueError("need 0 < dt_min <= dt0 <= 1")


@dataclass(frozen=True)
class VerifyTolerances:
    pde: float = 1e-8
    mass: float = 1e-10
    kappa: float = 1e-7
    pohozaev: float = 1e-4


@dataclass(frozen=True)
class StepRecord:
    t: float
    kappa: tuple
    masses: tuple
    residuals: tuple
    min_u: float
    gradsq: tuple
    newton_iters: int
    kappa_formula: tuple

    def kappa_defects(self) -> np.ndarray:
        k = np.asarray(self.kappa)
        return np.abs(k - np.asarray(self.kappa_formula))


@dataclass
class HomotopyTrace:
    steps: list = field(default_factory=list)

    def record(self, state: SolutionState, params: SystemParams, iters: int) -> StepRecord:
        if self.steps and not state.t > self.steps[-1].t:
            raise ValueError("trace parameter must increase strictly")
        rec = StepRecord(
            t=state.t,
            kappa=state.kappa,
            masses=tuple(state.masses()),
            residuals=tuple(pde_residual_norms(state, params)),
            min_u=min(float(np.min(u.values[:-1])) for u in state.fields),
            gradsq=tuple(grad_norm_sq(u) for u in state.fields),
            newton_iters=int(iters),
            kappa_formula=tuple(kappa_formula(state.fields, i, state.t, params) for i in range(state.ell)),
        )
        self.steps.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def ts(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    def bounds(self) -> dict:
        """Observed ranges of the multipliers and Dirichlet energies along the path."""
        k = np.array([s.kappa for s in self.steps])
        g = np.array([s.gradsq for s in self.steps])
        return {
            "kappa_min": k.min(axis=0), "kappa_max": k.max(axis=0),
            "gradsq_min": g.min(axis=0), "gradsq_max": g.max(axis=0),
        }


def reference_ground_state(N: int, p: float, mu: float) -> GroundState:
    return cached_omega0(N, float(p), float(mu), REFERENCE_R, REFERENCE_M)


def initial_gammas(params: SystemParams) -> list[float]:
    return [
        gamma_for_mass(reference_ground_state(params.N, params.p, params.mu[i]), params.r[i])
        for i in range(params.ell)
    ]


def auto_grid(params: SystemParams, M: int = DEFAULT_M, R: float | None = None) -> RadialGrid:
    """Grid with sqrt(kappa_min) R = 25, kappa from the uncoupled solutions."""
    if R is None:
        kappa_min = min(g * g for g in initial_gammas(params))
        R = auto_radius(kappa_min)
    return make_grid(params.N, R, M)


def init_state(params: SystemParams, grid: RadialGrid, config: ContinuationConfig | None = None) -> SolutionState:
    """Uncoupled solution at t = 0: rescaled ground states, polished on ``grid``.

    Each component's ground state is solved on a grid that the rescaling maps
    node-for-node onto ``grid``, then renormalized to mass r_i^2 and corrected
    by Newton with the multipliers free.
    """
    config = config or ContinuationConfig()
    fields, kappas = [], []
    for i, gamma in enumerate(initial_gammas(params)):
        src = cached_omega0(params.N, params.p, params.mu[i], gamma * grid.R, grid.M)
        gs = rescale_ground(src, gamma, grid)
        u = gs.field * (params.r[i] / math.sqrt(gs.mass))
        fields.append(u)
        kappas.append(gs.kappa)
    state = SolutionState(tuple(fields), tuple(kappas), 0.0)
    state, _, _ = newton_correct(state, 0.0, params, config)
    return state


def _merit(F: np.ndarray, x: np.ndarray, params: SystemParams, M: int) -> float:
    """2-norm of the residual with PDE rows relative to max(1,|u|_inf) and mass rows to r^2."""
    ell = params.ell
    parts = []
    for i in range(ell):
        u = x[i * M:(i + 1) * M]
        parts.append(F[i * M:(i + 1) * M] / max(1.0, np.max(np.abs(u))))
    parts.append(F[ell * M:] / np.asarray(params.r) ** 2)
    return float(np.linalg.norm(np.concatenate(parts)))


def _converged(state: SolutionState, params: SystemParams, config: ContinuationConfig) -> bool:
    res = pde_residual_norms(state, params)
    _, mass = residual(state, params)
    target = np.asarray(params.r) ** 2
    return bool(np.all(res <= config.tol_pde) and np.all(np.abs(mass) <= config.tol_mass * target))


def newton_correct(
    state: SolutionState, t: float, params: SystemParams, config: ContinuationConfig | None = None
) -> tuple[SolutionState, int, list]:
    """Damped Newton on the bordered system at parameter ``t``.

    Returns ``(state, iterations, merit_history)``.  Raises ConvergenceError
    with ``reason`` one of ``max-iterations``, ``singular``,
    ``admissibility lost`` or ``positivity lost``.
    """
    config = config or ContinuationConfig()
    grid, ell, M = state.grid, state.ell, state.grid.M
    state = SolutionState(state.fields, state.kappa, t)
    for i in range(ell):
        if kappa_formula(state.fields, i, t, params) <= 0:
            raise ConvergenceError(
                f"admissibility lost: multiplier formula of component {i + 1} is not positive",
                "admissibility lost",
            )

    x = state.stacked()
    F = residual_vector(state, params)
    merit = _merit(F, x, params, M)
    history = [merit]
    iters = 0
    while not _converged(state, params, config):
        if iters >= config.max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {config.max_iter} iterations (merit {merit:.3e})",
                "max-iterations", history,
            )
        J = jacobian(state, params)
        dx = J.solve(-F)
        lam = 1.0
        while True:
            x_new = x + lam * dx
            trial = SolutionState.from_stacked(grid, x_new, ell, t)
            F_new = residual_vector(trial, params)
            m_new = _merit(F_new, x_new, params, M)
            if m_new <= (1 - config.armijo * lam) * merit:
                break
            lam *= 0.5
            if lam < config.min_damping:
                if m_new < merit:
                    break
                raise ConvergenceError("line search failed", "max-iterations", history)
        x, F, merit, state = x_new, F_new, m_new, trial
        history.append(merit)
        iters += 1

    if any(k <= 0 for k in state.kappa):
        raise ConvergenceError("admissibility lost: some multiplier is not positive", "admissibility lost", history)
    fields = []
    for u in state.fields:
        v = u.values
        if np.min(v) < -config.clamp_tol:
            raise ConvergenceError(
                f"positivity lost: min u = {np.min(v):.3e} below -{config.clamp_tol:g}", "positivity lost", history
            )
        fields.append(RadialField(grid, np.maximum(v, 0.0)) if np.min(v) < 0 else u)
    clamped = SolutionState(tuple(fields), state.kappa, t)
    if clamped is not state and not _converged(clamped, params, config):
        raise ConvergenceError("residual check failed after clamping", "positivity lost", history)
    return clamped, iters, history


def continue_homotopy(
    params: SystemParams, grid: RadialGrid, config: ContinuationConfig | None = None
) -> tuple[HomotopyTrace, SolutionState]:
    """Natural continuation in t from 0 to 1 with a secant predictor.

    Raises ContinuationStall (carrying the trace and the last accepted state)
    when the step falls below ``dt_min``.  A stall says nothing about
    existence: the solution set need not contain a path in t.
    """
    config = config or ContinuationConfig()
    if not params.runnable:
        raise HypothesisError(f"parameters outside the existence regimes: {params.regime}")
    state = init_state(params, grid, config)
    trace = HomotopyTrace()
    trace.record(state, params, 0)
    _warn_tail(state)

    t, dt = 0.0, (1.0 if params.uncoupled else config.dt0)
    x_prev, t_prev = None, None
    while t < 1.0:
        t_new = min(1.0, t + dt)
        x = state.stacked()
        if x_prev is not None:
            x_pred = x + (t_new - t) / (t - t_prev) * (x - x_prev)
        else:
            x_pred = x
        predicted = SolutionState.from_stacked(grid, x_pred, state.ell, t_new)
        try:
            new_state, iters, _ = newton_correct(predicted, t_new, params, config)
        except ConvergenceError as exc:
            log.info("step t=%.6g -> %.6g rejected (%s)", t, t_new, exc.reason)
            dt *= 0.5
            if dt < config.dt_min:
                raise ContinuationStall(
                    f"continuation stalled at t={t:.6g} (step below {config.dt_min:g}; last failure: {exc}). "
                    "A stall does not imply nonexistence at larger t.",
                    trace, state,
                ) from exc
            continue
        x_prev, t_prev = x, t
        state, t = new_state, t_new
        trace.record(state, params, iters)
        log.info("accepted t=%.6g (%d Newton iterations)", t, iters)
        if iters <= config.easy_iters:
            dt = min(dt * config.grow, config.dt_max)
    _warn_tail(state)
    return trace, state


def _warn_tail(state: SolutionState) -> None:
    for i, u in enumerate(state.fields):
        tv = tail_value(u)
        if tv > TAIL_WARN:
            log.warning("component %d tail value %.2e exceeds %g; consider a larger R", i + 1, tv, TAIL_WARN)


def ground_states_from_state(state: SolutionState, params: SystemParams) -> list[GroundState]:
    """Interpret the components of a t = 0 solution as scalar ground states."""
    return [
        GroundState(u, params.p, params.mu[i], state.kappa[i], integrate(u * u))
        for i, u in enumerate(state.fields)
    ]


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: str
    status: str  # PASS, FAIL or N/A

    @property
    def passed(self) -> bool:
        return self.status != "FAIL"


@dataclass
class DiagnosticsReport:
    t: float
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if c.status == "FAIL"]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name: str, value: float, ok: bool | None, threshold: str) -> None:
        status = "N/A" if ok is None else ("PASS" if ok else "FAIL")
        self.checks.append(Check(name, float(value), threshold, status))

    def to_text(self) -> str:
        lines = [f"t: {self.t!r}"]
        for c in self.checks:
            lines.append(f"{c.name}: {c.value!r} [{c.threshold}] {c.status}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def decay_statistic(u: RadialField) -> tuple[float, bool]:
    """sup over r >= R/2 of r^{(N-1)/2} u(r), and whether that weighted tail is nonincreasing."""
    g = u.grid
    mask = g.r >= 0.5 * g.R
    w = g.r[mask] ** ((g.N - 1) / 2) * u.values[mask]
    sup = float(np.max(w))
    monotone = bool(np.all(np.diff(w) <= 1e-12 * max(sup, 1e-300)))
    return sup, monotone


def verify_solution(
    state: SolutionState, params: SystemParams, tol: VerifyTolerances | None = None
) -> DiagnosticsReport:
    """Run every solution check and collect them in a report (never raises on failure)."""
    tol = tol or VerifyTolerances()
    report = DiagnosticsReport(state.t)
    res = pde_residual_norms(state, params)
    _, mass = residual(state, params)
    target = np.asarray(params.r) ** 2
    for i, u in enumerate(state.fields):
        n = i + 1
        report.add(f"pde_residual_{n}", res[i], res[i] <= tol.pde, f"<= {tol.pde:g} * max(1,|u|_inf)")
        report.add(f"mass_defect_{n}", mass[i], abs(mass[i]) <= tol.mass * target[i], f"|.| <= {tol.mass:g} * r^2")
        k = state.kappa[i]
        report.add(f"kappa_{n}", k, k > 0, "> 0")
        kd = abs(k - kappa_formula(state.fields, i, state.t, params))
        report.add(f"kappa_consistency_{n}", kd, kd <= tol.kappa * (1 + abs(k)), f"<= {tol.kappa:g} * (1+|kappa|)")
        mn = float(np.min(u.values[:-1]))
        report.add(f"min_u_{n}", mn, mn > 0, "> 0 on [0,R)")
        sup, mono = decay_statistic(u)
        report.add(f"decay_sup_{n}", sup, bool(np.isfinite(sup)) and mono, "finite, nonincreasing on [R/2,R]")
        if state.t == 0.0:
            gs = GroundState(u, params.p, params.mu[i], k, integrate(u * u))
            rel = abs(pohozaev_defect(gs)) / grad_norm_sq(u)
            report.add(f"pohozaev_defect_{n}", rel, rel <= tol.pohozaev, f"relative <= {tol.pohozaev:g}")
        else:
            report.add(f"pohozaev_defect_{n}", math.nan, None, "not applicable at t>0")
    for i, q in enumerate(gn_monitor(state, params)):
        n = i + 1
        report.add(f"gn_grad_sq_{n}", q["grad_sq"], bool(np.isfinite(q["grad_sq"])), "finite")
        report.add(f"gn_lp_norm_{n}", q["lp_norm"], bool(np.isfinite(q["lp_norm"])), "finite")
        for j, c in q["coupling"].items():
            report.add(f"gn_coupling_{n}{j + 1}", c, bool(np.isfinite(c)), "finite")
        report.add(f"gn_fitted_constant_{n}", q["fitted_constant"], bool(np.isfinite(q["fitted_constant"])), "finite")
    return report
