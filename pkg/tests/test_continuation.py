import numpy as np
import pytest

from conftest import COOP
from normsol.continuation import (
    ContinuationConfig,
    auto_grid,
    continue_homotopy,
    initial_gammas,
    init_state,
    newton_correct,
    verify_solution,
)
from normsol.exceptions import ContinuationStall, ConvergenceError, HypothesisError
from normsol.geometry import tangent_project
from normsol.radial import integrate
from normsol.system import SolutionState, SystemParams, kappa_formula, pde_residual_norms

@pytest.fixture(scope="module")
def start(coop_params):
    grid = auto_grid(coop_params, M=4001)
    return grid, init_state(coop_params, grid)


def test_init_state_symmetric(coop_params, start):
    _, s = start
    amp = np.max(s.fields[0].values)
    assert np.max(np.abs(s.fields[0].values - s.fields[1].values)) <= 1e-12 * amp
    gamma = initial_gammas(coop_params)[0]
    assert s.kappa[0] == s.kappa[1] == pytest.approx(gamma**2, rel=1e-12) and s.kappa[0] > 0
    assert np.all(np.abs(s.masses() - 1.0) <= 1e-10)
    for i in range(2):
        assert kappa_formula(s.fields, i, 0.0, coop_params) == pytest.approx(s.kappa[i], rel=1e-6)


def test_init_state_unequal_masses():
    P = SystemParams.build(**{**COOP, "r": [1.0, 2.0], "mu": [1.0, 0.5]})
    s = init_state(P, auto_grid(P, M=2001))
    assert s.masses() == pytest.approx([1.0, 4.0], rel=1e-10)
    assert pde_residual_norms(s, P).max() <= 1e-8


def test_newton_fixed_point(coop_params, start):
    _, s = start
    out, iters, _ = newton_correct(s, 0.0, coop_params)
    assert iters <= 1
    assert np.max(np.abs(out.fields[0].values - s.fields[0].values)) <= 1e-8 * np.max(s.fields[0].values)


def test_newton_reconverges_quadratically(coop_params, start):
    grid, s = start
    rng = np.random.default_rng(7)
    fields = []
    for u in s.fields:
        eta = np.zeros(grid.M)
        for _ in range(4):
            eta += rng.normal() * np.exp(-(grid.r / (rng.uniform(0.05, 0.5) * grid.R)) ** 2)
        eta[-1] = 0.0
        e = tangent_project(u, grid.field(eta))
        fields.append(u + e * (1e-3 * np.max(u.values) / np.max(np.abs(e.values))))
    out, iters, hist = newton_correct(SolutionState(tuple(fields), s.kappa, 0.0), 0.0, coop_params)
    assert pde_residual_norms(out, coop_params).max() <= 1e-8
    # quadratic contraction down to the round-off floor of the exact solution
    floor = 10 * newton_correct(s, 0.0, coop_params)[2][0]
    pairs = [(a, b) for a, b in zip(hist, hist[1:]) if a < 1.0]
    assert all(b <= max(10 * a * a, floor) for a, b in pairs)
    assert any(10 * a * a > floor for a, _ in pairs)


def test_negated_field_loses_admissibility(coop_params, start):
    _, s = start
    bad = SolutionState((-s.fields[0], s.fields[1]), s.kappa, 0.1)
    with pytest.raises(ConvergenceError, match="admissibility lost") as info:
        newton_correct(bad, 0.1, coop_params)
    assert info.value.reason == "admissibility lost"


def test_uncoupled_single_step():
    P = SystemParams.build(**{**COOP, "lam": 0.0, "unsafe_override": True})
    grid = auto_grid(P, M=1001)
    trace, final = continue_homotopy(P, grid)
    assert list(trace.ts) == [0.0, 1.0]
    s0 = init_state(P, grid)
    for a, b in zip(final.fields, s0.fields):
        assert np.max(np.abs(a.values - b.values)) <= 1e-10 * np.max(b.values)


def test_invalid_params_refused():
    with pytest.raises(HypothesisError):
        continue_homotopy(SystemParams.build(**{**COOP, "lam": 0.0}), None)


def test_determinism(coop_params):
    grid = auto_grid(coop_params, M=501)
    t1, s1 = continue_homotopy(coop_params, grid)
    t2, s2 = continue_homotopy(coop_params, grid)
    assert t1.steps == t2.steps
    assert all(np.array_equal(a.values, b.values) for a, b in zip(s1.fields, s2.fields))


def test_symmetry_along_path(homotopy_runs):
    _, _, trace, final = homotopy_runs("coop")
    for st in trace.steps:
        assert st.kappa[0] == pytest.approx(st.kappa[1], rel=1e-10)
        assert st.gradsq[0] == pytest.approx(st.gradsq[1], rel=1e-10)
    scale = np.max(final.fields[0].values)
    assert np.max(np.abs(final.fields[0].values - final.fields[1].values)) <= 1e-8 * scale


def test_admissible_along_path(homotopy_runs):
    for which in ("coop", "comp"):
        _, _, trace, _ = homotopy_runs(which)
        b = trace.bounds()
        assert np.all(b["kappa_min"] > 0)
        assert np.all(b["gradsq_min"] > 0) and np.all(np.isfinite(b["gradsq_max"]))
        assert np.all(np.diff(trace.ts) > 0) and trace.ts[-1] == 1.0


def test_stall_reports_trace(coop_params):
    grid = auto_grid(coop_params, M=501)
    cfg = ContinuationConfig(dt0=1.0, dt_min=0.6, max_iter=3)
    with pytest.raises(ContinuationStall, match="does not imply nonexistence") as info:
        continue_homotopy(coop_params, grid, cfg)
    assert len(info.value.trace) == 1 and info.value.state.t == 0.0


def test_verify_t0(coop_params, start):
    _, s = start
    rep = verify_solution(s, coop_params)
    assert rep.passed, rep.to_text()
    assert rep["pohozaev_defect_1"].value < 1e-4


def test_verify_mass_corruption(coop_params, start):
    _, s = start
    bad = SolutionState((s.fields[0] * 1.01, s.fields[1]), s.kappa, 0.0)
    rep = verify_solution(bad, coop_params)
    chk = rep["mass_defect_1"]
    assert chk.status == "FAIL"
    assert chk.value == pytest.approx(0.0201, rel=1e-8)
    assert rep["mass_defect_2"].status == "PASS"


def test_verify_t1(homotopy_runs):
    params, _, _, final = homotopy_runs("coop")
    rep = verify_solution(final, params)
    assert rep.passed, rep.to_text()
    assert rep["pohozaev_defect_1"].status == "N/A"
    assert "not applicable at t>0" in rep.to_text()
    for n in (1, 2):
        assert rep[f"kappa_consistency_{n}"].status == "PASS"
        assert rep[f"decay_sup_{n}"].status == "PASS"


def test_report_format(coop_params, start):
    text = verify_solution(start[1], coop_params).to_text()
    lines = text.strip().splitlines()
    assert lines[0].startswith("t: ") and lines[-1] == "overall: PASS"
    assert all(ln.rsplit(" ", 1)[1] in ("PASS", "FAIL", "N/A") for ln in lines[1:-1])


def test_masses_kept_along_path(homotopy_runs):
    for which in ("coop", "comp"):
        _, _, trace, final = homotopy_runs(which)
        for st in trace.steps:
            assert np.all(np.abs(np.array(st.masses) - 1.0) <= 1e-10)
        assert integrate(final.fields[0] ** 2) == pytest.approx(1.0, abs=1e-10)
