"""Command line: ground-state, solve, verify, morse, sweep.

Exit codes: 0 success, 2 config or hypothesis error, 3 continuation failure
(the trace is still written), 4 verification failure, 5 I/O or format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .continuation import (
    auto_grid,
    continue_homotopy,
    ground_states_from_state,
    init_state,
    verify_solution,
)
from .exceptions import (
    ConfigError,
    ContinuationStall,
    DegenerateError,
    FormatError,
    HypothesisError,
    NormsolError,
)
from .geometry import lowest_tangent_basis, morse_index, tangent_hessian
from .ground import (
    check_scalar_hypotheses,
    dilation_curve_check,
    pohozaev_coefficient,
    pohozaev_defect,
    pohozaev_ratio,
    solve_omega0,
)
from .radial import grad_norm_sq, integrate, make_grid
from .system import SystemParams

EXIT_OK, EXIT_CONFIG, EXIT_STALL, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("normsol")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_report(report) -> None:
    sys.stdout.write(report.to_text())


def cmd_ground_state(args) -> int:
    check_scalar_hypotheses(args.N, args.p, args.mu)
    grid = make_grid(args.N, args.R, args.M)
    gs = solve_omega0(args.N, args.p, args.mu, grid)
    out = _out_dir(args.out)
    io.write_csv(out / "profile.csv", ["r", "omega"], zip(grid.r, gs.field.values))
    first, second = dilation_curve_check(gs)
    nonlin = integrate(gs.field.positive_part() ** (gs.p + 1))
    rows = [
        ("amplitude", gs.amplitude),
        ("mass", gs.mass),
        ("grad_sq", grad_norm_sq(gs.field)),
        ("nonlinear_integral", nonlin),
        ("pohozaev_ratio", pohozaev_ratio(gs)),
        ("pohozaev_target", pohozaev_coefficient(args.N, args.p)),
        ("pohozaev_defect", pohozaev_defect(gs)),
        ("dilation_first", first),
        ("dilation_second", second),
        ("residual", gs.residual),
    ]
    io.write_csv(out / "ground_report.csv", ["quantity", "value"], rows)
    for name, value in rows:
        print(f"{name}: {value!r}")
    return EXIT_OK


def _solve_to(cfg: io.RunConfig, out: Path) -> tuple[int, str]:
    """Run one homotopy into ``out``; returns (exit code, message)."""
    P = cfg.params
    grid = auto_grid(P, M=cfg.grid_M, R=cfg.grid_R)
    (out / "config.cfg").write_text(io.format_config(cfg), encoding="utf-8")
    try:
        trace, state = continue_homotopy(P, grid, cfg.continuation)
    except ContinuationStall as exc:
        if exc.trace is not None:
            io.write_trace(out / "trace.csv", exc.trace, P.ell)
        if exc.state is not None:
            io.write_solution(out / "last_accepted.sol", exc.state, P, cfg.tolerances)
        return EXIT_STALL, str(exc)
    io.write_trace(out / "trace.csv", trace, P.ell)
    io.write_solution(out / "solution.sol", state, P, cfg.tolerances)
    report = verify_solution(state, P, cfg.tolerances)
    io.write_report(out / "diagnostics.txt", report)
    if not report.passed:
        return EXIT_VERIFY, "verification failed: " + ", ".join(c.name for c in report.failed())
    return EXIT_OK, f"reached t=1 in {len(trace)} accepted steps"


def cmd_solve(args) -> int:
    cfg = io.load_config(args.config)
    out = _out_dir(args.out)
    code, msg = _solve_to(cfg, out)
    print(msg)
    if (out / "diagnostics.txt").exists() and code in (EXIT_OK, EXIT_VERIFY):
        print((out / "diagnostics.txt").read_text(encoding="utf-8"), end="")
    return code


def cmd_verify(args) -> int:
    sol = io.read_solution(args.solution)
    tol = sol.tolerances
    params = sol.params
    if args.config:
        cfg = io.load_config(args.config)
        if cfg.params.ell != params.ell:
            raise FormatError(f"component count mismatch: file has ell={params.ell}, config has {cfg.params.ell}")
        tol = cfg.tolerances
    report = verify_solution(sol.state, params, tol)
    if args.out:
        io.write_report(_out_dir(args.out) / "diagnostics.txt", report)
    _print_report(report)
    if not report.passed:
        print("failed checks: " + ", ".join(c.name for c in report.failed()))
        return EXIT_VERIFY
    return EXIT_OK


def _morse_params(args) -> SystemParams:
    if args.config:
        return io.load_config(args.config).params
    ell = args.ell
    return SystemParams.build(args.N, args.p, [args.mu] * ell, [args.r] * ell, 0.0, ell=ell)


def cmd_morse(args) -> int:
    params = _morse_params(args)
    if params.regime.reason.startswith("(H)"):
        raise HypothesisError(params.regime.reason)
    grid = auto_grid(params, M=args.M)
    state = init_state(params, grid)
    rows = []
    sign = 1
    for i, gs in enumerate(ground_states_from_state(state, params)):
        H = tangent_hessian(gs, lowest_tangent_basis(gs, args.k))
        ev = np.linalg.eigvalsh(H)
        idx, gap = morse_index(H)
        if np.min(np.abs(ev)) < 1e-12 * np.max(np.abs(ev)):
            raise DegenerateError("degenerate projection, increase k")
        s, _ = np.linalg.slogdet(H)
        sign *= int(s)
        print(f"component {i + 1}: kappa={gs.kappa!r} morse index={idx} smallest |eig|={gap!r} "
              f"lowest eigenvalues={', '.join(f'{x:.6g}' for x in ev[:4])}")
        rows += [(i + 1, a, float(x)) for a, x in enumerate(ev)]
    expected = (-1) ** params.ell
    print(f"degree sign: {_signed(sign)} (expected (−1)^ℓ = {_signed(expected)})")
    if args.out:
        io.write_csv(_out_dir(args.out) / "morse_spectrum.csv", ["component", "index", "eigenvalue"], rows)
    return EXIT_OK


def _signed(s: int) -> str:
    return "−1" if s < 0 else "1"


def _sweep_config(cfg: io.RunConfig, key: str, value: float) -> io.RunConfig:
    P = cfg.params
    if key == "lambda_scale":
        return replace(cfg, params=P.replace(lam=P.lam * value))
    text = io.format_config(cfg)
    lines = [ln for ln in text.splitlines() if ln.split("=", 1)[0].strip() != key]
    lines.append(f"{key} = {value!r}")
    return io.parse_config("\n".join(lines))


def _sweep_one(job) -> tuple:
    cfg, key, value, out = job
    out.mkdir(parents=True, exist_ok=True)
    try:
        code, msg = _solve_to(cfg, out)
    except NormsolError as exc:
        return value, EXIT_CONFIG if isinstance(exc, (ConfigError, HypothesisError)) else EXIT_STALL, str(exc), None
    trace_path = out / "trace.csv"
    rows = io.read_trace(trace_path) if trace_path.exists() else []
    return value, code, msg, (rows[-1] if rows else None)


def cmd_sweep(args) -> int:
    cfg = io.load_config(args.config)
    values = [float(v) for v in args.values.split(",")]
    out = _out_dir(args.out)
    jobs = []
    for n, v in enumerate(values):
        try:
            c = _sweep_config(cfg, args.param, v)
        except ConfigError as exc:
            print(f"{args.param}={v!r}: {exc}")
            return EXIT_CONFIG
        jobs.append((c, args.param, v, out / f"run_{n:03d}"))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    ell = cfg.params.ell
    cols = ([args.param, "exit_code", "t_final"] + [f"kappa_{i}" for i in range(1, ell + 1)]
            + [f"res_{i}" for i in range(1, ell + 1)] + ["min_u"])
    rows = []
    for value, code, msg, last in results:
        print(f"{args.param}={value!r}: exit {code} ({msg})")
        if last is None:
            rows.append([value, code, float("nan")] + [float("nan")] * (2 * ell + 1))
        else:
            rows.append([value, code, last["t"]] + [last[f"kappa_{i}"] for i in range(1, ell + 1)]
                        + [last[f"res_{i}"] for i in range(1, ell + 1)] + [last["min_u"]])
    io.write_csv(out / "summary.csv", cols, rows)
    return max(code for _, code, _, _ in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normsol", description="Normalized solutions of weakly coupled Schrödinger systems")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("ground-state", help="scalar ground state with Pohozaev and dilation report")
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--R", type=float, default=25.0)
    g.add_argument("--M", type=int, default=4001)
    g.add_argument("--out", default="ground_out")
    g.set_defaults(func=cmd_ground_state)

    s = sub.add_parser("solve", help="homotopy run from t=0 to t=1")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="solve_out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="re-check a solution file")
    v.add_argument("solution")
    v.add_argument("--config")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("morse", help="tangent Hessian spectrum, Morse index, degree sign")
    m.add_argument("--config")
    m.add_argument("--N", type=int, default=3)
    m.add_argument("--p", type=float, default=3.0)
    m.add_argument("--ell", type=int, default=1)
    m.add_argument("--mu", type=float, default=1.0)
    m.add_argument("--r", type=float, default=1.0)
    m.add_argument("--k", type=int, default=50)
    m.add_argument("--M", type=int, default=2001)
    m.add_argument("--out")
    m.set_defaults(func=cmd_morse)

    w = sub.add_parser("sweep", help="solve over values of one parameter")
    w.add_argument("--config", required=True)
    w.add_argument("--param", default="lambda_scale", help="lambda_scale or any config key")
    w.add_argument("--values", required=True, help="comma separated")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", default="sweep_out")
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"hypothesis error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NormsolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STALL


if __name__ == "__main__":
    sys.exit(main())
