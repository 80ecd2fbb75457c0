"""Run configuration, solution files, trace CSV and diagnostics report formats.

Config: flat ``key = value`` lines, ``#`` comments.  Keys::

    N, p, ell, mu = [..], r = [..]
    lambda.i.j, alpha.i.j, beta.i.j   (1-based; plain lambda/alpha/beta set every pair)
    grid.R (number or auto), grid.M
    cont.dt0, cont.dt_min, cont.max_iter
    tol.pde, tol.mass, tol.kappa, tol.pohozaev
    unsafe_override

Solution file: ``# key: json-value`` header lines, then a CSV body with
columns ``r,u_1,...,u_ell``; every float is written with 17 significant
digits so that a reload is bit-exact.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .continuation import ContinuationConfig, HomotopyTrace, VerifyTolerances
from .exceptions import ConfigError, FormatError
from .radial import RadialField, RadialGrid, make_grid
from .system import SolutionState, SystemParams, pde_residual_norms

FORMAT_VERSION = 1
_FLOAT = "%.17g"

_SCALAR_KEYS = {
    "N": int, "p": float, "ell": int,
    "grid.M": int, "cont.dt0": float, "cont.dt_min": float, "cont.max_iter": int,
    "tol.pde": float, "tol.mass": float, "tol.kappa": float, "tol.pohozaev": float,
}
_PAIR_RE = re.compile(r"^(lambda|alpha|beta)\.(\d+)\.(\d+)$")


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    grid_R: float | None = None  # None means auto
    grid_M: int = 4001
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    tolerances: VerifyTolerances = field(default_factory=VerifyTolerances)

    @property
    def regime(self):
        return self.params.regime


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low == "auto":
        return "auto"
    if raw.startswith("["):
        if not raw.endswith("]"):
            raise ValueError("unterminated list")
        body = raw[1:-1].strip()
        return [float(x) for x in body.split(",")] if body else []
    return float(raw)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration; raises ConfigError listing every problem."""
    entries: dict[str, object] = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: syntax error, expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key:
            errors.append(f"line {lineno}: syntax error, empty key")
            continue
        if key in entries:
            errors.append(f"line {lineno}: duplicate key '{key}'")
            continue
        try:
            entries[key] = _parse_value(raw)
        except ValueError:
            errors.append(f"line {lineno}: syntax error in value for '{key}': {raw!r}")
    if errors:
        raise ConfigError(errors)
    return _build_config(entries)


def _build_config(entries: dict) -> RunConfig:
    errors = []
    known = set(_SCALAR_KEYS) | {"mu", "r", "lambda", "alpha", "beta", "grid.R", "unsafe_override"}
    for key in entries:
        if key not in known and not _PAIR_RE.match(key):
            errors.append(f"unknown key '{key}'")

    def scalar(key, required=False, default=None):
        if key not in entries:
            if required:
                errors.append(f"missing key '{key}'")
            return default
        v = entries[key]
        typ = _SCALAR_KEYS[key]
        if isinstance(v, (list, bool, str)):
            errors.append(f"'{key}' must be a number")
            return default
        if typ is int and v != int(v):
            errors.append(f"'{key}' must be an integer")
            return default
        return typ(v)

    N = scalar("N", required=True)
    p = scalar("p", required=True)
    ell = scalar("ell", required=True)
    if ell is not None and ell < 1:
        errors.append("'ell' must be at least 1")
        ell = None

    def vector(key):
        if key not in entries:
            errors.append(f"missing key '{key}'")
            return None
        v = entries[key]
        if isinstance(v, (bool, str)):
            errors.append(f"'{key}' must be a number or a list")
            return None
        v = [v] if isinstance(v, float) else v
        if ell is not None:
            if len(v) == 1:
                v = v * ell
            if len(v) != ell:
                errors.append(f"'{key}' has {len(v)} entries, expected ell={ell}")
                return None
        return v

    mu, r = vector("mu"), vector("r")
    mats = {}
    if ell is not None:
        for name in ("lambda", "alpha", "beta"):
            m = np.zeros((ell, ell))
            default = entries.get(name)
            if isinstance(default, (list, bool, str)):
                errors.append(f"'{name}' must be a number")
                default = None
            for i in range(ell):
                for j in range(ell):
                    if i == j:
                        continue
                    key = f"{name}.{i + 1}.{j + 1}"
                    if key in entries:
                        v = entries[key]
                        if isinstance(v, (list, bool, str)):
                            errors.append(f"'{key}' must be a number")
                            continue
                        m[i, j] = v
                    elif default is not None:
                        m[i, j] = default
                    else:
                        errors.append(f"missing key '{key}'")
            mats[name] = m
        for key in entries:
            mt = _PAIR_RE.match(key)
            if mt:
                i, j = int(mt.group(2)), int(mt.group(3))
                if not (1 <= i <= ell and 1 <= j <= ell) or i == j:
                    errors.append(f"'{key}' does not name a pair i ≠ j within 1..{ell}")

    override = entries.get("unsafe_override", False)
    if not isinstance(override, bool):
        errors.append("'unsafe_override' must be true or false")
        override = False

    grid_R = entries.get("grid.R", "auto")
    if grid_R == "auto":
        grid_R = None
    elif isinstance(grid_R, float):
        if not grid_R > 0:
            errors.append("'grid.R' must be positive or auto")
    else:
        errors.append("'grid.R' must be a number or auto")
        grid_R = None
    grid_M = scalar("grid.M", default=4001)
    if grid_M is not None and grid_M < 16:
        errors.append("'grid.M' must be at least 16")

    cont_kw = {}
    for key, attr in (("cont.dt0", "dt0"), ("cont.dt_min", "dt_min"), ("cont.max_iter", "max_iter"),
                      ("tol.pde", "tol_pde"), ("tol.mass", "tol_mass")):
        v = scalar(key)
        if v is not None:
            cont_kw[attr] = v
    tol_kw = {}
    for key, attr in (("tol.pde", "pde"), ("tol.mass", "mass"), ("tol.kappa", "kappa"), ("tol.pohozaev", "pohozaev")):
        v = scalar(key)
        if v is not None:
            tol_kw[attr] = v

    if errors:
        raise ConfigError(errors)
    try:
        cont = ContinuationConfig(**cont_kw)
    except ValueError as exc:
        raise ConfigError([f"continuation settings: {exc}"]) from exc

    try:
        params = SystemParams.build(
            N, p, mu, r, mats["lambda"], mats["alpha"], mats["beta"], ell=ell, unsafe_override=override
        )
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    if not params.runnable:
        raise ConfigError([f"hypothesis violation: {params.regime.reason}"])
    return RunConfig(params, grid_R, grid_M, cont, VerifyTolerances(**tol_kw))


def format_config(cfg: RunConfig) -> str:
    """Inverse of parse_config (per-pair keys written explicitly)."""
    P = cfg.params
    lines = [
        f"N = {P.N}", f"p = {P.p!r}", f"ell = {P.ell}",
        "mu = [" + ", ".join(repr(x) for x in P.mu) + "]",
        "r = [" + ", ".join(repr(x) for x in P.r) + "]",
    ]
    for name, m in (("lambda", P.lam), ("alpha", P.alpha), ("beta", P.beta)):
        for i, j in P.pairs():
            lines.append(f"{name}.{i + 1}.{j + 1} = {float(m[i, j])!r}")
    lines.append(f"grid.R = {'auto' if cfg.grid_R is None else repr(cfg.grid_R)}")
    lines.append(f"grid.M = {cfg.grid_M}")
    c, t = cfg.continuation, cfg.tolerances
    lines += [
        f"cont.dt0 = {c.dt0!r}", f"cont.dt_min = {c.dt_min!r}", f"cont.max_iter = {c.max_iter}",
        f"tol.pde = {t.pde!r}", f"tol.mass = {t.mass!r}", f"tol.kappa = {t.kappa!r}",
        f"tol.pohozaev = {t.pohozaev!r}",
        f"unsafe_override = {'true' if P.unsafe_override else 'false'}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SolutionFile:
    header: dict
    params: SystemParams
    grid: RadialGrid
    state: SolutionState
    tolerances: VerifyTolerances


_REQUIRED = ("format_version", "N", "p", "ell", "mu", "r", "lambda", "alpha", "beta",
             "unsafe_override", "grid.R", "grid.M", "t", "kappa")


def write_solution(path, state: SolutionState, params: SystemParams,
                   tolerances: VerifyTolerances | None = None) -> None:
    tolerances = tolerances or VerifyTolerances()
    grid = state.grid
    header = {
        "format_version": FORMAT_VERSION,
        "N": params.N, "p": params.p, "ell": params.ell,
        "mu": list(params.mu), "r": list(params.r),
        "lambda": params.lam.tolist(), "alpha": params.alpha.tolist(), "beta": params.beta.tolist(),
        "unsafe_override": params.unsafe_override,
        "regime": str(params.regime),
        "grid.R": grid.R, "grid.M": grid.M,
        "t": state.t, "kappa": list(state.kappa),
        "masses": [float(m) for m in state.masses()],
        "residuals": [float(x) for x in pde_residual_norms(state, params)],
        "tol.pde": tolerances.pde, "tol.mass": tolerances.mass,
        "tol.kappa": tolerances.kappa, "tol.pohozaev": tolerances.pohozaev,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    lines = [f"# normsol solution"]
    lines += [f"# {k}: {json.dumps(v)}" for k, v in header.items()]
    lines.append(",".join(["r"] + [f"u_{i + 1}" for i in range(state.ell)]))
    cols = np.column_stack([grid.r] + [u.values for u in state.fields])
    for row in cols:
        lines.append(",".join(_FLOAT % x for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_solution(path, expect_ell: int | None = None) -> SolutionFile:
    """Load a solution file; any inconsistency raises FormatError and nothing is returned."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not a UTF-8 solution file: {exc}") from exc
    lines = text.splitlines()
    header = {}
    body_start = None
    for n, line in enumerate(lines):
        if line.startswith("#"):
            content = line[1:].strip()
            if ":" in content:
                key, raw = content.split(":", 1)
                try:
                    header[key.strip()] = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"corrupt header line {n + 1}: {line!r}") from exc
            continue
        body_start = n
        break
    missing = [k for k in _REQUIRED if k not in header]
    if missing:
        raise FormatError(f"corrupt header: missing {', '.join(missing)}")
    if header["format_version"] != FORMAT_VERSION:
        raise FormatError(f"version mismatch: file has {header['format_version']}, reader supports {FORMAT_VERSION}")
    ell = header["ell"]
    if expect_ell is not None and ell != expect_ell:
        raise FormatError(f"component count mismatch: file has ell={ell}, expected {expect_ell}")
    if body_start is None:
        raise FormatError("truncated file: no data section")
    expected_cols = ["r"] + [f"u_{i + 1}" for i in range(ell)]
    if lines[body_start].split(",") != expected_cols:
        raise FormatError(f"bad column header {lines[body_start]!r}")
    try:
        data = np.array([[float(x) for x in row.split(",")] for row in lines[body_start + 1:] if row.strip()])
    except ValueError as exc:
        raise FormatError(f"unparseable data row: {exc}") from exc
    M = int(header["grid.M"])
    if data.ndim != 2 or data.shape != (M, ell + 1):
        raise FormatError(f"truncated file: expected {M} rows of {ell + 1} columns, got {data.shape}")
    try:
        grid = make_grid(int(header["N"]), float(header["grid.R"]), M)
        params = SystemParams.build(
            header["N"], header["p"], header["mu"], header["r"], np.array(header["lambda"]),
            np.array(header["alpha"]), np.array(header["beta"]), ell=ell,
            unsafe_override=header["unsafe_override"],
        )
    except ValueError as exc:
        raise FormatError(f"inconsistent header: {exc}") from exc
    if np.max(np.abs(data[:, 0] - grid.r)) > 1e-12 * grid.R:
        raise FormatError("grid inconsistency: r column does not match grid.R and grid.M")
    fields = tuple(RadialField(grid, data[:, i + 1]) for i in range(ell))
    if len(header["kappa"]) != ell:
        raise FormatError("component count mismatch in kappa")
    state = SolutionState(fields, tuple(header["kappa"]), float(header["t"]))
    tol = VerifyTolerances(
        pde=header.get("tol.pde", VerifyTolerances.pde), mass=header.get("tol.mass", VerifyTolerances.mass),
        kappa=header.get("tol.kappa", VerifyTolerances.kappa),
        pohozaev=header.get("tol.pohozaev", VerifyTolerances.pohozaev),
    )
    return SolutionFile(header, params, grid, state, tol)


def trace_columns(ell: int) -> list[str]:
    return (["t"] + [f"kappa_{i}" for i in range(1, ell + 1)] + [f"mass_{i}" for i in range(1, ell + 1)]
            + [f"res_{i}" for i in range(1, ell + 1)] + ["min_u"]
            + [f"gradsq_{i}" for i in range(1, ell + 1)] + ["newton_iters"])


def write_trace(path, trace: HomotopyTrace, ell: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(trace_columns(ell))
        for s in trace.steps:
            nums = [s.t, *s.kappa, *s.masses, *s.residuals, s.min_u, *s.gradsq]
            w.writerow([_FLOAT % x for x in nums] + [s.newton_iters])


def read_trace(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_csv(path, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_FLOAT % x if isinstance(x, (float, np.floating)) else x for x in row])


def write_report(path, report) -> None:
    Path(path).write_text(report.to_text(), encoding="utf-8")


def with_tolerances(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, tolerances=replace(cfg.tolerances, **kw))
