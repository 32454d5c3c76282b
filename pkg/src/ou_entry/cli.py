"""Batch front end: ``ou-entry {classify,boundaries,value-surface,verify}``.

The config file is INI style (``key = value`` lines under ``[section]``
headers).  Every section and key is optional; defaults reproduce the
kinked-entry example with mu = 1, theta = 1, sigma = 3, lam = 1, P0 = 4 and
Phi(c) = 2.2 (1 - c) + 8 (1 - c)^2.

    [model]
    mu = 1
    theta = 1
    sigma = 3
    lam = 1
    p0 = 4
    penalty = 2.2, 8.0          ; coefficients of (1 - c), (1 - c)^2, ...

    [grid]
    c_points = 21               ; output c-grid on [0, 1]
    control_points = 201        ; grid of the control-boundary interpolant
    x_min = -4                  ; value-surface x-grid (default mu -/+ 3 sd)
    x_max = 6
    x_points = 101

    [mc]
    seed = 0
    paths = 200000
    dt = 0.001
    horizon = 30                ; default 30 / lam
    probes = 1 0; 1 0.25; 0 0.5  ; (x, c) pairs for the entry-value checks
    hitting_probes = 1 0; 0 1   ; (x, y) pairs at rate lam
    perturbation_shift_sd = 0.5

    [output]
    dir = out

Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core_model import KINKED_PARAMS, KINKED_PENALTY, ModelParams, PenaltySpec, RegimeKind
from .entry_solver import EntrySolver, Topology, check_row
from .errors import OUEntryError, UnsupportedRegimeError, ValidationError
from .mc_verifier import DEFAULT_DT, DEFAULT_PATHS, MCVerifier, PolicySpec

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
REFERENCE_FIELDS = ("x0", "xhat0", "xbar0", "xtilde", "x1_0", "x2_0", "xdag0")


def fmt(v) -> str:
    """17 significant digits; empty cell for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


@dataclass
class RunConfig:
    params: ModelParams
    c_points: int = 21
    control_points: int = 201
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    x_points: int = 101
    seed: int = 0
    paths: int = DEFAULT_PATHS
    dt: float = DEFAULT_DT
    horizon: Optional[float] = None
    probes: list = field(default_factory=lambda: [(1.0, 0.0), (1.0, 0.25), (0.0, 0.5)])
    hitting_probes: list = field(default_factory=lambda: [(1.0, 0.0), (0.0, 1.0)])
    perturbation_shift_sd: float = 0.5
    out_dir: Path = Path("out")

    @property
    def c_grid(self):
        return np.linspace(0.0, 1.0, self.c_points)

    @property
    def x_grid(self):
        p = self.params
        lo = p.mu - 3 * p.stationary_sd if self.x_min is None else self.x_min
        hi = p.mu + 3 * p.stationary_sd if self.x_max is None else self.x_max
        return np.linspace(lo, hi, self.x_points)


def _pairs(text, name, bad):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        try:
            a, b = (float(v) for v in parts)
        except ValueError:
            bad.append(name)
            return []
        out.append((a, b))
    return out


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    """Parse and validate a config; every offending field is reported at once."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not Path(path).is_file():
            raise ValidationError(f"config file not found: {path}", ["config"])
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ValidationError(f"unreadable config: {exc}", ["config"]) from None
    bad = []

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except ValueError:
            bad.append(f"{section}.{key}")
            return default

    model = {k: get("model", k, float, v) for k, v in KINKED_PARAMS.items()}
    coeffs = get("model", "penalty",
                 lambda s: tuple(float(t) for t in s.replace(",", " ").split()), KINKED_PENALTY)
    cfg = {
        "c_points": get("grid", "c_points", int, 21),
        "control_points": get("grid", "control_points", int, 201),
        "x_min": get("grid", "x_min", float, None),
        "x_max": get("grid", "x_max", float, None),
        "x_points": get("grid", "x_points", int, 101),
        "seed": get("mc", "seed", int, 0),
        "paths": get("mc", "paths", int, DEFAULT_PATHS),
        "dt": get("mc", "dt", float, DEFAULT_DT),
        "horizon": get("mc", "horizon", float, None),
        "perturbation_shift_sd": get("mc", "perturbation_shift_sd", float, 0.5),
        "out_dir": Path(get("output", "dir", str, "out")),
    }
    if cp.has_option("mc", "probes"):
        cfg["probes"] = _pairs(cp.get("mc", "probes"), "mc.probes", bad)
    if cp.has_option("mc", "hitting_probes"):
        cfg["hitting_probes"] = _pairs(cp.get("mc", "hitting_probes"), "mc.hitting_probes", bad)
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    if cfg["c_points"] < 2:
        bad.append("grid.c_points")
    if cfg["control_points"] < 5:
        bad.append("grid.control_points")
    if cfg["x_points"] < 2:
        bad.append("grid.x_points")
    if cfg["paths"] < 2:
        bad.append("mc.paths")
    if not (cfg["dt"] > 0 and math.isfinite(cfg["dt"])):
        bad.append("mc.dt")
    if cfg["horizon"] is not None and not cfg["horizon"] > 0:
        bad.append("mc.horizon")
    if not 0 <= cfg["seed"] < 2**64:
        bad.append("mc.seed")
    if cfg["x_min"] is not None and cfg["x_max"] is not None and not cfg["x_min"] < cfg["x_max"]:
        bad.append("grid.x_min")
    for x, c in cfg.get("probes", []):
        if not 0 <= c <= 1:
            bad.append("mc.probes")
            break
    params = None
    try:
        params = ModelParams(penalty=PenaltySpec(coeffs), **model)
    except ValidationError as exc:
        bad.extend(f"model.{f}" for f in exc.fields)
    if bad:
        raise ValidationError("invalid configuration: " + ", ".join(bad), bad)
    return RunConfig(params=params, **cfg)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------
def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _reference_rows(params, cs):
    rows = []
    for c in cs:
        ref = params.reference_points(c)
        rows.append([c] + [getattr(ref, f) for f in REFERENCE_FIELDS])
    return rows


def _supported_solver(cfg: RunConfig) -> EntrySolver:
    regime = cfg.params.classify_regime()
    if regime.kind is RegimeKind.UNSUPPORTED:
        raise UnsupportedRegimeError(
            "k changes sign on [0, 1]: this mixed case is not covered by the solver")
    return EntrySolver(cfg.params, cfg.control_points)


def cmd_classify(cfg: RunConfig, out: Path) -> int:
    regime = cfg.params.classify_regime()
    lines = [f"regime = {regime.name}", f"chat = {fmt(regime.chat) or 'none'}",
             f"k(0) = {fmt(cfg.params.k(0.0))}", f"k(1) = {fmt(cfg.params.k(1.0))}"]
    if regime.kind is RegimeKind.UNSUPPORTED:
        lines.append("note = k changes sign on [0, 1]; the mixed case is an open problem "
                     "and no boundaries are computed")
    text = "\n".join(lines) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "classify.txt").write_text(text)
    _write_csv(out / "reference_points.csv", ("c",) + REFERENCE_FIELDS,
               _reference_rows(cfg.params, cfg.c_grid))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_boundaries(cfg: RunConfig, out: Path) -> int:
    solver = _supported_solver(cfg)
    cs = cfg.c_grid
    _write_csv(out / "control_boundary.csv", ("c", "beta_or_gamma"),
               [(c, solver.gain.control_boundary(c)) for c in cs])
    rows, failed = [], 0
    for c in cs:
        try:
            r = solver.solve(c)
            check_row(cfg.params, r)
            rows.append([c, r.topology.value, r.l1, r.l2, r.l3, r.case.value, r.m1, r.m2, ""])
        except OUEntryError as exc:
            failed += 1
            rows.append([c, "", None, None, None, "", None, None,
                         f"{type(exc).__name__}: {exc}".replace("\n", " ")])
    _write_csv(out / "entry_boundaries.csv",
               ("c", "topology", "l1", "l2", "l3", "case_tag", "m1", "m2", "error"), rows)
    _write_csv(out / "reference_points.csv", ("c",) + REFERENCE_FIELDS,
               _reference_rows(cfg.params, cs))
    if solver.reflecting:
        c_star = solver.find_c_star()
        (out / "summary.txt").write_text(f"regime = Reflecting\nc_star = {fmt(c_star)}\n")
    else:
        (out / "summary.txt").write_text("regime = Repelling\n")
    sys.stdout.write(f"wrote {len(rows)} rows, {failed} failed\n")
    return EXIT_SOLVER if failed else EXIT_OK


def value_surface_rows(solver: EntrySolver, xs, cs):
    p0 = solver.params.p0
    rows = []
    for c in cs:
        r = solver.solve(c)
        u = solver.gain.U(xs, c)
        v = solver.entry_value_V(xs, c, r)
        scale = np.maximum(1.0, np.abs(u - p0))
        flag = np.abs(v - (u - p0)) <= 1e-9 * scale
        for x, uu, vv, ff in zip(xs, u, v, flag):
            rows.append([x, c, uu, uu - p0, vv, bool(ff)])
    return rows


def cmd_value_surface(cfg: RunConfig, out: Path) -> int:
    solver = _supported_solver(cfg)
    rows = value_surface_rows(solver, cfg.x_grid, cfg.c_grid)
    _write_csv(out / "value_surface.csv",
               ("x", "c", "U", "U_minus_P0", "V", "in_stopping_region"), rows)
    sys.stdout.write(f"wrote {len(rows)} rows\n")
    return EXIT_OK


def run_checks(cfg: RunConfig):
    """All verification checks; returns a list of (name, passed, detail) tuples."""
    solver = _supported_solver(cfg)
    p = cfg.params
    mc = MCVerifier(p, solver, seed=cfg.seed)
    kw = dict(n_paths=cfg.paths, dt=cfg.dt, horizon=cfg.horizon)
    checks = []
    for x, y in cfg.hitting_probes:
        a = float(mc_exact_hitting(p, x, y))
        r = mc.hitting_laplace_mc(x, y, p.lam, **kw)
        tol = 3 * r.std_error + 0.02 * a
        checks.append((f"hitting_laplace x={fmt(x)} y={fmt(y)}", abs(a - r.estimate) <= tol,
                       f"analytic={fmt(a)} mc={fmt(r.estimate)} se={fmt(r.std_error)} "
                       f"tol={fmt(tol)}"))
    shift = cfg.perturbation_shift_sd * p.stationary_sd
    for x, c in cfg.probes:
        row = solver.solve(c)
        v = solver.entry_value_V(x, c, row)
        r = mc.simulate_entry_payoff(x, PolicySpec.from_boundary(row), **kw)
        tol = 3 * r.std_error + r.truncation_bound + 1e-12 * max(1.0, abs(v))
        checks.append((f"entry_payoff x={fmt(x)} c={fmt(c)}", abs(v - r.estimate) <= tol,
                       f"V={fmt(v)} mc={fmt(r.estimate)} se={fmt(r.std_error)} tol={fmt(tol)}"))
        if not solver.reflecting:
            f = mc.simulate_full_functional(x, c, row=row, **kw)
            tol = 3 * f.std_error + f.truncation_bound + 1e-12 * max(1.0, abs(v))
            checks.append((f"full_functional x={fmt(x)} c={fmt(c)}",
                           abs(v - f.estimate) <= tol,
                           f"V={fmt(v)} mc={fmt(f.estimate)} se={fmt(f.std_error)} "
                           f"tol={fmt(tol)}"))
        if row.topology is not Topology.TRIVIAL:
            for rep in mc.perturbation_test(x, c, shift, row=row, n_paths=cfg.paths,
                                            dt=cfg.dt, horizon=cfg.horizon):
                ok = rep["difference"] <= 2 * rep["pooled_se"]
                checks.append((f"perturbation x={fmt(x)} c={fmt(c)} {rep['boundary']} "
                               f"shift={fmt(rep['shift'])}", ok,
                               f"difference={fmt(rep['difference'])} "
                               f"pooled_se={fmt(rep['pooled_se'])}"))
    return checks


def mc_exact_hitting(params, x, y):
    from .ou_model import hitting_laplace
    return hitting_laplace(params, x, y, params.lam)


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    checks = run_checks(cfg)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}  {detail}" for name, ok, detail in checks]
    n_fail = sum(not ok for _, ok, _ in checks)
    lines.append(f"summary: {len(checks) - n_fail} passed, {n_fail} failed")
    text = "\n".join(lines) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_VERIFY if n_fail else EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "boundaries": cmd_boundaries,
    "value-surface": cmd_value_surface,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ou-entry", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI-style config file")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    ap.add_argument("--paths", type=int, help="Monte Carlo paths")
    ap.add_argument("--dt", type=float, help="Monte Carlo time step")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "paths": args.paths, "dt": args.dt,
                 "out_dir": Path(args.out) if args.out else None}
    try:
        cfg = load_config(args.config, overrides)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](cfg, cfg.out_dir)
    except (ValidationError, UnsupportedRegimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except OUEntryError as exc:
        sys.stderr.write(f"solver failure: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
