"""Command-line front end.

Subcommands: solve, validate, simulate, scale-table, gerber-shiu.
Exit codes: 0 success, 1 error, 2 no optimal stopping time exists.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .gerber_shiu import expected_reward, gerber_shiu
from .levy_model import ModelError, generator_apply
from .measure_change import tilt
from .problem import SpecError, gamma_to_json, load_spec, parse_gamma
from .reward import RewardError
from .scale_functions import ScaleError, build_scale
from .solver import NO_OST, Solution, SolverError, diagnostics_for, in_gamma, run_procedure

log = logging.getLogger("levystop")

EXIT_OK, EXIT_ERROR, EXIT_NO_OST = 0, 1, 2
SOLUTION_SCHEMA = 1
VALUE_COLUMNS = ["x", "v", "g", "v_minus_g", "Lv", "region"]
SIM_COLUMNS = ["x0", "mc_mean", "mc_stderr", "analytic", "z", "n_paths", "truncation_fraction"]
SCALE_COLUMNS = ["x", "W", "Z", "Z2"]
GS_COLUMNS = ["x", "h", "h_prime", "H_one"]


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _json_safe(obj.item())
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_csv(path, header, rows) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _shifted(gamma, shift):
    if shift is None:
        return gamma
    idx, delta = shift
    flat = [e for iv in gamma for e in iv]
    finite = [i for i, e in enumerate(flat) if math.isfinite(e)]
    if idx >= len(finite):
        raise SpecError(f"boundary_shift index {idx} out of range ({len(finite)} finite boundaries)")
    flat[finite[idx]] += delta
    return parse_gamma([[flat[i], flat[i + 1]] for i in range(0, len(flat), 2)])


def solution_record(spec, sol: Solution) -> dict:
    d = sol.diagnostics
    return _json_safe(
        {
            "schema_version": SOLUTION_SCHEMA,
            "verdict": sol.verdict,
            "q": spec.q,
            "phi_q": sol.problem.phi_q,
            "gamma": gamma_to_json(sol.gamma),
            "boundaries": sol.boundaries,
            "kappa_roots": d.get("kappa_roots", []),
            "condition_A": d.get("condition_A"),
            "iterations": d.get("iterations", 0),
            "components": d.get("components", []),
            "two_sided": d.get("two_sided", []),
            "residuals": {"left_fit": d.get("left_fit", []), "right_fit": d.get("right_fit", [])},
            "diagnostics": {
                k: d[k]
                for k in ("majorant_margin", "left_fit", "right_fit", "max_abs_Lv_continuation", "max_Lv_stopping", "verdicts")
                if k in d
            },
            "problem": {"model": spec.model.to_dict(), "reward": spec.reward_desc},
        }
    )


def _value_rows(spec, sol: Solution, step: float):
    b = sol.boundaries
    lo = (min(b) if b else 0.0) - 5.0
    hi = (max(b) if b else 0.0) + 5.0
    xs = np.round(np.arange(lo, hi + 0.5 * step, step), 12)
    v = sol.value(xs)
    g = spec.reward(xs)
    # (L - q) v under the original measure equals e^{Phi x} times the tilted generator
    Lv = generator_apply(sol.problem.model, sol.tilted_value, xs) * np.exp(sol.problem.phi_q * xs)
    region = np.where(in_gamma(xs, sol.gamma), "stop", "continue")
    return zip(xs, v, g, v - g, Lv, region)


def cmd_solve(args) -> int:
    spec = load_spec(args.spec)
    sol = run_procedure(spec.model, spec.reward, spec.q, spec.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = solution_record(spec, sol)
    (out / "solution.json").write_text(json.dumps(rec, indent=2) + "\n")
    if sol.has_optimal_stopping_time:
        _write_csv(out / "value_grid.csv", VALUE_COLUMNS, _value_rows(spec, sol, args.grid_step))
        if args.plot:
            from .plotting import plot_solution

            plot_solution(spec, sol, out / "solution.png")
        print(f"Gamma = {rec['gamma']}")
        return EXIT_OK
    print(NO_OST)
    return EXIT_NO_OST


def _check_rows(spec, gamma) -> list[tuple[str, float, float, bool]]:
    rows = []
    ev = build_scale(spec.model, spec.q)
    betas = ev.phi + np.array([0.5, 1.0, 2.0, 5.0, 10.0])
    exact = 1.0 / (spec.model.psi(betas) - spec.q)
    rel = float(np.max(np.abs(ev.laplace_W(betas) - exact) / np.abs(exact)))
    rows.append(("laplace_identity", rel, 1e-10, rel < 1e-10))
    diag = diagnostics_for(spec.model, spec.reward, spec.q, gamma, spec.grid)
    rows.append(("majorant_margin", diag["majorant_margin"], -1e-7, diag["verdicts"]["majorant"]))
    for f in diag["left_fit"] + diag["right_fit"]:
        tol = 1e-7 if f["kind"] == "continuous" else 1e-6
        side = "left" if f in diag["left_fit"] else "right"
        rows.append((f"{f['kind']}_fit_{side}@{f['x']:.6f}", f["residual"], tol, f["residual"] < tol))
    rows.append(("harmonic_continuation", diag["max_abs_Lv_continuation"], 1e-5, diag["verdicts"]["harmonic"]))
    rows.append(("superharmonic_stopping", diag["max_Lv_stopping"], 1e-8, diag["verdicts"]["superharmonic"]))
    return rows, diag


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    stored = None
    if args.solution:
        rec = json.loads(Path(args.solution).read_text())
        if rec.get("verdict") != "optimal":
            print(NO_OST)
            return EXIT_NO_OST
        gamma = parse_gamma(rec["gamma"])
        stored = rec.get("diagnostics")
    else:
        sol = run_procedure(spec.model, spec.reward, spec.q, spec.grid)
        if not sol.has_optimal_stopping_time:
            print(NO_OST)
            return EXIT_NO_OST
        gamma = sol.gamma
    gamma = _shifted(gamma, spec.boundary_shift)
    rows, diag = _check_rows(spec, gamma)
    if stored is not None and spec.boundary_shift is None:
        fresh = _json_safe({k: diag[k] for k in stored})
        same = fresh == stored
        rows.append(("round_trip", 0.0 if same else 1.0, 0.0, same))
    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'value':>12}  {'tolerance':>10}  result")
    for name, val, tol, ok in rows:
        print(f"{name:<{width}}  {val:>12.4g}  {tol:>10.1g}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(r[3] for r in rows) else EXIT_ERROR


def cmd_simulate(args) -> int:
    from .montecarlo import PathConfig, default_horizon, simulate_stopped

    spec = load_spec(args.spec)
    mc = spec.mc
    if mc.gamma is not None:
        gamma = mc.gamma
    else:
        sol = run_procedure(spec.model, spec.reward, spec.q, spec.grid)
        if not sol.has_optimal_stopping_time:
            print(NO_OST)
            return EXIT_NO_OST
        gamma = sol.gamma
    x0s = args.x0 or mc.x0
    if not x0s:
        raise SpecError("no starting points: give --x0 or mc.x0 in the spec")
    n = args.paths or mc.n_paths
    seed = mc.seed if args.seed is None else args.seed
    horizon = mc.horizon or default_horizon(spec.model, spec.q)
    exact = expected_reward(spec.model, spec.reward, gamma, spec.q)
    rows = []
    for x0 in x0s:
        est = simulate_stopped(spec.model, spec.reward, spec.q, gamma, PathConfig(x0, horizon, n, seed, mc.dt))
        a = float(exact(x0))
        z = (est.mean - a) / est.stderr if est.stderr > 0 else (0.0 if est.mean == a else math.inf)
        rows.append((x0, est.mean, est.stderr, a, z, n, est.truncation_fraction))
    _write_csv(args.out, SIM_COLUMNS, rows)
    return EXIT_OK


def _xs(args, default_lo, default_hi):
    lo = default_lo if args.x_min is None else args.x_min
    hi = default_hi if args.x_max is None else args.x_max
    return np.linspace(lo, hi, args.n)


def cmd_scale_table(args) -> int:
    spec = load_spec(args.spec)
    q = spec.q if args.q is None else args.q
    ev = build_scale(spec.model, q)
    xs = _xs(args, 0.0, 10.0)
    _write_csv(args.out, SCALE_COLUMNS, zip(xs, ev.W(xs), ev.Z(xs), ev.Z2(xs, args.theta)))
    return EXIT_OK


def cmd_gerber_shiu(args) -> int:
    spec = load_spec(args.spec)
    tilt(spec.model, spec.reward, spec.q)  # transience check
    ev = gerber_shiu(spec.model, spec.reward, args.a, spec.q, plus=args.plus)
    xs = _xs(args, args.a - 2.0, args.a + 10.0)
    _write_csv(args.out, GS_COLUMNS, zip(xs, ev.h(xs), ev.h_prime(xs), ev.H_one(xs)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levystop",
        description="Optimal stopping for spectrally negative Levy processes with hyperexponential jumps.",
        epilog="Exit codes: 0 success, 1 error, 2 no optimal stopping time. "
        "LEVYSTOP_THREADS caps Monte Carlo worker threads.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser(
        "solve",
        help="compute the stopping region and value function",
        description="Writes solution.json and value_grid.csv (columns: " + ", ".join(VALUE_COLUMNS) + ").",
    )
    s.add_argument("spec")
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--grid-step", type=float, default=0.01, help="spacing of value_grid.csv")
    s.add_argument("--plot", action="store_true", help="also render solution.png (needs matplotlib)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("validate", help="run residual and identity checks; exit 0 iff all pass")
    s.add_argument("spec")
    s.add_argument("--solution", help="re-validate a previously written solution.json")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser(
        "simulate",
        help="Monte Carlo estimate of the stopped reward",
        description="CSV columns: " + ", ".join(SIM_COLUMNS) + ".",
    )
    s.add_argument("spec")
    s.add_argument("--paths", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--x0", type=float, action="append", help="starting point (repeatable)")
    s.add_argument("--out", default="-", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scale-table", help="tabulate W, Z, Z2", description="CSV columns: " + ", ".join(SCALE_COLUMNS) + ".")
    s.add_argument("spec")
    s.add_argument("--q", type=float)
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--x-min", type=float)
    s.add_argument("--x-max", type=float)
    s.add_argument("--n", type=int, default=101)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_scale_table)

    s = sub.add_parser("gerber-shiu", help="tabulate h_a, h_a' and the one-sided kernel", description="CSV columns: " + ", ".join(GS_COLUMNS) + ".")
    s.add_argument("spec")
    s.add_argument("--a", type=float, required=True)
    s.add_argument("--plus", action="store_true", help="use g'(a+) in the linear term")
    s.add_argument("--x-min", type=float)
    s.add_argument("--x-max", type=float)
    s.add_argument("--n", type=int, default=121)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_gerber_shiu)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SpecError, ModelError, RewardError, ScaleError, SolverError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
