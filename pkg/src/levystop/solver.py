"""Stopping regions and value functions for Levy optimal stopping problems.

The driver works under the tilted (undiscounted) measure throughout:

1. tilt a discounted problem to q = 0;
2. flatten the reward to the left of its largest maximiser, if any;
3. check that some negatively large boundary gives a majorant (Condition A);
4. locate the subharmonic components of the reward (sign scan of L g);
5. eliminate the components left to right by two-sided exit kernels;
6. close with the largest zero of kappa below the terminal component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar, root

from .gerber_shiu import GerberShiuEvaluator, expected_reward, gerber_shiu, kappa_vec
from .levy_model import LevyModel, generator_apply
from .measure_change import TiltedProblem, tilt
from .reward import INF, PiecewiseExpPoly, check_reward, flatten_left
from .scale_functions import build_scale

NO_OST = "no optimal stopping time"


class SolverError(RuntimeError):
    def __init__(self, stage: str, message: str, diagnostics: dict | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    step: float = 1e-3
    refine: int = 10
    refine_radius: float = 0.1
    left_pad_decays: float = 30.0
    right_pad: float = 50.0
    a_min_offset: float = 200.0
    touch_tol: float = 1e-6
    kappa_tol: float = 1e-10


def make_grid(model: LevyModel, g: PiecewiseExpPoly, spec: GridSpec, extra=()) -> np.ndarray:
    kinks = list(g.kinks) or [0.0]
    mu_min = model.min_decay if model.jumps else 1.0
    lo = min(kinks) - spec.left_pad_decays / mu_min
    hi = max(kinks) + spec.right_pad
    n = int(math.ceil((hi - lo) / spec.step))
    parts = [np.linspace(lo, hi, n + 1)]
    fine = spec.step / spec.refine
    for p in list(kinks) + [float(e) for e in extra if math.isfinite(e)]:
        a, b = max(lo, p - spec.refine_radius), min(hi, p + spec.refine_radius)
        if b > a:
            parts.append(np.linspace(a, b, int(round((b - a) / fine)) + 1))
        if lo <= p <= hi:
            parts.append(np.array([p]))
    return np.unique(np.concatenate(parts))


# ---------------------------------------------------------------------------
# component scan


@dataclass
class ComponentScan:
    components: list[tuple[float, float]]
    ell0: float
    superharmonic_left_bound: float
    grid: np.ndarray = field(repr=False)
    Lg: np.ndarray = field(repr=False)


def _refine_sign_change(pos, lo: float, hi: float, iters: int = 60) -> float:
    """Boundary between a non-positive point ``lo`` and a positive point ``hi`` (or reverse)."""
    target = pos(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if pos(mid) == target:
            hi = mid
        else:
            lo = mid
    return hi


def scan_components(model: LevyModel, g: PiecewiseExpPoly, grid: np.ndarray, start: float = -INF) -> ComponentScan:
    xs = grid[grid > start]
    Lg = generator_apply(model, g, xs)
    scale = max(1.0, float(np.max(np.abs(g(xs)))))
    thr = 1e-9 * scale
    pos = Lg > thr

    def is_pos(x):
        return float(generator_apply(model, g, x)) > thr

    if not pos.any():
        raise SolverError("scan", "L g is nowhere positive: no terminal subharmonic region found")
    # trailing |L g| <= thr belongs to the terminal region (L g > 0 decays below resolution)
    last_pos = int(np.flatnonzero(pos)[-1])
    if np.any(Lg[last_pos + 1 :] < -thr):
        raise SolverError("scan", "L g is negative at the right end of the grid; no region (l0, inf) with L g > 0")
    edges = np.flatnonzero(np.diff(pos.astype(np.int8)))
    runs = []
    i0 = 0 if pos[0] else None
    for e in edges:
        if pos[e + 1]:
            i0 = e + 1
        else:
            runs.append((i0, e))
            i0 = None
    if i0 is not None:
        runs.append((i0, len(xs) - 1))

    def left_end(i):
        return float(xs[0]) if i == 0 else _refine_sign_change(is_pos, float(xs[i - 1]), float(xs[i]))

    def right_end(i):
        return _refine_sign_change(is_pos, float(xs[i + 1]), float(xs[i]))

    comps = [(left_end(i), right_end(j)) for i, j in runs[:-1]]
    ell0 = left_end(runs[-1][0])
    if runs[-1][0] == 0 and math.isinf(start):
        raise SolverError("scan", "L g > 0 on the whole grid: widen the grid or check the reward")
    # convex kinks are singular subharmonic points when paths have unbounded variation
    if not model.bounded_variation:
        for p in g.kinks:
            if start < p < ell0 and g.deriv(p, "right") - g.deriv(p, "left") > 1e-8:
                if not any(l <= p <= r for l, r in comps):
                    comps.append((p, p))
        comps.sort()
    jump = g.deriv(ell0, "right") - g.deriv(ell0, "left")
    if jump < -1e-8:
        raise SolverError("scan", f"g'(l0+) < g'(l0-) at l0={ell0:.6g}: excluded exceptional case")
    bound = comps[0][0] if comps else ell0
    return ComponentScan(comps, ell0, bound, xs, Lg)


# ---------------------------------------------------------------------------
# helpers on h_a - g


def _local_minima(fd, xs: np.ndarray, keep: int = 6, below: float | None = None):
    """Refined local minima of ``fd`` over a sorted grid: list of (x, value)."""
    d = fd(xs)
    n = len(xs)
    if n < 3:
        i = int(np.argmin(d))
        return [(float(xs[i]), float(d[i]))]
    mid = np.flatnonzero((d[1:-1] <= d[:-2]) & (d[1:-1] < d[2:])) + 1
    idx = list(mid)
    if d[0] <= d[1]:
        idx.append(0)
    if d[-1] < d[-2]:
        idx.append(n - 1)
    idx = np.array(sorted(set(idx)), dtype=int)
    if below is not None:
        idx = idx[d[idx] < below]
    else:
        idx = idx[np.argsort(d[idx])[:keep]]
    out = []
    for i in idx:
        if 0 < i < n - 1:
            res = minimize_scalar(
                lambda t: float(fd(np.array([t]))[0]),
                bounds=(float(xs[i - 1]), float(xs[i + 1])),
                method="bounded",
                options={"xatol": 1e-13},
            )
            x, v = (float(res.x), float(res.fun)) if res.fun <= d[i] else (float(xs[i]), float(d[i]))
        else:
            x, v = float(xs[i]), float(d[i])
        out.append((x, v))
    return sorted(out)


@dataclass
class TwoSidedOutcome:
    kind: str  # "interval" or "one_sided"
    a: float
    b: float | None
    residuals: dict


def _tail_limit(model: LevyModel, ev: GerberShiuEvaluator) -> float:
    # h_a(x) -> kappa(a) W(inf) with W(inf) = 1/psi'(0+) under q = 0
    return ev.kappa / model.mean_drift


def check_condition_A(model, g, scan: ComponentScan, grid: np.ndarray, flattened: bool, spec: GridSpec, scale=None):
    """Return (verdict, a) where verdict is 'flattened', 'holds' or 'fails'."""
    if flattened:
        return "flattened", None
    scale = scale or build_scale(model, 0.0)
    bound = scan.superharmonic_left_bound
    a_min = bound - spec.a_min_offset
    gscale = max(1.0, float(np.max(np.abs(g(grid)))))
    tol = 1e-9 * gscale
    step = 0.5
    a = bound
    while a >= a_min:
        ev = gerber_shiu(model, g, a, 0.0, scale)
        right = grid[grid >= bound]
        left = np.linspace(a, bound, 4001)[1:]
        ok_right = np.min(ev.h(right) - g(right)) > tol
        ok_left = np.min(ev.h(left) - g(left)) >= -tol
        if ok_right and ok_left and ev.kappa > -tol:
            return "holds", a
        a = bound - step
        step *= 2.0
    if a_min < bound - step / 2:
        ev = gerber_shiu(model, g, a_min, 0.0, scale)
        right = grid[grid >= bound]
        if np.min(ev.h(right) - g(right)) > tol and ev.kappa > -tol:
            return "holds", a_min
    return "fails", None


def solve_two_sided(
    model: LevyModel,
    g: PiecewiseExpPoly,
    component: tuple[float, float],
    a_lo: float,
    grid: np.ndarray,
    spec: GridSpec,
    scale=None,
) -> TwoSidedOutcome:
    scale = scale or build_scale(model, 0.0)
    ell, r = component
    xs = grid[grid >= ell]
    gmax = max(1.0, float(np.max(g(grid))))
    touch = spec.touch_tol * (1.0 + gmax)

    def margin(a):
        ev = gerber_shiu(model, g, a, 0.0, scale)
        fd = lambda x: ev.h(x) - g(x)  # noqa: E731
        vals = [v for _, v in _local_minima(fd, xs)]
        return min(min(vals), _tail_limit(model, ev))

    m_lo = margin(a_lo)
    if m_lo <= 0:
        raise SolverError("two-sided", f"h_a does not majorise g on [l, inf) at the lower bracket a={a_lo:.6g}")
    hi = ell - 1e-12 * max(1.0, abs(ell))
    m_hi = margin(hi)
    if m_hi > 0:
        raise SolverError("two-sided", f"h_a still majorises g at a=l={ell:.6g}; component not subharmonic?")
    a1 = brentq(margin, a_lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    ev = gerber_shiu(model, g, a1, 0.0, scale)
    fd = lambda x: ev.h(x) - g(x)  # noqa: E731
    # a finite touch needs g > 0 there; minima at the grid's right end are the tail limit
    touches = [
        (x, v) for x, v in _local_minima(fd, xs, below=touch) if x < xs[-1] and float(g(x)) > touch
    ]
    if not touches:
        return TwoSidedOutcome("one_sided", a1, None, {"kappa": ev.kappa, "margin": margin(a1)})
    b1 = max(x for x, _ in touches)

    def system(z):
        a, b = z
        e = gerber_shiu(model, g, a, 0.0, scale)
        return [e.h(b) - float(g(b)), e.h_prime(b) - float(g.deriv(b, "right"))]

    res0 = float(np.hypot(*system([a1, b1])))
    sol = root(system, [a1, b1], method="hybr", options={"xtol": 1e-15})
    a2, b2 = (float(v) for v in sol.x)
    res1 = float(np.hypot(*system([a2, b2])))
    if res1 < res0 and abs(a2 - a1) < 1e-4 and abs(b2 - b1) < 1e-2 and a2 < ell and b2 > r:
        a1, b1, res0 = a2, b2, res1
    Lg_b = float(generator_apply(model, g, b1))
    return TwoSidedOutcome(
        "interval",
        a1,
        b1,
        {"system_residual": res0, "Lg_at_b": Lg_b, "n_touches": len(touches)},
    )


def kappa_roots(model, g, lower: float, upper: float, spec: GridSpec, n_per_unit: int = 1000) -> list[float]:
    n = max(200, int((upper - lower) * n_per_unit))
    grid = np.linspace(lower, upper, n + 1)
    k = kappa_vec(model, g, grid)
    out = []
    if k[-1] == 0.0:
        out.append(float(upper))
    for i in np.flatnonzero(np.sign(k[:-1]) * np.sign(k[1:]) < 0):
        f = lambda a: float(kappa_vec(model, g, np.array([a]))[0])  # noqa: E731
        r = brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15, maxiter=200)
        if abs(f(r)) < spec.kappa_tol * max(1.0, float(np.max(np.abs(k)))) or abs(f(r)) < 1e-9:
            out.append(float(r))
    for i in np.flatnonzero(k[1:-1] == 0.0) + 1:
        out.append(float(grid[i]))
    return sorted(set(out))


def solve_one_sided(model, g, lower: float, upper: float, grid, spec: GridSpec, scale=None):
    """Largest zero of kappa on (lower, upper] whose one-sided kernel majorises g."""
    scale = scale or build_scale(model, 0.0)
    roots = kappa_roots(model, g, lower, upper, spec)
    if not roots:
        raise SolverError("one-sided", NO_OST + ": kappa has no zero below l0")
    tried = []
    for a in sorted(roots, reverse=True):
        v = gerber_shiu(model, g, a, 0.0, scale).one_sided_function()
        xs = grid[grid > a]
        gap = float(np.min(v(xs) - g(xs))) if len(xs) else 0.0
        tried.append((a, gap))
        if gap >= -1e-7:
            return a, v, roots
    raise SolverError("one-sided", f"no zero of kappa gives a majorant: {tried}")


# ---------------------------------------------------------------------------
# regions


def continuation_components(gamma) -> list[tuple[float, float]]:
    out = []
    if not gamma:
        return [(-INF, INF)]
    if gamma[0][0] > -INF:
        out.append((-INF, gamma[0][0]))
    for (_, r0), (l1, _) in zip(gamma, gamma[1:]):
        out.append((r0, l1))
    if gamma[-1][1] < INF:
        out.append((gamma[-1][1], INF))
    return out


def in_gamma(x, gamma) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=bool)
    for l, r in gamma:
        out |= (x >= l) & (x <= r)
    return out


# ---------------------------------------------------------------------------
# diagnostics


def diagnose(model: LevyModel, g: PiecewiseExpPoly, gamma, grid: np.ndarray, v: PiecewiseExpPoly | None = None) -> dict:
    """Majorant margin, fit residuals, harmonicity and superharmonicity of the value for Gamma.

    Runs under an undiscounted model (tilt first when q > 0).
    """
    if v is None:
        v = expected_reward(model, g, gamma, 0.0)
    bv = model.bounded_variation
    gap = v(grid) - g(grid)
    left, right = [], []
    for l, r in continuation_components(gamma):
        if math.isfinite(l):
            if bv:
                res = abs(float(v.value(l, "right")) - float(g.value(l, "left")))
                kind = "continuous"
            else:
                res = abs(float(v.deriv(l, "right")) - float(g.deriv(l, "left")))
                kind = "smooth"
            left.append({"x": l, "kind": kind, "residual": res})
        if math.isfinite(r):
            res = abs(float(v.deriv(r, "left")) - float(g.deriv(r, "right")))
            right.append({"x": r, "kind": "smooth", "residual": res})
    Lv = generator_apply(model, v, grid)
    bounds = [e for iv in gamma for e in iv if math.isfinite(e)]
    away = np.ones(grid.shape, dtype=bool)
    for e in bounds:
        away &= np.abs(grid - e) > 1e-6
    stop = in_gamma(grid, gamma)
    cont_pts = away & ~stop
    stop_pts = away & stop
    # an isolated point of Gamma has no interior
    return {
        "majorant_margin": float(np.min(gap)),
        "left_fit": left,
        "right_fit": right,
        "max_abs_Lv_continuation": float(np.max(np.abs(Lv[cont_pts]))) if cont_pts.any() else 0.0,
        "max_Lv_stopping": float(np.max(Lv[stop_pts])) if stop_pts.any() else -INF,
    }


FIT_TOL = {"continuous": 1e-7, "smooth": 1e-6}
MAJORANT_TOL = 1e-7
HARMONIC_TOL = 1e-5
SUPERHARMONIC_TOL = 1e-8


def verdicts(diag: dict) -> dict:
    fits = diag["left_fit"] + diag["right_fit"]
    return {
        "majorant": diag["majorant_margin"] >= -MAJORANT_TOL,
        "fit": all(f["residual"] < FIT_TOL[f["kind"]] for f in fits),
        "harmonic": diag["max_abs_Lv_continuation"] < HARMONIC_TOL,
        "superharmonic": diag["max_Lv_stopping"] <= SUPERHARMONIC_TOL,
    }


# ---------------------------------------------------------------------------
# driver


@dataclass
class Solution:
    gamma: list[tuple[float, float]]
    value: PiecewiseExpPoly | None  # in the original (discounted) coordinates
    verdict: str
    diagnostics: dict
    problem: TiltedProblem
    tilted_value: PiecewiseExpPoly | None = None
    grid: np.ndarray | None = field(default=None, repr=False)

    @property
    def boundaries(self) -> list[float]:
        return [e for iv in self.gamma for e in iv if math.isfinite(e)]

    @property
    def has_optimal_stopping_time(self) -> bool:
        return self.verdict == "optimal"


def run_procedure(model: LevyModel, g: PiecewiseExpPoly, q: float = 0.0, spec: GridSpec | None = None) -> Solution:
    spec = spec or GridSpec()
    check_reward(g)
    problem = tilt(model, g, q)
    m, gt = problem.model, problem.reward
    scale = build_scale(m, 0.0)

    beta, gh = flatten_left(gt)
    grid = make_grid(m, gh, spec, extra=[beta] if beta is not None else [])
    scan = scan_components(m, gh, grid)
    diag: dict = {
        "beta": beta,
        "ell0": scan.ell0,
        "components": [list(c) for c in scan.components],
    }

    verdict_A, a_A = check_condition_A(m, gh, scan, grid, beta is not None, spec, scale)
    diag["condition_A"] = verdict_A
    diag["condition_A_floor"] = scan.superharmonic_left_bound - spec.a_min_offset
    if verdict_A == "fails":
        diag["condition_A"] = "fails within search floor"
        return Solution([], None, NO_OST, diag, problem, grid=grid)

    intervals: list[tuple[float, float]] = []
    current = gh
    lower = beta if beta is not None else a_A
    a_lo = beta - 1.0 if beta is not None else a_A
    pending = list(scan.components)
    ell0 = scan.ell0
    iterations = 0
    n_components = len(scan.components)
    one_sided_stop = None
    composition_err = []
    while pending:
        comp = pending.pop(0)
        iterations += 1
        kinks_below = [p for p in current.kinks if p < comp[0] - 1e-9 and abs(current.deriv(p, "right") - current.deriv(p, "left")) > 1e-8]
        out = solve_two_sided(m, current, comp, a_lo, grid, spec, scale)
        p_m = max(kinks_below, default=-INF)
        if out.a <= p_m:
            raise SolverError(
                "two-sided",
                f"a'={out.a:.8g} does not exceed the last kink {p_m:.8g} below the component",
                diag,
            )
        if out.kind == "one_sided":
            one_sided_stop = out.a
            diag.setdefault("two_sided", []).append({"component": list(comp), "a": out.a, "b": None, **out.residuals})
            break
        ev = gerber_shiu(m, current, out.a, 0.0, scale)
        new = ev.two_sided_function(out.b)
        left_pts = grid[grid <= out.b]
        composition_err.append(float(np.max(np.abs(new(left_pts) - ev.h(left_pts)))))
        diag.setdefault("two_sided", []).append({"component": list(comp), "a": out.a, "b": out.b, **out.residuals})
        intervals.append((out.a, out.b))
        current = new
        lower = out.b
        a_lo = out.b
        rescan = scan_components(m, current, grid, start=out.b)
        pending = [c for c in rescan.components if c[0] > out.b]
        ell0 = rescan.ell0
    diag["iterations"] = iterations
    diag["composition_error"] = composition_err
    if iterations > n_components:
        raise SolverError("procedure", f"step-6 iterations {iterations} exceed component count {n_components}", diag)

    if one_sided_stop is not None:
        a_star = one_sided_stop
        diag["kappa_roots"] = [a_star]
    else:
        try:
            a_star, _, roots = solve_one_sided(m, current, lower, ell0, grid, spec, scale)
        except SolverError as exc:
            if NO_OST not in str(exc):
                raise
            diag["kappa_roots"] = []
            return Solution([], None, NO_OST, diag, problem, grid=grid)
        diag["kappa_roots"] = roots
    diag["a_star"] = a_star

    left_end = beta if beta is not None else -INF
    cuts = [left_end]
    for a, b in intervals:
        cuts += [a, b]
    cuts.append(a_star)
    gamma = [(cuts[i], cuts[i + 1]) for i in range(0, len(cuts), 2)]
    vt = expected_reward(m, gt, gamma, 0.0)
    diag.update(diagnostics_for(model, g, q, gamma, spec))
    value = vt.tilted(-problem.phi_q) if problem.phi_q else vt
    return Solution(gamma, value, "optimal", diag, problem, vt, grid)


def diagnostics_for(model: LevyModel, g: PiecewiseExpPoly, q: float, gamma, spec: GridSpec | None = None) -> dict:
    """Recompute diagnostics for an arbitrary candidate region (used for round trips and perturbations)."""
    spec = spec or GridSpec()
    problem = tilt(model, g, q)
    beta, gh = flatten_left(problem.reward)
    bounds = [e for iv in gamma for e in iv if math.isfinite(e)]
    grid = make_grid(problem.model, gh, spec, extra=bounds)
    out = diagnose(problem.model, problem.reward, gamma, grid)
    out["verdicts"] = verdicts(out)
    return out


__all__ = [
    "ComponentScan",
    "GridSpec",
    "NO_OST",
    "Solution",
    "SolverError",
    "TwoSidedOutcome",
    "check_condition_A",
    "continuation_components",
    "diagnose",
    "diagnostics_for",
    "in_gamma",
    "kappa_roots",
    "make_grid",
    "run_procedure",
    "scan_components",
    "solve_one_sided",
    "solve_two_sided",
    "verdicts",
]
