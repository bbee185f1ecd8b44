"""Piecewise exponential-polynomial functions and reward families.

Every function the solver manipulates (rewards, smooth Gerber-Shiu
functions, expected-reward kernels, value functions) is a continuous-or-not
piecewise sum of terms ``c * (x - x0)**p * exp(gamma * (x - x0))``.  The
class is closed under the jump-measure convolutions of the hyperexponential
models in :mod:`levystop.levy_model`, so generator evaluations and fit
equations never need quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INF = math.inf
KINK_TOL = 1e-12


class RewardError(ValueError):
    """Raised for rewards outside the supported class."""


def _as_terms(terms) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = [(float(c), float(g), int(p)) for c, g, p in terms]
    if not arr:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=int)
    c, g, p = zip(*arr)
    if min(p) < 0:
        raise RewardError("term powers must be nonnegative integers")
    return np.array(c), np.array(g), np.array(p, dtype=int)


def _merge_terms(coef, rate, power, rel_tol=0.0):
    merged: dict[tuple[float, int], float] = {}
    for c, g, p in zip(coef, rate, power):
        key = (float(g), int(p))
        merged[key] = merged.get(key, 0.0) + float(c)
    scale = max((abs(v) for v in merged.values()), default=0.0)
    out = [(c, g, p) for (g, p), c in merged.items() if c != 0.0 and abs(c) > rel_tol * scale]
    return _as_terms(out)


@dataclass(frozen=True)
class Piece:
    """Sum of ``c (x-anchor)^p e^{gamma (x-anchor)}`` on ``[left, right)``."""

    left: float
    right: float
    coef: np.ndarray
    rate: np.ndarray
    power: np.ndarray
    anchor: float = 0.0

    @classmethod
    def from_terms(cls, left, right, terms, anchor=None) -> "Piece":
        if anchor is None:
            anchor = _default_anchor(left, right)
        c, g, p = _as_terms(terms)
        return cls(float(left), float(right), c, g, p, float(anchor))

    @property
    def terms(self) -> list[tuple[float, float, int]]:
        return [(float(c), float(g), int(p)) for c, g, p in zip(self.coef, self.rate, self.power)]

    def value(self, x, order: int = 0):
        """Evaluate the ``order``-th derivative (0, 1 or 2) at ``x``."""
        u = np.asarray(x, dtype=float) - self.anchor
        out = np.zeros_like(u)
        for c, g, p in zip(self.coef, self.rate, self.power):
            e = np.exp(g * u)
            if order == 0:
                poly = u**p
            elif order == 1:
                poly = g * u**p + (p * u ** (p - 1) if p >= 1 else 0.0)
            elif order == 2:
                poly = g * g * u**p
                if p >= 1:
                    poly = poly + 2.0 * g * p * u ** (p - 1)
                if p >= 2:
                    poly = poly + p * (p - 1) * u ** (p - 2)
            else:
                raise ValueError("order must be 0, 1 or 2")
            out = out + c * poly * e
        return out

    def scaled(self, factor: float) -> "Piece":
        return Piece(self.left, self.right, self.coef * factor, self.rate, self.power, self.anchor)

    def clipped(self, left: float, right: float) -> "Piece":
        return Piece(max(self.left, left), min(self.right, right), self.coef, self.rate, self.power, self.anchor)

    def reanchored(self, anchor: float) -> "Piece":
        """Same function expressed around a new anchor (binomial expansion)."""
        d = self.anchor - anchor
        terms = []
        for c, g, p in zip(self.coef, self.rate, self.power):
            # old coordinate u = x - self.anchor = u' - d with u' = x - anchor
            base = c * math.exp(-g * d)
            for k in range(p + 1):
                terms.append((base * math.comb(p, k) * (-d) ** (p - k), g, k))
        c, g, p = _merge_terms(*_as_terms(terms))
        return Piece(self.left, self.right, c, g, p, float(anchor))

    def tilted(self, phi: float) -> "Piece":
        """Multiply by ``exp(-phi * x)``."""
        factor = math.exp(-phi * self.anchor)
        return Piece(self.left, self.right, self.coef * factor, self.rate - phi, self.power, self.anchor)

    def limit(self, direction: int) -> float:
        """Limit of the piece formula as x -> +inf (direction=1) or -inf (-1)."""
        c, g, p = _merge_terms(self.coef, self.rate, self.power, rel_tol=1e-13)
        if len(c) == 0:
            return 0.0
        # growth order of u^p e^{g u} as u -> direction*inf
        keys = [(direction * gi, pi) for gi, pi in zip(g, p)]
        best = max(keys)
        if best[0] < 0:
            return 0.0
        if best == (0.0, 0):
            return float(sum(ci for ci, k in zip(c, keys) if k == best))
        lead = float(sum(ci for ci, k in zip(c, keys) if k == best))
        sign = lead * direction ** best[1]
        return math.copysign(INF, sign)

    def is_constant(self) -> bool:
        c, g, p = _merge_terms(self.coef, self.rate, self.power, rel_tol=1e-14)
        return all(gi == 0.0 and pi == 0 for gi, pi in zip(g, p))


def _default_anchor(left: float, right: float) -> float:
    if math.isfinite(left):
        return float(left)
    if math.isfinite(right):
        return float(right)
    return 0.0


def _int_pow_exp(p: int, s: float, u0, u1, shift):
    """``exp(shift) * int_{u0}^{u1} u^p e^{s u} du`` elementwise; ``u0`` may be -inf."""
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    shift = np.asarray(shift, dtype=float)
    u0, u1, shift = np.broadcast_arrays(u0, u1, shift)
    out = np.zeros(u0.shape)
    left_inf = np.isneginf(u0)
    if left_inf.any() and s <= 0.0:
        raise RewardError("jump integral diverges: reward grows too fast at -inf for the jump measure")
    umax = np.maximum(np.abs(np.where(left_inf, 0.0, u0)), np.abs(u1))
    small = (~left_inf) & (np.abs(s) * umax < 0.5)
    big = ~small

    if small.any():
        a, b, sh = u0[small], u1[small], shift[small]
        acc = np.zeros(a.shape)
        fact = 1.0
        for n in range(40):
            if n:
                fact *= n
            k = p + n + 1
            acc += s**n / fact * (b**k - a**k) / k
            if s == 0.0:
                break
        out[small] = acc * np.exp(sh)

    if big.any():
        a, b, sh = u0[big], u1[big], shift[big]

        def prim(u):
            poly = np.zeros(u.shape)
            ff = 1.0
            for k in range(p + 1):
                if k:
                    ff *= p - k + 1
                poly = poly + (-1) ** k * ff * u ** (p - k) / s ** (k + 1)
            return poly

        hi = prim(b) * np.exp(s * b + sh)
        lo = np.zeros(a.shape)
        finite = np.isfinite(a)
        if finite.any():
            lo[finite] = prim(a[finite]) * np.exp(s * a[finite] + sh[finite])
        res = hi - lo
        if p == 0 and finite.any():
            # expm1 form keeps narrow intervals accurate
            af, bf, shf = a[finite], b[finite], sh[finite]
            res[finite] = np.exp(s * af + shf) * np.expm1(s * (bf - af)) / s
        out[big] = res
    return out


class PiecewiseExpPoly:
    """A function on the real line built from :class:`Piece` objects.

    Pieces tile the line: the first starts at -inf, the last ends at +inf.
    Evaluation at a breakpoint uses the piece on the right unless
    ``side='left'`` is requested.  ``points`` optionally pins the plain value
    ``f(x)`` at isolated points (e.g. the closed right end of a stopping
    interval); one-sided values and derivatives ignore it.
    """

    def __init__(self, pieces: Sequence[Piece], points: dict[float, float] | None = None):
        pieces = [p for p in pieces if p.right > p.left]
        if not pieces:
            raise RewardError("at least one piece is required")
        if pieces[0].left != -INF or pieces[-1].right != INF:
            raise RewardError("pieces must cover the whole real line")
        for a, b in zip(pieces, pieces[1:]):
            if a.right != b.left:
                raise RewardError(f"pieces leave a gap or overlap at {a.right} / {b.left}")
        self.pieces: tuple[Piece, ...] = tuple(pieces)
        self.breaks = np.array([p.left for p in pieces[1:]], dtype=float)
        self.points = dict(points or {})

    # -- evaluation ---------------------------------------------------------
    def _index(self, x, side: str):
        return np.searchsorted(self.breaks, x, side="right" if side == "right" else "left")

    def _eval(self, x, order: int, side: str):
        xa = np.asarray(x, dtype=float)
        scalar = xa.ndim == 0
        xa = np.atleast_1d(xa)
        idx = self._index(xa, side)
        out = np.empty(xa.shape)
        for k in np.unique(idx):
            m = idx == k
            out[m] = self.pieces[k].value(xa[m], order)
        return float(out[0]) if scalar else out

    def __call__(self, x):
        out = self._eval(x, 0, "right")
        if not self.points:
            return out
        xa = np.asarray(x, dtype=float)
        if xa.ndim == 0:
            return self.points.get(float(xa), out)
        for p, val in self.points.items():
            out[xa == p] = val
        return out

    def value(self, x, side: str = "right"):
        return self._eval(x, 0, side)

    def deriv(self, x, side: str = "right"):
        return self._eval(x, 1, side)

    def deriv2(self, x, side: str = "right"):
        return self._eval(x, 2, side)

    # -- structure ----------------------------------------------------------
    @property
    def kinks(self) -> list[float]:
        out = []
        for b in self.breaks:
            jump = self.deriv(b, "right") - self.deriv(b, "left")
            if abs(jump) > KINK_TOL:
                out.append(float(b))
        return out

    def discontinuities(self, tol: float = 1e-9) -> list[float]:
        out = []
        for b in self.breaks:
            l, r = self.value(b, "left"), self.value(b, "right")
            if abs(l - r) > tol * (1.0 + abs(l)):
                out.append(float(b))
        return out

    def limit(self, direction: int) -> float:
        return self.pieces[-1 if direction > 0 else 0].limit(direction)

    def truncated(self, a: float) -> list[Piece]:
        """Pieces restricted to ``(-inf, a)``."""
        return [p.clipped(-INF, a) for p in self.pieces if p.left < a]

    def tail(self, b: float) -> list[Piece]:
        """Pieces restricted to ``[b, inf)``."""
        return [p.clipped(b, INF) for p in self.pieces if p.right > b]

    def tilted(self, phi: float) -> "PiecewiseExpPoly":
        if phi == 0.0:
            return self
        pts = {x: v * math.exp(-phi * x) for x, v in self.points.items()}
        return PiecewiseExpPoly([p.tilted(phi) for p in self.pieces], pts)

    def exp_integral_below(self, x, mu: float):
        """``int_{-inf}^{x} f(z) e^{mu (z - x)} dz`` in closed form."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(xa.shape)
        for pc in self.pieces:
            m = xa > pc.left
            if not m.any():
                continue
            xm = xa[m]
            u0 = np.full(xm.shape, pc.left - pc.anchor)
            u1 = np.minimum(pc.right, xm) - pc.anchor
            shift = mu * (pc.anchor - xm)
            acc = np.zeros(xm.shape)
            for c, g, p in zip(pc.coef, pc.rate, pc.power):
                acc += c * _int_pow_exp(int(p), float(g + mu), u0, u1, shift)
            out[m] += acc
        return out if np.ndim(x) else float(out[0])

    def to_dict(self) -> dict:
        return {
            "pieces": [
                {
                    "left": _jnum(p.left),
                    "right": _jnum(p.right),
                    "anchor": p.anchor,
                    "terms": [list(t) for t in p.terms],
                }
                for p in self.pieces
            ]
        }

    def __repr__(self) -> str:
        return f"PiecewiseExpPoly({len(self.pieces)} pieces, breaks={self.breaks.tolist()})"


RewardFunction = PiecewiseExpPoly


def _jnum(v: float):
    return None if not math.isfinite(v) else v


# ---------------------------------------------------------------------------
# module-level operations


def eval(g: PiecewiseExpPoly, x):  # noqa: A001 - mirrors the operation name
    return g(x)


def deriv(g: PiecewiseExpPoly, x, side: str = "right"):
    return g.deriv(x, side)


def pi_integral(model, g: PiecewiseExpPoly, x):
    """Jump part of the generator: ``int (g(x+y) - g(x)) Pi(dy)`` over y < 0."""
    xa = np.asarray(x, dtype=float)
    out = np.zeros(np.atleast_1d(xa).shape)
    gx = np.atleast_1d(g(xa))
    for j in model.jumps:
        out += j.rate * (j.decay * np.atleast_1d(g.exp_integral_below(xa, j.decay)) - gx)
    return out if xa.ndim else float(out[0])


def check_reward(g: PiecewiseExpPoly, grid=None) -> None:
    """Validate non-negativity, continuity, g != 0 and a zero limit at +inf."""
    gaps = g.discontinuities()
    if gaps:
        raise RewardError(f"reward must be continuous; jumps at {gaps}")
    lim = g.limit(1)
    if not math.isfinite(lim) or abs(lim) > 1e-12:
        if math.isfinite(lim):
            raise RewardError(
                f"reward tends to {lim} at +inf; subtract the limit (solve with g - {lim}) first"
            )
        raise RewardError("reward is unbounded at +inf; every point is then in the continuation region")
    pts = _probe_points(g) if grid is None else np.asarray(grid, dtype=float)
    vals = g(pts)
    if np.min(vals) < -1e-12:
        raise RewardError(f"reward must be non-negative (min {np.min(vals):.3g} at x={pts[np.argmin(vals)]:.6g})")
    if np.max(np.abs(vals)) == 0.0:
        raise RewardError("reward must not vanish identically (g != 0)")


def _probe_points(g: PiecewiseExpPoly, n: int = 4001) -> np.ndarray:
    if len(g.breaks):
        lo, hi = g.breaks[0] - 20.0, g.breaks[-1] + 20.0
    else:
        lo, hi = -20.0, 20.0
    return np.unique(np.concatenate([np.linspace(lo, hi, n), g.breaks]))


def _piece_critical_points(pc: Piece, lo: float, hi: float, n: int = 2001) -> list[float]:
    from scipy.optimize import brentq

    xs = np.linspace(lo, hi, n)
    d = pc.value(xs, 1)
    out = []
    for i in range(n - 1):
        if d[i] == 0.0:
            out.append(float(xs[i]))
        elif d[i] * d[i + 1] < 0:
            out.append(brentq(lambda t: float(pc.value(t, 1)), xs[i], xs[i + 1], xtol=1e-14))
    return out


def flatten_left(g: PiecewiseExpPoly, window: float = 60.0):
    """Return ``(beta, g_hat)``; ``beta`` is None when sup g is not attained."""
    lo_edge = (g.breaks[0] if len(g.breaks) else 0.0) - window
    hi_edge = (g.breaks[-1] if len(g.breaks) else 0.0) + window
    cands: list[float] = list(g.breaks)
    for pc in g.pieces:
        a = max(pc.left, lo_edge)
        b = min(pc.right, hi_edge)
        if b > a:
            cands.extend(_piece_critical_points(pc, a, b))
            cands.extend([a, b] if pc.is_constant() else [])
    cands = np.array(sorted(set(cands)))
    vals = np.maximum(g.value(cands, "left"), g.value(cands, "right"))
    m_fin = float(np.max(vals))
    lim_left = g.limit(-1)
    tol = 1e-12 * (1.0 + abs(m_fin))
    first = g.pieces[0]
    if lim_left > m_fin + tol:
        return None, g
    if abs(lim_left - m_fin) <= tol and not first.is_constant():
        return None, g
    beta = float(np.max(cands[vals >= m_fin - tol]))
    top = float(g(beta))
    flat = Piece.from_terms(-INF, beta, [(top, 0.0, 0)], anchor=beta)
    return beta, PiecewiseExpPoly([flat] + g.tail(beta))


# ---------------------------------------------------------------------------
# built-in reward families


def mckean(K: float) -> PiecewiseExpPoly:
    """Perpetual put payoff ``(K - e^x)^+`` in log-price."""
    if K <= 0:
        raise RewardError("K must be positive")
    lk = math.log(K)
    return PiecewiseExpPoly(
        [
            Piece.from_terms(-INF, lk, [(K, 0.0, 0), (-K, 1.0, 0)], anchor=lk),
            Piece.from_terms(lk, INF, [], anchor=lk),
        ]
    )


def put_linear_tail(K: float, l: float, d: float) -> PiecewiseExpPoly:
    """``K - e^x`` up to ``d``, then a linear ramp of slope ``-l`` down to zero."""
    if K <= 0 or l <= 0:
        raise RewardError("K and l must be positive")
    if d >= math.log(K):
        raise RewardError("d must lie below log K")
    top = K - math.exp(d)
    end = d + top / l
    return PiecewiseExpPoly(
        [
            Piece.from_terms(-INF, d, [(K, 0.0, 0), (-math.exp(d), 1.0, 0)], anchor=d),
            Piece.from_terms(d, end, [(top, 0.0, 0), (-l, 0.0, 1)], anchor=d),
            Piece.from_terms(end, INF, [], anchor=end),
        ]
    )


def hump() -> PiecewiseExpPoly:
    """``max(1 - x^2, 0)``."""
    return PiecewiseExpPoly(
        [
            Piece.from_terms(-INF, -1.0, [], anchor=-1.0),
            Piece.from_terms(-1.0, 1.0, [(1.0, 0.0, 0), (-1.0, 0.0, 2)], anchor=0.0),
            Piece.from_terms(1.0, INF, [], anchor=1.0),
        ]
    )


BUILTINS = {"mckean": mckean, "put_linear_tail": put_linear_tail, "hump": hump}


def from_pieces(spec: Iterable[dict]) -> PiecewiseExpPoly:
    """Build from dicts ``{left, right, terms: [[c, gamma, p], ...], anchor?}``."""
    pieces = []
    for d in spec:
        left = -INF if d.get("left") is None else float(d["left"])
        right = INF if d.get("right") is None else float(d["right"])
        pieces.append(Piece.from_terms(left, right, d.get("terms", []), d.get("anchor")))
    return PiecewiseExpPoly(pieces)
