"""Smooth Gerber-Shiu functions and expected-reward kernels.

For a boundary ``a`` and reward ``g`` the smooth Gerber-Shiu function is

    h_a(x) = g(a) + g'(a-) (x - a) - int_0^{x-a} W(x - a - y) J_a(y) dy,   x > a,

and ``h_a = g`` on ``(-inf, a]``.  With hyperexponential jumps
``J_a(y) = A + B y + sum_i C_i e^{-mu_i y}`` exactly, so the convolution with
the exponential-sum W is again an exponential polynomial and ``h_a`` is
stored as one extra :class:`~levystop.reward.Piece` on ``[a, inf)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_model import LevyModel, ModelError
from .reward import INF, Piece, PiecewiseExpPoly, _merge_terms
from .scale_functions import ScaleEvaluator, build_scale


@dataclass(frozen=True)
class GerberShiuEvaluator:
    model: LevyModel
    scale: ScaleEvaluator
    g: PiecewiseExpPoly
    a: float
    slope: float  # g'(a-) or g'(a+) depending on the variant
    A: float
    B: float
    C: np.ndarray
    I: np.ndarray
    piece: Piece  # h_a on [a, inf)
    kappa: float

    @property
    def q(self) -> float:
        return self.scale.q

    def J(self, y):
        y = np.asarray(y, dtype=float)
        out = self.A + self.B * y
        for c, j in zip(self.C, self.model.jumps):
            out = out + c * np.exp(-j.decay * y)
        return out if out.ndim else float(out)

    def function(self) -> PiecewiseExpPoly:
        """h_a as a piecewise exp-polynomial on the whole line."""
        return PiecewiseExpPoly(self.g.truncated(self.a) + [self.piece])

    def h(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.where(xa < self.a, self.g(xa), self.piece.value(xa))
        return out if out.ndim else float(out)

    def h_prime(self, x):
        """Derivative of h_a; right derivative at a, g'(x-) convention below a."""
        xa = np.asarray(x, dtype=float)
        out = np.where(xa < self.a, self.g.deriv(xa, "left"), self.piece.value(xa, 1))
        return out if out.ndim else float(out)

    def W_piece(self, scale: float, right: float = INF) -> Piece:
        return self.scale.W_piece(self.a, self.a, right, scale)

    def H_one(self, x):
        """Expected reward when stopping at the first passage below a."""
        return self.one_sided_function()(x)

    def one_sided_function(self) -> PiecewiseExpPoly:
        return PiecewiseExpPoly(self.g.truncated(self.a) + [_add(self.piece, self.W_piece(-self.kappa))])

    def H_two(self, b: float, x):
        return self.two_sided_function(b)(x)

    def two_sided_function(self, b: float) -> PiecewiseExpPoly:
        """Expected reward when stopping at the exit from (a, b)."""
        if not b > self.a:
            raise ValueError(f"two-sided kernel needs a < b, got a={self.a}, b={b}")
        rho = (float(self.g(b)) - float(self.piece.value(b))) / float(self.scale.W(b - self.a))
        mid = _add(self.piece, self.W_piece(rho)).clipped(self.a, b)
        return PiecewiseExpPoly(self.g.truncated(self.a) + [mid] + self.g.tail(b))


def _add(p1: Piece, p2: Piece) -> Piece:
    if p1.anchor != p2.anchor:
        p2 = p2.reanchored(p1.anchor)
    c, g, p = _merge_terms(
        np.concatenate([p1.coef, p2.coef]),
        np.concatenate([p1.rate, p2.rate]),
        np.concatenate([p1.power, p2.power]),
    )
    return Piece(max(p1.left, p2.left), min(p1.right, p2.right), c, g, p, p1.anchor)


def gerber_shiu(
    model: LevyModel,
    g: PiecewiseExpPoly,
    a: float,
    q: float = 0.0,
    scale: ScaleEvaluator | None = None,
    plus: bool = False,
) -> GerberShiuEvaluator:
    """Build ``h_a`` (``h_{a+}`` when ``plus`` is set: g'(a+) in the linear term)."""
    if scale is None:
        scale = build_scale(model, q)
    elif scale.q != q:
        raise ModelError("scale evaluator built for a different q")
    a = float(a)
    ga = float(g.value(a, "left"))
    d_left = float(g.deriv(a, "left"))
    slope = float(g.deriv(a, "right")) if plus else d_left
    mus = np.array([j.decay for j in model.jumps])
    lams = np.array([j.rate for j in model.jumps])
    I = np.array([g.exp_integral_below(a, m) for m in mus])
    A = d_left * model.mean_drift - q * ga
    B = -q * d_left
    C = lams * mus * (I - ga / mus + d_left / mus**2)

    terms = [(ga, 0.0, 0)]
    lin = slope
    for th, cj in zip(scale.roots, scale.coefficients):
        th = float(th)
        if th == 0.0:
            # q = 0: c_0 * A * t equals g'(a-) t exactly
            lin -= d_left if q == 0.0 else cj * A
            terms.append((-cj * B / 2.0, 0.0, 2))
            for ci, mu in zip(C, mus):
                terms += [(-cj * ci / mu, 0.0, 0), (cj * ci / mu, -mu, 0)]
            continue
        e = cj * (A / th + B / th**2 + sum(ci / (th + mu) for ci, mu in zip(C, mus)))
        terms += [(-e, th, 0), (cj * (A / th + B / th**2), 0.0, 0), (cj * B / th, 0.0, 1)]
        for ci, mu in zip(C, mus):
            terms.append((cj * ci / (th + mu), -mu, 0))
    terms.append((lin, 0.0, 1))
    c, r, p = _merge_terms(*zip(*terms))
    piece = Piece(a, INF, c, r, p, a)
    return GerberShiuEvaluator(
        model=model, scale=scale, g=g, a=a, slope=slope, A=A, B=B, C=C, I=I, piece=piece,
        kappa=kappa(model, g, a, q, scale.phi, I=I),
    )


def kappa(model: LevyModel, g: PiecewiseExpPoly, a: float, q: float = 0.0, phi: float | None = None, I=None) -> float:
    """Asymptotic ratio ``lim h_a(x) / W(x - a)``; zero exactly on the one-sided candidate set."""
    if phi is None:
        phi = model.phi(q)
    if q == 0.0 or phi == 0.0:
        if model.mean_drift <= 0:
            raise ModelError("q = 0 requires psi'(0+) > 0")
        ratio = model.mean_drift
    else:
        ratio = q / phi
    ga = float(g.value(a, "left"))
    out = 0.5 * model.sigma**2 * float(g.deriv(a, "left")) + ratio * ga
    for k, j in enumerate(model.jumps):
        Ik = g.exp_integral_below(a, j.decay) if I is None else I[k]
        out -= j.rate * j.decay / (phi + j.decay) * (Ik - ga / j.decay)
    return float(out)


def kappa_vec(model: LevyModel, g: PiecewiseExpPoly, a, q: float = 0.0) -> np.ndarray:
    """Vectorised :func:`kappa` over an array of boundaries."""
    a = np.asarray(a, dtype=float)
    phi = model.phi(q)
    ratio = model.mean_drift if (q == 0.0 or phi == 0.0) else q / phi
    ga = g.value(a, "left")
    out = 0.5 * model.sigma**2 * g.deriv(a, "left") + ratio * ga
    for j in model.jumps:
        Ik = g.exp_integral_below(a, j.decay)
        out = out - j.rate * j.decay / (phi + j.decay) * (Ik - ga / j.decay)
    return out


def expected_reward(
    model: LevyModel,
    g: PiecewiseExpPoly,
    gamma,
    q: float = 0.0,
) -> PiecewiseExpPoly:
    """``E^x[e^{-q T} g(X_T)]`` with T the first entry time into a closed interval union.

    ``gamma`` is a sorted list of disjoint ``(left, right)`` pairs (infinite
    ends allowed).  Paths only jump downward, so the gaps are processed left
    to right: the leftmost unbounded gap is reached by creeping, every bounded
    gap is a two-sided exit problem whose undershoot lands on already solved
    ground, and the rightmost unbounded gap is a one-sided problem.  For
    q > 0 the computation runs under the tilted measure and is multiplied
    back by ``e^{Phi(q) x}`` exactly.
    """
    gamma = [(float(l), float(r)) for l, r in gamma]
    if not gamma:
        raise ValueError("stopping region must be non-empty")
    phi = model.phi(q) if q > 0 else 0.0
    if phi > 0:
        from .measure_change import tilt_model

        model = tilt_model(model, phi)
        g = g.tilted(phi)
    scale = build_scale(model, 0.0)
    f = g
    first = gamma[0][0]
    if math.isfinite(first):
        top = float(g(first))
        f = PiecewiseExpPoly([Piece.from_terms(-INF, first, [(top, 0.0, 0)], anchor=first)] + g.tail(first))
    for (_, r0), (l1, _) in zip(gamma, gamma[1:]):
        if l1 > r0:
            f = gerber_shiu(model, f, r0, 0.0, scale).two_sided_function(l1)
    last = gamma[-1][1]
    if math.isfinite(last):
        f = gerber_shiu(model, f, last, 0.0, scale).one_sided_function()
    # starting on a closed right end stops at once; without a Gaussian part
    # the formula to the right of it does not match g there
    f = PiecewiseExpPoly(f.pieces, {r: float(g(r)) for _, r in gamma if math.isfinite(r)})
    return f.tilted(-phi) if phi > 0 else f
