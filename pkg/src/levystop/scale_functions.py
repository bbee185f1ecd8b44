"""q-scale functions of hyperexponential spectrally negative Levy processes.

For the supported class, ``psi(theta) - q`` is rational with simple real
roots that interlace the poles ``-decay_i``.  Partial fractions of
``1 / (psi(beta) - q)`` then give ``W(x) = sum_j e^{theta_j x} / psi'(theta_j)``
on ``x >= 0``; every other scale quantity is an exponential-sum integral of
that expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .levy_model import LevyModel, ModelError
from .reward import Piece, PiecewiseExpPoly

NEAR_ROOT = 1e-8


class ScaleError(RuntimeError):
    """Root finding for the scale-function representation failed."""


@dataclass(frozen=True)
class ScaleEvaluator:
    model: LevyModel
    q: float
    roots: np.ndarray
    coefficients: np.ndarray

    @property
    def phi(self) -> float:
        return float(self.roots[-1])

    # -- W -----------------------------------------------------------------
    def W(self, x):
        xa = np.asarray(x, dtype=float)
        pos = np.maximum(xa, 0.0)
        val = np.exp(np.multiply.outer(pos, self.roots)) @ self.coefficients
        out = np.where(xa < 0, 0.0, val)
        return out if out.ndim else float(out)

    def W_prime(self, x):
        """Right derivative of W (zero on the negative half-line)."""
        xa = np.asarray(x, dtype=float)
        pos = np.maximum(xa, 0.0)
        val = np.exp(np.multiply.outer(pos, self.roots)) @ (self.coefficients * self.roots)
        out = np.where(xa < 0, 0.0, val)
        return out if out.ndim else float(out)

    def W_piece(self, anchor: float, left: float, right: float, scale: float = 1.0) -> Piece:
        """``scale * W(x - anchor)`` as an exp-polynomial piece valid for x >= anchor."""
        terms = [(scale * c, r, 0) for c, r in zip(self.coefficients, self.roots)]
        return Piece.from_terms(left, right, terms, anchor=anchor)

    def laplace_W(self, beta):
        """Closed-form ``int_0^inf e^{-beta x} W(x) dx`` for beta > Phi(q)."""
        b = np.asarray(beta, dtype=float)
        if np.any(b <= self.phi):
            raise ModelError("Laplace transform of W needs beta > Phi(q)")
        out = np.sum(self.coefficients / (b[..., None] - self.roots), axis=-1)
        return out if out.ndim else float(out)

    # -- Z -----------------------------------------------------------------
    def Z(self, x):
        xa = np.asarray(x, dtype=float)
        if self.q == 0.0:
            out = np.ones_like(xa)
            return out if out.ndim else float(out)
        pos = np.maximum(xa, 0.0)
        integ = _exp_integral(self.roots, pos) @ self.coefficients
        out = np.where(xa <= 0, 1.0, 1.0 + self.q * integ)
        return out if out.ndim else float(out)

    def Z2(self, x, theta: float):
        """Two-variable scale function ``Z_q(x, theta)``."""
        xa = np.asarray(x, dtype=float)
        pos = np.maximum(xa, 0.0)
        k = self.q - float(self.model.psi(theta))
        # int_0^x e^{theta (x-y)} e^{r y} dy = e^{theta x} * expm1((r-theta) x)/(r-theta)
        d = self.roots - theta
        px = pos[..., None]
        with np.errstate(over="ignore", invalid="ignore"):
            frac = np.where(
                np.abs(d) < NEAR_ROOT,
                px * (1.0 + 0.5 * d * px),
                np.expm1(d * px) / np.where(d == 0, 1.0, d),
            )
        conv = np.exp(theta * pos) * (frac @ self.coefficients)
        out = np.where(xa <= 0, np.exp(theta * xa), np.exp(theta * pos) + k * conv)
        return out if out.ndim else float(out)

    def potential_density(self, x, y):
        """q-potential density ``Phi'(q) e^{-Phi(q)(y-x)} - W(x - y)``."""
        xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.q == 0.0:
            out = 1.0 / self.model.mean_drift - self.W(xa - ya)
        else:
            out = self.model.phi_prime(self.q) * np.exp(-self.phi * (ya - xa)) - self.W(xa - ya)
        return out if np.ndim(out) else float(out)


def _exp_integral(roots, x):
    """``int_0^x e^{r y} dy`` for each root r (columns)."""
    px = np.asarray(x, dtype=float)[..., None]
    r = np.asarray(roots)
    with np.errstate(invalid="ignore"):
        return np.where(r == 0.0, px, np.expm1(r * px) / np.where(r == 0.0, 1.0, r))


def _roots(model: LevyModel, q: float) -> np.ndarray:
    """All real roots of ``psi(theta) = q``; they are simple and separated by the poles."""
    f = lambda t: float(model.psi_raw(t)) - q  # noqa: E731
    poles = sorted(-j.decay for j in model.jumps)
    roots = [0.0 if q == 0.0 else model.phi(q)]
    if poles:
        # psi -> +inf just right of the largest pole, psi(0-) - q < 0
        roots.append(_brent(f, _nudge(poles[-1], 1), -1e-300 if q == 0.0 else 0.0))
    elif model.sigma > 0:
        s2 = model.sigma**2
        roots.append((-model.drift - math.sqrt(model.drift**2 + 2 * s2 * q)) / s2)
    for lo, hi in zip(poles[:-1], poles[1:]):
        roots.append(_brent(f, _nudge(lo, 1), _nudge(hi, -1)))
    if model.sigma > 0 and poles:
        lo = poles[0] - 1.0
        while f(lo) <= 0:
            lo = poles[0] - 2.0 * (poles[0] - lo)
        roots.append(_brent(f, lo, _nudge(poles[0], -1)))
    roots = np.array(sorted(roots))
    if np.any(np.diff(roots) <= 0):
        raise ScaleError("roots of psi(theta) = q are not simple")
    return roots


def _nudge(x: float, direction: int) -> float:
    return x + direction * 1e-13 * max(1.0, abs(x))


def _brent(f, a: float, b: float) -> float:
    if f(a) * f(b) > 0:
        raise ScaleError(f"could not bracket a root of psi - q in ({a}, {b})")
    return brentq(f, a, b, xtol=1e-300, rtol=1e-15, maxiter=500)


def build_scale(model: LevyModel, q: float) -> ScaleEvaluator:
    if q < 0:
        raise ModelError("q must be nonnegative")
    if q == 0.0 and model.mean_drift <= 0:
        raise ModelError("q = 0 requires psi'(0+) > 0 (process must drift to +inf)")
    roots = _roots(model, q)
    expected = len(model.jumps) + 1 + (1 if model.sigma > 0 else 0)
    if len(roots) != expected:
        raise ScaleError(f"found {len(roots)} roots, expected {expected}")
    coefs = np.array([1.0 / _psi_prime_raw(model, r) for r in roots])
    return ScaleEvaluator(model=model, q=float(q), roots=roots, coefficients=coefs)


def _psi_prime_raw(model: LevyModel, t: float) -> float:
    out = model.drift + model.sigma**2 * t
    for j in model.jumps:
        out -= j.rate * j.decay / (j.decay + t) ** 2
    return out


def W(ev: ScaleEvaluator, x):
    return ev.W(x)


def Z(ev: ScaleEvaluator, x):
    return ev.Z(x)


def Z2(ev: ScaleEvaluator, x, theta: float):
    return ev.Z2(x, theta)


def potential_density(ev: ScaleEvaluator, x, y):
    return ev.potential_density(x, y)


def W_function(ev: ScaleEvaluator) -> PiecewiseExpPoly:
    """W as a piecewise exp-polynomial (zero on the negative half-line)."""
    return PiecewiseExpPoly(
        [Piece.from_terms(-math.inf, 0.0, [], anchor=0.0), ev.W_piece(0.0, 0.0, math.inf)]
    )
