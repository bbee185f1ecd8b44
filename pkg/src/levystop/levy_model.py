"""Spectrally negative Levy processes with hyperexponential downward jumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .reward import PiecewiseExpPoly, pi_integral


class ModelError(ValueError):
    """Invalid model parameters or arguments outside the Laplace-exponent domain."""


@dataclass(frozen=True)
class JumpTerm:
    """Exponential jump component: jumps of size Exp(decay) arriving at ``rate``."""

    rate: float
    decay: float

    def __post_init__(self):
        if not (self.rate > 0 and self.decay > 0):
            raise ModelError(f"jump rate and decay must be positive, got {self.rate}, {self.decay}")


@dataclass(frozen=True)
class LevyModel:
    """Drift + Brownian part + hyperexponential compound Poisson jumps downward.

    Laplace exponent::

        psi(theta) = drift*theta + sigma^2 theta^2 / 2 + sum_i rate_i (decay_i/(decay_i+theta) - 1)
    """

    drift: float
    sigma: float = 0.0
    jumps: tuple[JumpTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.sigma < 0:
            raise ModelError("sigma must be nonnegative")
        jumps = tuple(j if isinstance(j, JumpTerm) else JumpTerm(*j) for j in self.jumps)
        # repeated decays are a single exponential component
        merged: dict[float, float] = {}
        for j in jumps:
            merged[j.decay] = merged.get(j.decay, 0.0) + j.rate
        object.__setattr__(
            self, "jumps", tuple(JumpTerm(r, m) for m, r in sorted(merged.items()))
        )

    @property
    def bounded_variation(self) -> bool:
        return self.sigma == 0.0

    @property
    def total_rate(self) -> float:
        return sum(j.rate for j in self.jumps)

    @property
    def min_decay(self) -> float:
        return min((j.decay for j in self.jumps), default=math.inf)

    def _check(self, theta):
        th = np.asarray(theta, dtype=float)
        if np.any(th <= -self.min_decay):
            raise ModelError(f"theta must exceed -{self.min_decay} (Laplace exponent domain)")
        return th

    def psi(self, theta):
        th = self._check(theta)
        out = self.drift * th + 0.5 * self.sigma**2 * th**2
        for j in self.jumps:
            out = out + j.rate * (j.decay / (j.decay + th) - 1.0)
        return out if np.ndim(out) else float(out)

    def psi_prime(self, theta):
        th = self._check(theta)
        out = self.drift + self.sigma**2 * th + 0.0 * th
        for j in self.jumps:
            out = out - j.rate * j.decay / (j.decay + th) ** 2
        return out if np.ndim(out) else float(out)

    def psi_second(self, theta):
        th = self._check(theta)
        out = self.sigma**2 + 0.0 * th
        for j in self.jumps:
            out = out + 2.0 * j.rate * j.decay / (j.decay + th) ** 3
        return out if np.ndim(out) else float(out)

    def psi_raw(self, theta):
        """Rational extension of psi to all theta away from the poles ``-decay_i``."""
        th = np.asarray(theta, dtype=float)
        out = self.drift * th + 0.5 * self.sigma**2 * th**2
        for j in self.jumps:
            out = out + j.rate * (j.decay / (j.decay + th) - 1.0)
        return out

    @property
    def mean_drift(self) -> float:
        """psi'(0+); positive iff the process drifts to +inf."""
        return float(self.psi_prime(0.0))

    def phi(self, q: float) -> float:
        """Right inverse: largest theta >= 0 with psi(theta) = q."""
        if q < 0:
            raise ModelError("q must be nonnegative")
        d0 = self.mean_drift
        if q == 0.0 and d0 >= 0.0:
            return 0.0
        # bracket: psi is convex, so beyond its minimiser it increases to +inf
        lo = 0.0
        if d0 < 0:
            lo = brentq(lambda t: self.psi_prime(t), 0.0, _grow(lambda t: self.psi_prime(t) > 0))
        hi = _grow(lambda t: self.psi(t) > q, start=max(1.0, lo + 1.0))
        if q == 0.0 and d0 < 0:
            lo = lo  # psi(lo) < 0 = q
        # Newton from the right edge is monotone for convex psi; bisection guards it
        theta = hi
        for _ in range(100):
            f = self.psi(theta) - q
            step = f / self.psi_prime(theta)
            nxt = theta - step
            if not (lo <= nxt <= hi):
                nxt = 0.5 * (lo + hi)
            if f > 0:
                hi = theta
            else:
                lo = theta
            if abs(nxt - theta) <= 1e-15 * max(1.0, theta):
                theta = nxt
                break
            theta = nxt
        return float(theta)

    def phi_prime(self, q: float) -> float:
        return 1.0 / float(self.psi_prime(self.phi(q)))

    def to_dict(self) -> dict:
        return {
            "drift": self.drift,
            "sigma": self.sigma,
            "jumps": [{"rate": j.rate, "decay": j.decay} for j in self.jumps],
        }


def _grow(pred, start: float = 1.0, limit: float = 1e12) -> float:
    t = start
    while not pred(t):
        t *= 2.0
        if t > limit:
            raise ModelError("failed to bracket a root of the Laplace exponent")
    return t


def psi(model: LevyModel, theta):
    return model.psi(theta)


def psi_prime(model: LevyModel, theta):
    return model.psi_prime(theta)


def phi(model: LevyModel, q: float) -> float:
    return model.phi(q)


def generator_apply(model: LevyModel, f: PiecewiseExpPoly, x):
    """``L f(x) = drift f'(x+) + sigma^2/2 f''(x+) + int (f(x+y) - f(x)) Pi(dy)``.

    One-sided derivatives are taken from the right at kinks.
    """
    out = model.drift * f.deriv(x, "right")
    if model.sigma > 0:
        out = out + 0.5 * model.sigma**2 * f.deriv2(x, "right")
    return out + pi_integral(model, f, x)
