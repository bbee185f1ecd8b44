"""Exponential change of measure turning a discounted problem into an undiscounted one."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .levy_model import JumpTerm, LevyModel, ModelError
from .reward import PiecewiseExpPoly


@dataclass(frozen=True)
class TiltedProblem:
    q: float
    phi_q: float
    model: LevyModel
    reward: PiecewiseExpPoly
    original_model: LevyModel
    original_reward: PiecewiseExpPoly

    def untilt_factor(self, x):
        return np.exp(self.phi_q * np.asarray(x, dtype=float))


def tilt_model(model: LevyModel, phi: float) -> LevyModel:
    """Model whose exponent is ``psi(theta + phi) - psi(phi)``.

    An Exp(mu) jump at rate lam becomes Exp(mu + phi) at rate lam mu/(mu + phi);
    the Gaussian part adds sigma^2 phi to the drift.
    """
    if phi == 0.0:
        return model
    jumps = tuple(JumpTerm(j.rate * j.decay / (j.decay + phi), j.decay + phi) for j in model.jumps)
    return LevyModel(model.drift + model.sigma**2 * phi, model.sigma, jumps)


def tilt(model: LevyModel, g: PiecewiseExpPoly, q: float) -> TiltedProblem:
    if q < 0:
        raise ModelError("q must be nonnegative")
    if q == 0.0:
        if model.mean_drift <= 0:
            raise ModelError(
                "q = 0 requires psi'(0+) > 0: the process must drift to +inf (transience)"
            )
        return TiltedProblem(0.0, 0.0, model, g, model, g)
    phi = model.phi(q)
    return TiltedProblem(q, phi, tilt_model(model, phi), g.tilted(phi), model, g)


def untilt_value(problem: TiltedProblem, tilted_value) -> Callable:
    """Map a value computed under the tilted measure back to the discounted problem."""
    if problem.phi_q == 0.0:
        return tilted_value
    if isinstance(tilted_value, PiecewiseExpPoly):
        return tilted_value.tilted(-problem.phi_q)
    return lambda x: problem.untilt_factor(x) * tilted_value(x)
