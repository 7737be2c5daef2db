"""Cumulative error-tube propagation and constraint tightening.

The tube bounds the gap between the true closed-loop state and the
nominal prediction: each step maps the previous error set through the
model's linear part and adds the disturbance box, the estimation spread
and the linearization spread.  The affine offset cancels in the error
dynamics (both true and nominal predictions share it), so only A_hat
enters the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import Box, affine_image, minkowski_sum, pontryagin_diff
from .errors import UsageError
from .linearizer import AffineModel


@dataclass(frozen=True)
class TubeStep:
    """Audit record of one recursion step."""

    propagated: Box
    disturbance: Box
    estimation_spread: Box
    linearization_spread: Box


@dataclass(frozen=True)
class ErrorTube:
    sets: list            # k = 0 .. T, Box; sets[0] is the zero point box
    alpha: float
    components: list      # TubeStep per transition, length T

    def __len__(self) -> int:
        return len(self.sets)


def propagate_tube(models: list, disturbance: Box, alpha: float) -> ErrorTube:
    """Error sets E_0..E_T for a model sequence of length T, E_0 = {0}."""
    if not models:
        raise UsageError("need at least one model")
    n = disturbance.dim
    sets = [Box.point(np.zeros(n))]
    components = []
    for model in models:
        if not isinstance(model, AffineModel):
            raise UsageError("models must be AffineModel instances")
        if model.estimation_spread is None:
            raise UsageError("model is missing its estimation spread")
        if model.A_hat.shape[1] != n:
            raise UsageError("model/disturbance dimension mismatch")
        propagated = affine_image(model.A_hat, sets[-1])
        nxt = minkowski_sum(propagated, disturbance)
        nxt = minkowski_sum(nxt, model.estimation_spread)
        nxt = minkowski_sum(nxt, model.linearization_spread)
        sets.append(nxt)
        components.append(
            TubeStep(propagated, disturbance, model.estimation_spread,
                     model.linearization_spread)
        )
    return ErrorTube(sets, alpha, components)


def tighten_constraints(stage_regions: list, goal: Box, tube: ErrorTube) -> list:
    """Erode each stage region by its tube set and the goal by the
    terminal set.  Returns T stage boxes followed by the tightened goal;
    empty boxes pass through to signal infeasibility downstream."""
    T = len(tube.sets) - 1
    if len(stage_regions) != T:
        raise UsageError(
            f"{len(stage_regions)} stage regions inconsistent with tube length {T}"
        )
    tightened = [
        pontryagin_diff(region, tube.sets[k])
        for k, region in enumerate(stage_regions)
    ]
    tightened.append(pontryagin_diff(goal, tube.sets[T]))
    return tightened
