"""Codomain-driven local linearization.

Around each point of a planned trajectory, the nonparametric estimate is
frozen into an affine model and a hypercube grid is expanded outward
until the model's deviation from the estimate exceeds a threshold on
some grid point.  The returned region is the largest grid on which every
point passed the check, so the threshold is a certified bound on the
grid (not on the first violating shell).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .boxes import Box
from .errors import UsageError
from .estimator import KernelSpec, estimate_at, local_fit, point_estimate
from .plant import Dataset


@dataclass(frozen=True)
class AffineModel:
    """One-step prediction model x+ ~ a_hat + A_hat x + B u, valid on
    ``region``; ``estimation_spread`` and ``linearization_spread`` are the
    per-step error boxes consumed by the tube recursion."""

    a_hat: np.ndarray
    A_hat: np.ndarray
    B: np.ndarray
    region: Box
    linearization_spread: Box
    estimation_spread: Box | None = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.a_hat + self.A_hat @ np.atleast_1d(x)

    def with_estimation_spread(self, spread: Box) -> "AffineModel":
        return replace(self, estimation_spread=spread)


@dataclass(frozen=True)
class LinearizationResult:
    region: Box
    model: AffineModel
    grid: list            # accepted lattice points (list of (n,) arrays)
    eps_lin: float
    steps_taken: int
    capped: bool          # True when max_steps bounded the expansion
    audit: list           # (shell index, grid size, max error) per shell


def _shell_offsets(step: int, dim: int) -> list:
    """Lattice offsets with Chebyshev norm exactly ``step``."""
    if step == 0:
        return [np.zeros(dim)]
    rng = range(-step, step + 1)
    return [
        np.array(v, dtype=float)
        for v in itertools.product(rng, repeat=dim)
        if max(abs(c) for c in v) == step
    ]


def linearize_at(data: Dataset, x_ell, dx: float, eps_lin: float,
                 spec: KernelSpec, max_steps: int = 50) -> LinearizationResult:
    """Expand a hypercube grid around x_ell while the affine model built
    there tracks the nonparametric estimate within eps_lin on every grid
    point (max-norm, per component)."""
    if dx <= 0 or eps_lin <= 0:
        raise UsageError("dx and eps_lin must be positive")
    if max_steps < 1:
        raise UsageError("max_steps must be >= 1")
    x_ell = np.atleast_1d(np.asarray(x_ell, dtype=float))
    fit = local_fit(data, x_ell, spec)
    a_hat, A_hat = fit.a_hat, fit.A_hat

    center_err = float(np.max(np.abs(point_estimate(fit) - (a_hat + A_hat @ x_ell))))
    if center_err > eps_lin:
        # a_hat + A_hat x_ell IS the point estimate, so this cannot happen.
        raise AssertionError("model disagrees with estimate at its own center")

    grid = [x_ell.copy()]
    audit = [(0, 1, center_err)]
    accepted = 0
    capped = True
    for step in range(1, max_steps + 1):
        shell = [x_ell + dx * off for off in _shell_offsets(step, data.n)]
        errs = [
            float(np.max(np.abs(estimate_at(data, g, spec) - (a_hat + A_hat @ g))))
            for g in shell
        ]
        max_err = max(errs)
        audit.append((step, len(grid) + len(shell), max_err))
        if max_err > eps_lin:
            capped = False
            break
        grid.extend(shell)
        accepted = step

    region = Box(x_ell.copy(), np.full(data.n, accepted * dx))
    model = AffineModel(
        a_hat=a_hat,
        A_hat=A_hat,
        B=data.B.copy(),
        region=region,
        linearization_spread=Box(np.zeros(data.n), np.full(data.n, eps_lin)),
    )
    return LinearizationResult(region, model, grid, eps_lin, accepted, capped, audit)


def linearize_trajectory(data: Dataset, x_ell_seq, dx: float, eps_lin: float,
                         spec: KernelSpec, max_steps: int = 50) -> list:
    """Independent linearization at each trajectory point, order kept."""
    seq = list(x_ell_seq)
    if not seq:
        raise UsageError("empty linearization trajectory")
    return [linearize_at(data, x, dx, eps_lin, spec, max_steps) for x in seq]
