"""True-system simulation, disturbance model, task definition and data
collection.

Random draws use numpy's PCG64 via ``np.random.default_rng``.  Every
stream is derived from explicit integer seed tuples so that experiments
are bit-reproducible and independent streams never alias.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .boxes import Box, box_subset, contains
from .errors import UsageError

# Sub-stream tags: default_rng([seed, TAG, ...]) keeps streams disjoint.
STREAM_NOISE = 1
STREAM_DATASET = 2
STREAM_BOOTSTRAP = 3
STREAM_SELFTEST = 4


def substream(*key: int) -> np.random.Generator:
    """Deterministic generator for an integer key tuple."""
    return np.random.default_rng([int(k) & 0x7FFFFFFF for k in key])


@dataclass(frozen=True)
class NoiseSpec:
    """Truncated normal disturbance: Normal(mu, sigma^2) conditioned on
    |w - mu| <= tau, component-wise."""

    mu: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    seed: int = 0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if not (mu.shape == sigma.shape == tau.shape):
            raise UsageError("mu/sigma/tau must share shape")
        if np.any(tau <= 0):
            raise UsageError("tau must be positive")
        if np.any(sigma < 0):
            raise UsageError("sigma must be nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", tau)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def disturbance_box(self) -> Box:
        return Box(self.mu.copy(), self.tau.copy())


@dataclass(frozen=True)
class TrueSystem:
    """x+ = f(x) + B u + w with known control matrix B."""

    f: Callable[[np.ndarray], np.ndarray]
    B: np.ndarray
    noise: NoiseSpec

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape[0] != self.noise.dim:
            raise UsageError(f"B has {B.shape[0]} rows, noise dim {self.noise.dim}")
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def sample_truncated_normal(spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw by per-component rejection; exact and deterministic given
    the generator state.  sigma = 0 components return mu."""
    out = spec.mu.copy()
    active = spec.sigma > 0
    while np.any(active):
        idx = np.flatnonzero(active)
        draw = spec.mu[idx] + spec.sigma[idx] * rng.standard_normal(idx.size)
        ok = np.abs(draw - spec.mu[idx]) <= spec.tau[idx]
        out[idx[ok]] = draw[ok]
        active[idx[ok]] = False
    return out


def step_true(sys: TrueSystem, x, u, rng: np.random.Generator | None = None,
              w: np.ndarray | None = None) -> np.ndarray:
    """Advance the true plant one step.  Pass ``w`` to replay a pre-drawn
    disturbance (paired-noise experiments); pass ``rng`` to sample one;
    neither means noise-free."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nxt = np.atleast_1d(np.asarray(sys.f(x), dtype=float)) + sys.B @ u
    if w is not None:
        nxt = nxt + np.atleast_1d(np.asarray(w, dtype=float))
    elif rng is not None:
        nxt = nxt + sample_truncated_normal(sys.noise, rng)
    return nxt


@dataclass(frozen=True)
class Dataset:
    """Transition records (x, x_plus, u) plus the control matrix that
    generated them, so regression targets f(x) = x_plus - B u can be
    recovered."""

    x: np.ndarray        # (M, n)
    x_plus: np.ndarray   # (M, n)
    u: np.ndarray        # (M, m)
    B: np.ndarray        # (n, m)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        xp = np.atleast_2d(np.asarray(self.x_plus, dtype=float))
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if x.shape != xp.shape or x.shape[0] != u.shape[0]:
            raise UsageError("inconsistent record shapes")
        if B.shape != (x.shape[1], u.shape[1]):
            raise UsageError(f"B shape {B.shape} inconsistent with records")
        for name, arr in (("x", x), ("x_plus", xp), ("u", u), ("B", B)):
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def f_targets(self) -> np.ndarray:
        """Recovered nonlinear part: x_plus - u B^T, shape (M, n)."""
        return self.x_plus - self.u @ self.B.T

    # -- CSV round trip ---------------------------------------------------
    # Header: x_0..x_{n-1}, xplus_0..xplus_{n-1}, u_0..u_{m-1}; full float
    # precision via repr so files reload bit-exactly.

    def to_csv(self, path) -> None:
        path = Path(path)
        header = (
            [f"x_{i}" for i in range(self.n)]
            + [f"xplus_{i}" for i in range(self.n)]
            + [f"u_{j}" for j in range(self.m)]
        )
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self)):
                row = (
                    [repr(float(v)) for v in self.x[i]]
                    + [repr(float(v)) for v in self.x_plus[i]]
                    + [repr(float(v)) for v in self.u[i]]
                )
                writer.writerow(row)

    @staticmethod
    def from_csv(path, B) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n = sum(1 for h in header if h.startswith("x_"))
            m = sum(1 for h in header if h.startswith("u_"))
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.asarray(rows, dtype=float)
        if data.shape[1] != 2 * n + m:
            raise UsageError("malformed dataset CSV")
        return Dataset(data[:, :n], data[:, n:2 * n], data[:, 2 * n:], B)


@dataclass(frozen=True)
class DatasetPlan:
    """Sampling plan: m_records states uniform over state_box, inputs
    uniform over input_box; noise-free transitions unless noisy=True."""

    m_records: int
    state_box: Box
    input_box: Box
    noisy: bool = False
    seed: int = 0


def collect_dataset(sys: TrueSystem, plan: DatasetPlan) -> Dataset:
    n = sys.n
    if plan.m_records < n + 1:
        raise UsageError(
            f"{plan.m_records} records cannot support an affine fit in {n} dims"
        )
    rng = substream(plan.seed, STREAM_DATASET)
    xs = rng.uniform(plan.state_box.lower, plan.state_box.upper,
                     size=(plan.m_records, n))
    us = rng.uniform(plan.input_box.lower, plan.input_box.upper,
                     size=(plan.m_records, sys.m))
    xps = np.empty_like(xs)
    for i in range(plan.m_records):
        w = sample_truncated_normal(sys.noise, rng) if plan.noisy else None
        xps[i] = step_true(sys, xs[i], us[i], w=w)
    return Dataset(xs, xps, us, sys.B)


@dataclass(frozen=True)
class TaskSpec:
    """Regulation task: steer from x_s to the goal set O around (x_f, u_f)
    under state box X and input box U, within n_steps; initial planning
    horizon t0_horizon."""

    x_s: np.ndarray
    x_f: np.ndarray
    u_f: np.ndarray
    goal: Box
    state_box: Box
    input_box: Box
    n_steps: int
    t0_horizon: int

    def __post_init__(self):
        for name in ("x_s", "x_f", "u_f"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )
        if not contains(self.goal, self.x_f):
            raise UsageError("x_f must lie in the goal set")
        if not box_subset(self.goal, self.state_box):
            raise UsageError("goal set must lie inside the state constraints")
        if not contains(self.input_box, self.u_f):
            raise UsageError("u_f must satisfy the input constraints")
        if self.n_steps < 1 or self.t0_horizon < 1:
            raise UsageError("n_steps and t0_horizon must be >= 1")


def cuberoot_system(noise: NoiseSpec) -> TrueSystem:
    """Scalar benchmark plant x+ = cbrt(x) + u + w."""
    if noise.dim != 1:
        raise UsageError("cuberoot system is scalar")
    return TrueSystem(f=lambda x: np.cbrt(x), B=np.eye(1), noise=noise)


def affine_system(a_vec, A_mat, B_mat, noise: NoiseSpec) -> TrueSystem:
    """Exactly affine plant x+ = a + A x + B u + w, for reduction tests."""
    a = np.atleast_1d(np.asarray(a_vec, dtype=float))
    A = np.atleast_2d(np.asarray(A_mat, dtype=float))
    return TrueSystem(f=lambda x: a + A @ x, B=np.asarray(B_mat, dtype=float),
                      noise=noise)
