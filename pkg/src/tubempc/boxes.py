"""Axis-aligned box arithmetic.

Boxes are the single set representation used everywhere: disturbance
bounds, estimation spread, linearization error, cumulative error tubes,
state/input constraints and linearization regions.  All operations are
closed-form and side-effect free.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

# Absolute slack for membership tests; exact float comparisons fail
# spuriously after a few Minkowski sums.
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned interval vector {x : |x - center| <= radius}."""

    center: np.ndarray
    radius: np.ndarray
    is_empty: bool = field(default=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        r = np.atleast_1d(np.asarray(self.radius, dtype=float))
        if c.shape != r.shape or c.ndim != 1:
            raise UsageError(f"center/radius shape mismatch: {c.shape} vs {r.shape}")
        if not self.is_empty and np.any(r < 0):
            raise UsageError("negative radius; use pontryagin_diff for erosion")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    @staticmethod
    def from_bounds(lower, upper) -> "Box":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape:
            raise UsageError("bound shape mismatch")
        if np.any(hi < lo):
            return Box.empty(lo.shape[0])
        return Box((lo + hi) / 2.0, (hi - lo) / 2.0)

    @staticmethod
    def point(center) -> "Box":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return Box(c, np.zeros_like(c))

    @staticmethod
    def empty(dim: int) -> "Box":
        return Box(np.zeros(dim), np.zeros(dim), is_empty=True)

    def vertices(self) -> np.ndarray:
        """All 2^n corner points, shape (2^n, n)."""
        if self.is_empty:
            return np.zeros((0, self.dim))
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))
        return self.center + signs * self.radius

    def __repr__(self):
        if self.is_empty:
            return f"Box(empty, dim={self.dim})"
        return f"Box(center={self.center.tolist()}, radius={self.radius.tolist()})"


def _check_dims(a: Box, b: Box, op: str) -> None:
    if a.dim != b.dim:
        raise UsageError(f"{op}: dimension mismatch {a.dim} vs {b.dim}")


def minkowski_sum(a: Box, b: Box) -> Box:
    """{x + y : x in a, y in b}; exact for boxes."""
    _check_dims(a, b, "minkowski_sum")
    if a.is_empty or b.is_empty:
        return Box.empty(a.dim)
    return Box(a.center + b.center, a.radius + b.radius)


def pontryagin_diff(a: Box, b: Box) -> Box:
    """Largest box c with c (+) b contained in a; empty if b is too wide.

    An empty result is a regular value: it signals that constraint
    tightening left nothing feasible.
    """
    _check_dims(a, b, "pontryagin_diff")
    if a.is_empty:
        return Box.empty(a.dim)
    if b.is_empty:
        # Eroding by nothing leaves the set unchanged.
        return a
    radius = a.radius - b.radius
    if np.any(radius < 0):
        return Box.empty(a.dim)
    return Box(a.center - b.center, radius)


def affine_image(A, b: Box) -> Box:
    """Tightest box containing {A x : x in b}; radius is |A| @ radius."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != b.dim:
        raise UsageError(f"affine_image: matrix has {A.shape[1]} columns, box dim {b.dim}")
    if b.is_empty:
        return Box.empty(A.shape[0])
    return Box(A @ b.center, np.abs(A) @ b.radius)


def contains(a: Box, x, tol: float = MEMBERSHIP_TOL) -> bool:
    if a.is_empty:
        return False
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != a.dim:
        raise UsageError(f"contains: point dim {x.shape[0]} vs box dim {a.dim}")
    return bool(np.all(np.abs(x - a.center) <= a.radius + tol))


def box_subset(a: Box, b: Box, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff a is contained in b (empty a is a subset of anything)."""
    _check_dims(a, b, "box_subset")
    if a.is_empty:
        return True
    if b.is_empty:
        return False
    return bool(
        np.all(a.lower >= b.lower - tol) and np.all(a.upper <= b.upper + tol)
    )


def intersect(a: Box, b: Box) -> Box:
    """Exact intersection; empty when the boxes are disjoint."""
    _check_dims(a, b, "intersect")
    if a.is_empty or b.is_empty:
        return Box.empty(a.dim)
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    if np.any(hi < lo):
        return Box.empty(a.dim)
    return Box.from_bounds(lo, hi)
