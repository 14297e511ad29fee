"""Flat-torus geometry: wrapping, minimal lifts, winding classes, uniform grids.

Points on the torus T^d (unit side lengths, d = 1 or 2) are plain float
arrays of shape (d,) with coordinates in [0, 1).  Velocities and covectors
are unconstrained float arrays of the same shape.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


def wrap(raw) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1).  Idempotent."""
    x = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite coordinates cannot be wrapped")
    r = x - np.floor(x)
    # floor rounding can leave exactly 1.0 for tiny negative inputs
    r = np.where(r >= 1.0, r - 1.0, r)
    return r


def displacement(x, y, winding) -> np.ndarray:
    """Lift displacement (y + winding) - x in the universal cover R^d."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(winding, dtype=float)
    return y + w - x


def min_displacement(x, y) -> np.ndarray:
    """Shortest representative of y - x, componentwise in [-1/2, 1/2]."""
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return d - np.round(d)


def distance(x, y) -> float:
    """Flat metric: Euclidean norm minimized over windings (decouples per axis)."""
    return float(np.linalg.norm(min_displacement(x, y)))


def pairwise_distance(xs, ys) -> np.ndarray:
    """Torus distance matrix between point sets xs (n,d) and ys (m,d)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    diff = ys[None, :, :] - xs[:, None, :]
    diff -= np.round(diff)
    return np.linalg.norm(diff, axis=2)


def winding_offsets(winding_range: int, d: int) -> np.ndarray:
    """Integer winding vectors {-r..r}^d in lexicographic order."""
    if winding_range < 0:
        raise ValueError("winding_range must be >= 0")
    vals = range(-winding_range, winding_range + 1)
    return np.array(list(itertools.product(vals, repeat=d)), dtype=np.int64)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid i/n per axis on T^d."""

    n_per_axis: int
    d: int = 1

    def __post_init__(self):
        if self.n_per_axis < 2:
            raise ValueError("n_per_axis must be >= 2")
        if self.d not in (1, 2):
            raise ValueError("only d = 1 or 2 supported")

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis ** self.d

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_per_axis

    def points(self) -> np.ndarray:
        """All grid nodes, shape (n_nodes, d), lexicographic order."""
        axis = np.arange(self.n_per_axis) / self.n_per_axis
        if self.d == 1:
            return axis[:, None].copy()
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def neighbor_indices(self, axis: int, shift: int) -> np.ndarray:
        """Flat indices of each node's periodic neighbor along an axis."""
        n = self.n_per_axis
        if self.d == 1:
            return (np.arange(n) + shift) % n
        idx = np.arange(self.n_nodes).reshape(n, n)
        rolled = np.roll(idx, -shift, axis=axis)
        return rolled.ravel()
