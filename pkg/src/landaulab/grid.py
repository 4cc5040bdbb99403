"""Uniform cubic velocity grids and densities on them.

The grid stores cell midpoints: with half-width L and M (even) points per
axis, the nodes are v_i = -L + (i + 1/2) h, h = 2L/M.  The layout is
symmetric under v -> -v, so odd moments of symmetric densities vanish
exactly, and the offset lattice {v_i - v_j} contains 0 (where the
self-interaction convention a(0) = 0 applies).

Quadrature is the midpoint rule with weight h^3, which is superalgebraically
accurate for smooth rapidly decaying integrands.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "VelocityGrid",
    "GridDensity",
    "maxwellian_equilibrium",
    "gaussian_density",
    "maxwellian_pdf",
]


@dataclass(frozen=True)
class VelocityGrid:
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.half_width <= 0.0:
            raise ValueError("half_width must be positive")
        m = self.points_per_axis
        if m < 8 or m % 2 != 0:
            raise ValueError("points_per_axis must be an even integer >= 8")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def shape(self):
        m = self.points_per_axis
        return (m, m, m)

    def axis(self) -> np.ndarray:
        return _axis(self.half_width, self.points_per_axis)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (M, M, M, 3)."""
        return _nodes(self.half_width, self.points_per_axis)

    def radius2(self) -> np.ndarray:
        return _radius2(self.half_width, self.points_per_axis)

    def bracket(self, power: float = 1.0) -> np.ndarray:
        """Japanese bracket <v>^power = (1 + |v|^2)^(power/2) on the nodes."""
        return (1.0 + self.radius2()) ** (0.5 * power)


@lru_cache(maxsize=32)
def _axis(half_width, m):
    h = 2.0 * half_width / m
    return -half_width + (np.arange(m) + 0.5) * h


@lru_cache(maxsize=8)
def _nodes(half_width, m):
    ax = _axis(half_width, m)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([x, y, z], axis=-1)


@lru_cache(maxsize=8)
def _radius2(half_width, m):
    ax2 = _axis(half_width, m) ** 2
    return ax2[:, None, None] + ax2[None, :, None] + ax2[None, None, :]


@dataclass
class GridDensity:
    """Nonnegative density sampled at the grid nodes."""

    grid: VelocityGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if np.any(self.values < 0.0):
            raise ValueError("density values must be nonnegative")

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def momentum(self) -> np.ndarray:
        w = self.values[..., None] * self.grid.nodes()
        return w.sum(axis=(0, 1, 2)) * self.grid.cell_volume

    def energy(self) -> float:
        return float((self.values * self.grid.radius2()).sum() * self.grid.cell_volume)

    def normalized(self) -> "GridDensity":
        m = self.mass()
        if m <= 0.0:
            raise ValueError("cannot normalize a zero density")
        return GridDensity(self.grid, self.values / m)

    def copy(self) -> "GridDensity":
        return GridDensity(self.grid, self.values.copy())


def maxwellian_pdf(v) -> np.ndarray:
    """Standard Maxwellian (2 pi)^{-3/2} exp(-|v|^2 / 2) at points v (..., 3)."""
    v = np.asarray(v, dtype=float)
    r2 = np.einsum("...i,...i->...", v, v)
    return (2.0 * np.pi) ** -1.5 * np.exp(-0.5 * r2)


def maxwellian_equilibrium(half_width: float, points_per_axis: int) -> GridDensity:
    """Grid Maxwellian with unit mass, zero momentum, energy 3 (up to tail).

    Requires half_width >= 5 so the truncated tail mass is below 1e-10.
    """
    if half_width < 5.0:
        raise ValueError("half_width below 5 truncates a non-negligible Maxwellian tail")
    grid = VelocityGrid(half_width, points_per_axis)
    vals = (2.0 * np.pi) ** -1.5 * np.exp(-0.5 * grid.radius2())
    return GridDensity(grid, vals).normalized()


def gaussian_density(grid: VelocityGrid, variances, mean=None) -> GridDensity:
    """Axis-aligned Gaussian on the grid, renormalized to unit mass."""
    variances = np.asarray(variances, dtype=float)
    if variances.shape != (3,) or np.any(variances <= 0.0):
        raise ValueError("variances must be three positive numbers")
    mean = np.zeros(3) if mean is None else np.asarray(mean, dtype=float)
    d = grid.nodes() - mean
    expo = np.einsum("...i,i->...", d * d, 0.5 / variances)
    vals = np.exp(-expo) / np.sqrt((2.0 * np.pi) ** 3 * variances.prod())
    return GridDensity(grid, vals).normalized()
