"""Transfer between nested 1D spatial grids.

Grids hold interior points of the unit interval under homogeneous
Dirichlet conditions; a grid of n points refines one of (n - 1) / 2
points, so fine odd indices coincide with coarse points.  Fields move by
injection (down) and linear interpolation (up); lumped scalars ride along
unchanged in both directions.  Injection of an interpolated vector gives
back exactly what went up, which keeps repeated transfer cycles stable.
"""

from __future__ import annotations

import numpy as np

from .state import BlockState

STRATEGIES = ("none", "direct", "delayed")


def coarse_size(n_fine):
    if n_fine < 3 or n_fine % 2 == 0:
        raise ValueError(
            f"a {n_fine}-point grid has no nested coarse grid; "
            "need an odd size >= 3")
    return (n_fine - 1) // 2


class SpatialHierarchy:
    """Sizes of the nested grid stack, finest first."""

    def __init__(self, n_fine, n_grids=1):
        if n_grids < 1:
            raise ValueError(f"n_grids must be >= 1, got {n_grids}")
        sizes = [int(n_fine)]
        if sizes[0] < 1:
            raise ValueError(f"grid size must be positive, got {n_fine}")
        for _ in range(n_grids - 1):
            sizes.append(coarse_size(sizes[-1]))
        self.sizes = tuple(sizes)

    @property
    def n_grids(self):
        return len(self.sizes)

    def size(self, grid):
        return self.sizes[grid]

    def spacing(self, grid):
        return 1.0 / (self.sizes[grid] + 1)

    def coordinates(self, grid):
        """Interior points of [0, 1] on the given grid."""
        n = self.sizes[grid]
        return np.arange(1, n + 1) / (n + 1)

    def _check_grid(self, state, grid):
        if state.spatial_level != grid:
            raise ValueError(f"state lives on grid {state.spatial_level}, "
                             f"expected {grid}")
        if state.field.size != self.sizes[grid]:
            raise ValueError(f"state field has {state.field.size} entries, "
                             f"grid {grid} has {self.sizes[grid]}")

    def restrict_state(self, state):
        """Inject field values at coarse-aligned points, one grid down."""
        s = state.spatial_level
        if s + 1 >= self.n_grids:
            raise ValueError(f"no grid below {s} (hierarchy has "
                             f"{self.n_grids})")
        self._check_grid(state, s)
        return BlockState(state.field[1::2].copy(), state.scalars.copy(), s + 1)

    def prolong_error(self, state):
        """Linearly interpolate the field to the next finer grid."""
        s = state.spatial_level
        if s == 0:
            raise ValueError("already on the finest grid")
        self._check_grid(state, s)
        nc = self.sizes[s]
        fine = np.empty(2 * nc + 1)
        fine[1::2] = state.field
        padded = np.concatenate(([0.0], state.field, [0.0]))
        fine[0::2] = 0.5 * (padded[:-1] + padded[1:])
        return BlockState(fine, state.scalars.copy(), s - 1)


def assign_spatial_levels(strategy, n_time_levels, n_spatial_grids):
    """Spatial grid index used by each time level.

    direct coarsens as early as possible; delayed keeps the finest grid
    until only the last (n_spatial_grids - 1) transitions remain.  Either
    way level 0 runs on the finest grid and neighbouring levels differ by
    at most one grid.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown spatial strategy {strategy!r}; "
                         f"choose from {STRATEGIES}")
    if n_time_levels < 1 or n_spatial_grids < 1:
        raise ValueError("need at least one time level and one grid")
    if strategy == "none":
        return [0] * n_time_levels
    if strategy == "direct":
        return [min(l, n_spatial_grids - 1) for l in range(n_time_levels)]
    offset = max(n_time_levels - n_spatial_grids, 0)
    return [min(max(0, l - offset), n_spatial_grids - 1)
            for l in range(n_time_levels)]
