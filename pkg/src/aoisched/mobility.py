"""Blocker mobility: a time-invariant Markov random walk over grid cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlockerModel:
    """Row-stochastic mobility matrix over the blocker cells.

    `transition[i, j]` is the probability of moving from cell i+1 to cell j+1
    in one frame.  `cum_rows` caches the row-wise cumulative sums used for
    inverse-CDF sampling.  Immutable after construction.
    """

    transition: np.ndarray     # (|L|, |L|)
    cells: tuple               # cell-center points, shared with the room layout
    radius: float              # blocker disk radius, meters
    stay_probability: float

    def __post_init__(self):
        rows = self.transition.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")
        if (self.transition < 0).any() or (self.transition > 1).any():
            raise ValueError("transition entries must be probabilities")
        object.__setattr__(self, "cum_rows", np.cumsum(self.transition, axis=1))

    @property
    def n_cells(self) -> int:
        return len(self.cells)


def build_random_walk(cells, cell_spacing: float, stay_probability: float,
                      radius: float = 0.3) -> BlockerModel:
    """Lazy random walk: stay with fixed probability, else move to a neighbor.

    Cells are neighbors when their centers are at most `cell_spacing` apart
    (up to a tiny relative tolerance), which realizes 4-connectivity on a
    regular grid.  An isolated cell keeps probability 1 on itself.
    """
    if len(cells) == 0:
        raise ValueError("cell list must be nonempty")
    if not (0.0 <= stay_probability <= 1.0):
        raise ValueError("stay probability must lie in [0, 1]")
    pts = np.asarray(cells, dtype=float)
    n = len(pts)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    limit = (cell_spacing * (1.0 + 1e-9)) ** 2
    adj = (d2 <= limit) & ~np.eye(n, dtype=bool)

    transition = np.zeros((n, n))
    for i in range(n):
        deg = int(adj[i].sum())
        if deg == 0:
            transition[i, i] = 1.0
        else:
            transition[i, i] = stay_probability
            transition[i, adj[i]] = (1.0 - stay_probability) / deg
    return BlockerModel(
        transition=transition,
        cells=tuple(tuple(p) for p in pts),
        radius=radius,
        stay_probability=stay_probability,
    )


def step(model: BlockerModel, current: int, rng: np.random.Generator) -> int:
    """Sample the next cell (1-based) by inverse CDF on one uniform draw."""
    u = rng.random()
    return int(np.searchsorted(model.cum_rows[current - 1], u, side="right")) + 1


def n_step_distribution(model: BlockerModel, start: int, n: int) -> np.ndarray:
    """Distribution over cells after n steps from a fixed start cell."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    v = np.zeros(model.n_cells)
    v[start - 1] = 1.0
    for _ in range(n):
        v = v @ model.transition
    return v
