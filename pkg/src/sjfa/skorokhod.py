"""Scalar reflection at zero and its measure-valued, level-by-level form.

reflect() is the one-dimensional Skorokhod map: it splits a path into a
nonnegative reflected part and the nondecreasing pushing term, via the
running minimum of the path clipped at zero. mvsm() applies it at every
priority level of a prime-plane arrival path simultaneously, sharing one
idleness process across levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import LevelOrder, NotMonotone
from .measures import MeasurePath

@dataclass(frozen=True)
class SampledPath:
    """A real-valued path sampled on a strictly increasing grid from 0."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing and start at >= 0")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")

    def at(self, t: float) -> float:
        idx = int(np.searchsorted(self.grid, t * (1 + 1e-15), side="right") - 1)
        if idx < 0:
            raise ValueError(f"t={t} precedes the grid start {self.grid[0]}")
        return float(self.values[idx])


def reflect_values(psi: np.ndarray):
    """Split psi into (reflected part, pushing term) along the leading axis.

    gamma2 = -running_min(psi ^ 0), gamma1 = psi + gamma2; gamma1 >= 0 and
    gamma2 is nondecreasing from (-psi[0])^+. One prefix pass, exact.
    """
    psi = np.asarray(psi, dtype=float)
    running = np.minimum.accumulate(np.minimum(psi, 0.0), axis=0)
    gamma2 = np.maximum(-running, 0.0)  # drops negative zeros, value-preserving
    return psi + gamma2, gamma2


def reflect(psi: SampledPath):
    """Skorokhod map of a sampled path; returns (gamma1, gamma2)."""
    g1, g2 = reflect_values(psi.values)
    return SampledPath(psi.grid, g1), SampledPath(psi.grid, g2)


@dataclass(frozen=True)
class MvsmSolution:
    """Per-level reflection output on the prime plane.

    xi holds the queued-mass cumulative xi'_t[0, level]; beta_upper holds
    the completed mass strictly above each level, beta'_t(level, inf);
    iota is the shared idleness. Conservation holds at every node:
    xi = alpha' - mu + beta_upper + iota.
    """

    tgrid: np.ndarray
    levels: np.ndarray
    xi: np.ndarray          # shape (len(tgrid), len(levels))
    beta_upper: np.ndarray  # shape (len(tgrid), len(levels))
    iota: SampledPath
    mu_values: np.ndarray

    def xi_path(self) -> MeasurePath:
        """Queued mass as an analytic measure path, linear between levels."""
        return _grid_path(self.tgrid, self.levels, self.xi)

    def beta_prime_upper(self, t: float, level) -> float | np.ndarray:
        """beta'_t(level, inf), interpolated linearly between levels.

        Left of the lowest level all completed mass lies above, mu - iota;
        above the top level none does.
        """
        row = _row_at(self.tgrid, self.beta_upper, t)
        served = self.mu_at(t) - self.iota.at(t)
        out = np.interp(np.asarray(level, dtype=float), self.levels, row,
                        left=served, right=0.0)
        return float(out) if np.ndim(level) == 0 else out

    def beta_prime_below(self, t: float, level):
        """beta'_t[0, level] = (mu - iota) - beta'_t(level, inf)."""
        served = self.mu_at(t) - self.iota.at(t)
        return served - self.beta_prime_upper(t, level)

    def mu_at(self, t: float) -> float:
        idx = int(np.searchsorted(self.tgrid, t * (1 + 1e-15), side="right") - 1)
        return float(self.mu_values[max(idx, 0)])


def _row_at(tgrid, matrix, t):
    idx = int(np.searchsorted(tgrid, t * (1 + 1e-15), side="right") - 1)
    if idx < 0:
        raise ValueError(f"t={t} precedes the grid start")
    return matrix[idx]


def _grid_path(tgrid, levels, matrix) -> MeasurePath:
    def eval_fn(t, x):
        row = _row_at(tgrid, matrix, t)
        return np.interp(np.asarray(x, dtype=float), levels, row,
                         left=0.0, right=float(row[-1]))

    return MeasurePath.analytic(eval_fn, horizon=float(tgrid[-1]),
                                slice_xs=np.asarray(levels, dtype=float))


def mvsm(alpha_prime: MeasurePath, mu: Callable, levels, tgrid,
         monotone_tol: float = 1e-9) -> MvsmSolution:
    """Measure-valued Skorokhod map on the prime plane.

    For each level x': xi'[0,x'] and beta'(x',inf) + iota are the two halves
    of the scalar reflection of alpha'[0,x'] - mu. The idleness iota is the
    large-level limit, realized through a sentinel level carrying the whole
    arrived mass, where the completed-above term vanishes identically.

    `mu` maps a time array to cumulative service capacity, nondecreasing
    with mu(0) = 0.
    """
    levels = np.asarray(levels, dtype=float)
    tgrid = np.asarray(tgrid, dtype=float)
    if np.any(np.diff(levels) <= 0):
        raise LevelOrder("levels must be strictly increasing")
    if not alpha_prime.nondecreasing_in_t:
        raise NotMonotone("alpha_prime must be flagged nondecreasing in t")

    mu_vals = np.asarray(mu(tgrid), dtype=float)
    rows = [np.atleast_1d(alpha_prime.cumulative(float(t), levels)) for t in tgrid]
    a = np.stack(rows)  # (T, L)
    if np.any(np.diff(a, axis=0) < -monotone_tol):
        raise NotMonotone("alpha_prime decreased in t at a probed level")
    total = np.array([alpha_prime.total_mass(float(t)) for t in tgrid])

    psi = np.concatenate([a, total[:, None]], axis=1) - mu_vals[:, None]
    g1, g2 = reflect_values(psi)
    iota = g2[:, -1]
    # the pushing term dominates its sentinel value level by level, so the
    # difference is nonnegative; the clamp only absorbs rounding noise
    beta_upper = np.maximum(g2[:, :-1] - iota[:, None], 0.0)
    return MvsmSolution(
        tgrid=tgrid, levels=levels, xi=g1[:, :-1], beta_upper=beta_upper,
        iota=SampledPath(tgrid, iota), mu_values=mu_vals,
    )
