"""Finite measures on the line, time-indexed families of them, and transport.

Pre-limit queue processes are finite sums of atoms; fluid objects are
continuous cumulative functions evaluated lazily. Both expose a common
step-function view (breakpoints plus cumulative values) that the Levy
metric and the plane transport operate on.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import aging
from .aging import AgingRule
from .errors import OutOfHorizon

_MERGE_EPS = 0.0  # atoms at exactly equal locations are merged


class AtomicMeasure:
    """A finite sum of point masses, locations strictly increasing."""

    __slots__ = ("locations", "masses")

    def __init__(self, locations, masses):
        loc = np.asarray(locations, dtype=float)
        mas = np.asarray(masses, dtype=float)
        if loc.shape != mas.shape or loc.ndim != 1:
            raise ValueError("locations and masses must be 1-d arrays of equal length")
        if np.any(mas < 0):
            raise ValueError("masses must be >= 0")
        order = np.argsort(loc, kind="stable")
        loc, mas = loc[order], mas[order]
        keep = mas > 0
        loc, mas = loc[keep], mas[keep]
        if loc.size:
            # merge equal locations so the support is strictly increasing
            new_group = np.empty(loc.size, dtype=bool)
            new_group[0] = True
            new_group[1:] = np.diff(loc) > _MERGE_EPS
            idx = np.cumsum(new_group) - 1
            out_loc = loc[new_group]
            out_mas = np.zeros(out_loc.size)
            np.add.at(out_mas, idx, mas)
            loc, mas = out_loc, out_mas
        self.locations = loc
        self.masses = mas

    @staticmethod
    def empty() -> "AtomicMeasure":
        return AtomicMeasure(np.empty(0), np.empty(0))

    @staticmethod
    def dirac(location: float, mass: float) -> "AtomicMeasure":
        return AtomicMeasure([location], [mass])

    def cumulative(self, x):
        """Mass at (-inf, x]; right-continuous in x."""
        xa = np.asarray(x, dtype=float)
        if self.locations.size == 0:
            out = np.zeros(xa.shape)
        else:
            cum = np.cumsum(self.masses)
            idx = np.searchsorted(self.locations, xa, side="right")
            out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(x) == 0 else out

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def support(self) -> tuple[float, float]:
        if self.locations.size == 0:
            return (0.0, 0.0)
        return (float(self.locations[0]), float(self.locations[-1]))

    def max_atom(self) -> float:
        return float(self.masses.max(initial=0.0))

    def _steps(self):
        return self.locations, np.cumsum(self.masses)


class CdfSlice:
    """A cumulative mass function sampled on a grid, viewed as a step function.

    Used to freeze one time-slice of a continuous measure path; the step
    view under-resolves the true cdf by at most one grid cell.
    """

    __slots__ = ("xs", "values")

    def __init__(self, xs, values, clamp: bool = True):
        xs = np.asarray(xs, dtype=float)
        vals = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape:
            raise ValueError("xs and values must be 1-d arrays of equal length")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("xs must be strictly increasing")
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("values must be nondecreasing")
        # clamp absorbs sub-1e-12 round-off dips; callers needing exact
        # difference identities (queued = arrived - completed) disable it
        self.xs = xs
        self.values = np.maximum.accumulate(vals) if clamp else vals

    def cumulative(self, x):
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.xs, xa, side="right")
        padded = np.concatenate(([0.0], self.values))
        out = padded[idx]
        return float(out) if np.ndim(x) == 0 else out

    def total_mass(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    def _steps(self):
        return self.xs, self.values


def _one_sided_levy(b_f, v_f, b_g, v_g) -> float:
    """sup over x of the smallest eps with G(x) <= F(x + eps) + eps.

    For each x the constraint is monotone in eps, so the global supremum is
    the exact smallest feasible eps for the pair (F, G) on this side. The
    supremum over x is attained at breakpoints of G.
    """
    if b_g.size == 0:
        return 0.0
    c = v_g + b_g  # target level for phi(y) = F(y) + y
    if b_f.size == 0:
        ystar = c
        f_at_bg = np.zeros_like(b_g)
    else:
        p = v_f + b_f  # phi at F's breakpoints (strictly increasing)
        seg = np.searchsorted(p, c, side="right") - 1
        upper = np.concatenate((b_f[1:], [np.inf]))
        inside = np.minimum(np.maximum(c - v_f[np.maximum(seg, 0)], b_f[np.maximum(seg, 0)]),
                            upper[np.maximum(seg, 0)])
        before = np.minimum(c, b_f[0])
        ystar = np.where(seg < 0, before, inside)
        padded = np.concatenate(([0.0], v_f))
        f_at_bg = padded[np.searchsorted(b_f, b_g, side="right")]
    eps = ystar - b_g
    # a point already dominated at zero slack needs none; this also removes
    # one-ulp noise from the inversion's subtraction chain
    eps = np.where(f_at_bg >= v_g, 0.0, eps)
    return float(np.maximum(eps, 0.0).max())


def levy_distance(m1, m2) -> float:
    """Levy distance between two finite measures on the line.

    Returns the smallest eps >= 0 such that
    F1(x - eps) - eps <= F2(x) <= F1(x + eps) + eps for all x, where the Fi
    are the cumulative functions. Computed exactly by inverting the
    monotone per-point constraints; symmetric in its arguments.
    """
    b1, v1 = m1._steps()
    b2, v2 = m2._steps()
    return max(_one_sided_levy(b1, v1, b2, v2), _one_sided_levy(b2, v2, b1, v1))


class MeasurePath:
    """A time-indexed family of finite measures on [0, horizon].

    Two storage kinds: "sampled" holds one AtomicMeasure per grid time (time
    lookups snap to the nearest grid point at or before t), "analytic" holds
    a callable eval(t, x_array) giving the cumulative mass at (t, x].
    """

    def __init__(self, *, horizon, kind, tgrid=None, slices=None, eval_fn=None,
                 slice_xs=None, nondecreasing_in_t=False, total_fn=None):
        if horizon <= 0:
            raise ValueError("horizon must be > 0")
        self.horizon = float(horizon)
        self.kind = kind
        self.tgrid = tgrid
        self.slices = slices
        self.eval_fn = eval_fn
        self.slice_xs = slice_xs
        self.nondecreasing_in_t = bool(nondecreasing_in_t)
        self.total_fn = total_fn

    @staticmethod
    def sampled(tgrid, slices: Sequence[AtomicMeasure], horizon=None,
                nondecreasing_in_t=False) -> "MeasurePath":
        tgrid = np.asarray(tgrid, dtype=float)
        if tgrid.ndim != 1 or tgrid.size != len(slices):
            raise ValueError("tgrid and slices must have equal length")
        if tgrid[0] < 0 or np.any(np.diff(tgrid) <= 0):
            raise ValueError("tgrid must be strictly increasing and start at >= 0")
        return MeasurePath(
            horizon=horizon if horizon is not None else float(tgrid[-1]),
            kind="sampled", tgrid=tgrid, slices=list(slices),
            nondecreasing_in_t=nondecreasing_in_t,
        )

    @staticmethod
    def analytic(eval_fn: Callable, horizon: float, slice_xs,
                 nondecreasing_in_t=False, total_fn=None) -> "MeasurePath":
        """Wrap a cumulative evaluator eval_fn(t, x_array) -> mass array.

        `slice_xs` fixes how time-slices are frozen into step functions:
        either an array of x sample points or a callable t -> array.
        """
        return MeasurePath(
            horizon=horizon, kind="analytic", eval_fn=eval_fn, slice_xs=slice_xs,
            nondecreasing_in_t=nondecreasing_in_t, total_fn=total_fn,
        )

    def _check_t(self, t: float):
        if t < 0:
            raise OutOfHorizon(f"t={t} < 0")
        if t > self.horizon * (1 + 1e-12) + 1e-12:
            raise OutOfHorizon(f"t={t} beyond horizon {self.horizon}")

    def _slice_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.tgrid, t * (1 + 1e-15), side="right") - 1)
        if idx < 0:
            raise OutOfHorizon(f"t={t} precedes the first grid time {self.tgrid[0]}")
        return idx

    def cumulative(self, t: float, x):
        """Mass of the time-t slice at (-inf, x]."""
        self._check_t(t)
        if self.kind == "sampled":
            return self.slices[self._slice_index(t)].cumulative(x)
        out = self.eval_fn(float(t), np.asarray(x, dtype=float))
        return float(out) if np.ndim(x) == 0 else np.asarray(out, dtype=float)

    def slice_at(self, t: float):
        """Freeze the time-t slice into an AtomicMeasure or CdfSlice."""
        self._check_t(t)
        if self.kind == "sampled":
            return self.slices[self._slice_index(t)]
        xs = self.slice_xs(float(t)) if callable(self.slice_xs) else np.asarray(self.slice_xs)
        return CdfSlice(xs, self.cumulative(t, xs))

    def total_mass(self, t: float) -> float:
        self._check_t(t)
        if self.kind == "sampled":
            return self.slices[self._slice_index(t)].total_mass()
        if self.total_fn is not None:
            return float(self.total_fn(float(t)))
        return self.slice_at(t).total_mass()


def cumulative(path: MeasurePath, t: float, x):
    """Module-level accessor for path.cumulative(t, x)."""
    return path.cumulative(t, x)


def path_distance(p1: MeasurePath, p2: MeasurePath, probe_grid) -> float:
    """Max over probe times of the Levy distance between time-slices.

    With the identity time-change this upper-bounds the path distance and is
    exact against a reference path that is continuous in t.
    """
    probes = np.asarray(probe_grid, dtype=float)
    horizon = min(p1.horizon, p2.horizon)
    if probes.size and probes.max() > horizon * (1 + 1e-12) + 1e-12:
        raise OutOfHorizon("probe grid extends beyond the shared horizon")
    best = 0.0
    for t in probes:
        best = max(best, levy_distance(p1.slice_at(float(t)), p2.slice_at(float(t))))
    return best


def probe_nondecreasing(path: MeasurePath, tprobes, xprobes, tol=1e-9) -> bool:
    """Check t -> cumulative(t, x) is nondecreasing at the probed points."""
    vals = np.stack([np.atleast_1d(path.cumulative(float(t), np.asarray(xprobes, float)))
                     for t in tprobes])
    return bool(np.all(np.diff(vals, axis=0) >= -tol))


def transport(path: MeasurePath, rule: AgingRule, direction: str) -> MeasurePath:
    """Carry a measure path between the original and prime planes.

    "forward" maps original-plane measures nu to prime-plane measures nu'
    with nu'_t[0, x'] = nu_t(-inf, x(x', t)]; "inverse" is its exact inverse.
    Atom locations are mapped through the trajectory transform; masses are
    unchanged, so total mass is preserved at every time.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError('direction must be "forward" or "inverse"')
    fwd = direction == "forward"
    if path.kind == "sampled":
        out = []
        for t, sl in zip(path.tgrid, path.slices):
            if sl.locations.size == 0:
                out.append(AtomicMeasure.empty())
                continue
            mapper = aging.to_prime_x if fwd else aging.from_prime_x
            out.append(AtomicMeasure(mapper(rule, sl.locations, float(t)), sl.masses))
        new = MeasurePath.sampled(path.tgrid, out, horizon=path.horizon)
        new.nondecreasing_in_t = path.nondecreasing_in_t and probe_nondecreasing(
            new, path.tgrid[:: max(1, len(path.tgrid) // 16)],
            _probe_locations(out))
        return new

    def eval_fn(t, x):
        back = aging.from_prime_x if fwd else aging.to_prime_x
        return path.eval_fn(t, np.asarray(back(rule, x, t), dtype=float))

    def slice_xs_fn(t):
        xs = path.slice_xs(t) if callable(path.slice_xs) else np.asarray(path.slice_xs)
        mapper = aging.to_prime_x if fwd else aging.from_prime_x
        mapped = np.sort(np.asarray(mapper(rule, xs, t), dtype=float))
        return mapped

    return MeasurePath.analytic(
        eval_fn, path.horizon, slice_xs_fn,
        nondecreasing_in_t=path.nondecreasing_in_t, total_fn=path.total_fn,
    )


def _probe_locations(slices, cap=64):
    locs = np.concatenate([s.locations for s in slices if s.locations.size]) if slices else np.empty(0)
    if locs.size == 0:
        return np.array([0.0])
    lo, hi = locs.min(), locs.max()
    return np.linspace(lo - 1e-9, hi + 1e-9, cap)


def slices_to_csv(path: MeasurePath, tgrid, xgrid) -> str:
    """Cumulative masses on a (t, x) grid as CSV text: t,x,mass, t-outer."""
    xs = np.asarray(xgrid, dtype=float)
    lines = ["t,x,mass"]
    for t in np.asarray(tgrid, dtype=float):
        vals = np.atleast_1d(path.cumulative(float(t), xs))
        for x, v in zip(xs, vals):
            lines.append(f"{t:.17g},{x:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"
