"""Deterministic fluid solutions for SJFA queues.

The solver feeds prime-plane cumulative arrival paths through the scalar
reflection level by level and maps back to the original plane. Arrival data
can come from a closed form or from quadrature of an instantaneous workload
arrival distribution along aging trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import aging as _aging
from .aging import AgingRule
from .errors import DomainError, QuadratureFailure
from .measures import CdfSlice, MeasurePath, transport
from .skorokhod import MvsmSolution, SampledPath, mvsm

_QUAD_RTOL = 1e-8
_QUAD_MAX_DEPTH = 14     # panels double from 2^0 up to 2^14
_NODE_CHUNK = 4096       # nodes reflected per sweep block


@dataclass(frozen=True)
class InstantaneousArrival:
    """Instantaneous workload arrival distribution.

    pi(s, x) is the mass of work arriving per unit time at time s carrying
    priority value at most x; rate(s) = pi(s, +inf). support(s) bounds the
    slice support; rate_bound dominates rate over the horizon of interest.
    """

    pi: Callable[[float, np.ndarray], np.ndarray]
    rate: Callable[[float], float]
    support: Callable[[float], tuple[float, float]]
    rate_bound: float
    time_invariant: bool = False
    label: str = "custom"

    @staticmethod
    def from_callable(pi, rate=None, support=None, rate_bound=None,
                      time_invariant=False, label="custom",
                      probe_horizon: float = 10.0) -> "InstantaneousArrival":
        if rate is None:
            rate = lambda s: float(np.atleast_1d(pi(s, np.asarray(1e12)))[0])
        if support is None:
            support = lambda s: (0.0, 1e12)
        if rate_bound is None:
            probes = np.linspace(0.0, probe_horizon, 2049)
            rate_bound = float(max(rate(float(s)) for s in probes)) * (1 + 1e-6)
        return InstantaneousArrival(pi=pi, rate=rate, support=support,
                                    rate_bound=rate_bound,
                                    time_invariant=time_invariant, label=label)


@dataclass(frozen=True)
class ServiceProfile:
    """Service rate m(s) >= floor > 0 and its cumulative mu(t)."""

    rate: Callable[[np.ndarray], np.ndarray]
    floor: float
    cumulative: Callable[[np.ndarray], np.ndarray]
    rate_max: float
    label: str = "custom"

    @staticmethod
    def constant(m: float) -> "ServiceProfile":
        if m <= 0:
            raise ValueError("constant service rate must be > 0")
        return ServiceProfile(
            rate=lambda s: np.broadcast_to(m, np.shape(s)).astype(float),
            floor=float(m),
            cumulative=lambda t: m * np.asarray(t, dtype=float),
            rate_max=float(m),
            label=f"constant({m})",
        )

    @staticmethod
    def from_table(breaks, rates) -> "ServiceProfile":
        """Piecewise-constant rate: rates[i] applies on [breaks[i], breaks[i+1])."""
        b = np.asarray(breaks, dtype=float)
        r = np.asarray(rates, dtype=float)
        if b.ndim != 1 or b.shape != r.shape or b.size == 0:
            raise ValueError("breaks and rates must be matching 1-d arrays")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breaks must start at 0 and increase")
        if np.any(r <= 0):
            raise ValueError("service rates must be > 0")
        cum_at_break = np.concatenate(([0.0], np.cumsum(r[:-1] * np.diff(b))))

        def rate(s):
            sa = np.asarray(s, dtype=float)
            idx = np.clip(np.searchsorted(b, sa, side="right") - 1, 0, r.size - 1)
            return r[idx]

        def cumulative(t):
            ta = np.asarray(t, dtype=float)
            idx = np.clip(np.searchsorted(b, ta, side="right") - 1, 0, r.size - 1)
            return cum_at_break[idx] + r[idx] * (ta - b[idx])

        return ServiceProfile(rate=rate, floor=float(r.min()),
                              cumulative=cumulative, rate_max=float(r.max()),
                              label="table")

    def inverse_cumulative(self, target: float, hint: float = 1.0) -> float:
        """Smallest t with mu(t) >= target; mu is strictly increasing."""
        if target <= 0:
            return 0.0
        hi = max(hint, 1.0)
        while float(self.cumulative(hi)) < target:
            hi *= 2.0
            if hi > 1e15:
                raise ValueError("service capacity never reaches the target")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.cumulative(mid)) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13 * max(1.0, hi):
                break
        return hi


@dataclass(frozen=True)
class FluidSolution:
    """Queued/completed/idle surfaces on an output (t, x) grid.

    xi[i, j] is the queued mass at (tgrid[i], xgrid[j]]; beta_upper[i, j]
    the completed mass strictly above xgrid[j]; iota[i] the idleness.
    """

    tgrid: np.ndarray
    xgrid: np.ndarray
    xi: np.ndarray
    beta_upper: np.ndarray
    iota: np.ndarray
    mu_values: np.ndarray
    total_mass: np.ndarray  # arrived mass at each output time

    def xi_slice(self, i: int) -> CdfSlice:
        return CdfSlice(self.xgrid, self.xi[i])

    def beta_slice(self, i: int) -> CdfSlice:
        served = self.mu_values[i] - self.iota[i]
        return CdfSlice(self.xgrid, np.maximum(served - self.beta_upper[i], 0.0))

    def to_csv(self) -> str:
        lines = ["t,x,xi,beta_upper,iota"]
        for i, t in enumerate(self.tgrid):
            for j, x in enumerate(self.xgrid):
                lines.append(
                    f"{t:.17g},{x:.17g},{self.xi[i, j]:.17g},"
                    f"{self.beta_upper[i, j]:.17g},{self.iota[i]:.17g}"
                )
        return "\n".join(lines) + "\n"


def adaptive_simpson(f, a: float, b: float, rtol: float = _QUAD_RTOL,
                     max_depth: int = _QUAD_MAX_DEPTH):
    """Composite Simpson with panel doubling until successive sweeps agree.

    `f` maps an s-array to an array of shape (..., len(s)); integration runs
    along the last axis so a whole batch of integrands shares panels.
    """
    if b <= a:
        fa = np.asarray(f(np.asarray([a])))
        return np.zeros(fa.shape[:-1])
    prev = None
    for depth in range(max_depth + 1):
        panels = 2**depth
        s = np.linspace(a, b, 2 * panels + 1)
        vals = np.asarray(f(s))
        h = (b - a) / (2 * panels)
        integral = (h / 3.0) * (
            vals[..., 0] + vals[..., -1]
            + 4.0 * vals[..., 1:-1:2].sum(axis=-1)
            + 2.0 * vals[..., 2:-1:2].sum(axis=-1)
        )
        if prev is not None:
            scale = np.maximum(1.0, np.abs(integral))
            if np.all(np.abs(integral - prev) <= rtol * scale):
                return integral
        prev = integral
    raise QuadratureFailure(
        f"no convergence to rtol={rtol} within 2^{max_depth} panels on [{a}, {b}]"
    )


def arrival_mass(arrival: InstantaneousArrival, rule: AgingRule, t: float, x,
                 rtol: float = _QUAD_RTOL, max_depth: int = _QUAD_MAX_DEPTH):
    """Arrived mass at (t, x]: integrate pi along the trajectory through (x, t).

    Work arriving at time s with priority value at most the trajectory's
    value at s sits at or below x at time t, so the cumulative arrival
    surface is the time integral of pi sampled along the trajectory.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    xa = np.asarray(x, dtype=float)
    scalar = np.ndim(x) == 0
    flat = np.atleast_1d(xa).ravel()
    if t == 0.0:
        out = np.zeros(flat.shape)
        return 0.0 if scalar else out.reshape(xa.shape)

    def integrand(s):
        g = _aging.trajectory_sweep(rule, flat, float(t), s)  # (len(s), len(flat))
        out = np.empty_like(g)
        for k, sv in enumerate(s):
            out[k] = np.atleast_1d(arrival.pi(float(sv), g[k]))
        return out.T

    vals = adaptive_simpson(integrand, 0.0, float(t), rtol=rtol, max_depth=max_depth)
    return float(vals[0]) if scalar else vals.reshape(xa.shape)


def prime_arrival_table(arrival: InstantaneousArrival, rule: AgingRule,
                        levels, sgrid) -> np.ndarray:
    """Cumulative prime-plane arrivals on (sgrid x levels) by one time sweep.

    On the prime plane the integrand at level x' is pi sampled along the
    trajectory anchored at (x', 0), so the surface accumulates in time;
    each step adds a three-point Simpson panel.
    """
    levels = np.asarray(levels, dtype=float)
    sgrid = np.asarray(sgrid, dtype=float)
    if sgrid[0] != 0.0:
        raise ValueError("sgrid must start at 0")
    mids = 0.5 * (sgrid[:-1] + sgrid[1:])
    eval_times = np.sort(np.concatenate([sgrid, mids]))
    locs = _aging.from_prime_sweep(rule, levels, eval_times)
    vals = np.empty_like(locs)
    for k, sv in enumerate(eval_times):
        vals[k] = np.atleast_1d(arrival.pi(float(sv), locs[k]))
    out = np.empty((len(sgrid), len(levels)))
    out[0] = 0.0
    # eval_times interleaves grid points and midpoints: grid index i sits at 2i
    for i in range(1, len(sgrid)):
        h = sgrid[i] - sgrid[i - 1]
        panel = (h / 6.0) * (vals[2 * i - 2] + 4.0 * vals[2 * i - 1] + vals[2 * i])
        out[i] = out[i - 1] + panel
    return out


def arrival_prime_path(arrival: InstantaneousArrival, rule: AgingRule,
                       horizon: float, levels=None, s_points: int = 2001) -> MeasurePath:
    """Table-backed prime-plane cumulative arrival path."""
    if levels is None:
        hi = max(arrival.support(0.0)[1], 1.0)
        if not np.isfinite(hi) or hi > 1e6:
            hi = 50.0  # heavy tails are truncated for tabulation
        top = float(_aging.to_prime_x(rule, np.asarray([hi]), horizon)[0]) + 1.0
        levels = np.linspace(0.0, max(top, 1.0), 1025)
    levels = np.asarray(levels, dtype=float)
    sgrid = np.linspace(0.0, horizon, s_points)
    table = prime_arrival_table(arrival, rule, levels, sgrid)

    def eval_fn(t, x):
        # snap-left time lookup, then linear interpolation across levels
        i = min(int(np.searchsorted(sgrid, t * (1 + 1e-15), side="right") - 1),
                len(sgrid) - 1)
        row = table[max(i, 0)]
        return np.interp(np.asarray(x, dtype=float), levels, row,
                         left=0.0, right=float(row[-1]))

    return MeasurePath.analytic(eval_fn, horizon=horizon, slice_xs=levels,
                                nondecreasing_in_t=True,
                                total_fn=lambda t: float(eval_fn(t, np.asarray(levels[-1]))))


def arrival_path(arrival: InstantaneousArrival, rule: AgingRule, horizon: float,
                 slice_xs=None, s_points: int = 2001) -> MeasurePath:
    """Original-plane cumulative arrival path backed by the prime table."""
    prime = arrival_prime_path(arrival, rule, horizon, s_points=s_points)
    out = transport(prime, rule, "inverse")
    out.nondecreasing_in_t = True  # decreasing rules only accrue mass below any x
    if slice_xs is None:
        out.slice_xs = lambda t: np.sort(
            _aging.from_prime_x(rule, np.asarray(prime.slice_xs), float(t)))
    else:
        out.slice_xs = np.asarray(slice_xs, dtype=float)
    return out


def mass_below_anchor(alpha: MeasurePath, rule: AgingRule, t: float, anchor):
    """Arrived mass below the trajectory anchored at (anchor, 0), at time t.

    This is the prime-plane cumulative arrival surface at the anchor: the
    level driving the reflection for every original-plane point whose prime
    coordinate is `anchor`.
    """
    loc = _aging.from_prime_x(rule, anchor, float(t))
    return alpha.cumulative(t, loc)


def _atomless_probe(alpha: MeasurePath, tprobes, xgrid, threshold=1e-6):
    """Reject arrival slices carrying atoms heavier than `threshold`.

    A cell jump that fails to shrink when the spacing shrinks fourfold twice
    marks an atom rather than a steep continuous rise.
    """
    xs = np.asarray(xgrid, dtype=float)
    for t in tprobes:
        vals = np.atleast_1d(alpha.cumulative(float(t), xs))
        jumps = np.diff(vals)
        worst = int(np.argmax(jumps))
        j0 = float(jumps[worst])
        if j0 <= threshold:
            continue
        lo, hi = xs[worst], xs[worst + 1]
        for _ in range(2):
            sub = np.linspace(lo, hi, 5)
            subvals = np.atleast_1d(alpha.cumulative(float(t), sub))
            subjumps = np.diff(subvals)
            k = int(np.argmax(subjumps))
            j1 = float(subjumps[k])
            lo, hi = sub[k], sub[k + 1]
            if j1 <= max(threshold, 0.6 * j0):
                break
            j0 = j1
        else:
            raise DomainError(
                f"arrival slice at t={t} carries an atom of about {j0:.3g} near x={lo:.6g}"
            )


def solve_fluid(alpha: MeasurePath, mu: ServiceProfile, rule: AgingRule,
                tgrid, xgrid, s_points: int = 1001,
                check_atomless: bool = True) -> FluidSolution:
    """Queued/completed/idle fluid surfaces on the original plane.

    Every output node (t, x) owns the priority level given by its prime
    coordinate; the node's queued mass is the nonnegative half of the
    scalar reflection of that level's arrivals-minus-capacity path at t,
    and the pushing half splits into completed-above mass plus the shared
    idleness. The running infimum runs over an internal s-grid containing
    every output time; idleness comes from the total-mass level, where the
    completed-above term vanishes identically.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    xgrid = np.asarray(xgrid, dtype=float)
    if np.any(np.diff(tgrid) <= 0) or np.any(np.diff(xgrid) <= 0):
        raise ValueError("tgrid and xgrid must be strictly increasing")
    tmax = float(tgrid[-1])
    sgrid = np.unique(np.concatenate([np.linspace(0.0, tmax, s_points), tgrid]))
    out_pos = np.searchsorted(sgrid, tgrid)

    if check_atomless:
        probes = tgrid[:: max(1, len(tgrid) // 8)]
        _atomless_probe(alpha, probes, xgrid)

    nx = len(xgrid)
    anchors = np.empty((len(tgrid), nx))
    for i, t in enumerate(tgrid):
        anchors[i] = np.atleast_1d(_aging.to_prime_x(rule, xgrid, float(t)))
    flat = anchors.ravel()

    mu_on_s = np.asarray(mu.cumulative(sgrid), dtype=float)
    totals_s = np.array([alpha.total_mass(float(s)) for s in sgrid])

    # idleness from the total-mass level
    run = np.minimum.accumulate(np.minimum(totals_s - mu_on_s, 0.0))
    iota = np.maximum(-run[out_pos], 0.0)

    xi = np.empty((len(tgrid), nx))
    g2 = np.empty((len(tgrid), nx))
    harvest_row = {int(p): i for i, p in enumerate(out_pos)}

    for c0 in range(0, flat.size, _NODE_CHUNK):
        c1 = min(c0 + _NODE_CHUNK, flat.size)
        locs = _aging.from_prime_sweep(rule, flat[c0:c1], sgrid)
        run_chunk = np.zeros(c1 - c0)
        for k in range(len(sgrid)):
            psi_row = np.atleast_1d(alpha.cumulative(float(sgrid[k]), locs[k])) - mu_on_s[k]
            run_chunk = np.minimum(run_chunk, np.minimum(psi_row, 0.0))
            i = harvest_row.get(k)
            if i is None:
                continue
            lo = i * nx
            hi = lo + nx
            if hi <= c0 or lo >= c1:
                continue
            a0, a1 = max(lo, c0), min(hi, c1)
            seg = slice(a0 - c0, a1 - c0)
            dst = slice(a0 - lo, a1 - lo)
            xi[i, dst] = psi_row[seg] - run_chunk[seg]
            g2[i, dst] = np.maximum(-run_chunk[seg], 0.0)

    mu_out = mu_on_s[out_pos]
    totals_out = totals_s[out_pos]
    beta_upper = np.maximum(g2 - iota[:, None], 0.0)
    return FluidSolution(tgrid=tgrid, xgrid=xgrid, xi=xi, beta_upper=beta_upper,
                         iota=iota, mu_values=mu_out, total_mass=totals_out)


def solve_fluid_via_mvsm(alpha: MeasurePath, mu: ServiceProfile, rule: AgingRule,
                         tgrid, xgrid, levels=None, s_points: int = 1001) -> FluidSolution:
    """Alternate route: prime-plane reflection on a fixed level lattice, map back.

    Lattice levels interpolate the prime surfaces, so this route carries a
    lattice resolution error the direct per-node route does not; agreement
    of the two within the lattice tolerance is a solver invariant.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    xgrid = np.asarray(xgrid, dtype=float)
    tmax = float(tgrid[-1])
    sgrid = np.unique(np.concatenate([np.linspace(0.0, tmax, s_points), tgrid]))
    alpha_prime = transport(alpha, rule, "forward")
    alpha_prime.nondecreasing_in_t = True  # prime-plane arrivals only accrue
    if levels is None:
        hi = float(np.max(np.atleast_1d(_aging.to_prime_x(rule, xgrid, tmax)))) + 1.0
        levels = np.linspace(0.0, max(hi, 1.0), 512)
    sol = mvsm(alpha_prime, mu.cumulative, levels, sgrid)

    keep = np.searchsorted(sgrid, tgrid)
    xi = np.empty((len(tgrid), len(xgrid)))
    beta_upper = np.empty_like(xi)
    for i, t in enumerate(tgrid):
        anchors = np.atleast_1d(_aging.to_prime_x(rule, xgrid, float(t)))
        row = keep[i]
        xi[i] = np.interp(anchors, sol.levels, sol.xi[row], left=0.0,
                          right=float(sol.xi[row][-1]))
        beta_upper[i] = np.interp(anchors, sol.levels, sol.beta_upper[row],
                                  left=float(sol.beta_upper[row][0]), right=0.0)
    iota = sol.iota.values[keep]
    mu_out = np.asarray(mu.cumulative(tgrid), dtype=float)
    totals_out = np.array([alpha.total_mass(float(t)) for t in tgrid])
    return FluidSolution(tgrid=tgrid, xgrid=xgrid, xi=xi, beta_upper=beta_upper,
                         iota=iota, mu_values=mu_out, total_mass=totals_out)


def overload_guess(alpha_prime: MeasurePath, mu: ServiceProfile, levels, tgrid,
                   tol: float = 1e-12):
    """Served-everything-below guess and its validity flag.

    Guess: completed mass below a level is the arrived mass capped at the
    service budget; queued mass is the excess; idleness is zero. The guess
    solves the level-by-level reflection exactly when the capped shortfall
    (mu - arrivals-below)^+ is nondecreasing in t at every level, which is
    the overload regime.
    """
    levels = np.asarray(levels, dtype=float)
    tgrid = np.asarray(tgrid, dtype=float)
    mu_vals = np.asarray(mu.cumulative(tgrid), dtype=float)
    a = np.stack([np.atleast_1d(alpha_prime.cumulative(float(t), levels)) for t in tgrid])
    beta_below = np.minimum(a, mu_vals[:, None])
    xi = a - beta_below
    beta_above = np.maximum(mu_vals[:, None] - a, 0.0)
    valid = bool(np.all(np.diff(beta_above, axis=0) >= -tol))
    sol = MvsmSolution(
        tgrid=tgrid, levels=levels, xi=xi, beta_upper=beta_above,
        iota=SampledPath(tgrid, np.zeros_like(tgrid)), mu_values=mu_vals,
    )
    return sol, valid


def served_frontier(alpha_prime: MeasurePath, mu: ServiceProfile, t: float,
                    xtol: float = 1e-9) -> float:
    """Lowest prime level whose arrived mass covers the service budget.

    Below the frontier everything arrived has been served (in the overload
    guess regime). Returns +inf when the budget exceeds all arrived mass.
    """
    target = float(mu.cumulative(np.asarray(float(t))))
    if target <= 0.0:
        return _support_inf(alpha_prime, t)
    total = alpha_prime.total_mass(float(t))
    if target > total * (1 + 1e-12):
        return float("inf")
    lo, hi = 0.0, 1.0
    while float(alpha_prime.cumulative(t, hi)) < target:
        hi *= 2.0
        if hi > 1e15:
            return float("inf")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if float(alpha_prime.cumulative(t, mid)) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def _support_inf(path: MeasurePath, t: float) -> float:
    sl = path.slice_at(t)
    if hasattr(sl, "locations"):
        return sl.support()[0] if sl.locations.size else 0.0
    pos = np.nonzero(sl.values > 0)[0]
    if pos.size == 0:
        return float(sl.xs[0])
    # the support starts inside the cell before the first positive sample
    return float(sl.xs[max(int(pos[0]) - 1, 0)])
