"""Aging rules given by an ODE and the time-invariant priority transform.

A job's priority value g follows dg/ds = f(g, s). Because f is Lipschitz in
its first argument, exactly one trajectory passes through any point (x, t)
of the time-priority plane, so trajectories of the same rule never cross.
Mapping a point to the value its trajectory takes at time 0 yields the
"prime" plane, where priorities do not change with time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import LipschitzViolation, NonFiniteTrajectory

# Right-hand side f(g, s): vectorized in g, scalar s.
Rhs = Callable[[np.ndarray, float], np.ndarray]

_VALIDATOR_PROBES = 10_000
_VALIDATOR_SLACK = 1e-9
_DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class PlanePoint:
    """A point (x, t) on the time-priority plane; t >= 0, x may be negative."""

    x: float
    t: float

    def __post_init__(self):
        if not (self.t >= 0.0):
            raise ValueError(f"plane point needs t >= 0, got t={self.t}")


@dataclass(frozen=True)
class AgingRule:
    """An ODE aging rule dg/ds = rhs(g, s) with declared Lipschitz constant.

    `analytic`, when present, evaluates the exact trajectory through (x, t)
    at time s and bypasses numerical integration. Instances are immutable
    and all operations on them are pure.
    """

    kind: str  # "linear" | "exponential" | "custom"
    rhs: Rhs
    lipschitz: float
    analytic: Optional[Callable[[np.ndarray, float, float], np.ndarray]] = None
    step: float = _DEFAULT_STEP
    params: dict = field(default_factory=dict)

    @staticmethod
    def linear(c: float) -> "AgingRule":
        """Constant-speed decay: g drops by c per unit time."""
        if c <= 0:
            raise ValueError("linear rule needs c > 0")
        return AgingRule(
            kind="linear",
            rhs=lambda g, s: np.broadcast_to(-c, np.shape(g)).astype(float),
            lipschitz=0.0,
            analytic=lambda x, t, s: x - c * (s - t),
            params={"c": float(c)},
        )

    @staticmethod
    def exponential(lam: float) -> "AgingRule":
        """Proportional decay: g shrinks at rate lam."""
        if lam <= 0:
            raise ValueError("exponential rule needs lambda > 0")
        return AgingRule(
            kind="exponential",
            rhs=lambda g, s: -lam * np.asarray(g, dtype=float),
            lipschitz=lam,
            analytic=lambda x, t, s: x * np.exp(-lam * (s - t)),
            params={"lambda": float(lam)},
        )

    @staticmethod
    def custom(
        rhs: Rhs,
        lipschitz: float,
        probe_box: tuple[tuple[float, float], tuple[float, float]] | None = None,
        step: float = _DEFAULT_STEP,
        validate: bool = True,
        label: str = "custom",
        analytic=None,
    ) -> "AgingRule":
        """Register a user rule; `rhs` must be vectorized in its first argument.

        When `validate` is set, the declared Lipschitz constant is checked on
        10^4 random probe pairs inside `probe_box` ((g_lo, g_hi), (s_lo, s_hi))
        and the rule is rejected if the bound is exceeded by more than 1e-9.
        Passing `analytic` (exact trajectory (x, t, s) -> value) skips the
        numerical integrator.
        """
        if lipschitz < 0:
            raise ValueError("lipschitz must be >= 0")
        if validate:
            if probe_box is None:
                raise ValueError("custom rule validation needs a probe_box")
            _validate_lipschitz(rhs, lipschitz, probe_box)
        return AgingRule(
            kind="custom",
            rhs=rhs,
            lipschitz=float(lipschitz),
            analytic=analytic,
            step=step,
            params={"label": label},
        )

    @staticmethod
    def no_aging() -> "AgingRule":
        """Priorities frozen at the job size: plain shortest-job-first."""
        return AgingRule.custom(
            rhs=lambda g, s: np.zeros_like(np.asarray(g, dtype=float)),
            lipschitz=0.0, validate=False, label="none",
            analytic=lambda x, t, s: x + 0.0 * (np.asarray(s) + np.asarray(t)),
        )

    def tolerance(self, span: float = 1.0) -> float:
        """Trajectory error budget over a time span of length `span`.

        Analytic rules are exact to rounding; numerically integrated rules
        carry the fixed-step fourth-order budget amplified by exp(L*span).
        """
        if self.analytic is not None:
            return 1e-12
        return 1e-12 + 100.0 * self.step**4 * math.exp(self.lipschitz * abs(span))

    @property
    def label(self) -> str:
        if self.kind == "linear":
            return f"linear(c={self.params['c']})"
        if self.kind == "exponential":
            return f"exponential(lambda={self.params['lambda']})"
        return f"custom({self.params.get('label', '?')})"


def _validate_lipschitz(rhs, lipschitz, probe_box):
    # 100 probe times x 100 probe pairs each = 10^4 sampled pairs.
    (g_lo, g_hi), (s_lo, s_hi) = probe_box
    rng = np.random.Generator(np.random.Philox(key=0x5EED))
    worst = 0.0
    for s in rng.uniform(s_lo, s_hi, 100):
        g1 = rng.uniform(g_lo, g_hi, _VALIDATOR_PROBES // 100)
        g2 = rng.uniform(g_lo, g_hi, _VALIDATOR_PROBES // 100)
        gap = np.abs(np.asarray(rhs(g1, float(s))) - np.asarray(rhs(g2, float(s))))
        excess = gap - lipschitz * np.abs(g1 - g2)
        worst = max(worst, float(excess.max(initial=0.0)))
    if worst > _VALIDATOR_SLACK:
        raise LipschitzViolation(
            f"declared L={lipschitz} exceeded by {worst:.3e} on sampled probes"
        )


def _integrate(rhs: Rhs, x, t0: float, t1: float, h: float):
    """Classical fixed-step RK4 from t0 to t1; negative spans step backward."""
    g = np.asarray(x, dtype=float).copy()
    span = t1 - t0
    if span == 0.0:
        return g
    n = max(1, int(math.ceil(abs(span) / h)))
    dt = span / n
    for k in range(n):
        s = t0 + k * dt
        k1 = np.asarray(rhs(g, s))
        k2 = np.asarray(rhs(g + 0.5 * dt * k1, s + 0.5 * dt))
        k3 = np.asarray(rhs(g + 0.5 * dt * k2, s + 0.5 * dt))
        k4 = np.asarray(rhs(g + dt * k3, s + dt))
        g = g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(g)):
        raise NonFiniteTrajectory(f"integration from t={t0} to s={t1} left the finite range")
    return g


def trajectory(rule: AgingRule, x, t: float, s: float):
    """Value at time s of the unique trajectory through (x, t).

    `x` may be a scalar or an array; `t` and `s` are scalar times >= 0.
    """
    if t < 0 or s < 0:
        raise ValueError("trajectory times must be >= 0")
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xa = np.asarray(x, dtype=float)
    if rule.analytic is not None:
        out = np.asarray(rule.analytic(xa, t, s), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteTrajectory(f"analytic trajectory non-finite at s={s}")
    else:
        out = _integrate(rule.rhs, xa, t, s, rule.step)
    return float(out) if scalar else out


def to_prime(rule: AgingRule, p: PlanePoint) -> PlanePoint:
    """Map (x, t) to prime coordinates (x', t): x' is the trajectory value at 0."""
    return PlanePoint(trajectory(rule, p.x, p.t, 0.0), p.t)


def from_prime(rule: AgingRule, p_prime: PlanePoint) -> PlanePoint:
    """Inverse of to_prime: follow the trajectory anchored at (x', 0) out to t."""
    return PlanePoint(trajectory(rule, p_prime.x, 0.0, p_prime.t), p_prime.t)


def to_prime_x(rule: AgingRule, x, t: float):
    """Array form of to_prime returning locations only."""
    return trajectory(rule, x, t, 0.0)


def from_prime_x(rule: AgingRule, xp, t: float):
    """Array form of from_prime returning locations only."""
    return trajectory(rule, xp, 0.0, t)


def to_prime_many(rule: AgingRule, xs, ts):
    """to_prime for per-element anchor times (used for job batches)."""
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if rule.analytic is not None:
        out = np.asarray(rule.analytic(xs, ts, 0.0), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteTrajectory("analytic trajectory non-finite at s=0")
        return out
    return np.array([trajectory(rule, x, t, 0.0) for x, t in zip(xs, ts)])


def from_prime_sweep(rule: AgingRule, xp, s_grid):
    """Trajectories anchored at (xp, 0) evaluated along ascending s_grid.

    Returns an array of shape (len(s_grid), len(xp)). For custom rules this
    runs one forward integration pass shared by all anchors.
    """
    xp = np.asarray(xp, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    if rule.analytic is not None:
        out = np.asarray(rule.analytic(xp[None, :], 0.0, s_grid[:, None]), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteTrajectory("analytic trajectory non-finite on sweep")
        return out
    out = np.empty((len(s_grid), len(xp)))
    g = xp.copy()
    prev = 0.0
    for i, s in enumerate(s_grid):
        g = _integrate(rule.rhs, g, prev, float(s), rule.step)
        prev = float(s)
        out[i] = g
    return out


def trajectory_sweep(rule: AgingRule, x, t: float, s_grid):
    """Trajectories through (x, t) evaluated along ascending s_grid.

    Shape (len(s_grid), len(x)). Custom rules integrate once backward over
    the part of s_grid below t and once forward over the rest.
    """
    xa = np.asarray(x, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    if rule.analytic is not None:
        out = np.asarray(rule.analytic(xa[None, :], t, s_grid[:, None]), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteTrajectory("analytic trajectory non-finite on sweep")
        return out
    out = np.empty((len(s_grid), len(xa)))
    below = np.nonzero(s_grid <= t)[0]
    above = np.nonzero(s_grid > t)[0]
    g = xa.copy()
    prev = float(t)
    for i in below[::-1]:
        g = _integrate(rule.rhs, g, prev, float(s_grid[i]), rule.step)
        prev = float(s_grid[i])
        out[i] = g
    g = xa.copy()
    prev = float(t)
    for i in above:
        g = _integrate(rule.rhs, g, prev, float(s_grid[i]), rule.step)
        prev = float(s_grid[i])
        out[i] = g
    return out


def separation_bound(rule: AgingRule, x1: float, x2: float, t: float, s: float,
                     slack: float = 1e-9) -> bool:
    """Check the Gronwall-type spread bound between two trajectories.

    Two trajectories launched from x1 and x2 at time t stay within
    |x2 - x1| * exp(L * |s - t|) of each other. Used as a validator, not in
    any solve path.
    """
    g1 = trajectory(rule, x1, t, s)
    g2 = trajectory(rule, x2, t, s)
    bound = abs(x2 - x1) * math.exp(rule.lipschitz * abs(s - t))
    return abs(g2 - g1) <= bound + slack + rule.tolerance(abs(s - t))
