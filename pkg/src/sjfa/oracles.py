"""Closed-form arrival and solution surfaces for the four named examples.

Each example fixes an instantaneous workload arrival distribution and a
canonical aging rule and gives exact cumulative arrival surfaces on both
planes; the uniform/linear example additionally has exact queued and
completed surfaces for capacity mu(t) = t/2 at times t > 1. All evaluators
take a scalar time and a scalar or array priority coordinate.

The Pareto/linear surfaces here carry 1/(eta-1) weights on the power terms:
that is what integrating the stated instantaneous distribution along linear
trajectories produces, and the quadrature cross-checks in the test suite
pin it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .aging import AgingRule
from .errors import BranchGap, DomainError
from .measures import MeasurePath

_WHICH = ("alpha", "alpha_prime", "beta_prime", "xi_prime", "xi")


def _as_array(x):
    return np.asarray(x, dtype=float), np.ndim(x) == 0


def _ret(out, scalar):
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# uniform workload on [0, 1], linear aging with unit rate, mu(t) = t/2
# ---------------------------------------------------------------------------

def uniform_linear(t: float, x, which: str = "alpha"):
    """Uniform-workload / linear-aging surfaces.

    which picks the surface: arrived mass on the original plane ("alpha") or
    prime plane ("alpha_prime"); for the mu(t) = t/2 regime at t > 1 also
    completed mass "beta_prime" (cumulative, prime plane), queued mass
    "xi_prime" (prime plane) and "xi" (original plane).
    """
    if which not in _WHICH:
        raise ValueError(f"unknown surface {which!r}")
    if t < 0:
        raise DomainError("t must be >= 0")
    xa, scalar = _as_array(x)
    if which == "alpha":
        return _ret(_uniform_alpha(t, xa), scalar)
    if which == "alpha_prime":
        return _ret(_uniform_alpha_prime(t, xa), scalar)
    if t <= 1.0:
        raise DomainError("queued/completed surfaces are stated for t > 1 with mu = t/2")
    if which == "beta_prime":
        return _ret(_uniform_beta_prime(t, xa), scalar)
    if which == "xi_prime":
        return _ret(_uniform_xi_prime(t, xa), scalar)
    return _ret(_uniform_xi(t, xa), scalar)


def _uniform_alpha(t, x):
    conds = [
        x > 1,
        (x > 0) & (x <= 1) & (x > 1 - t),
        (x > 0) & (x <= 1) & (x <= 1 - t),
        (x <= 0) & (x > 1 - t),
        (x <= 0) & (x <= -t),
        (x <= 0) & (x > -t) & (x <= 1 - t),
    ]
    vals = [
        np.full_like(x, t),
        t + x - x * x / 2 - 0.5,
        x * t + t * t / 2,
        x + t - 0.5,
        np.zeros_like(x),
        (x + t) ** 2 / 2,
    ]
    return np.select(conds, vals, default=np.nan)


def uniform_linear_branch(t, x):
    """Index of the branch _uniform_alpha selects; diagnostic for coverage."""
    xa, scalar = _as_array(x)
    conds = [
        xa > 1,
        (xa > 0) & (xa <= 1) & (xa > 1 - t),
        (xa > 0) & (xa <= 1) & (xa <= 1 - t),
        (xa <= 0) & (xa > 1 - t),
        (xa <= 0) & (xa <= -t),
        (xa <= 0) & (xa > -t) & (xa <= 1 - t),
    ]
    out = np.select(conds, list(range(len(conds))), default=-1)
    return int(out) if scalar else out


def _uniform_alpha_prime(t, xp):
    conds = [
        xp > 1 + t,
        (xp > t) & (xp <= 1 + t) & (xp > 1),
        (xp > t) & (xp <= 1 + t) & (xp <= 1),
        (xp <= t) & (xp > 1),
        (xp <= t) & (xp <= 0),
        (xp <= t) & (xp > 0) & (xp <= 1),
    ]
    vals = [
        np.full_like(xp, t),
        xp - (xp - t) ** 2 / 2 - 0.5,
        xp * t - t * t / 2,
        xp - 0.5,
        np.zeros_like(xp),
        xp * xp / 2,
    ]
    return np.select(conds, vals, default=np.nan)


def _uniform_beta_prime(t, xp):
    conds = [
        xp > (1 + t) / 2,
        (xp > 1) & (xp <= (1 + t) / 2),
        xp <= 0,
        (xp > 0) & (xp <= 1),
    ]
    vals = [np.full_like(xp, t / 2), xp - 0.5, np.zeros_like(xp), xp * xp / 2]
    return np.select(conds, vals, default=np.nan)


def _uniform_xi_prime(t, xp):
    conds = [
        xp > 1 + t,
        (xp > t) & (xp <= 1 + t) & (xp > 1),
        (xp > (t + 1) / 2) & (xp <= t),
        xp <= (t + 1) / 2,
    ]
    vals = [
        np.full_like(xp, t / 2),
        xp - (xp - t) ** 2 / 2 - 0.5 - t / 2,
        xp - (1 + t) / 2,
        np.zeros_like(xp),
    ]
    return np.select(conds, vals, default=np.nan)


def _uniform_xi(t, x):
    conds = [
        x > 1,
        (x > 0) & (x <= 1) & (x > 1 - t),
        (x <= 0) & (x > (1 - t) / 2),
        x <= (1 - t) / 2,
    ]
    vals = [
        np.full_like(x, t / 2),
        x + t - x * x / 2 - 0.5 - t / 2,
        x + (t - 1) / 2,
        np.zeros_like(x),
    ]
    return np.select(conds, vals, default=np.nan)


# ---------------------------------------------------------------------------
# triangular-wave uniform workload, linear aging with unit rate
# ---------------------------------------------------------------------------

def wave_height(s):
    """Support upper edge a(s): period-2 triangle between 1/2 and 1."""
    f = np.mod(np.asarray(s, dtype=float), 2.0)
    return np.where(f <= 1.0, 0.5 + f / 2.0, 1.5 - f / 2.0)


def wave_mass(sigma):
    """Integral of the wave height from 0 to sigma (sigma >= 0)."""
    sig = np.asarray(sigma, dtype=float)
    k = np.floor(sig)
    r = sig - k
    odd = np.mod(k, 2.0) == 1.0
    part = np.where(odd, r - r * r / 4.0, r / 2.0 + r * r / 4.0)
    return 0.75 * k + part


@dataclass(frozen=True)
class WaveCrossing:
    """Where the unit-slope line through (t, x) meets the wave.

    The line's value at time s is x + t - s; its intercept z = x + t alone
    fixes the crossing. Intercepts with z mod 2 in [0, 1/2) cross on a
    falling wave segment (region 1), the rest on a rising segment
    (region 2). Exactly one region holds for every point.
    """

    region: int     # 1 or 2
    s_star: float   # crossing time on the periodically extended wave
    height: float   # wave height at the crossing

    @staticmethod
    def locate(x: float, t: float) -> "WaveCrossing":
        z = x + t
        n = 2.0 * np.floor(z / 2.0)
        if n <= z < n + 0.5:
            a1 = (1.0 + np.floor(z)) / 2.0
            return WaveCrossing(1, float(2.0 * (z - a1)), float(a1))
        a2 = 0.5 - np.floor(z / 2.0)
        return WaveCrossing(2, float(2.0 * (z - a2) / 3.0), float(a2))


def _tri_s_star(z):
    """Vectorized crossing time for line intercepts z."""
    n = 2.0 * np.floor(z / 2.0)
    d1 = (z >= n) & (z < n + 0.5)
    a1 = (1.0 + np.floor(z)) / 2.0
    a2 = 0.5 - np.floor(z / 2.0)
    return np.where(d1, 2.0 * (z - a1), 2.0 * (z - a2) / 3.0), d1


def triangular_alpha(t: float, x):
    """Arrived mass for the triangular-wave workload under linear aging.

    Splits the integral at the line-wave crossing: the wave caps the
    integrand before the crossing, the line itself (clipped at zero) rules
    after it.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    xa, scalar = _as_array(x)
    z = xa + t
    s_star, _ = _tri_s_star(z)

    wave_only = np.full_like(z, float(wave_mass(t)))  # W(t), used when s* >= t
    line_from = np.maximum(s_star, 0.0)

    # integral of the positive line part over [line_from, min(t, z)]
    upper = np.where(xa >= 0, t, z)
    line_part = z * (upper - line_from) - (upper**2 - line_from**2) / 2.0

    conds = [
        z < 0,
        s_star >= t,
        (s_star < 0) & (xa >= 0),
        (s_star < 0) & (xa < 0),
        (s_star >= 0) & (s_star < t) & (xa >= 0),
        (s_star >= 0) & (s_star < t) & (xa < 0),
    ]
    vals = [
        np.zeros_like(z),
        wave_only,
        xa * t + t * t / 2.0,
        z * z / 2.0,
        wave_mass(line_from) + line_part,
        wave_mass(line_from) + line_part,
    ]
    out = np.select(conds, vals, default=np.nan)
    if np.any(np.isnan(out)):
        raise BranchGap("triangular arrival surface left a point unmatched")
    return _ret(out, scalar)


def triangular_alpha_branch(t, x):
    """Branch index selected by triangular_alpha; diagnostic for coverage."""
    xa, scalar = _as_array(x)
    z = xa + t
    s_star, d1 = _tri_s_star(z)
    conds = [
        z < 0,
        (s_star >= t) & d1,
        (s_star >= t) & ~d1,
        (s_star < 0) & (xa >= 0),
        (s_star < 0) & (xa < 0),
        (s_star >= 0) & (s_star < t) & (xa >= 0) & d1,
        (s_star >= 0) & (s_star < t) & (xa >= 0) & ~d1,
        (s_star >= 0) & (s_star < t) & (xa < 0) & d1,
        (s_star >= 0) & (s_star < t) & (xa < 0) & ~d1,
    ]
    out = np.select(conds, list(range(len(conds))), default=-1)
    return int(out) if scalar else out


# ---------------------------------------------------------------------------
# Pareto workload (scale 1, shape eta), linear or exponential aging
# ---------------------------------------------------------------------------

def _check_eta(eta):
    if eta <= 1:
        raise DomainError("Pareto shape eta must exceed 1 (finite mean)")


def pareto_linear(t: float, x, which: str = "alpha", eta: float = 1.2):
    """Pareto-workload surfaces under linear aging with unit rate."""
    _check_eta(eta)
    if which not in ("alpha", "alpha_prime"):
        raise ValueError(f"unknown surface {which!r}")
    if t < 0:
        raise DomainError("t must be >= 0")
    xa, scalar = _as_array(x)
    k = eta - 1.0
    if which == "alpha":
        z = xa + t
        conds = [xa < 1 - t, (xa >= 1 - t) & (xa <= 1), xa > 1]
        zs = np.maximum(z, 1e-12)
        xs = np.maximum(xa, 1e-12)
        vals = [
            np.zeros_like(xa),
            xa + t - 1 + (zs ** (1 - eta) - 1) / k,
            t + (zs ** (1 - eta) - xs ** (1 - eta)) / k,
        ]
    else:
        xs = np.maximum(xa, 1e-12)
        conds = [xa < 1, (xa >= 1) & (xa <= 1 + t), xa > 1 + t]
        vals = [
            np.zeros_like(xa),
            xa - 1 + (xs ** (1 - eta) - 1) / k,
            t + (xs ** (1 - eta) - np.maximum(xa - t, 1e-12) ** (1 - eta)) / k,
        ]
    out = np.select(conds, vals, default=np.nan)
    return _ret(out, scalar)


def pareto_linear_branch(t, x, which="alpha"):
    xa, scalar = _as_array(x)
    if which == "alpha":
        conds = [xa < 1 - t, (xa >= 1 - t) & (xa <= 1), xa > 1]
    else:
        conds = [xa < 1, (xa >= 1) & (xa <= 1 + t), xa > 1 + t]
    out = np.select(conds, list(range(len(conds))), default=-1)
    return int(out) if scalar else out


def pareto_exponential(t: float, x, which: str = "alpha", eta: float = 1.2,
                       lam: float = 0.1):
    """Pareto-workload surfaces under exponential aging at rate lam."""
    _check_eta(eta)
    if lam <= 0:
        raise DomainError("exponential aging rate lambda must be > 0")
    if which not in ("alpha", "alpha_prime"):
        raise ValueError(f"unknown surface {which!r}")
    if t < 0:
        raise DomainError("t must be >= 0")
    xa, scalar = _as_array(x)
    le = lam * eta
    if which == "alpha":
        xs = np.maximum(xa, 1e-12)
        conds = [xa <= np.exp(-lam * t), (xa > np.exp(-lam * t)) & (xa < 1), xa >= 1]
        vals = [
            np.zeros_like(xa),
            t + np.log(xs) / lam - xs ** (-eta) * (xs**eta - np.exp(-le * t)) / le,
            t - xs ** (-eta) * (1 - np.exp(-le * t)) / le,
        ]
    else:
        xs = np.maximum(xa, 1e-12)
        conds = [xa <= 1, (xa > 1) & (xa < np.exp(lam * t)), xa >= np.exp(lam * t)]
        vals = [
            np.zeros_like(xa),
            np.log(xs) / lam - (1 - xs ** (-eta)) / le,
            t - xs ** (-eta) * (np.exp(le * t) - 1) / le,
        ]
    out = np.select(conds, vals, default=np.nan)
    return _ret(out, scalar)


def pareto_exponential_branch(t, x, which="alpha", lam=0.1):
    xa, scalar = _as_array(x)
    if which == "alpha":
        conds = [xa <= np.exp(-lam * t), (xa > np.exp(-lam * t)) & (xa < 1), xa >= 1]
    else:
        conds = [xa <= 1, (xa > 1) & (xa < np.exp(lam * t)), xa >= np.exp(lam * t)]
    out = np.select(conds, list(range(len(conds))), default=-1)
    return int(out) if scalar else out


# ---------------------------------------------------------------------------
# named-example registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NamedExample:
    """A registered arrival/aging pairing with its closed forms.

    `alpha`/`alpha_prime` are None when no closed form matches the supplied
    rule (a mismatched pairing falls back to quadrature in the solvers).
    """

    name: str
    make_rule: Callable[[dict], AgingRule]
    pi: Callable[[dict], Callable]                 # params -> pi(s, x_array)
    rate: Callable[[dict], Callable]               # params -> rate(s)
    support: Callable[[dict], Callable]            # params -> (s -> (lo, hi))
    alpha_eval: Optional[Callable] = None          # params -> eval(t, x)
    alpha_prime_eval: Optional[Callable] = None
    xi_eval: Optional[Callable] = None
    rule_matches: Callable[[AgingRule, dict], bool] = lambda rule, p: False
    time_invariant: bool = True


def _uniform_pi(params):
    return lambda s, x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


def _tri_pi(params):
    return lambda s, x: np.minimum(wave_height(s), np.clip(np.asarray(x, dtype=float), 0.0, None))


def _pareto_pi(params):
    eta = params.get("eta", 1.2)
    _check_eta(eta)

    def pi(s, x):
        xa = np.asarray(x, dtype=float)
        return np.where(xa >= 1.0, 1.0 - np.maximum(xa, 1.0) ** (-eta), 0.0)

    return pi


def _linear_unit_matches(rule: AgingRule, params) -> bool:
    return rule.kind == "linear" and abs(rule.params.get("c", 0.0) - 1.0) < 1e-12


def _exponential_matches(rule: AgingRule, params) -> bool:
    lam = params.get("lambda", 0.1)
    return rule.kind == "exponential" and abs(rule.params.get("lambda", 0.0) - lam) < 1e-12


EXAMPLES: dict[str, NamedExample] = {
    "uniform_linear": NamedExample(
        name="uniform_linear",
        make_rule=lambda p: AgingRule.linear(p.get("c", 1.0)),
        pi=_uniform_pi,
        rate=lambda p: (lambda s: np.ones_like(np.asarray(s, dtype=float))),
        support=lambda p: (lambda s: (0.0, 1.0)),
        alpha_eval=lambda p: (lambda t, x: uniform_linear(t, x, "alpha")),
        alpha_prime_eval=lambda p: (lambda t, x: uniform_linear(t, x, "alpha_prime")),
        xi_eval=lambda p: (lambda t, x: uniform_linear(t, x, "xi")),
        rule_matches=_linear_unit_matches,
    ),
    "triangular_linear": NamedExample(
        name="triangular_linear",
        make_rule=lambda p: AgingRule.linear(p.get("c", 1.0)),
        pi=_tri_pi,
        rate=lambda p: (lambda s: wave_height(s)),
        support=lambda p: (lambda s: (0.0, float(np.max(wave_height(s))))),
        alpha_eval=lambda p: (lambda t, x: triangular_alpha(t, x)),
        alpha_prime_eval=None,
        rule_matches=_linear_unit_matches,
        time_invariant=False,
    ),
    "pareto_linear": NamedExample(
        name="pareto_linear",
        make_rule=lambda p: AgingRule.linear(p.get("c", 1.0)),
        pi=_pareto_pi,
        rate=lambda p: (lambda s: np.ones_like(np.asarray(s, dtype=float))),
        support=lambda p: (lambda s: (1.0, np.inf)),
        alpha_eval=lambda p: (lambda t, x: pareto_linear(t, x, "alpha", p.get("eta", 1.2))),
        alpha_prime_eval=lambda p: (lambda t, x: pareto_linear(t, x, "alpha_prime", p.get("eta", 1.2))),
        rule_matches=_linear_unit_matches,
    ),
    "pareto_exponential": NamedExample(
        name="pareto_exponential",
        make_rule=lambda p: AgingRule.exponential(p.get("lambda", 0.1)),
        pi=_pareto_pi,
        rate=lambda p: (lambda s: np.ones_like(np.asarray(s, dtype=float))),
        support=lambda p: (lambda s: (1.0, np.inf)),
        alpha_eval=lambda p: (lambda t, x: pareto_exponential(
            t, x, "alpha", p.get("eta", 1.2), p.get("lambda", 0.1))),
        alpha_prime_eval=lambda p: (lambda t, x: pareto_exponential(
            t, x, "alpha_prime", p.get("eta", 1.2), p.get("lambda", 0.1))),
        rule_matches=_exponential_matches,
    ),
}


def alpha_path(name: str, params: dict, horizon: float,
               slice_xs=None) -> MeasurePath:
    """Closed-form original-plane arrival path for a named example."""
    ex = EXAMPLES[name]
    if ex.alpha_eval is None:
        raise DomainError(f"{name} has no closed-form arrival surface")
    ev = ex.alpha_eval(params)
    if slice_xs is None:
        slice_xs = np.linspace(-horizon - 2.0, horizon + 6.0, 2001)
    return MeasurePath.analytic(
        lambda t, x: np.asarray(ev(t, x), dtype=float),
        horizon=horizon, slice_xs=slice_xs,
        nondecreasing_in_t=True,
        total_fn=lambda t: float(ev(t, np.asarray(1e12))),
    )


def alpha_prime_path(name: str, params: dict, horizon: float,
                     slice_xs=None) -> MeasurePath:
    """Closed-form prime-plane arrival path for a named example."""
    ex = EXAMPLES[name]
    if ex.alpha_prime_eval is None:
        raise DomainError(f"{name} has no closed-form prime arrival surface")
    ev = ex.alpha_prime_eval(params)
    if slice_xs is None:
        slice_xs = np.linspace(0.0, 2.0 * horizon + 6.0, 2001)
    return MeasurePath.analytic(
        lambda t, x: np.asarray(ev(t, x), dtype=float),
        horizon=horizon, slice_xs=slice_xs,
        nondecreasing_in_t=True,
        total_fn=lambda t: float(ev(t, np.asarray(1e12))),
    )
