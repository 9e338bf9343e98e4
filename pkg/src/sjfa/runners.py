"""Execute validated run configurations and package results as files.

Each runner returns the emitted files as text (the CLI writes them to
disk), a deterministic manifest echoing the resolved configuration, and a
report of the model invariants checked on the produced data. Reruns from a
manifest reproduce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import aging as _aging
from .errors import ConfigError, SjfaError
from .fluid import (FluidSolution, ServiceProfile, arrival_path, overload_guess,
                    solve_fluid, solve_fluid_via_mvsm)
from .measures import MeasurePath, transport
from .oracles import EXAMPLES, alpha_path, alpha_prime_path
from .runconfig import RunConfig
from .simulator import (RNG_SCHEME, SimConfig, check_admission_rule,
                        check_beta_prime_monotone, check_conservation,
                        check_non_idling, check_priority_order,
                        check_work_accounting, convergence_run,
                        default_size_floor, empirical_with_idleness,
                        generate_arrivals, replication_rng, run_sjfa,
                        scale_processes, summarize_distances)
from .skorokhod import mvsm


@dataclass
class Invariant:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)  # numpy bools break JSON encoding

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class RunResult:
    manifest: dict
    files: dict[str, str]
    invariants: list[Invariant] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(inv.passed for inv in self.invariants)

    def response_payload(self) -> dict:
        return {
            "ok": self.ok,
            "manifest": self.manifest,
            "files": self.files,
            "invariants": [inv.as_dict() for inv in self.invariants],
        }


def _manifest(cfg: RunConfig) -> dict:
    return {
        "config": cfg.canonical(),
        "rng": RNG_SCHEME,
        "package": f"sjfa {__version__}",
    }


def _files_with_meta(cfg: RunConfig, files: dict, invariants: list[Invariant]) -> dict:
    manifest = _manifest(cfg)
    out = dict(files)
    out["manifest.json"] = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    out["invariants.json"] = json.dumps([i.as_dict() for i in invariants],
                                        sort_keys=True, indent=2) + "\n"
    return out, manifest


def resolve_alpha(cfg: RunConfig, horizon: float) -> MeasurePath:
    """Closed-form arrival path when the named pairing matches, else quadrature."""
    rule = cfg.aging.to_rule()
    spec = cfg.arrival
    if spec.example is not None:
        ex = EXAMPLES[spec.example]
        params = spec.params()
        if ex.alpha_eval is not None and ex.rule_matches(rule, params):
            return alpha_path(spec.example, params, horizon)
    return arrival_path(spec.to_arrival(), rule, horizon)


def resolve_alpha_prime(cfg: RunConfig, horizon: float) -> MeasurePath:
    rule = cfg.aging.to_rule()
    spec = cfg.arrival
    if spec.example is not None:
        ex = EXAMPLES[spec.example]
        params = spec.params()
        if ex.alpha_prime_eval is not None and ex.rule_matches(rule, params):
            return alpha_prime_path(spec.example, params, horizon)
    out = transport(resolve_alpha(cfg, horizon), rule, "forward")
    out.nondecreasing_in_t = True
    return out


def _fluid_invariants(cfg: RunConfig, sol: FluidSolution, alpha: MeasurePath,
                      mu: ServiceProfile, rule) -> list[Invariant]:
    inv = []
    tg, xg = sol.tgrid, sol.xgrid

    # conservation at every output node: queued = arrived - capacity + pushed
    a_nodes = np.stack([np.atleast_1d(alpha.cumulative(float(t), xg)) for t in tg])
    resid = sol.xi - (a_nodes - sol.mu_values[:, None]
                      + sol.beta_upper + sol.iota[:, None])
    worst = float(np.max(np.abs(resid)))
    inv.append(Invariant("fluid.conservation", worst <= 1e-9,
                         f"max residual {worst:.3e} (tol 1e-9)"))

    # budget: completed plus idleness equals capacity (via total mass)
    xi_tot = np.array([
        sol.total_mass[i] - sol.mu_values[i] + sol.iota[i] for i in range(len(tg))
    ])
    served = sol.mu_values - sol.iota
    top = sol.total_mass - np.maximum(xi_tot, 0.0)
    gap = float(np.max(np.abs(top - served)))
    inv.append(Invariant("fluid.budget", gap <= 1e-9,
                         f"max |completed+idle-capacity| {gap:.3e} (tol 1e-9)"))

    # x-monotonicity of the queued surface
    mono = float(np.min(np.diff(sol.xi, axis=1), initial=0.0))
    inv.append(Invariant("fluid.xi_monotone_x", mono >= -1e-9,
                         f"min x-increment {mono:.3e}"))

    iota_mono = float(np.min(np.diff(sol.iota), initial=0.0))
    inv.append(Invariant("fluid.iota_monotone", iota_mono >= -1e-12,
                         f"min idleness increment {iota_mono:.3e}"))

    nonneg = float(min(sol.xi.min(initial=0.0), sol.beta_upper.min(initial=0.0),
                       sol.iota.min(initial=0.0)))
    inv.append(Invariant("fluid.nonnegative", nonneg >= -1e-12,
                         f"min value {nonneg:.3e}"))

    # prime-plane reflection conditions on the level lattice
    tmax = float(tg[-1])
    sgrid = np.linspace(0.0, tmax, min(cfg.grid.s_points, 1001))
    hi = float(np.max(np.atleast_1d(_aging.to_prime_x(rule, xg, tmax)))) + 1.0
    levels = np.linspace(0.0, max(hi, 1.0), cfg.grid.levels)
    ap = resolve_alpha_prime(cfg, horizon=tmax)
    lattice = mvsm(ap, mu.cumulative, levels, sgrid)
    dt = float(sgrid[1] - sgrid[0])
    comp_tol = dt * mu.rate_max
    push = lattice.beta_upper + lattice.iota.values[:, None]
    increments = np.diff(push, axis=0)
    active = increments > comp_tol
    comp_worst = float(np.max(np.where(active, lattice.xi[1:], 0.0), initial=0.0))
    inv.append(Invariant("mvsp.complementarity", comp_worst <= comp_tol + 1e-12,
                         f"max queued mass at pushing nodes {comp_worst:.3e} "
                         f"(tol {comp_tol:.3e})"))
    level_mono = float(np.min(np.diff(lattice.xi, axis=1), initial=0.0))
    inv.append(Invariant("mvsp.level_monotone", level_mono >= -1e-9,
                         f"min level increment of queued mass {level_mono:.3e}"))

    # route equivalence: direct per-node reflection vs lattice interpolation
    via = solve_fluid_via_mvsm(alpha, mu, rule, tg, xg, levels=levels,
                               s_points=min(cfg.grid.s_points, 1001))
    grid_tol = float(levels[1] - levels[0]) + comp_tol
    route_gap = float(np.max(np.abs(via.xi - sol.xi)))
    inv.append(Invariant("fluid.route_equivalence", route_gap <= 10.0 * grid_tol,
                         f"max |direct-lattice| {route_gap:.3e} (tol {10*grid_tol:.3e})"))
    return inv


def run_fluid(cfg: RunConfig) -> RunResult:
    if cfg.mode != "fluid":
        raise ConfigError(f'run_fluid got mode "{cfg.mode}"')
    rule = cfg.aging.to_rule()
    mu = cfg.service.to_profile()
    tg = cfg.grid.t.grid()
    xg = cfg.grid.x.grid()
    if tg[0] < 0:
        raise ConfigError("fluid t grid must start at >= 0")
    horizon = float(tg[-1])
    alpha = resolve_alpha(cfg, horizon)
    sol = solve_fluid(alpha, mu, rule, tg, xg, s_points=cfg.grid.s_points)
    invariants = _fluid_invariants(cfg, sol, alpha, mu, rule)
    files, manifest = _files_with_meta(cfg, {"fluid.csv": sol.to_csv()}, invariants)
    return RunResult(manifest=manifest, files=files, invariants=invariants)


_PRIORITY_CHECK_CAP = 6000  # full pairwise check above this many jobs is too slow


def _simulate_invariants(cfg, log, mu, rule, tg, xg) -> list[Invariant]:
    inv = []
    n = log.tau.size
    cons = check_conservation(log, rule, tg, xg)
    inv.append(Invariant("sim.conservation", cons <= 1e-12,
                         f"max |queued-(arrived-completed)| {cons:.3e}"))
    if n <= _PRIORITY_CHECK_CAP:
        ok = check_priority_order(log)
        inv.append(Invariant("sim.priority_order", ok,
                             "completion order respects prime priority among co-waiting jobs"
                             if ok else "a lower-priority job departed first"))
    ok = check_admission_rule(log)
    inv.append(Invariant("sim.complementarity", ok,
                         "every admission takes the smallest waiting prime priority"
                         if ok else "an admission skipped a higher-priority waiter"))
    ok = check_non_idling(log)
    inv.append(Invariant("sim.non_idling", ok,
                         "server idles only with no job waiting" if ok
                         else "server idled while work waited"))
    levels = np.linspace(0.0, float(log.prime_priority.max(initial=1.0)) + 1.0, 33)
    ok = check_beta_prime_monotone(log, tg, levels)
    inv.append(Invariant("sim.beta_prime_monotone", ok,
                         "completed-above mass nondecreasing at all probed levels"
                         if ok else "completed-above mass decreased"))
    acct = check_work_accounting(log, mu, tg)
    inv.append(Invariant("sim.work_accounting", acct <= 1e-9,
                         f"max effort bookkeeping gap {acct:.3e} (tol 1e-9)"))
    return inv


def run_simulate(cfg: RunConfig) -> RunResult:
    if cfg.mode != "simulate":
        raise ConfigError(f'run_simulate got mode "{cfg.mode}"')
    rule = cfg.aging.to_rule()
    mu = cfg.service.to_profile()
    sim = cfg.simulate
    horizon = sim.horizon
    trace = None
    arrival = None
    if sim.trace is not None:
        trace = np.array([[row.tau, row.size] for row in sim.trace])
    else:
        arrival = cfg.arrival.to_arrival()
    sim_cfg = SimConfig(n_scale=sim.n_scale, service=mu, rule=rule, horizon=horizon,
                        seed=cfg.seed, arrival=arrival, trace=trace,
                        size_floor=sim.size_floor)
    rng = replication_rng(cfg.seed, 0, 0)
    taus, sizes = generate_arrivals(sim_cfg, rng)
    log = run_sjfa(taus, sizes, mu, rule, horizon, sim.n_scale)

    tg = cfg.grid.t.grid()
    tg = tg[(tg >= 0) & (tg <= horizon * (1 + 1e-12))]
    if tg.size < 2:
        raise ConfigError("simulate needs a t grid inside [0, horizon]")
    xg = cfg.grid.x.grid()
    alpha, beta, xi, iota = empirical_with_idleness(log, mu, rule, tg)
    alpha_s, beta_s, xi_s = scale_processes((alpha, beta, xi), sim.n_scale)

    lines = ["t,x,alpha_bar,beta_bar,xi_bar,iota_bar"]
    for i, t in enumerate(tg):
        av = np.atleast_1d(alpha_s.cumulative(float(t), xg))
        bv = np.atleast_1d(beta_s.cumulative(float(t), xg))
        xv = np.atleast_1d(xi_s.cumulative(float(t), xg))
        io = iota.values[i]
        for j, x in enumerate(xg):
            lines.append(f"{t:.17g},{x:.17g},{av[j]:.17g},{bv[j]:.17g},"
                         f"{xv[j]:.17g},{io:.17g}")
    empirical_csv = "\n".join(lines) + "\n"

    invariants = _simulate_invariants(cfg, log, mu, rule, tg, xg)
    files, manifest = _files_with_meta(
        cfg, {"events.csv": log.to_csv(), "empirical.csv": empirical_csv}, invariants)
    return RunResult(manifest=manifest, files=files, invariants=invariants)


def run_compare(cfg: RunConfig) -> RunResult:
    if cfg.mode != "compare":
        raise ConfigError(f'run_compare got mode "{cfg.mode}"')
    rule = cfg.aging.to_rule()
    mu = cfg.service.to_profile()
    comp = cfg.compare
    horizon = comp.horizon
    arrival = cfg.arrival.to_arrival()

    tg = cfg.grid.t.grid()
    tg = tg[(tg > 0) & (tg <= horizon * (1 + 1e-12))]
    if tg.size < 2:
        raise ConfigError("compare needs probe times inside (0, horizon]")
    xg = cfg.grid.x.grid()
    alpha = resolve_alpha(cfg, horizon)
    fluid_ref = solve_fluid(alpha, mu, rule, tg, xg, s_points=cfg.grid.s_points)

    rows = []
    logs_meta = []
    items = [(ni, n, r) for ni, n in enumerate(comp.n_list)
             for r in range(comp.replications)]

    def work(item):
        ni, n, r = item
        row, log = convergence_run(arrival, mu, rule, horizon, n, fluid_ref, tg,
                                   cfg.seed, n_index=ni, replication=r,
                                   size_floor=comp.size_floor)
        iota_max = float(np.max(np.atleast_1d(log.idleness(mu, tg))))
        return row, {"n": n, "rep": r, "jobs": int(log.tau.size),
                     "max_size": log.max_size, "iota_max": iota_max}

    if comp.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=comp.threads) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(item) for item in items]
    rows = [r for r, _ in results]
    logs_meta = [m for _, m in results]

    lines = ["N,replication,sup_levy_xi,sup_levy_beta,iota_gap"]
    for row in rows:
        lines.append(f"{row.n_scale},{row.replication},{row.sup_levy_xi:.17g},"
                     f"{row.sup_levy_beta:.17g},{row.iota_gap:.17g}")
    distances_csv = "\n".join(lines) + "\n"

    summary = summarize_distances(rows)
    slines = ["N,mean_xi,max_xi,mean_beta,max_beta,mean_iota_gap,max_iota_gap"]
    for s in summary:
        slines.append(f"{s['n_scale']},{s['mean_xi']:.17g},{s['max_xi']:.17g},"
                      f"{s['mean_beta']:.17g},{s['max_beta']:.17g},"
                      f"{s['mean_iota_gap']:.17g},{s['max_iota_gap']:.17g}")
    summary_csv = "\n".join(slines) + "\n"

    invariants = []
    dt = float(tg[1] - tg[0])
    worst_excess = -np.inf
    for m in logs_meta:
        bound = m["max_size"] / m["n"] + dt
        worst_excess = max(worst_excess, m["iota_max"] - bound)
    invariants.append(Invariant(
        "compare.iota_bound", worst_excess <= 1e-12,
        f"max scaled idleness excess over max-size/N + dt: {worst_excess:.3e}"))
    means = [s["mean_xi"] for s in summary]
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    invariants.append(Invariant(
        "compare.mean_xi_decreasing", decreasing or len(means) < 2,
        "mean queued-mass distance decreases with N: " +
        ", ".join(f"{m:.4f}" for m in means)))

    files, manifest = _files_with_meta(
        cfg, {"distances.csv": distances_csv, "summary.csv": summary_csv,
              "fluid.csv": fluid_ref.to_csv()}, invariants)
    return RunResult(manifest=manifest, files=files, invariants=invariants)


RUNNERS = {"fluid": run_fluid, "simulate": run_simulate, "compare": run_compare}


def run(cfg: RunConfig) -> RunResult:
    try:
        return RUNNERS[cfg.mode](cfg)
    except SjfaError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
