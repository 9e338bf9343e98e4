import numpy as np
import pytest

from reference_sjf import sjf_completion_order
from sjfa import simulator
from sjfa.aging import AgingRule
from sjfa.fluid import ServiceProfile
from sjfa.runconfig import ArrivalSpec
from sjfa.simulator import (SimConfig, check_admission_rule,
                            check_beta_prime_monotone, check_conservation,
                            check_non_idling, check_priority_order,
                            check_work_accounting, empirical_processes,
                            empirical_with_idleness, generate_arrivals,
                            replication_rng, run_sjfa, scale_processes)

LINEAR = AgingRule.linear(1.0)
UNIT_MU = ServiceProfile.constant(1.0)


def uniform_arrival():
    return ArrivalSpec(example="uniform_linear").to_arrival()


def random_instance(rng, n_lo=30, n_hi=120):
    n = int(rng.integers(n_lo, n_hi))
    taus = np.sort(rng.uniform(0.0, 5.0, n))
    sizes = rng.uniform(0.2, 2.0, n)
    return taus, sizes


class TestRunSjfa:
    def test_single_job(self):
        log = run_sjfa(np.array([0.0]), np.array([1.0]), UNIT_MU, LINEAR, 2.0)
        assert log.theta[0] == pytest.approx(1.0)
        assert log.admit[0] == 0.0

    def test_aging_reverses_sjf_order(self):
        # a mid-size early job overtakes a smaller later one through aging
        taus = np.array([0.0, 1.0, 2.0])
        sizes = np.array([10.0, 5.0, 4.5])
        log = run_sjfa(taus, sizes, UNIT_MU, LINEAR, 100.0)
        np.testing.assert_allclose(log.prime_priority, [10.0, 6.0, 6.5])
        assert np.argsort(log.theta).tolist() == [0, 1, 2]
        assert log.theta.tolist() == [10.0, 15.0, 19.5]
        # plain SJF would have run the third job before the second
        ref = sjf_completion_order(taus.tolist(), sizes.tolist())
        assert ref == [0, 2, 1]

    def test_horizon_cutoff_marks_unfinished(self):
        log = run_sjfa(np.array([0.0, 0.5]), np.array([2.0, 1.0]), UNIT_MU,
                       LINEAR, 1.5)
        assert np.isnan(log.theta).tolist() == [True, True]
        assert log.admit[0] == 0.0 and np.isnan(log.admit[1])

    def test_arrival_at_departure_joins_first(self):
        # third job lands exactly when the first departs and has top priority
        taus = np.array([0.0, 0.1, 1.0])
        sizes = np.array([1.0, 5.0, 1.2])
        log = run_sjfa(taus, sizes, UNIT_MU, LINEAR, 50.0)
        # prime priorities: 1.0, 5.1, 2.2 -> admission order 0, 2, 1
        assert np.argsort(log.admit).tolist() == [0, 2, 1]

    def test_unsorted_trace_rejected(self):
        with pytest.raises(ValueError):
            run_sjfa(np.array([1.0, 0.0]), np.array([1.0, 1.0]), UNIT_MU,
                     LINEAR, 5.0)

    def test_no_aging_matches_sjf_reference(self, rng):
        none = AgingRule.no_aging()
        for _ in range(25):
            taus, sizes = random_instance(rng)
            log = run_sjfa(taus, sizes, UNIT_MU, none, 1e9)
            got = np.argsort(log.theta).tolist()
            want = sjf_completion_order(taus.tolist(), sizes.tolist())
            assert got == want


class TestPolicyInvariants:
    @pytest.mark.parametrize("rule", [
        AgingRule.linear(0.5), AgingRule.linear(2.0),
        AgingRule.exponential(0.1), AgingRule.exponential(0.5),
    ], ids=["lin.5", "lin2", "exp.1", "exp.5"])
    def test_random_instances(self, rule, rng):
        for _ in range(8):
            taus, sizes = random_instance(rng)
            mu = ServiceProfile.constant(float(rng.choice([0.5, 1.0, 2.0])))
            horizon = float(rng.uniform(4.0, 30.0))
            log = run_sjfa(taus, sizes, mu, rule, horizon)
            assert check_priority_order(log)
            assert check_admission_rule(log)
            assert check_non_idling(log)
            tg = np.linspace(0.1, horizon, 7)
            levels = np.linspace(0.0, float(log.prime_priority.max()) + 1, 9)
            assert check_beta_prime_monotone(log, tg, levels)
            assert check_conservation(log, rule, tg,
                                      np.linspace(-3, 3, 13)) == 0.0
            assert check_work_accounting(log, mu, tg) <= 1e-9

    def test_work_accounting_with_table_rate(self, rng):
        mu = ServiceProfile.from_table([0.0, 2.0, 4.0], [0.5, 1.5, 1.0])
        taus, sizes = random_instance(rng)
        log = run_sjfa(taus, sizes, mu, LINEAR, 12.0)
        assert check_work_accounting(log, mu, np.linspace(0.1, 12.0, 13)) <= 1e-9


class TestEmpiricalProcesses:
    def test_single_job_slices(self):
        log = run_sjfa(np.array([0.0]), np.array([1.0]), UNIT_MU, LINEAR, 2.0)
        alpha, beta, xi, _ = empirical_processes(log, LINEAR, np.array([0.5, 1.0]))
        assert xi.slice_at(0.5).total_mass() == 1.0
        assert xi.slice_at(1.0).total_mass() == 0.0
        assert alpha.cumulative(0.5, 0.49) == 0.0
        assert alpha.cumulative(0.5, 0.5) == 1.0

    def test_conservation_exact(self, rng):
        taus, sizes = random_instance(rng)
        log = run_sjfa(taus, sizes, UNIT_MU, LINEAR, 8.0)
        tg = np.linspace(0.2, 8.0, 9)
        xs = np.linspace(-6, 4, 31)
        assert check_conservation(log, LINEAR, tg, xs) == 0.0

    def test_departed_atoms_keep_aging(self):
        log = run_sjfa(np.array([0.0]), np.array([1.0]), UNIT_MU, LINEAR, 3.0)
        _, beta, _, _ = empirical_processes(log, LINEAR, np.array([2.0]))
        sl = beta.slice_at(2.0)
        assert sl.cumulative(-1.0) == 1.0   # location 1 - 2 = -1
        assert sl.cumulative(-1.01) == 0.0

    def test_idleness_trace(self):
        # idle before the arrival and again after the queue drains at t=2
        log = run_sjfa(np.array([1.0]), np.array([1.0]), UNIT_MU, LINEAR, 3.0)
        _, _, _, iota = empirical_with_idleness(log, UNIT_MU, LINEAR,
                                                np.array([0.5, 1.0, 1.5, 2.5]))
        np.testing.assert_allclose(iota.values, [0.5, 1.0, 1.0, 1.5])

    def test_scale_identity_and_division(self):
        log = run_sjfa(np.array([0.0]), np.array([1.0]), UNIT_MU, LINEAR, 2.0)
        procs = empirical_processes(log, LINEAR, np.array([0.5]))[:3]
        same = scale_processes(procs, 1)
        assert same[0].slice_at(0.5).total_mass() == 1.0
        halved = scale_processes(procs, 2)
        assert halved[0].slice_at(0.5).total_mass() == 0.5


class TestGeneration:
    def test_trace_passthrough(self):
        cfg = SimConfig(n_scale=1, service=UNIT_MU, rule=LINEAR, horizon=2.0,
                        trace=np.array([[0.0, 1.0]]))
        taus, sizes = generate_arrivals(cfg, replication_rng(0))
        assert taus.tolist() == [0.0] and sizes.tolist() == [1.0]

    def test_deterministic_given_seed(self):
        cfg = SimConfig(n_scale=50, service=UNIT_MU, rule=LINEAR, horizon=2.0,
                        arrival=uniform_arrival(), seed=11)
        a1 = generate_arrivals(cfg, replication_rng(11, 0, 0))
        a2 = generate_arrivals(cfg, replication_rng(11, 0, 0))
        np.testing.assert_array_equal(a1[0], a2[0])
        np.testing.assert_array_equal(a1[1], a2[1])
        b = generate_arrivals(cfg, replication_rng(12, 0, 0))
        assert a1[0].size != b[0].size or not np.array_equal(a1[0], b[0])

    def test_total_work_matches_fluid_mass(self):
        # scaled arrived work approaches t with Monte-Carlo error ~ sqrt(t/2N)
        n, horizon = 1000, 2.0
        cfg = SimConfig(n_scale=n, service=UNIT_MU, rule=LINEAR, horizon=horizon,
                        arrival=uniform_arrival(), seed=42)
        taus, sizes = generate_arrivals(cfg, replication_rng(42, 0, 0))
        scaled_work = sizes.sum() / n
        stderr = np.sqrt(0.5 * horizon / n)
        assert abs(scaled_work - horizon) <= 3 * stderr + 2 * 0.1 / np.sqrt(n)

    def test_sizes_respect_floor_and_support(self):
        cfg = SimConfig(n_scale=200, service=UNIT_MU, rule=LINEAR, horizon=1.0,
                        arrival=uniform_arrival(), seed=5, size_floor=0.02)
        _, sizes = generate_arrivals(cfg, replication_rng(5, 0, 0))
        assert sizes.min() >= 0.02
        assert sizes.max() <= 1.0

    def test_pareto_sizes_start_at_scale(self):
        arr = ArrivalSpec(example="pareto_linear", eta=1.2).to_arrival()
        cfg = SimConfig(n_scale=100, service=UNIT_MU, rule=LINEAR, horizon=1.0,
                        arrival=arr, seed=3)
        _, sizes = generate_arrivals(cfg, replication_rng(3, 0, 0))
        assert sizes.min() >= 1.0

    def test_event_csv_round_trip(self):
        log = run_sjfa(np.array([0.0, 0.4]), np.array([1.0, 0.7]), UNIT_MU,
                       LINEAR, 1.2)
        text = log.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "i,tau,size,prime_priority,theta"
        assert len(lines) == 3
        assert lines[1].endswith(",1")  # first job departs at t=1
        assert lines[2].endswith(",")   # second unfinished at the horizon


class TestPrimePlaneMonotonicity:
    def test_beta_prime_structural(self, rng):
        taus, sizes = random_instance(rng)
        log = run_sjfa(taus, sizes, UNIT_MU, AgingRule.exponential(0.3), 20.0)
        tg = np.linspace(0.5, 20.0, 14)
        levels = np.linspace(0.0, float(log.prime_priority.max()) + 1, 17)
        assert check_beta_prime_monotone(log, tg, levels)

    def test_transported_arrivals_nondecreasing(self, rng):
        taus, sizes = random_instance(rng)
        log = run_sjfa(taus, sizes, UNIT_MU, LINEAR, 10.0)
        tg = np.linspace(0.5, 10.0, 9)
        alpha, _, _, _ = empirical_processes(log, LINEAR, tg)
        from sjfa.measures import probe_nondecreasing, transport

        prime = transport(alpha, LINEAR, "forward")
        assert probe_nondecreasing(prime, tg, np.linspace(0, 12, 25))
