import logging
import math
import pytest
from dislocation import conservative_binary, discrete, dissipative_pair
from exponent import build_context
from fragSim import stopping_line
from observables import identity, indicator, one
from replicaPool import ReplicaPool
from runConfig import dyadic_schedule
from slln import (
    DegenerateRegression,
    SllnRecord,
    SllnTrajectory,
    absolute_pairing,
    check_schedule,
    empirical_pairing,
    expectation_form_check,
    many_to_one_check,
    martingale_mass,
    refinement_regression,
    slln_experiment,
    summarize,
)

MASTER_SEED = 20240101
Z_LIMIT = 4.0
TOL = 1e-12
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def random_dissipative():
    return discrete([(1.0, (0.5, 0.25)), (1.0, (0.6, 0.2))])


def golden_pair():
    return discrete([(1.0, (0.5, 0.5**GOLDEN))])


class TestPairings:
    def test_dyadic_hand_values(self):
        line = stopping_line(conservative_binary(0.5), 0.3, seed=1)
        assert empirical_pairing(line, 0.0, one()) == pytest.approx(1.0, abs=TOL)
        assert empirical_pairing(line, 0.0, identity()) == pytest.approx(4 * 0.25 * 0.25 / 0.3, abs=TOL)
        assert empirical_pairing(line, 0.0, indicator(0.8, 1.0)) == pytest.approx(1.0, abs=TOL)
        assert empirical_pairing(line, 0.0, indicator(0.0, 0.8)) == 0.0
        assert absolute_pairing(line, 0.0, identity()) == pytest.approx(0.25, abs=TOL)

    def test_conservative_mass(self):
        line = stopping_line(conservative_binary(0.7), 1e-3, seed=1)
        assert martingale_mass(line, 0.0) == pytest.approx(1.0, abs=1e-9)

    def test_deterministic_dissipative_mass(self):
        # every split of (1/2, 1/4) keeps sum s_i^(1+p*) = 1
        ctx = build_context(dissipative_pair())
        line = stopping_line(ctx.measure, 1e-3, seed=1)
        assert martingale_mass(line, ctx.p_star) == pytest.approx(1.0, abs=1e-9)

    def test_monotone_and_linear(self):
        ctx = build_context(random_dissipative())
        line = stopping_line(ctx.measure, 1e-3, seed=2)
        low, high = indicator(0.0, 0.5, right_open=True), indicator(0.5, 1.0)
        assert empirical_pairing(line, ctx.p_star, low) <= empirical_pairing(line, ctx.p_star, one())
        total = empirical_pairing(line, ctx.p_star, low) + empirical_pairing(line, ctx.p_star, high)
        assert total == pytest.approx(empirical_pairing(line, ctx.p_star, one()), abs=1e-12)
        combined = low + identity().scaled(2.0)
        assert empirical_pairing(line, ctx.p_star, combined) == pytest.approx(
            empirical_pairing(line, ctx.p_star, low) + 2.0 * empirical_pairing(line, ctx.p_star, identity()), abs=1e-12
        )
        assert empirical_pairing(line, ctx.p_star, one()) == martingale_mass(line, ctx.p_star)


class TestManyToOne:
    def test_dyadic_exact(self):
        ctx = build_context(conservative_binary(0.5))
        for f in (one(), indicator(0.0, 0.26)):
            result = many_to_one_check(ctx, 0.3, f, 20, MASTER_SEED)
            assert result.lhs == pytest.approx(1.0, abs=TOL)
            assert result.rhs == pytest.approx(1.0, abs=TOL)
            assert result.z_score == 0.0
            assert result.passed()

    @pytest.mark.parametrize("f", [identity(), indicator(0.0, 0.02)])
    def test_random_measure(self, f):
        ctx = build_context(random_dissipative())
        result = many_to_one_check(ctx, 0.05, f, 400, MASTER_SEED)
        assert abs(result.z_score) < Z_LIMIT
        assert result.replicas == 400

    def test_expectation_form(self):
        ctx = build_context(random_dissipative())
        result = expectation_form_check(ctx, 0.05, identity(), 400, MASTER_SEED)
        assert abs(result.z_score) < Z_LIMIT

    def test_pool_does_not_change_result(self):
        ctx = build_context(random_dissipative())
        serial = many_to_one_check(ctx, 0.05, identity(), 50, MASTER_SEED, ReplicaPool(1))
        threaded = many_to_one_check(ctx, 0.05, identity(), 50, MASTER_SEED, ReplicaPool(4))
        assert serial == threaded


class TestSchedule:
    @pytest.mark.parametrize("schedule", [[], [0.1, 0.1], [0.1, 0.2], [0.1, -0.01]])
    def test_rejects(self, schedule):
        with pytest.raises(ValueError):
            check_schedule(schedule)

    def test_accepts(self):
        check_schedule(dyadic_schedule(2, 6))


class TestExperiment:
    def test_records(self):
        ctx = build_context(random_dissipative())
        schedule = [0.1, 0.01, 0.001]
        trajectories = slln_experiment(ctx, [one(), identity()], schedule, 3, MASTER_SEED)
        assert [t.replica for t in trajectories] == [0, 1, 2]
        for t in trajectories:
            assert len(t.records) == 6
            assert [r.eta for r in t.records] == [0.1, 0.1, 0.01, 0.01, 0.001, 0.001]
            unit = t.final("one")
            assert unit.pairing == unit.mass
            assert unit.ratio == pytest.approx(unit.mass, abs=1e-9)
            counts = [r.fragment_count for r in t.records]
            assert counts == sorted(counts)

    def test_replica_subset(self):
        ctx = build_context(random_dissipative())
        full = slln_experiment(ctx, [one(), identity()], [0.1, 0.01], 5, MASTER_SEED)
        subset = slln_experiment(ctx, [one(), identity()], [0.1, 0.01], 5, MASTER_SEED, replica_ids=[1, 3])
        assert subset == [full[1], full[3]]

    def test_threads(self):
        ctx = build_context(random_dissipative())
        serial = slln_experiment(ctx, [identity()], [0.1, 0.01], 6, MASTER_SEED, pool=ReplicaPool(1))
        threaded = slln_experiment(ctx, [identity()], [0.1, 0.01], 6, MASTER_SEED, pool=ReplicaPool(3))
        assert serial == threaded

    def test_lattice_warning(self, caplog):
        ctx = build_context(conservative_binary(0.5))
        with caplog.at_level(logging.WARNING, logger="FSLLN"):
            slln_experiment(ctx, [one()], [0.3, 0.2], 1, MASTER_SEED)
        assert any("lattice" in r.getMessage() for r in caplog.records)

    def test_undefined_ratio(self):
        ctx = build_context(conservative_binary(0.7))
        # rho puts no mass below the smallest term 0.3
        trajectories = slln_experiment(ctx, [indicator(0.0, 0.1)], [0.1, 0.01], 2, MASTER_SEED)
        assert all(math.isnan(r.ratio) for t in trajectories for r in t.records)
        assert summarize(trajectories, True) == []

    def test_summary(self):
        ctx = build_context(conservative_binary(0.7))
        trajectories = slln_experiment(ctx, [one(), identity()], [0.1, 0.01], 4, MASTER_SEED)
        summaries = summarize(trajectories, True)
        assert [s.f_id for s in summaries] == ["one", "identity"]
        assert summaries[0].median_ratio_error == pytest.approx(0.0, abs=1e-9)
        assert summaries[0].passed()
        assert summaries[0].eta == 0.01

    def test_dissipative_lattice_indicator(self):
        # on (1/2, 1/4) every ratio X / eta is exactly 1/2 or 1/4 for a dyadic eta
        ctx = build_context(dissipative_pair())
        trajectories = slln_experiment(ctx, [indicator(0.5, 1.0)], dyadic_schedule(4, 16), 2, MASTER_SEED)
        for t in trajectories:
            assert len(t.records) == 13
            for rec in t.records:
                assert rec.pairing > 0.7
                assert rec.mass == pytest.approx(1.0, abs=1e-9)
                assert rec.ratio == pytest.approx(1.0, abs=0.01)
            assert t.final("indicator[0.5,1.0]").ratio == pytest.approx(1.0, abs=1e-4)
        (summary,) = summarize(trajectories, False)
        assert summary.median_ratio_mass_gap < 1e-4
        assert summary.monotone_tail
        assert summary.passed()

    @pytest.mark.slow
    def test_converges(self):
        ctx = build_context(golden_pair())
        trajectories = slln_experiment(ctx, [one(), identity(), indicator(0.5, 1.0)], dyadic_schedule(4, 16), 20, MASTER_SEED)
        assert all(s.passed(0.05) for s in summarize(trajectories, False))


class TestRegression:
    def test_martingale_slope(self):
        ctx = build_context(random_dissipative())
        result = refinement_regression(ctx, 0.1, 0.01, 300, MASTER_SEED)
        assert abs(result.slope - 1.0) < 5.0 * result.slope_stderr
        assert result.replicas == 300

    def test_degenerate(self):
        with pytest.raises(DegenerateRegression):
            refinement_regression(build_context(conservative_binary(0.5)), 0.3, 0.1, 10, MASTER_SEED)


def scripted(errors_by_replica, schedule):
    return [SllnTrajectory(r, r, schedule, [SllnRecord(e, "f", 1.0 + err, 1.0, 1.0, 1.0 + err, 10) for e, err in zip(schedule, errors)]) for r, errors in enumerate(errors_by_replica)]


class TestSummaryTail:
    SCHEDULE = dyadic_schedule(4, 8)

    def test_decreasing_medians(self):
        trajectories = scripted([[0.05, 0.04, 0.03, 0.02, 0.01], [0.06, 0.05, 0.04, 0.03, 0.02], [0.2, 0.1, 0.0, 0.0, 0.0]], self.SCHEDULE)
        (summary,) = summarize(trajectories, True)
        assert summary.median_by_eta == pytest.approx([0.06, 0.05, 0.03, 0.02, 0.01], abs=1e-12)
        assert summary.monotone_tail
        assert summary.passed()

    def test_rising_median_fails_conservative(self):
        trajectories = scripted([[0.05, 0.03, 0.01, 0.02, 0.005]], self.SCHEDULE)
        (summary,) = summarize(trajectories, True)
        assert summary.median_ratio_error == pytest.approx(0.005, abs=1e-12)
        assert not summary.monotone_tail
        assert not summary.passed()

    def test_only_last_four_points_count(self):
        trajectories = scripted([[0.01, 0.04, 0.03, 0.02, 0.01]], self.SCHEDULE)
        (summary,) = summarize(trajectories, True)
        assert summary.monotone_tail

    def test_dissipative_gates_on_final_gap_only(self):
        trajectories = scripted([[0.05, 0.03, 0.01, 0.02, 0.005]], self.SCHEDULE)
        (summary,) = summarize(trajectories, False)
        assert not summary.monotone_tail
        assert summary.passed()
