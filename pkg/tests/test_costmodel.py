from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascadekit import (
    GpuPriceList,
    ModelProfile,
    TierCost,
    ValidationError,
    aggregate,
    builtin_fixture_path,
    comm_latency,
    gpu_dollar_total,
    load_tier_metrics,
    make_delay_profile,
    pareto_frontier,
    tier_cost,
)
from cascadekit.costmodel import check_cost_ordering

CIFAR_FRACTIONS = (0.73, 0.09, 0.08, 0.10)
CIFAR_PRICES = (0.50, 0.80, 1.29, 2.49)
CIFAR_LATENCIES = (3.11, 3.79, 7.76, 9.07)


class TestTierCost:
    def test_parallel_takes_least_efficient_model(self, prices):
        profiles = [ModelProfile("a", 1e6, 3.0, "V100"), ModelProfile("b", 2e6, 5.0, "V100")]
        cost = tier_cost(profiles, prices, "parallel")
        assert cost.latency_ms == 5.0
        assert cost.flops == 2e6
        assert cost.dollars_per_hour == 0.50

    def test_sequential_sums(self, prices):
        profiles = [ModelProfile("a", 1e6, 3.0, "V100"), ModelProfile("b", 2e6, 5.0, "V100")]
        cost = tier_cost(profiles, prices, "sequential")
        assert cost.latency_ms == 8.0
        assert cost.flops == 3e6

    def test_mixed_gpu_tiers_rejected(self, prices):
        profiles = [ModelProfile("a", 1e6, 3.0, "V100"), ModelProfile("b", 2e6, 5.0, "A100")]
        with pytest.raises(ValidationError, match="one GPU type"):
            tier_cost(profiles, prices, "parallel")

    def test_parallel_le_sequential_with_single_model_equality(self, prices):
        rng = random.Random(3)
        for _ in range(50):
            k = rng.randrange(1, 5)
            profiles = [
                ModelProfile(f"m{j}", rng.uniform(1, 9) * 1e6, rng.uniform(1, 9), "V100")
                for j in range(k)
            ]
            par = tier_cost(profiles, prices, "parallel")
            seq = tier_cost(profiles, prices, "sequential")
            assert par.flops <= seq.flops
            assert par.latency_ms <= seq.latency_ms
            assert par.dollars_per_hour == seq.dollars_per_hour
            if k == 1:
                assert par == seq
            else:
                assert par.flops < seq.flops and par.latency_ms < seq.latency_ms

    def test_cost_ordering_warns_on_inversion(self):
        inverted = [TierCost(2e6, 2.0, 0.8), TierCost(1e6, 1.0, 0.5)]
        with pytest.warns(UserWarning, match="decreases with depth"):
            gamma = check_cost_ordering(inverted)
        assert gamma == pytest.approx(2.0)

    def test_cost_ordering_quiet_when_nondecreasing(self, recwarn):
        ordered = [TierCost(1e6, 1.0, 0.5), TierCost(2e6, 2.0, 0.8)]
        gamma = check_cost_ordering(ordered)
        assert gamma == pytest.approx(0.5)
        assert not recwarn.list


class TestAggregate:
    def test_cifar_dollar_terms_and_total(self):
        costs = [TierCost(1.0, 1.0, p) for p in CIFAR_PRICES]
        report = aggregate(CIFAR_FRACTIONS, costs, "exit_tier")
        terms = [f * c.dollars_per_hour for f, c in report.per_tier]
        for term, expected in zip(terms, (0.365, 0.072, 0.1032, 0.249)):
            assert term == pytest.approx(expected, abs=1e-9)
        assert report.coe_row.dollars_per_hour == pytest.approx(0.79, abs=0.01)

    def test_cifar_latency_row(self):
        costs = [TierCost(1.0, lat, 1.0) for lat in CIFAR_LATENCIES]
        report = aggregate(CIFAR_FRACTIONS, costs, "exit_tier")
        assert report.coe_row.latency_ms == pytest.approx(4.14, abs=0.01)
        assert report.coe_row.latency_ms == pytest.approx(4.13, abs=0.05)

    def test_single_tier_degenerate(self):
        cost = TierCost(7.0, 3.0, 0.5)
        for mode in ("exit_tier", "cumulative"):
            report = aggregate([1.0], [cost], mode)
            assert report.coe_row == cost

    def test_cumulative_charges_every_visited_tier(self):
        costs = [TierCost(1.0, 1.0, 1.0), TierCost(10.0, 10.0, 10.0)]
        report = aggregate([0.5, 0.5], costs, "cumulative")
        # half pay tier 1 only, half pay tiers 1+2
        assert report.coe_row.flops == pytest.approx(0.5 * 1 + 0.5 * 11)

    def test_cumulative_dominates_exit_tier(self):
        rng = random.Random(17)
        for _ in range(50):
            k = rng.randrange(1, 5)
            raw = [rng.random() for _ in range(k)]
            fractions = [x / sum(raw) for x in raw]
            costs = [
                TierCost(rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5))
                for _ in range(k)
            ]
            exit_row = aggregate(fractions, costs, "exit_tier").coe_row
            cum_row = aggregate(fractions, costs, "cumulative").coe_row
            assert cum_row.flops >= exit_row.flops - 1e-12
            assert cum_row.latency_ms >= exit_row.latency_ms - 1e-12
            assert cum_row.dollars_per_hour >= exit_row.dollars_per_hour - 1e-12

    def test_unnormalized_fractions_rejected(self):
        with pytest.raises(ValidationError, match="sum"):
            aggregate([0.5, 0.4], [TierCost(1, 1, 1), TierCost(1, 1, 1)], "exit_tier")

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            aggregate([1.0], [TierCost(1, 1, 1), TierCost(1, 1, 1)], "exit_tier")


class TestGpuDollarTotal:
    def test_imagenet(self):
        assert gpu_dollar_total((0.52, 0.29, 0.19), (0.50, 0.80, 1.29)) == pytest.approx(
            0.74, abs=0.01
        )

    def test_sst2(self):
        assert gpu_dollar_total((0.93, 0.07), (0.50, 0.80)) == pytest.approx(0.52, abs=0.01)

    def test_all_mass_at_tier_one(self):
        assert gpu_dollar_total((1.0, 0.0), (0.5, 2.49)) == 0.5


class TestDelayProfile:
    def test_four_tiers_use_full_canonical_list(self):
        assert make_delay_profile(4).delays_ms == (0.001, 10.0, 100.0, 1000.0)

    def test_two_tiers_take_first_and_last(self):
        assert make_delay_profile(2).delays_ms == (0.001, 1000.0)

    def test_one_tier_takes_smallest(self):
        assert make_delay_profile(1).delays_ms == (0.001,)

    def test_three_tiers(self):
        assert make_delay_profile(3).delays_ms == (0.001, 10.0, 1000.0)

    def test_no_interpolation_beyond_canonical(self):
        with pytest.raises(ValidationError, match="exceed"):
            make_delay_profile(5)

    def test_two_tier_delays_reproduce_published_reduction(self):
        # delays alone: 0.93*0.001 + 0.07*1000 vs 1000 -> about 14.3x
        profile = make_delay_profile(2)
        coe, best, ratio = comm_latency((0.93, 0.07), (0.0, 0.0), profile)
        assert coe == pytest.approx(70.00093, abs=1e-6)
        assert best == 1000.0
        assert ratio == pytest.approx(14.2855, abs=0.001)


class TestCommLatency:
    def test_sst2_with_tier_latencies(self):
        profile = make_delay_profile(2)
        coe, best, ratio = comm_latency((0.93, 0.07), (3.88, 7.22), profile)
        assert coe == pytest.approx(74.11473, abs=1e-6)
        assert best == pytest.approx(1007.22)
        assert ratio == pytest.approx(13.5900, abs=0.001)
        assert 13.0 <= ratio <= 15.0

    def test_zero_delays_reduce_to_aggregate_latency(self):
        from cascadekit import DelayProfile

        profile = DelayProfile((0.0, 0.0))
        coe, best, _ = comm_latency((0.6, 0.4), (2.0, 5.0), profile)
        assert coe == pytest.approx(0.6 * 2.0 + 0.4 * 5.0)
        assert best == 5.0

    def test_all_mass_at_tier_one(self):
        from cascadekit import DelayProfile

        profile = DelayProfile((3.0, 500.0))
        coe, _, _ = comm_latency((1.0, 0.0), (2.0, 9.0), profile)
        assert coe == pytest.approx(5.0)

    def test_ratio_at_least_one_for_nondecreasing_rows(self):
        rng = random.Random(2)
        for _ in range(50):
            k = rng.randrange(1, 5)
            raw = [rng.random() for _ in range(k)]
            fractions = [x / sum(raw) for x in raw]
            lats = sorted(rng.uniform(1, 10) for _ in range(k))
            delays = sorted(rng.uniform(0, 100) for _ in range(k))
            from cascadekit import DelayProfile

            _, _, ratio = comm_latency(fractions, lats, DelayProfile(tuple(delays)))
            assert ratio >= 1.0 - 1e-12


def brute_force_frontier(points):
    out = []
    for p in points:
        dominated = False
        for q in points:
            if q[0] <= p[0] and q[1] >= p[1] and (q[0] < p[0] or q[1] > p[1]):
                dominated = True
                break
        if not dominated:
            out.append(p)
    return sorted(out, key=lambda p: (p[0], p[1]))


class TestParetoFrontier:
    def test_strict_domination(self):
        assert pareto_frontier([(1, 0.9, "a"), (2, 0.8, "b")]) == [(1, 0.9, "a")]

    def test_incomparable_points_both_survive(self):
        points = [(1, 0.8, "a"), (2, 0.9, "b")]
        assert pareto_frontier(points) == points

    def test_colocated_ties_all_survive(self):
        points = [(1, 0.9, "a"), (1, 0.9, "b"), (2, 0.95, "c")]
        frontier = pareto_frontier(points)
        assert {tag for _, _, tag in frontier} == {"a", "b", "c"}

    def test_matches_brute_force_on_random_clouds(self):
        rng = random.Random(31)
        for _ in range(30):
            n = rng.randrange(1, 200)
            points = [
                (rng.uniform(0, 10), rng.uniform(0, 1), i) for i in range(n)
            ]
            assert pareto_frontier(points) == brute_force_frontier(points)

    @given(
        st.lists(
            st.tuples(
                st.integers(min_value=0, max_value=8), st.integers(min_value=0, max_value=8)
            ),
            min_size=1,
            max_size=40,
        )
    )
    def test_idempotent(self, pairs):
        points = [(c, a, i) for i, (c, a) in enumerate(pairs)]
        once = pareto_frontier(points)
        assert pareto_frontier(once) == once

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            pareto_frontier([])


class TestTierMetricsFixtures:
    @pytest.mark.parametrize(
        "name,tiers",
        [
            ("cifar10", 4),
            ("imagenet1k", 3),
            ("swag", 2),
            ("sst2", 2),
            ("twitter_fin_news", 2),
        ],
    )
    def test_fixtures_load(self, name, tiers):
        metrics = load_tier_metrics(builtin_fixture_path(name))
        assert len(metrics.exit_fractions) == tiers
        assert abs(sum(metrics.exit_fractions) - 1.0) < 1e-9
        assert metrics.best_single.dollars_per_hour > 0

    def test_unknown_fixture(self):
        with pytest.raises(ValidationError, match="no builtin fixture"):
            builtin_fixture_path("mnist")

    def test_missing_best_single_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "tier,exit_fraction,dollars_per_hour,latency_ms,flops\n1,1.0,0.5,1.0,1e6\n",
            encoding="utf-8",
        )
        with pytest.raises(ValidationError, match="best_single"):
            load_tier_metrics(bad)


class TestReportRoundTrips:
    def test_report_csv_reparses_to_identical_bytes(self, tmp_path):
        from cascadekit.costmodel import read_report_csv, write_report_csv

        metrics = load_tier_metrics(builtin_fixture_path("cifar10"))
        report = aggregate(
            metrics.exit_fractions,
            metrics.tier_costs,
            "exit_tier",
            best_single=metrics.best_single,
        )
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        parsed = read_report_csv(path)
        assert parsed["gpu_dollars_per_hour"]["coe"] == 0.79
        assert parsed["gpu_dollars_per_hour"]["best_single"] == 2.49
        assert parsed["avg_latency_ms"]["coe"] == 4.14
        # printed values re-emit identically
        assert f"{parsed['avg_flops']['coe']:.3g}" == "4e+07"

    def test_comm_csv_round_trip(self, tmp_path):
        from cascadekit.costmodel import read_comm_csv, write_comm_csv

        p1, p2 = tmp_path / "c1.csv", tmp_path / "c2.csv"
        write_comm_csv(74.11473, 1007.22, 13.590011, p1)
        coe, best, ratio = read_comm_csv(p1)
        write_comm_csv(coe, best, ratio, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert (coe, best, ratio) == (74.11473, 1007.22, 13.590011)


class TestPriceList:
    def test_unknown_tier_named(self, prices):
        with pytest.raises(ValidationError, match="unknown gpu_tier 'TPUv9'"):
            prices.price("TPUv9")

    def test_nonpositive_price_rejected(self):
        with pytest.raises(ValidationError):
            GpuPriceList({"X": 0.0})
