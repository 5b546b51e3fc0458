"""Configuration sweeps and post-run analysis.

Builds (cost, accuracy) point clouds over ensemble sizes and voting
thresholds, histograms cascade exit depths, quantifies wrong agreements
(consensus reached on an incorrect label before the final tier), and
summarizes efficiency reductions against the best single model.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

from .costmodel import AggregateReport, TierCost, aggregate, tier_cost
from .dataset import GpuPriceList, ModelProfile, PredictionTable, _format_float
from .engine import ExampleTrace, TraceRow, ensemble_votes, run_cascade_from_votes, run_woc
from .exceptions import ValidationError


@dataclass(frozen=True)
class SweepSpec:
    """Grid of cascade configurations to evaluate.

    ``tier_pool`` lists model groups by performance tier, cheapest
    first; a configuration of ensemble size s uses the first s models of
    each group (or the whole group when smaller). ``baseline_thetas``,
    when set, additionally runs confidence cascades over the most
    accurate model of each group.
    """

    ensemble_sizes: tuple[int, ...]
    thresholds: tuple[float, ...]
    tier_pool: tuple[tuple[str, ...], ...]
    baseline_thetas: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.ensemble_sizes:
            raise ValidationError("ensemble_sizes must be nonempty")
        if not self.thresholds:
            raise ValidationError("thresholds must be nonempty")
        if not self.tier_pool or any(not group for group in self.tier_pool):
            raise ValidationError("tier_pool groups must be nonempty")
        for s in self.ensemble_sizes:
            if s < 1:
                raise ValidationError(f"ensemble size {s} must be >= 1")
        for t in self.thresholds:
            if not 0.0 <= t <= 1.0:
                raise ValidationError(f"threshold {t} outside [0, 1]")


# default confidence grid for the baseline when no explicit one is given
WOC_DEFAULT_GRID = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99)


@dataclass(frozen=True)
class SweepPoint:
    """One point of the sweep cloud: a cascade config or a reference model."""

    config: str
    kind: str  # "coe", "woc", or "single"
    ensemble_size: int | None
    theta: float | None
    accuracy: float
    cost: TierCost


@dataclass(frozen=True)
class ExitHistogram:
    """Counts and fractions of examples leaving at each tier."""

    counts: tuple[int, ...]
    fractions: tuple[float, ...]


@dataclass(frozen=True)
class WrongAgreementRow:
    """Wrong agreements of one configuration vs the big model's errors.

    ``wrong_agreements`` counts examples that exited before the final
    tier with an incorrect label; ``big_model_wrong`` counts how many of
    those the reference big model also gets wrong. ``rate_percent`` is
    absent when there are no wrong agreements.
    """

    config_label: str
    wrong_agreements: int
    big_model_wrong: int
    rate_percent: float | None

    def __post_init__(self) -> None:
        if not 0 <= self.big_model_wrong <= self.wrong_agreements:
            raise ValidationError("big_model_wrong must be within [0, wrong_agreements]")


class ReductionSummary(NamedTuple):
    """Best-single-model cost divided by cascade cost, per metric."""

    flops: float
    latency_ms: float
    dollars: float


def _profile_map(profiles: Sequence[ModelProfile]) -> dict[str, ModelProfile]:
    return {p.model_id: p for p in profiles}


def _config_tiers(pool: Sequence[Sequence[str]], size: int) -> list[tuple[str, ...]]:
    return [tuple(group[:size]) for group in pool]


def sweep(
    table: PredictionTable,
    spec: SweepSpec,
    profiles: Sequence[ModelProfile],
    prices: GpuPriceList,
    *,
    execution_mode: str = "parallel",
    attribution_mode: str = "exit_tier",
    threads: int = 1,
) -> list[SweepPoint]:
    """Evaluate every (ensemble size, threshold) cascade plus references.

    Emits one point per configuration, one per individual pool model,
    and one per baseline confidence threshold when configured; the list
    keeps the grid's declaration order and is suitable for
    pareto_frontier. Per-tier votes are computed once per ensemble size
    and shared across thresholds.
    """
    pmap = _profile_map(profiles)
    for group in spec.tier_pool:
        for mid in group:
            if mid not in table.predictions:
                raise ValidationError(f"tier_pool references unknown model {mid!r}")
            if mid not in pmap:
                raise ValidationError(f"no profile for model {mid!r}")

    def coe_points(size: int) -> list[SweepPoint]:
        tiers = _config_tiers(spec.tier_pool, size)
        votes = [ensemble_votes(table, tier) for tier in tiers]
        costs = [
            tier_cost([pmap[mid] for mid in tier], prices, execution_mode) for tier in tiers
        ]
        points = []
        for theta in spec.thresholds:
            traces, fractions = run_cascade_from_votes(table, votes, [theta] * len(tiers))
            report = aggregate(fractions, costs, attribution_mode)
            accuracy = sum(t.correct for t in traces) / len(traces)
            points.append(
                SweepPoint(
                    config=f"{size} models, threshold={_format_float(theta)}",
                    kind="coe",
                    ensemble_size=size,
                    theta=theta,
                    accuracy=accuracy,
                    cost=report.coe_row,
                )
            )
        return points

    if threads <= 1:
        size_points = [coe_points(s) for s in spec.ensemble_sizes]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            size_points = list(pool.map(coe_points, spec.ensemble_sizes))
    points: list[SweepPoint] = [p for chunk in size_points for p in chunk]

    seen: set[str] = set()
    for group in spec.tier_pool:
        for mid in group:
            if mid in seen:
                continue
            seen.add(mid)
            points.append(
                SweepPoint(
                    config=f"single {mid}",
                    kind="single",
                    ensemble_size=None,
                    theta=None,
                    accuracy=table.accuracy(mid),
                    cost=tier_cost([pmap[mid]], prices, execution_mode),
                )
            )

    if spec.baseline_thetas is not None:
        best_per_group = [
            min(group, key=lambda mid: (-table.accuracy(mid), mid)) for group in spec.tier_pool
        ]
        woc_costs = [tier_cost([pmap[mid]], prices, execution_mode) for mid in best_per_group]
        for theta in spec.baseline_thetas:
            traces, fractions = run_woc(table, best_per_group, theta)
            report = aggregate(fractions, woc_costs, attribution_mode)
            accuracy = sum(t.correct for t in traces) / len(traces)
            points.append(
                SweepPoint(
                    config=f"woc threshold={_format_float(theta)}",
                    kind="woc",
                    ensemble_size=None,
                    theta=theta,
                    accuracy=accuracy,
                    cost=report.coe_row,
                )
            )
    return points


def exit_distribution(
    traces: Sequence[ExampleTrace | TraceRow], num_tiers: int | None = None
) -> ExitHistogram:
    """Histogram of the tier at which examples leave the cascade."""
    if not traces:
        raise ValidationError("exit_distribution needs at least one trace")
    if num_tiers is None:
        num_tiers = max(t.exit_tier for t in traces) + 1
    counts = [0] * num_tiers
    for t in traces:
        counts[t.exit_tier] += 1
    n = len(traces)
    return ExitHistogram(tuple(counts), tuple(c / n for c in counts))


def wrong_agreements(
    traces: Sequence[ExampleTrace | TraceRow],
    table: PredictionTable,
    big_model: str,
    num_tiers: int,
    config_label: str = "coe",
) -> list[WrongAgreementRow]:
    """Count pre-final incorrect exits and how often the big model shares them.

    An example is a wrong agreement iff it exited before the final tier
    with a label different from the truth. Returns the one row for this
    run; callers sweeping configurations concatenate rows.
    """
    if big_model not in table.predictions:
        raise ValidationError(f"unknown model_id {big_model!r}")
    big_preds = table.predictions[big_model]
    wrong = 0
    big_wrong = 0
    for t in traces:
        i = table.index_of(t.example_id)
        if t.exit_tier < num_tiers - 1 and t.final_label != table.true_labels[i]:
            wrong += 1
            big_wrong += big_preds[i] != table.true_labels[i]
    rate = 100.0 * big_wrong / wrong if wrong > 0 else None
    return [WrongAgreementRow(config_label, wrong, big_wrong, rate)]


def reduction_summary(report: AggregateReport) -> ReductionSummary:
    """Per-metric ratio of best-single-model cost to cascade cost."""
    if report.best_single is None:
        raise ValidationError("reduction_summary needs a populated best_single")

    def ratio(best: float, coe: float) -> float:
        return best / coe if coe != 0 else math.inf

    return ReductionSummary(
        flops=ratio(report.best_single.flops, report.coe_row.flops),
        latency_ms=ratio(report.best_single.latency_ms, report.coe_row.latency_ms),
        dollars=ratio(report.best_single.dollars_per_hour, report.coe_row.dollars_per_hour),
    )


SWEEP_COLUMNS = [
    "config",
    "theta_v",
    "ensemble_size",
    "accuracy",
    "avg_flops",
    "avg_latency_ms",
    "gpu_dollars",
]


def write_sweep_csv(points: Sequence[SweepPoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for p in points:
            writer.writerow(
                [
                    p.config,
                    _format_float(p.theta) if p.theta is not None else "",
                    str(p.ensemble_size) if p.ensemble_size is not None else "",
                    _format_float(p.accuracy),
                    _format_float(p.cost.flops),
                    _format_float(p.cost.latency_ms),
                    _format_float(p.cost.dollars_per_hour),
                ]
            )


def read_sweep_csv(path: str | Path) -> list[SweepPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SWEEP_COLUMNS:
            raise ValidationError(f"{path}: sweep header must be {','.join(SWEEP_COLUMNS)}")
        points: list[SweepPoint] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(SWEEP_COLUMNS):
                raise ValidationError(f"{path}: row {row_no}: wrong field count")
            config, theta_s, size_s, acc_s, flops_s, lat_s, dollars_s = row
            kind = config.split(" ", 1)[0] if config.startswith(("single", "woc")) else "coe"
            try:
                points.append(
                    SweepPoint(
                        config=config,
                        kind=kind,
                        ensemble_size=int(size_s) if size_s else None,
                        theta=float(theta_s) if theta_s else None,
                        accuracy=float(acc_s),
                        cost=TierCost(float(flops_s), float(lat_s), float(dollars_s)),
                    )
                )
            except ValueError:
                raise ValidationError(f"{path}: row {row_no}: bad numeric field") from None
    return points


WRONG_AGREEMENT_COLUMNS = ["config", "wrong_agreements", "big_model_wrong", "rate_percent"]


def write_wrong_agreements_csv(rows: Sequence[WrongAgreementRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WRONG_AGREEMENT_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.config_label,
                    str(r.wrong_agreements),
                    str(r.big_model_wrong),
                    f"{r.rate_percent:.2f}" if r.rate_percent is not None else "",
                ]
            )


def read_wrong_agreements_csv(path: str | Path) -> list[WrongAgreementRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != WRONG_AGREEMENT_COLUMNS:
            raise ValidationError(f"{path}: wrong-agreement header mismatch")
        rows = []
        for row in reader:
            rows.append(
                WrongAgreementRow(
                    row[0], int(row[1]), int(row[2]), float(row[3]) if row[3] else None
                )
            )
    return rows
