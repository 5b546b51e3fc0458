"""Efficiency accounting for cascades.

Computes per-tier and aggregate FLOPs, latency, and GPU dollars under
parallel/sequential execution and exit-tier/cumulative attribution,
simulates tier-transition delays for edge-to-cloud deployments, and
extracts Pareto frontiers from (cost, accuracy) point clouds. All
computations are pure; report writers round for display while internal
math stays full precision.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence, TypeVar

from .dataset import GpuPriceList, ModelProfile
from .exceptions import ValidationError

_P = TypeVar("_P", bound=Sequence[Any])

# tier-transition delays, ms: on-device, LAN, WAN, worst-case edge-to-cloud
DEFAULT_DELAYS_MS = (0.001, 10.0, 100.0, 1000.0)

FRACTION_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TierCost:
    """Per-example cost of one tier: compute, latency, GPU rental rate."""

    flops: float
    latency_ms: float
    dollars_per_hour: float

    def __post_init__(self) -> None:
        for name in ("flops", "latency_ms", "dollars_per_hour"):
            if getattr(self, name) < 0:
                raise ValidationError(f"TierCost.{name} must be >= 0")

    def _scaled(self, factor: float) -> "TierCost":
        return TierCost(self.flops * factor, self.latency_ms * factor, self.dollars_per_hour * factor)

    def _plus(self, other: "TierCost") -> "TierCost":
        return TierCost(
            self.flops + other.flops,
            self.latency_ms + other.latency_ms,
            self.dollars_per_hour + other.dollars_per_hour,
        )


ZERO_COST = TierCost(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DelayProfile:
    """Per-tier transition delays in ms, nondecreasing with tier depth."""

    delays_ms: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.delays_ms:
            raise ValidationError("delay profile must be nonempty")
        for d in self.delays_ms:
            if d < 0:
                raise ValidationError(f"delay {d} must be >= 0")
        if any(a > b for a, b in zip(self.delays_ms, self.delays_ms[1:])):
            raise ValidationError(f"delays must be nondecreasing, got {self.delays_ms}")


@dataclass(frozen=True)
class AggregateReport:
    """Per-tier exit fractions and costs plus the weighted cascade row.

    ``coe_row`` is the cascade-level aggregate: under exit_tier
    attribution each field is sum(fraction_i * cost_i); under cumulative
    attribution a sample pays every tier it visited.
    """

    per_tier: tuple[tuple[float, TierCost], ...]
    coe_row: TierCost
    attribution_mode: str
    accuracy: float | None = None
    best_single: TierCost | None = None
    best_single_accuracy: float | None = None

    @property
    def exit_fractions(self) -> tuple[float, ...]:
        return tuple(f for f, _ in self.per_tier)

    @property
    def tier_costs(self) -> tuple[TierCost, ...]:
        return tuple(c for _, c in self.per_tier)


@dataclass(frozen=True)
class TierMetrics:
    """Tier-level run summary: exit fractions, costs, best-single reference."""

    exit_fractions: tuple[float, ...]
    tier_costs: tuple[TierCost, ...]
    best_single: TierCost

    def __post_init__(self) -> None:
        if len(self.exit_fractions) != len(self.tier_costs):
            raise ValidationError("exit_fractions and tier_costs length mismatch")


def tier_cost(
    profiles: Sequence[ModelProfile], prices: GpuPriceList, execution_mode: str
) -> TierCost:
    """Cost of one ensemble tier.

    Parallel execution is bounded by the tier's least efficient model
    (max over flops and latency); sequential execution sums them. All
    models of a tier must share one gpu_tier, whose hourly price becomes
    the tier's dollar rate.
    """
    if not profiles:
        raise ValidationError("tier_cost needs at least one profile")
    gpu_tiers = {p.gpu_tier for p in profiles}
    if len(gpu_tiers) != 1:
        raise ValidationError(
            f"tier models span gpu_tiers {sorted(gpu_tiers)}; a tier must sit on one GPU type"
        )
    dollars = prices.price(profiles[0].gpu_tier)
    flops = [p.flops_per_example for p in profiles]
    lats = [p.latency_ms for p in profiles]
    if execution_mode == "parallel":
        return TierCost(max(flops), max(lats), dollars)
    if execution_mode == "sequential":
        return TierCost(sum(flops), sum(lats), dollars)
    raise ValidationError(f"unknown execution_mode {execution_mode!r}")


def check_cost_ordering(tier_costs: Sequence[TierCost]) -> float:
    """Warn when per-tier cost is not nondecreasing with depth.

    Cascading assumes later tiers cost at least as much as earlier ones.
    Returns gamma, the max adjacent flops ratio (earlier / later);
    values above 1 mark an inversion.
    """
    decreasing = [
        name
        for name in ("flops", "latency_ms", "dollars_per_hour")
        if any(
            getattr(a, name) > getattr(b, name) for a, b in zip(tier_costs, tier_costs[1:])
        )
    ]
    if decreasing:
        warnings.warn(
            f"per-tier cost decreases with depth in {decreasing}; "
            "cascading assumes tiers get more expensive",
            stacklevel=2,
        )
    ratios = [
        a.flops / b.flops for a, b in zip(tier_costs, tier_costs[1:]) if b.flops > 0
    ]
    return max(ratios, default=1.0)


def _check_fractions(exit_fractions: Sequence[float], length: int) -> None:
    if len(exit_fractions) != length:
        raise ValidationError(
            f"{len(exit_fractions)} exit fractions for {length} tiers"
        )
    total = sum(exit_fractions)
    if abs(total - 1.0) > FRACTION_SUM_TOL:
        raise ValidationError(f"exit fractions sum to {total}, expected 1")


def aggregate(
    exit_fractions: Sequence[float],
    per_tier_costs: Sequence[TierCost],
    attribution_mode: str = "exit_tier",
    *,
    accuracy: float | None = None,
    best_single: TierCost | None = None,
    best_single_accuracy: float | None = None,
) -> AggregateReport:
    """Weight per-tier costs by exit fractions into the cascade row.

    exit_tier attribution charges a sample only the tier it exits at;
    cumulative attribution charges every tier it visited, modeling a
    strictly sequential pipeline.
    """
    _check_fractions(exit_fractions, len(per_tier_costs))
    coe = ZERO_COST
    if attribution_mode == "exit_tier":
        for f, cost in zip(exit_fractions, per_tier_costs):
            coe = coe._plus(cost._scaled(f))
    elif attribution_mode == "cumulative":
        visited = ZERO_COST
        for f, cost in zip(exit_fractions, per_tier_costs):
            visited = visited._plus(cost)
            coe = coe._plus(visited._scaled(f))
    else:
        raise ValidationError(f"unknown attribution_mode {attribution_mode!r}")
    return AggregateReport(
        per_tier=tuple(zip(exit_fractions, per_tier_costs)),
        coe_row=coe,
        attribution_mode=attribution_mode,
        accuracy=accuracy,
        best_single=best_single,
        best_single_accuracy=best_single_accuracy,
    )


def gpu_dollar_total(exit_fractions: Sequence[float], tier_gpu_prices: Sequence[float]) -> float:
    """Hourly GPU dollars of the cascade under exit-tier attribution."""
    if len(exit_fractions) != len(tier_gpu_prices):
        raise ValidationError("exit_fractions and tier_gpu_prices length mismatch")
    return sum(f * p for f, p in zip(exit_fractions, tier_gpu_prices))


def make_delay_profile(
    num_tiers: int, canonical: Sequence[float] = DEFAULT_DELAYS_MS
) -> DelayProfile:
    """Assign canonical transition delays to a cascade's tiers.

    The first tier gets the smallest delay (on-device inference) and the
    last tier the largest (edge-to-cloud hop); interior tiers take the
    next-smallest canonical entries in order. No interpolation: more
    tiers than canonical entries is an error.
    """
    if num_tiers < 1:
        raise ValidationError("num_tiers must be >= 1")
    if len(canonical) < 2:
        raise ValidationError("canonical delay list needs at least 2 entries")
    if any(a > b for a, b in zip(canonical, canonical[1:])):
        raise ValidationError(f"canonical delays must be nondecreasing, got {tuple(canonical)}")
    if num_tiers > len(canonical):
        raise ValidationError(
            f"{num_tiers} tiers exceed the {len(canonical)} canonical delays"
        )
    if num_tiers == 1:
        return DelayProfile((canonical[0],))
    return DelayProfile(tuple(canonical[: num_tiers - 1]) + (canonical[-1],))


def comm_latency(
    exit_fractions: Sequence[float],
    tier_latencies_ms: Sequence[float],
    delay_profile: DelayProfile,
) -> tuple[float, float, float]:
    """Latency including tier-transition delays, vs the last tier alone.

    Returns (cascade_ms, best_single_ms, reduction_ratio) where each
    exiting sample pays its exit tier's latency plus that tier's delay,
    and the single-model reference always pays the final tier's.
    """
    delays = delay_profile.delays_ms
    if not (len(exit_fractions) == len(tier_latencies_ms) == len(delays)):
        raise ValidationError("exit_fractions, tier_latencies_ms, delays length mismatch")
    _check_fractions(exit_fractions, len(delays))
    coe_ms = sum(f * (lat + d) for f, lat, d in zip(exit_fractions, tier_latencies_ms, delays))
    best_single_ms = tier_latencies_ms[-1] + delays[-1]
    ratio = best_single_ms / coe_ms if coe_ms > 0 else math.inf
    return coe_ms, best_single_ms, ratio


def pareto_frontier(points: Sequence[_P]) -> list[_P]:
    """Non-dominated subset of (cost, accuracy, tag...) points.

    A point is dominated when another has cost <= and accuracy >= with
    at least one strict; exactly co-located points all survive. Output
    is sorted by cost ascending.
    """
    if not points:
        raise ValidationError("pareto_frontier needs at least one point")
    frontier = [
        p
        for p in points
        if not any(
            q[0] <= p[0] and q[1] >= p[1] and (q[0] < p[0] or q[1] > p[1]) for q in points
        )
    ]
    frontier.sort(key=lambda p: (p[0], p[1]))
    return frontier


def load_tier_metrics(path: str | Path) -> TierMetrics:
    """Load a tier-metrics CSV.

    Contract: header ``tier,exit_fraction,dollars_per_hour,latency_ms,flops``;
    one row per tier (tier = 1..k in order) plus one ``best_single`` row.
    The shipped fixtures under data/fixtures/ use this format.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["tier", "exit_fraction", "dollars_per_hour", "latency_ms", "flops"]
        if header != expected:
            raise ValidationError(f"{path}: tier metrics header must be {','.join(expected)}")
        fractions: list[float] = []
        costs: list[TierCost] = []
        best: TierCost | None = None
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ValidationError(f"{path}: row {row_no}: expected 5 fields, got {len(row)}")
            tier_id, frac_s, dollars_s, lat_s, flops_s = row
            try:
                frac = float(frac_s)
                cost = TierCost(float(flops_s), float(lat_s), float(dollars_s))
            except ValueError:
                raise ValidationError(f"{path}: row {row_no}: bad numeric field") from None
            if tier_id == "best_single":
                if best is not None:
                    raise ValidationError(f"{path}: row {row_no}: duplicate best_single row")
                best = cost
                continue
            if tier_id != str(len(fractions) + 1):
                raise ValidationError(
                    f"{path}: row {row_no}: expected tier {len(fractions) + 1}, got {tier_id!r}"
                )
            if not 0.0 <= frac <= 1.0:
                raise ValidationError(
                    f"{path}: row {row_no}, column 'exit_fraction': {frac} outside [0,1]"
                )
            fractions.append(frac)
            costs.append(cost)
        if best is None:
            raise ValidationError(f"{path}: missing best_single row")
        if not fractions:
            raise ValidationError(f"{path}: no tier rows")
    return TierMetrics(tuple(fractions), tuple(costs), best)


def _fmt_dollars(x: float) -> str:
    return f"{x:.2f}"


def _fmt_latency(x: float) -> str:
    return f"{x:.2f}"


def _fmt_flops(x: float) -> str:
    return f"{x:.3g}"


def _fmt_fraction(x: float) -> str:
    return f"{x:.4f}"


def write_report_csv(report: AggregateReport, path: str | Path) -> None:
    """Write the tabular cost report.

    One row per metric; columns tier_1..k, coe, best_single. The dollars
    row holds fraction-weighted per-tier terms (tier rental price times
    the share of samples exiting there); latency and FLOPs rows hold raw
    per-tier values with the weighted average in the coe column.
    """
    k = len(report.per_tier)
    fractions = report.exit_fractions
    costs = report.tier_costs
    best = report.best_single
    header = ["metric"] + [f"tier_{i + 1}" for i in range(k)] + ["coe", "best_single"]

    def best_cell(fmt, value):
        return fmt(value) if best is not None else ""

    rows = [
        ["exit_fraction"]
        + [_fmt_fraction(f) for f in fractions]
        + [_fmt_fraction(sum(fractions)), best_cell(_fmt_fraction, 1.0)],
        ["gpu_dollars_per_hour"]
        + [_fmt_dollars(f * c.dollars_per_hour) for f, c in report.per_tier]
        + [
            _fmt_dollars(report.coe_row.dollars_per_hour),
            best_cell(_fmt_dollars, best.dollars_per_hour if best else 0.0),
        ],
        ["avg_latency_ms"]
        + [_fmt_latency(c.latency_ms) for c in costs]
        + [
            _fmt_latency(report.coe_row.latency_ms),
            best_cell(_fmt_latency, best.latency_ms if best else 0.0),
        ],
        ["avg_flops"]
        + [_fmt_flops(c.flops) for c in costs]
        + [_fmt_flops(report.coe_row.flops), best_cell(_fmt_flops, best.flops if best else 0.0)],
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_report_csv(path: str | Path) -> dict[str, dict[str, float | None]]:
    """Re-parse a cost report into {metric: {column: value}}."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "metric":
            raise ValidationError(f"{path}: not a cost report")
        out: dict[str, dict[str, float | None]] = {}
        for row in reader:
            out[row[0]] = {
                col: (float(cell) if cell else None) for col, cell in zip(header[1:], row[1:])
            }
    return out


def write_comm_csv(coe_ms: float, best_single_ms: float, ratio: float, path: str | Path) -> None:
    """Single-row communication-latency summary export."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["coe_ms", "best_single_ms", "reduction_ratio"])
        writer.writerow([repr(float(coe_ms)), repr(float(best_single_ms)), repr(float(ratio))])


def read_comm_csv(path: str | Path) -> tuple[float, float, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["coe_ms", "best_single_ms", "reduction_ratio"]:
            raise ValidationError(f"{path}: not a comm summary")
        row = next(reader, None)
        if row is None or len(row) != 3:
            raise ValidationError(f"{path}: missing data row")
        return float(row[0]), float(row[1]), float(row[2])
