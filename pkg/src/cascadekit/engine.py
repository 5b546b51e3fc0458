"""Cascade execution over a prediction table.

Runs the vote-threshold cascade, the confidence-threshold (WoC)
baseline, and the two-model oracle baseline, producing per-example
traces plus exit fractions. Examples are independent; evaluation may be
threaded, but traces are always merged in table order so output is
schedule-independent.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from .dataset import PredictionTable, _format_float
from .deferral import (
    DEFER,
    Decision,
    EnsembleVote,
    confidence_deferral,
    majority_vote,
    vote_deferral,
)
from .exceptions import ValidationError

_T = TypeVar("_T")

EXECUTION_MODES = ("parallel", "sequential")
ATTRIBUTION_MODES = ("exit_tier", "cumulative")


@dataclass(frozen=True)
class TierSpec:
    """One cascade stage: an ensemble of model ids plus its voting threshold."""

    model_ids: tuple[str, ...]
    theta_v: float

    def __post_init__(self) -> None:
        if not self.model_ids:
            raise ValidationError("tier needs at least one model")
        if len(set(self.model_ids)) != len(self.model_ids):
            raise ValidationError(f"duplicate model within tier {self.model_ids}")
        if not 0.0 <= self.theta_v <= 1.0:
            raise ValidationError(f"theta_v {self.theta_v} outside [0, 1]")


@dataclass(frozen=True)
class CascadeSpec:
    """Ordered tiers plus execution and cost-attribution conventions.

    The final tier's threshold is ignored: it always exits with its
    majority label.
    """

    tiers: tuple[TierSpec, ...]
    execution_mode: str = "parallel"
    attribution_mode: str = "exit_tier"

    def __post_init__(self) -> None:
        if not self.tiers:
            raise ValidationError("cascade needs at least one tier")
        if self.execution_mode not in EXECUTION_MODES:
            raise ValidationError(f"execution_mode must be one of {EXECUTION_MODES}")
        if self.attribution_mode not in ATTRIBUTION_MODES:
            raise ValidationError(f"attribution_mode must be one of {ATTRIBUTION_MODES}")

    def validate_against(self, table: PredictionTable) -> None:
        known = set(table.model_ids)
        for t, tier in enumerate(self.tiers):
            for mid in tier.model_ids:
                if mid not in known:
                    raise ValidationError(f"tier {t + 1} references unknown model {mid!r}")

    @property
    def num_tiers(self) -> int:
        return len(self.tiers)


@dataclass(frozen=True)
class ExampleTrace:
    """Path of one example through the cascade.

    ``visited`` holds (tier_index, vote, decision) for tiers
    0..exit_tier; every non-final visited tier deferred and the exit
    tier carries the Exit decision.
    """

    example_id: str
    visited: tuple[tuple[int, EnsembleVote, Decision], ...]
    exit_tier: int
    final_label: int
    correct: bool

    @property
    def vote_fractions(self) -> tuple[float, ...]:
        return tuple(vote.vote_fraction for _, vote, _ in self.visited)


@dataclass(frozen=True)
class TraceRow:
    """The trace-CSV projection of an ExampleTrace."""

    example_id: str
    exit_tier: int
    final_label: int
    correct: bool
    vote_fractions: tuple[float, ...]

    @classmethod
    def from_trace(cls, trace: ExampleTrace) -> "TraceRow":
        return cls(
            example_id=trace.example_id,
            exit_tier=trace.exit_tier,
            final_label=trace.final_label,
            correct=trace.correct,
            vote_fractions=trace.vote_fractions,
        )


def _map_ordered(fn: Callable[[int], _T], indices: Sequence[int], threads: int) -> list[_T]:
    """Apply fn over indices, optionally threaded, preserving order."""
    if threads <= 1 or len(indices) < 2:
        return [fn(i) for i in indices]
    chunk = max(1, len(indices) // (threads * 4))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices, chunksize=chunk))


def _exit_fractions(traces: Sequence[ExampleTrace | TraceRow], num_tiers: int) -> list[float]:
    counts = [0] * num_tiers
    for trace in traces:
        counts[trace.exit_tier] += 1
    n = len(traces)
    return [c / n for c in counts]


def _tier_scores(table: PredictionTable, model_ids: Sequence[str]) -> list[tuple[float, ...]] | None:
    if all(table.has_scores(mid) for mid in model_ids):
        return [table.scores[mid] for mid in model_ids]
    return None


def ensemble_votes(table: PredictionTable, model_ids: Sequence[str]) -> tuple[EnsembleVote, ...]:
    """Majority vote of one ensemble for every example, in table order.

    Votes do not depend on any threshold, so callers sweeping thresholds
    can compute them once per tier and reuse them.
    """
    for mid in model_ids:
        if mid not in table.predictions:
            raise ValidationError(f"unknown model_id {mid!r}")
    preds = [table.predictions[mid] for mid in model_ids]
    scores = _tier_scores(table, model_ids)
    out = []
    for i in range(table.num_examples):
        labels = [p[i] for p in preds]
        svals = [s[i] for s in scores] if scores is not None else None
        out.append(majority_vote(labels, svals))
    return tuple(out)


def run_cascade(
    table: PredictionTable, spec: CascadeSpec, *, threads: int = 1
) -> tuple[list[ExampleTrace], list[float]]:
    """Evaluate the vote-deferral cascade for every example.

    Tiers are visited in order; an example exits at the first tier whose
    vote fraction clears that tier's threshold, and the last tier exits
    unconditionally with its majority label. Returns traces in table
    order and the per-tier exit fractions (summing to 1).
    """
    spec.validate_against(table)
    last = spec.num_tiers - 1
    tier_preds = [[table.predictions[mid] for mid in tier.model_ids] for tier in spec.tiers]
    tier_scores = [_tier_scores(table, tier.model_ids) for tier in spec.tiers]

    def evaluate(i: int) -> ExampleTrace:
        visited: list[tuple[int, EnsembleVote, Decision]] = []
        decision = DEFER
        t = 0
        for t, tier in enumerate(spec.tiers):
            labels = [p[i] for p in tier_preds[t]]
            svals = tier_scores[t]
            vote = majority_vote(labels, [s[i] for s in svals] if svals is not None else None)
            if t == last:
                decision = Decision(vote.majority_label)
            else:
                decision = vote_deferral(vote, tier.theta_v)
            visited.append((t, vote, decision))
            if decision.is_exit:
                break
        final = decision.label
        assert final is not None
        return ExampleTrace(
            example_id=table.example_ids[i],
            visited=tuple(visited),
            exit_tier=t,
            final_label=final,
            correct=final == table.true_labels[i],
        )

    traces = _map_ordered(evaluate, range(table.num_examples), threads)
    return traces, _exit_fractions(traces, spec.num_tiers)


def run_cascade_from_votes(
    table: PredictionTable,
    votes_per_tier: Sequence[Sequence[EnsembleVote]],
    thetas: Sequence[float],
) -> tuple[list[ExampleTrace], list[float]]:
    """Cascade walk over precomputed per-tier votes (threshold sweep path).

    Produces exactly the traces run_cascade would for tiers with the
    same ensembles and thresholds.
    """
    if len(votes_per_tier) != len(thetas):
        raise ValidationError("votes_per_tier and thetas length mismatch")
    last = len(thetas) - 1
    traces: list[ExampleTrace] = []
    for i, eid in enumerate(table.example_ids):
        visited: list[tuple[int, EnsembleVote, Decision]] = []
        decision = DEFER
        t = 0
        for t in range(len(thetas)):
            vote = votes_per_tier[t][i]
            if t == last:
                decision = Decision(vote.majority_label)
            else:
                decision = vote_deferral(vote, thetas[t])
            visited.append((t, vote, decision))
            if decision.is_exit:
                break
        final = decision.label
        assert final is not None
        traces.append(
            ExampleTrace(
                example_id=eid,
                visited=tuple(visited),
                exit_tier=t,
                final_label=final,
                correct=final == table.true_labels[i],
            )
        )
    return traces, _exit_fractions(traces, len(thetas))


def run_woc(
    table: PredictionTable, tiers: Sequence[str], theta: float, *, threads: int = 1
) -> tuple[list[ExampleTrace], list[float]]:
    """Confidence-threshold cascade of single models per tier.

    At tier i the example exits with that model's label iff its score
    clears ``theta``; the last tier always exits. Every model except the
    last needs a score channel.
    """
    if not tiers:
        raise ValidationError("woc cascade needs at least one model")
    for mid in tiers:
        if mid not in table.predictions:
            raise ValidationError(f"unknown model_id {mid!r}")
    for mid in tiers[:-1]:
        if not table.has_scores(mid):
            raise ValidationError(f"model {mid!r} has no scores; confidence cascade needs them")
    last = len(tiers) - 1

    def evaluate(i: int) -> ExampleTrace:
        visited: list[tuple[int, EnsembleVote, Decision]] = []
        decision = DEFER
        t = 0
        for t, mid in enumerate(tiers):
            label = table.predictions[mid][i]
            score = table.scores[mid][i] if table.has_scores(mid) else None
            vote = EnsembleVote(label, 1.0, score)
            if t == last:
                decision = Decision(label)
            else:
                decision = confidence_deferral(score, theta, label)
            visited.append((t, vote, decision))
            if decision.is_exit:
                break
        final = decision.label
        assert final is not None
        return ExampleTrace(
            example_id=table.example_ids[i],
            visited=tuple(visited),
            exit_tier=t,
            final_label=final,
            correct=final == table.true_labels[i],
        )

    traces = _map_ordered(evaluate, range(table.num_examples), threads)
    return traces, _exit_fractions(traces, len(tiers))


def run_oracle_two_model(
    table: PredictionTable, h1: str, h2: str
) -> tuple[list[ExampleTrace], float]:
    """Two-model cascade under the idealized defer-iff-wrong rule.

    Risk equals the fraction of examples both models get wrong, the
    minimum attainable by any per-example deferral rule.
    """
    for mid in (h1, h2):
        if mid not in table.predictions:
            raise ValidationError(f"unknown model_id {mid!r}")
    traces: list[ExampleTrace] = []
    wrong = 0
    for i, eid in enumerate(table.example_ids):
        y = table.true_labels[i]
        p1 = table.predictions[h1][i]
        p2 = table.predictions[h2][i]
        if p1 == y:
            visited = ((0, EnsembleVote(p1, 1.0), Decision(p1)),)
            exit_tier, final = 0, p1
        else:
            visited = (
                (0, EnsembleVote(p1, 1.0), DEFER),
                (1, EnsembleVote(p2, 1.0), Decision(p2)),
            )
            exit_tier, final = 1, p2
        correct = final == y
        wrong += not correct
        traces.append(ExampleTrace(eid, visited, exit_tier, final, correct))
    return traces, wrong / table.num_examples


def brute_force_min_risk(table: PredictionTable, h1: str, h2: str) -> float:
    """Exhaustive minimum cascade risk over all 2^n per-example rules.

    Cost is 2^n, so tables are capped at 20 examples. Used as the
    independent check that the oracle rule is optimal.
    """
    n = table.num_examples
    if n > 20:
        raise ValidationError(f"brute force caps at 20 examples, table has {n}")
    for mid in (h1, h2):
        if mid not in table.predictions:
            raise ValidationError(f"unknown model_id {mid!r}")
    wrong1 = 0
    wrong2 = 0
    for i in range(n):
        y = table.true_labels[i]
        wrong1 |= (table.predictions[h1][i] != y) << i
        wrong2 |= (table.predictions[h2][i] != y) << i
    mask = (1 << n) - 1
    best = n + 1
    for rule in range(1 << n):  # bit i set: use h1 on example i
        errors = ((rule & wrong1) | (~rule & wrong2 & mask)).bit_count()
        if errors < best:
            best = errors
    return best / n


def write_traces(traces: Iterable[ExampleTrace | TraceRow], path: str | Path) -> None:
    """Trace CSV export: example_id,exit_tier,final_label,correct,vote_fractions."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["example_id", "exit_tier", "final_label", "correct", "vote_fractions"])
        for trace in traces:
            fractions = ";".join(_format_float(f) for f in trace.vote_fractions)
            writer.writerow(
                [
                    trace.example_id,
                    str(trace.exit_tier),
                    str(trace.final_label),
                    "true" if trace.correct else "false",
                    fractions,
                ]
            )


def read_traces(path: str | Path) -> list[TraceRow]:
    """Load a trace CSV written by write_traces."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["example_id", "exit_tier", "final_label", "correct", "vote_fractions"]
        if header != expected:
            raise ValidationError(f"{path}: trace header must be {','.join(expected)}")
        rows: list[TraceRow] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ValidationError(f"{path}: row {row_no}: expected 5 fields, got {len(row)}")
            eid, tier_s, label_s, correct_s, fractions_s = row
            if correct_s not in ("true", "false"):
                raise ValidationError(f"{path}: row {row_no}: bad correct flag {correct_s!r}")
            try:
                tier = int(tier_s)
                label = int(label_s)
                fractions = tuple(float(f) for f in fractions_s.split(";")) if fractions_s else ()
            except ValueError:
                raise ValidationError(f"{path}: row {row_no}: bad numeric field") from None
            rows.append(TraceRow(eid, tier, label, correct_s == "true", fractions))
    return rows
