"""Voting statistic and deferral rules.

Three rules decide whether an example exits at the current tier or
passes to the next one: vote-threshold (ensemble agreement),
confidence-threshold (single-model score), and the idealized oracle
that keeps the cheap model exactly when it is correct. All functions
are pure and thread-safe.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .exceptions import ValidationError


@dataclass(frozen=True)
class EnsembleVote:
    """Majority prediction of an ensemble with its agreement statistics.

    ``vote_fraction`` is the share of members agreeing with the majority
    label; ``mean_majority_score`` averages the scores of the agreeing
    members and is absent when the ensemble has no score channel.
    """

    majority_label: int
    vote_fraction: float
    mean_majority_score: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.vote_fraction <= 1.0:
            raise ValidationError(f"vote_fraction {self.vote_fraction} outside (0, 1]")
        if self.mean_majority_score is not None and not 0.0 <= self.mean_majority_score <= 1.0:
            raise ValidationError(
                f"mean_majority_score {self.mean_majority_score} outside [0, 1]"
            )


@dataclass(frozen=True)
class Decision:
    """Exit with a label (``label`` set) or defer to the next tier (None)."""

    label: int | None = None

    @property
    def is_exit(self) -> bool:
        return self.label is not None


DEFER = Decision(None)


def majority_vote(labels: Sequence[int], scores: Sequence[float] | None = None) -> EnsembleVote:
    """Modal label of an ensemble, ties broken toward the smallest label.

    The tie-break depends only on label values, never on member order,
    so the result is invariant under permutation of the ensemble.
    """
    if not labels:
        raise ValidationError("majority_vote needs at least one label")
    if scores is not None and len(scores) != len(labels):
        raise ValidationError("scores and labels must have the same length")
    counts = Counter(labels)
    top = max(counts.values())
    majority = min(label for label, c in counts.items() if c == top)
    fraction = top / len(labels)
    mean_score: float | None = None
    if scores is not None:
        agreeing = [s for label, s in zip(labels, scores) if label == majority]
        mean_score = sum(agreeing) / len(agreeing)
    return EnsembleVote(majority, fraction, mean_score)


def vote_deferral(vote: EnsembleVote, theta_v: float) -> Decision:
    """Exit with the majority label iff the vote fraction clears ``theta_v``.

    ``theta_v`` is a fraction of the ensemble size in [0, 1]; the
    comparison is inclusive, so a fraction exactly at the threshold
    exits.
    """
    if vote.vote_fraction >= theta_v:
        return Decision(vote.majority_label)
    return DEFER


def confidence_deferral(score: float | None, theta: float, label: int) -> Decision:
    """Exit with ``label`` iff ``score`` >= ``theta`` (inclusive).

    ``label`` is the prediction of the model that produced the score;
    a missing score channel is an error.
    """
    if score is None:
        raise ValidationError("confidence_deferral requires a score channel")
    if score >= theta:
        return Decision(label)
    return DEFER


def oracle_deferral(h1_label: int, true_label: int) -> Decision:
    """Idealized rule: keep the cheap model's label iff it is correct.

    Defer-iff-wrong minimizes two-model cascade risk down to
    P(both models wrong); this is verified against exhaustive rule
    enumeration in the test suite.
    """
    if h1_label == true_label:
        return Decision(h1_label)
    return DEFER
