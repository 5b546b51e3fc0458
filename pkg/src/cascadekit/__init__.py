"""Cascade-of-ensembles adaptive inference over precomputed predictions.

Runs vote-based deferral cascades, confidence-threshold and oracle
baselines over tables of per-example model predictions, and accounts
their efficiency: FLOPs, latency, GPU dollars, and edge-to-cloud
communication cost, with Pareto/sweep analysis on top.
"""

from .analysis import (
    ExitHistogram,
    ReductionSummary,
    SweepPoint,
    SweepSpec,
    WrongAgreementRow,
    exit_distribution,
    reduction_summary,
    sweep,
    wrong_agreements,
)
from .costmodel import (
    AggregateReport,
    DelayProfile,
    TierCost,
    TierMetrics,
    aggregate,
    comm_latency,
    gpu_dollar_total,
    load_tier_metrics,
    make_delay_profile,
    pareto_frontier,
    tier_cost,
)
from .dataset import (
    GpuPriceList,
    ModelProfile,
    PredictionTable,
    SyntheticSpec,
    builtin_fixture_path,
    default_prices_path,
    generate_synthetic,
    load_label_map,
    load_predictions,
    load_prices,
    load_profiles,
    write_predictions,
)
from .deferral import (
    DEFER,
    Decision,
    EnsembleVote,
    confidence_deferral,
    majority_vote,
    oracle_deferral,
    vote_deferral,
)
from .engine import (
    CascadeSpec,
    ExampleTrace,
    TierSpec,
    TraceRow,
    brute_force_min_risk,
    ensemble_votes,
    read_traces,
    run_cascade,
    run_oracle_two_model,
    run_woc,
    write_traces,
)
from .exceptions import CascadeKitError, RemoteError, ValidationError
from .remote import PredictionFragment, RemoteProviderEndpoint, fetch_remote_predictions

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "CascadeKitError",
    "CascadeSpec",
    "DEFER",
    "Decision",
    "DelayProfile",
    "EnsembleVote",
    "ExampleTrace",
    "ExitHistogram",
    "GpuPriceList",
    "ModelProfile",
    "PredictionFragment",
    "PredictionTable",
    "ReductionSummary",
    "RemoteError",
    "RemoteProviderEndpoint",
    "SweepPoint",
    "SweepSpec",
    "SyntheticSpec",
    "TierCost",
    "TierMetrics",
    "TierSpec",
    "TraceRow",
    "ValidationError",
    "WrongAgreementRow",
    "aggregate",
    "brute_force_min_risk",
    "builtin_fixture_path",
    "comm_latency",
    "confidence_deferral",
    "default_prices_path",
    "ensemble_votes",
    "exit_distribution",
    "fetch_remote_predictions",
    "generate_synthetic",
    "gpu_dollar_total",
    "load_label_map",
    "load_predictions",
    "load_prices",
    "load_profiles",
    "load_tier_metrics",
    "majority_vote",
    "make_delay_profile",
    "oracle_deferral",
    "pareto_frontier",
    "read_traces",
    "reduction_summary",
    "run_cascade",
    "run_oracle_two_model",
    "run_woc",
    "sweep",
    "tier_cost",
    "vote_deferral",
    "write_predictions",
    "write_traces",
    "wrong_agreements",
]
