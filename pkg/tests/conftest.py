from __future__ import annotations

import random

import pytest

from cascadekit import GpuPriceList, ModelProfile, PredictionTable


def make_random_table(
    rng: random.Random,
    num_examples: int,
    label_space: int = 3,
    num_models: int = 2,
    with_scores: bool = False,
) -> PredictionTable:
    """Unstructured random table, independent of the synthetic generator."""
    model_ids = tuple(f"m{k + 1}" for k in range(num_models))
    true_labels = tuple(rng.randrange(label_space) for _ in range(num_examples))
    predictions = {
        mid: tuple(rng.randrange(label_space) for _ in range(num_examples)) for mid in model_ids
    }
    scores = (
        {mid: tuple(rng.random() for _ in range(num_examples)) for mid in model_ids}
        if with_scores
        else {}
    )
    return PredictionTable(
        label_space_size=label_space,
        example_ids=tuple(f"e{i}" for i in range(num_examples)),
        true_labels=true_labels,
        model_ids=model_ids,
        predictions=predictions,
        scores=scores,
    )


@pytest.fixture
def tiny_table() -> PredictionTable:
    """Four examples, three models, hand-checkable."""
    return PredictionTable(
        label_space_size=3,
        example_ids=("a", "b", "c", "d"),
        true_labels=(0, 1, 2, 0),
        model_ids=("m1", "m2", "m3"),
        predictions={
            "m1": (0, 1, 1, 0),
            "m2": (0, 1, 2, 1),
            "m3": (0, 1, 2, 0),
        },
        scores={
            "m1": (0.9, 0.8, 0.4, 0.7),
            "m2": (0.95, 0.85, 0.9, 0.3),
            "m3": (0.99, 0.97, 0.96, 0.98),
        },
    )


@pytest.fixture
def prices() -> GpuPriceList:
    return GpuPriceList({"V100": 0.50, "A6000": 0.80, "A100": 1.29, "H100": 2.49})


@pytest.fixture
def profiles() -> list[ModelProfile]:
    return [
        ModelProfile("m1", 1e6, 2.0, "V100"),
        ModelProfile("m2", 2e6, 3.0, "V100"),
        ModelProfile("m3", 9e6, 8.0, "A100"),
    ]
