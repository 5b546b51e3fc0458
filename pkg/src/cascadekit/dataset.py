"""Prediction tables, model cost profiles, and synthetic table generation.

Everything downstream (cascade execution, cost accounting, sweeps)
consumes the immutable containers defined here. Labels are dense
integers in [0, L); string class names are translated at ingestion via
an optional sidecar label map.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from importlib.resources import files
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .exceptions import ValidationError

PRED_PREFIX = "pred:"
SCORE_PREFIX = "score:"


def _format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


@dataclass(frozen=True)
class PredictionTable:
    """Per-example true labels plus per-model predictions and optional scores.

    ``predictions`` and ``scores`` map model_id to a tuple aligned with
    ``example_ids`` order. Scores, when present for a model, cover every
    example of that model and lie in [0, 1]. Instances are immutable and
    safe to share across threads.
    """

    label_space_size: int
    example_ids: tuple[str, ...]
    true_labels: tuple[int, ...]
    model_ids: tuple[str, ...]
    predictions: Mapping[str, tuple[int, ...]]
    scores: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.example_ids)
        if n == 0:
            raise ValidationError("table needs at least one example")
        if self.label_space_size < 1:
            raise ValidationError("label_space_size must be >= 1")
        if len(self.true_labels) != n:
            raise ValidationError("true_labels length != example_ids length")
        if len(set(self.example_ids)) != n:
            raise ValidationError("duplicate example_id in table")
        if len(set(self.model_ids)) != len(self.model_ids):
            raise ValidationError("duplicate model_id in table")
        if set(self.predictions) != set(self.model_ids):
            raise ValidationError("predictions must cover exactly the declared model_ids")
        for y in self.true_labels:
            self._check_label(y, "true_label")
        for mid in self.model_ids:
            preds = self.predictions[mid]
            if len(preds) != n:
                raise ValidationError(f"model {mid!r}: {len(preds)} predictions for {n} examples")
            for y in preds:
                self._check_label(y, f"pred:{mid}")
        for mid, svals in self.scores.items():
            if mid not in self.predictions:
                raise ValidationError(f"scores for unknown model {mid!r}")
            if len(svals) != n:
                raise ValidationError(f"model {mid!r}: scores must cover all {n} examples")
            for s in svals:
                if not 0.0 <= s <= 1.0:
                    raise ValidationError(f"model {mid!r}: score {s} outside [0,1]")

    def _check_label(self, y: int, where: str) -> None:
        if not 0 <= y < self.label_space_size:
            raise ValidationError(
                f"{where}: label {y} out of range [0, {self.label_space_size})"
            )

    @cached_property
    def _index(self) -> dict[str, int]:
        return {eid: i for i, eid in enumerate(self.example_ids)}

    @property
    def num_examples(self) -> int:
        return len(self.example_ids)

    @property
    def examples(self) -> tuple[tuple[str, int], ...]:
        return tuple(zip(self.example_ids, self.true_labels))

    def index_of(self, example_id: str) -> int:
        try:
            return self._index[example_id]
        except KeyError:
            raise ValidationError(f"unknown example_id {example_id!r}") from None

    def prediction(self, example_id: str, model_id: str) -> int:
        return self.predictions[model_id][self.index_of(example_id)]

    def has_scores(self, model_id: str) -> bool:
        return model_id in self.scores

    def accuracy(self, model_id: str) -> float:
        """Fraction of examples the model labels correctly."""
        if model_id not in self.predictions:
            raise ValidationError(f"unknown model_id {model_id!r}")
        preds = self.predictions[model_id]
        hits = sum(p == y for p, y in zip(preds, self.true_labels))
        return hits / self.num_examples


@dataclass(frozen=True)
class ModelProfile:
    """Per-model cost card: compute, latency, and the GPU tier it runs on."""

    model_id: str
    flops_per_example: float
    latency_ms: float
    gpu_tier: str

    def __post_init__(self) -> None:
        if self.flops_per_example <= 0:
            raise ValidationError(f"model {self.model_id!r}: flops_per_example must be > 0")
        if self.latency_ms <= 0:
            raise ValidationError(f"model {self.model_id!r}: latency_ms must be > 0")


@dataclass(frozen=True)
class GpuPriceList:
    """Hourly rental price per GPU tier."""

    dollars_per_hour: Mapping[str, float]

    def __post_init__(self) -> None:
        for tier, price in self.dollars_per_hour.items():
            if price <= 0:
                raise ValidationError(f"gpu_tier {tier!r}: price must be > 0")

    def __contains__(self, tier: str) -> bool:
        return tier in self.dollars_per_hour

    def price(self, tier: str) -> float:
        try:
            return self.dollars_per_hour[tier]
        except KeyError:
            raise ValidationError(f"unknown gpu_tier {tier!r}") from None


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the synthetic prediction-table generator.

    ``correlation`` is the probability that a model's correctness draw
    reuses the example's shared difficulty value instead of a private
    one; 0 gives independent models, 1 gives identical correctness masks
    (and identical predictions for equal accuracies).
    """

    num_examples: int
    label_space_size: int
    model_accuracies: tuple[float, ...]
    correlation: float
    seed: int

    def __post_init__(self) -> None:
        if self.num_examples <= 0:
            raise ValidationError("num_examples must be > 0")
        if self.label_space_size < 2:
            raise ValidationError("label_space_size must be >= 2")
        if not self.model_accuracies:
            raise ValidationError("model_accuracies must be nonempty")
        for a in self.model_accuracies:
            if not 0.0 < a <= 1.0:
                raise ValidationError(f"model accuracy {a} outside (0, 1]")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValidationError(f"correlation {self.correlation} outside [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")


def default_prices_path() -> Path:
    """Path of the GPU price list shipped with the package."""
    return Path(str(files("cascadekit").joinpath("data/gpu_prices.csv")))


def builtin_fixture_path(name: str) -> Path:
    """Path of a shipped tier-metrics fixture, e.g. ``cifar10``."""
    path = Path(str(files("cascadekit").joinpath(f"data/fixtures/{name}.csv")))
    if not path.is_file():
        raise ValidationError(f"no builtin fixture named {name!r}")
    return path


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = list(reader)
    return header, rows


def load_predictions(
    path: str | Path,
    *,
    label_space_size: int | None = None,
    label_map: Mapping[str, int] | None = None,
) -> PredictionTable:
    """Load a predictions CSV into a validated table.

    Header contract: ``example_id,true_label,pred:<model_id>[,score:<model_id>]...``.
    Row order of the file is preserved as example order. When
    ``label_map`` is given, label cells may be class names; otherwise
    they must be base-10 integers. When ``label_space_size`` is omitted
    it is inferred (max label + 1, or the label-map size).
    """
    header, rows = _read_rows(path)
    for required in ("example_id", "true_label"):
        if required not in header:
            raise ValidationError(f"{path}: missing required column {required!r}")
    if header[0] != "example_id" or header[1] != "true_label":
        raise ValidationError(f"{path}: header must start with example_id,true_label")

    pred_cols: dict[str, int] = {}
    score_cols: dict[str, int] = {}
    for idx, name in enumerate(header[2:], start=2):
        if name.startswith(PRED_PREFIX):
            pred_cols[name[len(PRED_PREFIX):]] = idx
        elif name.startswith(SCORE_PREFIX):
            score_cols[name[len(SCORE_PREFIX):]] = idx
        else:
            raise ValidationError(f"{path}: unrecognized column {name!r}")
    if not pred_cols:
        raise ValidationError(f"{path}: missing required column 'pred:<model_id>'")
    for mid in score_cols:
        if mid not in pred_cols:
            raise ValidationError(f"{path}: score column for unknown model {mid!r}")

    if label_map is not None:
        inferred_size = len(set(label_map.values()))
    else:
        inferred_size = 0

    def parse_label(cell: str, row_no: int, col: str) -> int:
        if label_map is not None and cell in label_map:
            value = label_map[cell]
        else:
            try:
                value = int(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: row {row_no}, column {col!r}: bad label {cell!r}"
                ) from None
        if value < 0 or (label_space_size is not None and value >= label_space_size):
            bound = label_space_size if label_space_size is not None else "inferred"
            raise ValidationError(
                f"{path}: row {row_no}, column {col!r}: label {value} out of range [0, {bound})"
            )
        return value

    example_ids: list[str] = []
    true_labels: list[int] = []
    seen: set[str] = set()
    model_ids = list(pred_cols)
    preds: dict[str, list[int]] = {mid: [] for mid in model_ids}
    scores: dict[str, list[float]] = {mid: [] for mid in score_cols}

    width = len(header)
    for row_no, row in enumerate(rows, start=2):  # header is row 1
        if len(row) != width:
            raise ValidationError(
                f"{path}: row {row_no}: expected {width} fields, got {len(row)}"
            )
        eid = row[0]
        if eid in seen:
            raise ValidationError(f"{path}: row {row_no}: duplicate example_id {eid!r}")
        seen.add(eid)
        example_ids.append(eid)
        true_labels.append(parse_label(row[1], row_no, "true_label"))
        for mid, idx in pred_cols.items():
            preds[mid].append(parse_label(row[idx], row_no, f"pred:{mid}"))
        for mid, idx in score_cols.items():
            cell = row[idx]
            try:
                s = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: row {row_no}, column 'score:{mid}': bad score {cell!r}"
                ) from None
            if not 0.0 <= s <= 1.0:
                raise ValidationError(
                    f"{path}: row {row_no}, column 'score:{mid}': score {s} outside [0,1]"
                )
            scores[mid].append(s)

    if label_space_size is None:
        observed = max(true_labels + [v for p in preds.values() for v in p], default=0)
        label_space_size = max(inferred_size, observed + 1)

    try:
        return PredictionTable(
            label_space_size=label_space_size,
            example_ids=tuple(example_ids),
            true_labels=tuple(true_labels),
            model_ids=tuple(model_ids),
            predictions={mid: tuple(v) for mid, v in preds.items()},
            scores={mid: tuple(v) for mid, v in scores.items()},
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_predictions(table: PredictionTable, path: str | Path) -> None:
    """Write a table in canonical form: sorted model columns, shortest
    round-trip float formatting, LF line endings."""
    pred_ids = sorted(table.model_ids)
    score_ids = sorted(table.scores)
    header = ["example_id", "true_label"]
    header += [f"{PRED_PREFIX}{mid}" for mid in pred_ids]
    header += [f"{SCORE_PREFIX}{mid}" for mid in score_ids]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, eid in enumerate(table.example_ids):
            row: list[str] = [eid, str(table.true_labels[i])]
            row += [str(table.predictions[mid][i]) for mid in pred_ids]
            row += [_format_float(table.scores[mid][i]) for mid in score_ids]
            writer.writerow(row)


def load_label_map(path: str | Path) -> dict[str, int]:
    """Load a sidecar ``label_index,label_name`` CSV into name -> index."""
    header, rows = _read_rows(path)
    if header != ["label_index", "label_name"]:
        raise ValidationError(f"{path}: label map header must be label_index,label_name")
    mapping: dict[str, int] = {}
    for row_no, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise ValidationError(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
        try:
            idx = int(row[0])
        except ValueError:
            raise ValidationError(f"{path}: row {row_no}: bad label_index {row[0]!r}") from None
        if idx < 0:
            raise ValidationError(f"{path}: row {row_no}: negative label_index {idx}")
        if row[1] in mapping:
            raise ValidationError(f"{path}: row {row_no}: duplicate label_name {row[1]!r}")
        mapping[row[1]] = idx
    return mapping


def load_prices(path: str | Path) -> GpuPriceList:
    """Load a ``gpu_tier,dollars_per_hour`` CSV."""
    header, rows = _read_rows(path)
    if header != ["gpu_tier", "dollars_per_hour"]:
        raise ValidationError(f"{path}: prices header must be gpu_tier,dollars_per_hour")
    prices: dict[str, float] = {}
    for row_no, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise ValidationError(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
        tier = row[0]
        if tier in prices:
            raise ValidationError(f"{path}: row {row_no}: duplicate gpu_tier {tier!r}")
        try:
            price = float(row[1])
        except ValueError:
            raise ValidationError(f"{path}: row {row_no}: bad price {row[1]!r}") from None
        if price <= 0:
            raise ValidationError(
                f"{path}: row {row_no}, column 'dollars_per_hour': price must be > 0"
            )
        prices[tier] = price
    return GpuPriceList(prices)


def load_profiles(path: str | Path, prices: GpuPriceList) -> list[ModelProfile]:
    """Load a ``model_id,flops_per_example,latency_ms,gpu_tier`` CSV.

    Every referenced gpu_tier must exist in ``prices``.
    """
    header, rows = _read_rows(path)
    expected = ["model_id", "flops_per_example", "latency_ms", "gpu_tier"]
    if header != expected:
        raise ValidationError(f"{path}: profiles header must be {','.join(expected)}")
    profiles: list[ModelProfile] = []
    seen: set[str] = set()
    for row_no, row in enumerate(rows, start=2):
        if len(row) != 4:
            raise ValidationError(f"{path}: row {row_no}: expected 4 fields, got {len(row)}")
        mid, flops_s, lat_s, tier = row
        if mid in seen:
            raise ValidationError(f"{path}: row {row_no}: duplicate model_id {mid!r}")
        seen.add(mid)
        try:
            flops = float(flops_s)
            lat = float(lat_s)
        except ValueError:
            raise ValidationError(f"{path}: row {row_no}: bad numeric field") from None
        if tier not in prices:
            raise ValidationError(f"{path}: row {row_no}: unknown gpu_tier {tier!r}")
        try:
            profiles.append(ModelProfile(mid, flops, lat, tier))
        except ValidationError as exc:
            raise ValidationError(f"{path}: row {row_no}: {exc}") from None
    return profiles


def write_profiles(profiles: Iterable[ModelProfile], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model_id", "flops_per_example", "latency_ms", "gpu_tier"])
        for p in profiles:
            writer.writerow(
                [p.model_id, _format_float(p.flops_per_example), _format_float(p.latency_ms), p.gpu_tier]
            )


def generate_synthetic(spec: SyntheticSpec) -> PredictionTable:
    """Generate a prediction table with controllable per-model accuracy
    and cross-model correlation.

    For each example: the true label is uniform over [0, L); a shared
    difficulty draw u and a shared wrong-label pick are made; each model
    flips a coin that with probability ``correlation`` selects u and
    otherwise a private draw v. The model is correct iff the selected
    draw is below its accuracy; a wrong model predicts the shared wrong
    label when its coin chose u, else a private uniformly-wrong label.
    Scores are 1 - draw * (1 - accuracy), clamped to [0, 1].

    Each example consumes its own counter-based substream keyed by
    (seed, example index), so output is byte-identical for a given spec
    regardless of host parallelism or evaluation order. Marginal
    accuracy is exactly ``accuracy_m`` for every correlation value.
    """
    L = spec.label_space_size
    lam = spec.correlation
    accs = spec.model_accuracies
    n_models = len(accs)
    model_ids = tuple(f"m{k + 1}" for k in range(n_models))

    example_ids = tuple(f"e{i}" for i in range(spec.num_examples))
    true_labels = np.empty(spec.num_examples, dtype=np.int64)
    preds = np.empty((n_models, spec.num_examples), dtype=np.int64)
    scores = np.empty((n_models, spec.num_examples), dtype=np.float64)

    for i in range(spec.num_examples):
        rng = np.random.Generator(np.random.Philox(key=(spec.seed << 64) | i))
        y = int(rng.integers(L))
        u = rng.random()
        shared_wrong = int(rng.integers(L - 1))
        coins = rng.random(n_models)
        private = rng.random(n_models)
        private_wrong = rng.integers(0, L - 1, n_models)

        true_labels[i] = y
        for k in range(n_models):
            use_shared = coins[k] < lam
            draw = u if use_shared else private[k]
            if draw < accs[k]:
                preds[k, i] = y
            else:
                wrong = shared_wrong if use_shared else int(private_wrong[k])
                # map [0, L-2] onto the L-1 labels != y
                preds[k, i] = wrong if wrong < y else wrong + 1
            scores[k, i] = min(1.0, max(0.0, 1.0 - draw * (1.0 - accs[k])))

    return PredictionTable(
        label_space_size=L,
        example_ids=example_ids,
        true_labels=tuple(int(v) for v in true_labels),
        model_ids=model_ids,
        predictions={mid: tuple(int(v) for v in preds[k]) for k, mid in enumerate(model_ids)},
        scores={mid: tuple(float(v) for v in scores[k]) for k, mid in enumerate(model_ids)},
    )
