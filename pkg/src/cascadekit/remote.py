"""HTTP client for remote prediction providers.

Fetches per-example labels (and optional scores) for a set of models
from a provider speaking the JSON protocol below, batching example ids
and optionally issuing requests for distinct models concurrently. The
merged result is deterministic regardless of completion order.

Protocol: POST {base_url}/v1/predict with body
``{"model_id": ..., "example_ids": [...]}``; the response carries
``{"predictions": [{"example_id": ..., "label": ..., "score"?: ...}]}``.
Non-200 responses, timeouts, and malformed payloads raise RemoteError
naming the model and batch.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence
from urllib.parse import urlparse

import requests

from .dataset import PredictionTable
from .exceptions import RemoteError, ValidationError

DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True)
class RemoteProviderEndpoint:
    """Location and timeout of a prediction provider."""

    base_url: str
    timeout_ms: int = 10_000

    def __post_init__(self) -> None:
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValidationError(f"malformed base_url {self.base_url!r}")
        if self.timeout_ms <= 0:
            raise ValidationError("timeout_ms must be > 0")

    @property
    def predict_url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/predict"


@dataclass(frozen=True)
class PredictionFragment:
    """Fetched predictions without ground truth.

    Combine with true labels via ``to_table`` to obtain a full
    PredictionTable.
    """

    example_ids: tuple[str, ...]
    model_ids: tuple[str, ...]
    predictions: dict[str, tuple[int, ...]]
    scores: dict[str, tuple[float, ...]]

    def to_table(self, true_labels: Sequence[int], label_space_size: int) -> PredictionTable:
        if len(true_labels) != len(self.example_ids):
            raise ValidationError("true_labels length != fetched example count")
        return PredictionTable(
            label_space_size=label_space_size,
            example_ids=self.example_ids,
            true_labels=tuple(true_labels),
            model_ids=self.model_ids,
            predictions=dict(self.predictions),
            scores=dict(self.scores),
        )


def _parse_batch(
    payload: object,
    model_id: str,
    batch_no: int,
    batch_ids: Sequence[str],
    label_space_size: int,
) -> list[tuple[int, float | None]]:
    where = f"model {model_id!r} batch {batch_no}"
    if not isinstance(payload, dict) or not isinstance(payload.get("predictions"), list):
        raise RemoteError(f"{where}: malformed response, missing 'predictions' list")
    by_id: dict[str, tuple[int, float | None]] = {}
    for entry in payload["predictions"]:
        if not isinstance(entry, dict) or "example_id" not in entry or "label" not in entry:
            raise RemoteError(f"{where}: malformed prediction entry {entry!r}")
        eid = entry["example_id"]
        label = entry["label"]
        if not isinstance(label, int) or isinstance(label, bool):
            raise RemoteError(f"{where}: non-integer label for example {eid!r}")
        if not 0 <= label < label_space_size:
            raise RemoteError(
                f"{where}: example {eid!r} label {label} out of range [0, {label_space_size})"
            )
        score = entry.get("score")
        if score is not None:
            if not isinstance(score, (int, float)) or isinstance(score, bool):
                raise RemoteError(f"{where}: non-numeric score for example {eid!r}")
            score = float(score)
            if not 0.0 <= score <= 1.0:
                raise RemoteError(f"{where}: example {eid!r} score {score} outside [0,1]")
        if eid in by_id:
            raise RemoteError(f"{where}: duplicate example {eid!r} in response")
        by_id[eid] = (label, score)
    missing = [eid for eid in batch_ids if eid not in by_id]
    if missing:
        raise RemoteError(f"{where}: response missing examples {missing}")
    extra = set(by_id) - set(batch_ids)
    if extra:
        raise RemoteError(f"{where}: response has unrequested examples {sorted(extra)}")
    return [by_id[eid] for eid in batch_ids]


def fetch_remote_predictions(
    endpoint: RemoteProviderEndpoint,
    model_ids: Sequence[str],
    example_ids: Sequence[str],
    *,
    label_space_size: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    threads: int = 1,
) -> PredictionFragment:
    """Fetch predictions for every (model, example) pair.

    One request per (model, batch of example ids); requests may run
    concurrently across models and batches. Results are merged in
    requested model/example order, so concurrent and serial fetches are
    identical. A model's score channel is kept only when every example
    of that model carried a score; a partial channel is an error.
    """
    if not model_ids or not example_ids:
        raise ValidationError("model_ids and example_ids must be nonempty")
    if len(set(example_ids)) != len(example_ids):
        raise ValidationError("duplicate example_id in request")
    if len(set(model_ids)) != len(model_ids):
        raise ValidationError("duplicate model_id in request")
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")

    batches = [
        tuple(example_ids[i : i + batch_size]) for i in range(0, len(example_ids), batch_size)
    ]
    jobs = [(mid, bno, batch) for mid in model_ids for bno, batch in enumerate(batches)]
    timeout_s = endpoint.timeout_ms / 1000.0

    def fetch(job: tuple[str, int, tuple[str, ...]]) -> list[tuple[int, float | None]]:
        mid, bno, batch = job
        where = f"model {mid!r} batch {bno}"
        try:
            response = requests.post(
                endpoint.predict_url,
                json={"model_id": mid, "example_ids": list(batch)},
                timeout=timeout_s,
                headers={"Content-Type": "application/json"},
            )
        except requests.Timeout:
            raise RemoteError(f"{where}: request timed out after {endpoint.timeout_ms} ms") from None
        except requests.RequestException as exc:
            raise RemoteError(f"{where}: request failed: {exc}") from None
        if response.status_code != 200:
            raise RemoteError(f"{where}: provider returned HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError:
            raise RemoteError(f"{where}: response is not valid JSON") from None
        return _parse_batch(payload, mid, bno, batch, label_space_size)

    if threads <= 1 or len(jobs) < 2:
        results = [fetch(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fetch, jobs))

    per_model: dict[str, list[tuple[int, float | None]]] = {mid: [] for mid in model_ids}
    for (mid, _, _), rows in zip(jobs, results):
        per_model[mid].extend(rows)

    predictions: dict[str, tuple[int, ...]] = {}
    scores: dict[str, tuple[float, ...]] = {}
    for mid in model_ids:
        rows = per_model[mid]
        predictions[mid] = tuple(label for label, _ in rows)
        got_scores = [s for _, s in rows if s is not None]
        if got_scores and len(got_scores) != len(rows):
            raise RemoteError(
                f"model {mid!r}: scores present for {len(got_scores)} of {len(rows)} examples; "
                "a score channel must cover all examples or none"
            )
        if got_scores:
            scores[mid] = tuple(got_scores)
    return PredictionFragment(
        example_ids=tuple(example_ids),
        model_ids=tuple(model_ids),
        predictions=predictions,
        scores=scores,
    )
