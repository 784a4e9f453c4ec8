"""Prediction providers: embedded toy model, replay files, remote HTTP.

All providers share one contract: `predict_batch` returns one Prediction per
input in request order, and `saliency_batch` (when supported) returns scores
aligned with the word tokenization of the targeted side.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import requests

from .corpus import Example, tokenize
from .errors import (ArgumentError, CapabilityError, ContractError,
                     MissingPredictionError, TransportError)
from .gradient import SaliencyScores
from . import toyclf

RENORM_TOL = 1e-3


@dataclass(frozen=True)
class Prediction:
    id: str
    probs: tuple[float, ...]
    predicted: int
    confidence: float

    @staticmethod
    def from_probs(example_id: str, probs: Sequence[float]) -> "Prediction":
        arr = np.asarray(probs, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ContractError(f"bad probability vector for id {example_id!r}")
        if (arr < 0).any():
            raise ContractError(f"negative probability for id {example_id!r}")
        total = arr.sum()
        if abs(total - 1.0) > RENORM_TOL:
            raise ContractError(
                f"probabilities for id {example_id!r} sum to {total:.6f}")
        arr = arr / total
        predicted = int(np.argmax(arr))  # argmax tie -> lowest index
        return Prediction(example_id, tuple(float(p) for p in arr),
                          predicted, float(arr[predicted]))


@dataclass(frozen=True)
class ProviderDescriptor:
    kind: str                 # embedded | replay | http
    location: str = ""
    supports_saliency: bool = False


class EmbeddedProvider:
    """Wraps a ToyModelParams; fully deterministic, supports saliency."""

    supports_saliency = True

    def __init__(self, params: toyclf.ToyModelParams, saliency_side: Optional[str] = None):
        self.params = params
        # gradient transforms target text_b on pair tasks, text_a otherwise
        self.saliency_side = saliency_side or ("b" if params.task_kind == "pair" else "a")

    def describe(self) -> ProviderDescriptor:
        return ProviderDescriptor("embedded", supports_saliency=True)

    def predict_batch(self, inputs: Sequence[Example]) -> list[Prediction]:
        return [Prediction.from_probs(ex.id, toyclf.forward(self.params, ex))
                for ex in inputs]

    def saliency_batch(self, inputs: Sequence[Example],
                       loss_labels: Optional[Sequence[Optional[int]]] = None
                       ) -> list[SaliencyScores]:
        if loss_labels is None:
            loss_labels = [None] * len(inputs)
        return [toyclf.saliency(self.params, ex, self.saliency_side, y)
                for ex, y in zip(inputs, loss_labels)]


class ReplayProvider:
    """Replays predictions (and optionally saliency) from JSONL fixtures."""

    def __init__(self, predictions_path, saliency_path=None):
        self._preds: dict[str, list[float]] = {}
        with open(predictions_path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    obj = json.loads(line)
                    self._preds[str(obj["id"])] = obj["probs"]
        self._saliency: dict[str, dict] = {}
        if saliency_path is not None:
            with open(saliency_path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        obj = json.loads(line)
                        self._saliency[str(obj["id"])] = obj
        self.supports_saliency = saliency_path is not None
        self._location = str(predictions_path)

    def describe(self) -> ProviderDescriptor:
        return ProviderDescriptor("replay", self._location, self.supports_saliency)

    def predict_batch(self, inputs: Sequence[Example]) -> list[Prediction]:
        out = []
        for ex in inputs:
            if ex.id not in self._preds:
                raise MissingPredictionError(f"no replay prediction for id {ex.id!r}")
            out.append(Prediction.from_probs(ex.id, self._preds[ex.id]))
        return out

    def saliency_batch(self, inputs, loss_labels=None) -> list[SaliencyScores]:
        if not self.supports_saliency:
            raise CapabilityError("replay provider has no saliency file")
        out = []
        for ex in inputs:
            if ex.id not in self._saliency:
                raise MissingPredictionError(f"no replay saliency for id {ex.id!r}")
            obj = self._saliency[ex.id]
            out.append(SaliencyScores(tuple(float(s) for s in obj["scores"]),
                                      int(obj["loss_label"])))
        return out


class HttpProvider:
    """POSTs batches to /v1/predict on a remote model server."""

    def __init__(self, base_url: str, supports_saliency: bool = False,
                 timeout_ms: Optional[int] = None):
        self.base_url = base_url.rstrip("/")
        self.supports_saliency = supports_saliency
        if timeout_ms is None:
            timeout_ms = int(os.environ.get("SALADBENCH_HTTP_TIMEOUT_MS", "30000"))
        self.timeout = timeout_ms / 1000.0

    def describe(self) -> ProviderDescriptor:
        return ProviderDescriptor("http", self.base_url, self.supports_saliency)

    def _post(self, inputs: Sequence[Example], want_saliency: bool,
              loss_labels: Optional[Sequence[Optional[int]]]) -> dict:
        body = {
            "inputs": [
                {"id": ex.id, "text_a": ex.input.text_a, "text_b": ex.input.text_b}
                for ex in inputs
            ],
            "want_saliency": want_saliency,
            "loss_labels": list(loss_labels) if loss_labels is not None else None,
        }
        try:
            resp = requests.post(self.base_url + "/v1/predict", json=body,
                                 timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"request failed: {e}") from e
        if resp.status_code != 200:
            raise TransportError(
                f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
        except ValueError:
            raise TransportError(f"malformed JSON body: {resp.text[:200]}") from None
        if "probs" not in payload or len(payload["probs"]) != len(inputs):
            raise ContractError("response probs missing or misaligned")
        return payload

    def predict_batch(self, inputs: Sequence[Example]) -> list[Prediction]:
        payload = self._post(inputs, False, None)
        return [Prediction.from_probs(ex.id, probs)
                for ex, probs in zip(inputs, payload["probs"])]

    def saliency_batch(self, inputs, loss_labels=None) -> list[SaliencyScores]:
        if not self.supports_saliency:
            raise CapabilityError("http provider not configured for saliency")
        payload = self._post(inputs, True, loss_labels)
        sal = payload.get("saliency")
        if sal is None or len(sal) != len(inputs):
            raise ContractError("response saliency missing or misaligned")
        labels = loss_labels or [0] * len(inputs)
        return [SaliencyScores(tuple(float(s) for s in scores),
                               int(y) if y is not None else 0)
                for scores, y in zip(sal, labels)]


def open_provider(desc: ProviderDescriptor, params=None):
    if desc.kind == "embedded":
        if params is None:
            params = toyclf.load_params(desc.location)
        return EmbeddedProvider(params)
    if desc.kind == "replay":
        pred_path = desc.location
        sal_path = None
        if "," in desc.location:
            pred_path, sal_path = desc.location.split(",", 1)
        return ReplayProvider(pred_path, sal_path)
    if desc.kind == "http":
        return HttpProvider(desc.location, desc.supports_saliency)
    raise ArgumentError(f"unknown provider kind {desc.kind!r}")
