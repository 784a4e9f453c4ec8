"""Embedded toy text classifier with analytic gradients.

Mean-pooled bag-of-embeddings with a linear head: intentionally order-blind,
so any pure reordering of an input leaves the prediction exactly unchanged,
while still providing nontrivial input-embedding gradients for token
saliency. All gradients are computed in closed form; training is plain
seeded mini-batch gradient descent for determinism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .corpus import Dataset, Example, tokenize
from .errors import (ArgumentError, DegenerateInputError, TrainingError)
from .gradient import SaliencyScores

UNK = "<unk>"


@dataclass(frozen=True)
class ToyModelParams:
    vocab: tuple[str, ...]            # row 0 is the UNK token
    emb: np.ndarray                   # V x d
    w: np.ndarray                     # (k*d) x N
    b: np.ndarray                     # N
    temperature: float = 1.0
    task_kind: str = "single"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ArgumentError("temperature must be positive")
        k = 2 if self.task_kind == "pair" else 1
        if self.w.shape[0] != k * self.emb.shape[1]:
            raise ArgumentError("head width does not match pooled dimension")

    @property
    def n_classes(self) -> int:
        return self.w.shape[1]

    @property
    def dim(self) -> int:
        return self.emb.shape[1]

    def token_id(self, surface: str) -> int:
        return self._index().get(surface, 0)

    def _index(self) -> dict:
        # lazy vocab index, cached on the instance
        idx = self.__dict__.get("_vocab_index")
        if idx is None:
            idx = {s: i for i, s in enumerate(self.vocab)}
            object.__setattr__(self, "_vocab_index", idx)
        return idx


@dataclass(frozen=True)
class LossConfig:
    kind: str = "cross_entropy"       # cross_entropy | label_smoothing | focal | entropic
    lambda_ls: float = 0.1
    gamma: float = 2.0
    lambda_ent: float = 0.1
    entropy_sign: str = "max"         # max | paper-literal

    def __post_init__(self):
        if self.kind not in ("cross_entropy", "label_smoothing", "focal", "entropic"):
            raise ArgumentError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.lambda_ls < 1.0:
            raise ArgumentError("lambda_ls must be in [0,1)")
        if self.gamma < 0:
            raise ArgumentError("gamma must be >= 0")
        if self.lambda_ent < 0:
            raise ArgumentError("lambda_ent must be >= 0")
        if self.entropy_sign not in ("max", "paper-literal"):
            raise ArgumentError(f"bad entropy_sign {self.entropy_sign!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 16
    learning_rate: float = 5.0
    seed: int = 0
    dim: int = 32

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0 or self.dim < 1:
            raise ArgumentError("TrainConfig values must be positive")


def build_vocab(ds: Dataset) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for ex in ds.examples:
        for t in tokenize(ex.input.text_a):
            seen.setdefault(t.surface)
        if ex.input.text_b is not None:
            for t in tokenize(ex.input.text_b):
                seen.setdefault(t.surface)
    return (UNK,) + tuple(sorted(seen))


def init_params(vocab: Sequence[str], dim: int, n_classes: int,
                task_kind: str, seed: int) -> ToyModelParams:
    rng = np.random.default_rng(seed)
    k = 2 if task_kind == "pair" else 1
    emb = rng.normal(0.0, 0.1, size=(len(vocab), dim))
    w = np.zeros((k * dim, n_classes))
    b = np.zeros(n_classes)
    return ToyModelParams(tuple(vocab), emb, w, b, 1.0, task_kind)


def _side_ids(params: ToyModelParams, text: str) -> np.ndarray:
    ids = np.array([params.token_id(t.surface) for t in tokenize(text)], dtype=int)
    if ids.size == 0:
        raise DegenerateInputError("empty token sequence")
    return ids


def _encode(params: ToyModelParams, ex: Example) -> list[np.ndarray]:
    sides = [_side_ids(params, ex.input.text_a)]
    if params.task_kind == "pair":
        if ex.input.text_b is None:
            raise DegenerateInputError(f"example {ex.id} lacks text_b for a pair model")
        sides.append(_side_ids(params, ex.input.text_b))
    return sides


def _pooled(params: ToyModelParams, sides: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([params.emb[ids].mean(axis=0) for ids in sides])


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def forward(params: ToyModelParams, ex: Example) -> np.ndarray:
    """Class probabilities: softmax((pooled @ W + b) / T)."""
    pooled = _pooled(params, _encode(params, ex))
    logits = pooled @ params.w + params.b
    return _softmax(logits / params.temperature)


def _supervised_loss_and_dz(probs: np.ndarray, y: int, cfg: LossConfig,
                            temperature: float) -> tuple[float, np.ndarray]:
    """Per-example loss value and gradient w.r.t. the raw logits."""
    n = probs.shape[0]
    onehot = np.zeros(n)
    onehot[y] = 1.0
    probs = np.clip(probs, 1e-300, 1.0)
    p_y = probs[y]
    if cfg.kind in ("cross_entropy", "entropic"):
        loss = -np.log(p_y)
        dz = (probs - onehot) / temperature
    elif cfg.kind == "label_smoothing":
        q = (1.0 - cfg.lambda_ls) * onehot + cfg.lambda_ls / n
        loss = -(q * np.log(probs)).sum()
        dz = (probs - q) / temperature
    elif cfg.kind == "focal":
        g = cfg.gamma
        loss = -((1.0 - p_y) ** g) * np.log(p_y)
        dl_dpy = g * (1.0 - p_y) ** (g - 1.0) * np.log(p_y) - (1.0 - p_y) ** g / p_y \
            if g > 0 else -1.0 / p_y
        dpy_dz = p_y * (onehot - probs) / temperature
        dz = dl_dpy * dpy_dz
    else:
        raise ArgumentError(f"unknown loss kind {cfg.kind!r}")
    return float(loss), dz


def _entropy_and_dz(probs: np.ndarray, temperature: float) -> tuple[float, np.ndarray]:
    logp = np.log(np.clip(probs, 1e-300, 1.0))
    h = float(-(probs * logp).sum())
    dh_dz = probs * ((probs * logp).sum() - logp) / temperature
    return h, dh_dz


@dataclass
class ParamGrads:
    emb: np.ndarray
    w: np.ndarray
    b: np.ndarray


def loss(params: ToyModelParams, batch: Sequence[Example], cfg: LossConfig,
         invalid_batch: Sequence[Example] = ()) -> float:
    """Mean batch loss. For the entropic kind the objective is
    L_D - lambda * H(invalid) (entropy maximized; flip via entropy_sign)."""
    total = 0.0
    for ex in batch:
        if ex.gold_label is None:
            raise ArgumentError(f"example {ex.id} lacks a gold label")
        probs = forward(params, ex)
        val, _ = _supervised_loss_and_dz(probs, ex.gold_label, cfg, params.temperature)
        total += val
    result = total / len(batch) if batch else 0.0
    if cfg.kind == "entropic" and invalid_batch:
        h = np.mean([_entropy_and_dz(forward(params, ex), params.temperature)[0]
                     for ex in invalid_batch])
        sign = -1.0 if cfg.entropy_sign == "max" else 1.0
        result += sign * cfg.lambda_ent * float(h)
    return result


def _accumulate(params: ToyModelParams, ex: Example, dz: np.ndarray,
                grads: ParamGrads, scale: float) -> list[np.ndarray]:
    """Backprop dz through head and pooling; returns per-side token grads."""
    sides = _encode(params, ex)
    pooled = _pooled(params, sides)
    grads.w += scale * np.outer(pooled, dz)
    grads.b += scale * dz
    d_pooled = params.w @ dz
    token_grads = []
    offset = 0
    d = params.dim
    for ids in sides:
        seg = d_pooled[offset:offset + d]
        per_token = np.repeat(seg[None, :], len(ids), axis=0) / len(ids)
        for tid, g in zip(ids, per_token):
            grads.emb[tid] += scale * g
        token_grads.append(scale * per_token)
        offset += d
    return token_grads


def grad(params: ToyModelParams, batch: Sequence[Example], cfg: LossConfig,
         invalid_batch: Sequence[Example] = ()) -> tuple[ParamGrads, list[list[np.ndarray]]]:
    """Analytic gradients of the mean batch loss.

    Returns parameter gradients plus, per clean example, per-side arrays of
    input-embedding gradients (one row per token).
    """
    grads = ParamGrads(np.zeros_like(params.emb), np.zeros_like(params.w),
                       np.zeros_like(params.b))
    token_grads: list[list[np.ndarray]] = []
    scale = 1.0 / len(batch) if batch else 0.0
    for ex in batch:
        if ex.gold_label is None:
            raise ArgumentError(f"example {ex.id} lacks a gold label")
        probs = forward(params, ex)
        _, dz = _supervised_loss_and_dz(probs, ex.gold_label, cfg, params.temperature)
        token_grads.append(_accumulate(params, ex, dz, grads, scale))
    if cfg.kind == "entropic" and invalid_batch:
        sign = -1.0 if cfg.entropy_sign == "max" else 1.0
        iscale = sign * cfg.lambda_ent / len(invalid_batch)
        for ex in invalid_batch:
            probs = forward(params, ex)
            _, dh_dz = _entropy_and_dz(probs, params.temperature)
            _accumulate(params, ex, dh_dz, grads, iscale)
    return grads, token_grads


def saliency(params: ToyModelParams, ex: Example, side: str = "a",
             loss_label: Optional[int] = None) -> SaliencyScores:
    """Token scores t_i . dL/dt_i for the cross-entropy loss on one side.

    loss_label defaults to the gold label, falling back to the model's
    prediction when the example is unlabeled.
    """
    probs = forward(params, ex)
    if loss_label is None:
        loss_label = ex.gold_label if ex.gold_label is not None else int(np.argmax(probs))
    _, dz = _supervised_loss_and_dz(probs, loss_label,
                                    LossConfig("cross_entropy"), params.temperature)
    grads = ParamGrads(np.zeros_like(params.emb), np.zeros_like(params.w),
                       np.zeros_like(params.b))
    token_grads = _accumulate(params, ex, dz, grads, 1.0)
    side_idx = 0 if side == "a" or params.task_kind == "single" else 1
    text = ex.input.text_a if side_idx == 0 else ex.input.text_b
    ids = _side_ids(params, text)
    per_token = token_grads[side_idx]
    scores = tuple(float(params.emb[tid] @ g) for tid, g in zip(ids, per_token))
    return SaliencyScores(scores, loss_label)


def train(ds: Dataset, loss_cfg: LossConfig, train_cfg: TrainConfig,
          warm: Optional[ToyModelParams] = None,
          invalid_ds: Optional[Dataset] = None,
          n_classes: Optional[int] = None) -> ToyModelParams:
    """Seeded mini-batch gradient descent; deterministic per seed.

    For the entropic loss, each step pairs a clean mini-batch with a
    mini-batch cycled from invalid_ds.
    """
    if len(ds) == 0:
        raise ArgumentError("cannot train on an empty dataset")
    if warm is not None:
        params = ToyModelParams(warm.vocab, warm.emb.copy(), warm.w.copy(),
                                warm.b.copy(), warm.temperature, warm.task_kind)
    else:
        vocab = build_vocab(ds)
        params = init_params(vocab, train_cfg.dim,
                             n_classes or ds.labels.n_classes,
                             ds.task_kind, train_cfg.seed)
    emb, w, b = params.emb.copy(), params.w.copy(), params.b.copy()
    rng = np.random.default_rng(train_cfg.seed)
    invalid = list(invalid_ds.examples) if invalid_ds is not None else []
    inv_cursor = 0
    step = 0
    for _ in range(train_cfg.epochs):
        order = rng.permutation(len(ds))
        for start in range(0, len(ds), train_cfg.batch_size):
            batch = [ds.examples[i] for i in order[start:start + train_cfg.batch_size]]
            inv_batch: list[Example] = []
            if loss_cfg.kind == "entropic" and invalid:
                for _ in range(min(len(batch), len(invalid))):
                    inv_batch.append(invalid[inv_cursor % len(invalid)])
                    inv_cursor += 1
            cur = ToyModelParams(params.vocab, emb, w, b,
                                 params.temperature, params.task_kind)
            grads, _ = grad(cur, batch, loss_cfg, inv_batch)
            if not (np.isfinite(grads.w).all() and np.isfinite(grads.b).all()
                    and np.isfinite(grads.emb).all()):
                raise TrainingError(f"non-finite gradient at step {step}")
            lr = train_cfg.learning_rate
            emb = emb - lr * grads.emb
            w = w - lr * grads.w
            b = b - lr * grads.b
            step += 1
    return ToyModelParams(params.vocab, emb, w, b, params.temperature, params.task_kind)


def accuracy(params: ToyModelParams, ds: Dataset) -> float:
    correct = 0
    for ex in ds.examples:
        if ex.gold_label is None:
            raise ArgumentError(f"example {ex.id} lacks a gold label")
        if int(np.argmax(forward(params, ex))) == ex.gold_label:
            correct += 1
    return correct / len(ds)


def nll(params: ToyModelParams, ds: Dataset, temperature: Optional[float] = None) -> float:
    t = temperature if temperature is not None else params.temperature
    scaled = replace(params, temperature=t)
    total = 0.0
    for ex in ds.examples:
        probs = forward(scaled, ex)
        total -= float(np.log(max(probs[ex.gold_label], 1e-300)))
    return total / len(ds)


def fit_temperature(params: ToyModelParams, calibration: Dataset,
                    lo: float = 0.25, hi: float = 5.0, step: float = 0.01) -> float:
    """Grid-search T minimizing calibration NLL. Argmax is T-invariant, so
    accuracy never changes; only confidence does."""
    if len(calibration) == 0:
        raise ArgumentError("empty calibration set")
    grid = np.arange(round(lo / step), round(hi / step) + 1) * step
    best_t, best_nll = None, np.inf
    for t in grid:
        val = nll(params, calibration, temperature=float(t))
        if val < best_nll - 1e-12:
            best_t, best_nll = float(t), val
    return round(best_t, 10)


def with_temperature(params: ToyModelParams, t: float) -> ToyModelParams:
    return replace(params, temperature=t)


def save_params(params: ToyModelParams, path, meta: Optional[dict] = None) -> None:
    """Binary file: one JSON header line, then little-endian float64 arrays
    (emb, w, b) in row-major order. A .json sidecar carries provenance."""
    header = {
        "vocab_size": len(params.vocab),
        "dim": params.dim,
        "n_classes": params.n_classes,
        "temperature": params.temperature,
        "task_kind": params.task_kind,
        "vocab": list(params.vocab),
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode("utf-8"))
        for arr in (params.emb, params.w, params.b):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if meta is not None:
        with open(str(path) + ".json", "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2)


def load_params(path) -> ToyModelParams:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        v, d, n = header["vocab_size"], header["dim"], header["n_classes"]
        k = 2 if header["task_kind"] == "pair" else 1
        raw = f.read()
    need = (v * d + k * d * n + n) * 8
    if len(raw) != need:
        raise ArgumentError(f"param file truncated: {len(raw)} bytes, expected {need}")
    buf = np.frombuffer(raw, dtype="<f8")
    emb = buf[: v * d].reshape(v, d).copy()
    w = buf[v * d: v * d + k * d * n].reshape(k * d, n).copy()
    b = buf[v * d + k * d * n:].copy()
    return ToyModelParams(tuple(header["vocab"]), emb, w, b,
                          header["temperature"], header["task_kind"])
