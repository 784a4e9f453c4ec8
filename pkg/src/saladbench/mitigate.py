"""Mitigation strategies and analysis experiments: augmentation with invalid
examples, entropic-regularization training, probability thresholding,
invalid-as-extra-class training, the transferability matrix, and the
train-on-invalid experiment."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .corpus import Dataset, Example, LabelSet
from .errors import ArgumentError, ConfigError
from .gradient import apply_gradient
from .lexical import (ALL_KINDS, GRADIENT_KINDS, LEXICAL_KINDS, PAIR_ONLY_KINDS,
                      TransformSpec, apply_lexical)
from .pbsmt import GeneratorModel, generate_invalid
from .providers import Prediction
from . import toyclf

log = logging.getLogger(__name__)

INVALID_LABEL = "invalid"

# transforms that alter token content (vs. pure reorderings)
CONTENT_CHANGING_KINDS = ("copysort", "drop", "repeat", "replace", "copyone", "pbsmt")


@dataclass(frozen=True)
class MitigationConfig:
    strategy: str = "invalid_class"   # threshold | entropic_threshold | invalid_class
    lambda_ent: float = 0.1
    theta: Optional[float] = None
    augment_fraction: float = 0.5
    transforms: tuple[str, ...] = ALL_KINDS
    accuracy_tolerance: float = 0.03
    grid_step: float = 0.001
    r: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("threshold", "entropic_threshold", "invalid_class"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not 0.0 < self.augment_fraction <= 1.0:
            raise ConfigError("augment_fraction must be in (0,1]")
        bad = set(self.transforms) - set(ALL_KINDS)
        if bad:
            raise ConfigError(f"unknown transforms {sorted(bad)}")


@dataclass(frozen=True)
class MitigationReport:
    strategy: str
    clean_accuracy: float
    invalid_detected: float
    per_transform_detection: dict
    theta: Optional[float] = None
    lambda_ent: Optional[float] = None
    baseline_accuracy: Optional[float] = None

    def __post_init__(self):
        for v in (self.clean_accuracy, self.invalid_detected,
                  *self.per_transform_detection.values()):
            if not 0.0 <= v <= 100.0:
                raise ArgumentError("percentages must lie in [0, 100]")


def applicable_kinds(transforms: Sequence[str], task_kind: str) -> tuple[str, ...]:
    return tuple(k for k in transforms
                 if task_kind == "pair" or k not in PAIR_ONLY_KINDS)


def make_invalid_examples(examples: Sequence[Example], kinds: Sequence[str],
                          task_kind: str, saliency_provider=None,
                          pbsmt_models: Optional[dict[int, GeneratorModel]] = None,
                          vocab: Optional[Sequence[str]] = None,
                          r: float = 0.5, seed: int = 0,
                          invalid_label: Optional[int] = None) -> list[Example]:
    """One invalid example per (source example, transform kind).

    Gradient kinds need a saliency provider, pbsmt needs trained generators;
    unavailable kinds are skipped with a warning.
    """
    kinds = applicable_kinds(kinds, task_kind)
    usable = []
    for kind in kinds:
        if kind in GRADIENT_KINDS and saliency_provider is None:
            log.warning("skipping %s: no saliency provider", kind)
            continue
        if kind == "pbsmt" and not pbsmt_models:
            log.warning("skipping pbsmt: no trained generators")
            continue
        usable.append(kind)
    if not usable:
        raise ConfigError("no applicable transforms for this configuration")

    sal_cache = {}
    sal_a_cache = {}
    if saliency_provider is not None and any(k in GRADIENT_KINDS for k in usable):
        target_kinds = [k for k in usable if k in ("drop", "repeat", "replace")]
        if target_kinds:
            for ex, s in zip(examples, saliency_provider.saliency_batch(examples)):
                sal_cache[ex.id] = s
        if "copyone" in usable:
            side = getattr(saliency_provider, "saliency_side", "a")
            if side != "a" and hasattr(saliency_provider, "saliency_side"):
                saliency_provider.saliency_side = "a"
                try:
                    sal_a_cache = {ex.id: s for ex, s in
                                   zip(examples, saliency_provider.saliency_batch(examples))}
                finally:
                    saliency_provider.saliency_side = side
            else:
                # provider already scores text_a (or is side-agnostic replay)
                sal_a_cache = {ex.id: s for ex, s in
                               zip(examples, saliency_provider.saliency_batch(examples))}

    out: list[Example] = []
    for ex in examples:
        for kind in usable:
            spec = TransformSpec(kind=kind, seed=seed, r=r)
            if kind in LEXICAL_KINDS:
                tx = apply_lexical(ex, spec)
            elif kind in GRADIENT_KINDS:
                scores = sal_a_cache[ex.id] if kind == "copyone" else sal_cache[ex.id]
                tx = apply_gradient(ex, spec, scores, vocab=vocab)
            else:
                tx = generate_invalid(ex, pbsmt_models, task_kind, spec)
            out.append(Example(f"{ex.id}__{kind}", tx.example.input, invalid_label))
    return out


def augment(ds: Dataset, cfg: MitigationConfig, saliency_provider=None,
            pbsmt_models=None, vocab=None) -> tuple[Dataset, tuple[bool, ...]]:
    """Append invalid examples built from a seeded sample of the training set.

    For the invalid_class strategy the invalid examples carry label index N
    (a new class); otherwise they are unlabeled and flagged. Returns the
    augmented dataset and a per-example invalid flag vector.
    """
    rng = random.Random(cfg.seed)
    n_sample = math.ceil(cfg.augment_fraction * len(ds))
    sampled = sorted(rng.sample(range(len(ds)), n_sample))
    sources = [ds.examples[i] for i in sampled]

    invalid_label = ds.labels.n_classes if cfg.strategy == "invalid_class" else None
    invalid = make_invalid_examples(
        sources, cfg.transforms, ds.task_kind, saliency_provider,
        pbsmt_models, vocab, cfg.r, cfg.seed, invalid_label)

    if cfg.strategy == "invalid_class":
        labels = LabelSet(ds.labels.names + (INVALID_LABEL,), ds.labels.default_label)
    else:
        labels = ds.labels
    examples = ds.examples + tuple(invalid)
    flags = (False,) * len(ds.examples) + (True,) * len(invalid)
    return Dataset(examples, labels, ds.task_kind), flags


def balance_clean(augmented: Dataset, flags: Sequence[bool],
                  multiplier: Optional[int] = None) -> Dataset:
    """Oversample the clean portion of an augmented dataset.

    With one invalid example per (source, kind) the invalid class outnumbers
    every task class; duplicating clean examples restores rough class balance
    so the detector does not sacrifice clean accuracy. The default multiplier
    matches the invalid/clean ratio.
    """
    clean = tuple(e for e, f in zip(augmented.examples, flags) if not f)
    invalid = tuple(e for e, f in zip(augmented.examples, flags) if f)
    if not clean:
        raise ArgumentError("augmented dataset has no clean examples")
    if multiplier is None:
        multiplier = max(1, round(len(invalid) / len(clean)))
    if multiplier < 1:
        raise ArgumentError("multiplier must be >= 1")
    return Dataset(clean * multiplier + invalid, augmented.labels,
                   augmented.task_kind)


def train_entropic(warm: toyclf.ToyModelParams, clean: Dataset, invalid: Dataset,
                   lambda_ent: float, train_cfg: toyclf.TrainConfig,
                   entropy_sign: str = "max") -> toyclf.ToyModelParams:
    """Continue training from baseline weights, maximizing prediction entropy
    on invalid examples alongside the clean cross-entropy loss."""
    cfg = toyclf.LossConfig("entropic", lambda_ent=lambda_ent,
                            entropy_sign=entropy_sign)
    return toyclf.train(clean, cfg, train_cfg, warm=warm, invalid_ds=invalid)


def threshold_grid(n_classes: int, step: float = 0.001) -> list[float]:
    lo = 1.0 / n_classes
    grid = []
    k = 0
    while True:
        theta = lo + k * step
        if theta > 1.0 + 1e-12:
            break
        grid.append(min(theta, 1.0))
        k += 1
    if grid[-1] < 1.0:
        grid.append(1.0)
    return grid


def threshold_search(preds_clean: Sequence[Prediction], gold: Sequence[int],
                     preds_invalid: Sequence[Prediction],
                     baseline_accuracy: float, cfg: MitigationConfig) -> float:
    """Grid search over [1/N, 1]: keep thresholds whose clean accuracy stays
    within tolerance of baseline, then pick the one maximizing invalid
    detection (smallest theta on ties)."""
    if not preds_clean or not preds_invalid:
        raise ArgumentError("both prediction sets must be non-empty")
    n_classes = len(preds_clean[0].probs)
    best_theta, best_detect = None, -1.0
    for theta in threshold_grid(n_classes, cfg.grid_step):
        acc = sum(1 for p, y in zip(preds_clean, gold)
                  if p.confidence >= theta and p.predicted == y) / len(preds_clean)
        if acc < baseline_accuracy - cfg.accuracy_tolerance:
            continue
        detect = sum(1 for p in preds_invalid if p.confidence < theta) / len(preds_invalid)
        if detect > best_detect:
            best_theta, best_detect = theta, detect
    if best_theta is None:
        log.warning("no feasible threshold; falling back to 1/N")
        return 1.0 / n_classes
    return best_theta


def train_invalid_class(augmented: Dataset, train_cfg: toyclf.TrainConfig,
                        warm: Optional[toyclf.ToyModelParams] = None
                        ) -> toyclf.ToyModelParams:
    """Standard cross-entropy training over N+1 classes (last = invalid)."""
    if warm is not None:
        # widen the head by one output column, keeping learned weights
        w = np.concatenate([warm.w, np.zeros((warm.w.shape[0], 1))], axis=1)
        b = np.concatenate([warm.b, [0.0]])
        warm = toyclf.ToyModelParams(warm.vocab, warm.emb.copy(), w, b,
                                     warm.temperature, warm.task_kind)
    return toyclf.train(augmented, toyclf.LossConfig("cross_entropy"), train_cfg,
                        warm=warm, n_classes=augmented.labels.n_classes)


def _balanced_union(per_transform: dict[str, list[Example]],
                    seed: int = 0) -> dict[str, list[Example]]:
    """Equal example counts per transform kind."""
    if not per_transform:
        return {}
    n = min(len(v) for v in per_transform.values())
    rng = random.Random(seed)
    out = {}
    for kind, examples in sorted(per_transform.items()):
        idx = sorted(rng.sample(range(len(examples)), n)) if len(examples) > n \
            else range(len(examples))
        out[kind] = [examples[i] for i in idx]
    return out


def evaluate_mitigation(strategy: str, params: toyclf.ToyModelParams,
                        clean_val: Dataset,
                        invalid_by_transform: dict[str, list[Example]],
                        theta: Optional[float] = None,
                        lambda_ent: Optional[float] = None,
                        baseline_accuracy: Optional[float] = None,
                        n_task_classes: Optional[int] = None) -> MitigationReport:
    """Clean accuracy plus %-invalid-detected, overall and per transform.

    Detection: invalid-class strategy predicts the extra class; threshold
    strategies flag confidence below theta. On the clean side an example is
    correct only when predicted valid AND matching gold.
    """
    invalid_by_transform = _balanced_union(invalid_by_transform)
    n_task = n_task_classes or (params.n_classes - 1 if strategy == "invalid_class"
                                else params.n_classes)

    def is_flagged(probs: np.ndarray) -> bool:
        if strategy == "invalid_class":
            return int(np.argmax(probs)) == n_task
        return float(np.max(probs)) < theta

    correct = 0
    for ex in clean_val.examples:
        probs = toyclf.forward(params, ex)
        if not is_flagged(probs) and int(np.argmax(probs[:n_task])) == ex.gold_label:
            correct += 1
    clean_acc = 100.0 * correct / len(clean_val)

    per_transform = {}
    total_flagged, total_n = 0, 0
    for kind, examples in invalid_by_transform.items():
        flagged = sum(1 for ex in examples if is_flagged(toyclf.forward(params, ex)))
        per_transform[kind] = 100.0 * flagged / len(examples)
        total_flagged += flagged
        total_n += len(examples)
    overall = 100.0 * total_flagged / total_n if total_n else 0.0

    return MitigationReport(strategy, clean_acc, overall, per_transform,
                            theta=theta, lambda_ent=lambda_ent,
                            baseline_accuracy=baseline_accuracy)


def transfer_matrix(ds_train: Dataset, invalid_train_by_kind: dict[str, list[Example]],
                    invalid_val_by_kind: dict[str, list[Example]],
                    train_cfg: toyclf.TrainConfig,
                    warm: Optional[toyclf.ToyModelParams] = None
                    ) -> tuple[list[str], np.ndarray]:
    """Detection rates of invalid-class detectors trained on one kind and
    evaluated on every kind. Rows = training kind, columns = eval kind."""
    kinds = sorted(set(invalid_train_by_kind) & set(invalid_val_by_kind))
    if not kinds:
        raise ArgumentError("no transform kinds shared between train and eval sets")
    n_task = ds_train.labels.n_classes
    labels = LabelSet(ds_train.labels.names + (INVALID_LABEL,),
                      ds_train.labels.default_label)
    matrix = np.zeros((len(kinds), len(kinds)))
    for i, train_kind in enumerate(kinds):
        invalid = [Example(ex.id, ex.input, n_task)
                   for ex in invalid_train_by_kind[train_kind]]
        augmented = Dataset(ds_train.examples + tuple(invalid), labels,
                            ds_train.task_kind)
        params = train_invalid_class(augmented, train_cfg, warm=warm)
        for j, eval_kind in enumerate(kinds):
            examples = invalid_val_by_kind[eval_kind]
            flagged = sum(
                1 for ex in examples
                if int(np.argmax(toyclf.forward(params, ex))) == n_task)
            matrix[i, j] = 100.0 * flagged / len(examples)
    return kinds, matrix


def train_on_invalid_experiment(ds_train: Dataset, ds_val: Dataset, kind: str,
                                train_cfg: toyclf.TrainConfig,
                                saliency_provider=None, pbsmt_models=None,
                                vocab=None, r: float = 0.5, seed: int = 0) -> float:
    """Transform the whole training set (labels kept), train from scratch,
    and report accuracy on the untransformed validation set."""
    invalid = make_invalid_examples(ds_train.examples, [kind], ds_train.task_kind,
                                    saliency_provider, pbsmt_models, vocab, r, seed)
    transformed = tuple(
        Example(src.id, inv.input, src.gold_label)
        for src, inv in zip(ds_train.examples, invalid))
    ds = Dataset(transformed, ds_train.labels, ds_train.task_kind)
    params = toyclf.train(ds, toyclf.LossConfig("cross_entropy"), train_cfg)
    return toyclf.accuracy(params, ds_val)
