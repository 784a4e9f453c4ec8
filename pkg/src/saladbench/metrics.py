"""Response metrics: Agreement, default-label Agreement, Confidence, ECE,
and report assembly (JSON / CSV / Markdown)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ArgumentError, ConfigError
from .lexical import GRADIENT_KINDS, LEXICAL_KINDS
from .providers import Prediction


def agreement(original: Sequence[Prediction], transformed: Sequence[Prediction]) -> float:
    """Percent of examples whose predicted label survives the transformation."""
    if len(original) != len(transformed) or not original:
        raise ArgumentError("prediction lists must be id-aligned and non-empty")
    for o, t in zip(original, transformed):
        if o.id != t.id:
            raise ArgumentError(f"id mismatch: {o.id!r} vs {t.id!r}")
    same = sum(1 for o, t in zip(original, transformed) if o.predicted == t.predicted)
    return 100.0 * same / len(original)


def default_agreement(transformed: Sequence[Prediction],
                      default_label: Optional[int]) -> float:
    """Percent predicting the task's default label (copy-based transforms)."""
    if default_label is None:
        raise ConfigError("label set has no default label configured")
    if not transformed:
        raise ArgumentError("empty prediction list")
    hits = sum(1 for p in transformed if p.predicted == default_label)
    return 100.0 * hits / len(transformed)


def mean_confidence(preds: Sequence[Prediction]) -> float:
    """Mean probability of the predicted label, as a percent."""
    if not preds:
        raise ArgumentError("empty prediction list")
    return 100.0 * sum(p.confidence for p in preds) / len(preds)


def ece(preds: Sequence[Prediction], gold_labels: Sequence[int], bins: int = 10) -> float:
    """Expected Calibration Error with equal-width confidence bins over (0,1]."""
    if len(preds) != len(gold_labels) or not preds:
        raise ArgumentError("predictions and gold labels must align and be non-empty")
    n = len(preds)
    bin_total = [0] * bins
    bin_correct = [0] * bins
    bin_conf = [0.0] * bins
    for p, y in zip(preds, gold_labels):
        b = min(bins - 1, int(p.confidence * bins))
        if p.confidence == b / bins and b > 0:  # bins are (lo, hi]
            b -= 1
        bin_total[b] += 1
        bin_correct[b] += 1 if p.predicted == y else 0
        bin_conf[b] += p.confidence
    total = 0.0
    for b in range(bins):
        if bin_total[b] == 0:
            continue
        acc = bin_correct[b] / bin_total[b]
        conf = bin_conf[b] / bin_total[b]
        total += (bin_total[b] / n) * abs(acc - conf)
    return total


@dataclass(frozen=True)
class MetricsRow:
    transform: str
    agreement: float
    mean_confidence: float
    n: int
    per_seed: tuple[float, ...] = ()   # shuffle agreement per seed, when applicable

    def __post_init__(self):
        if not (0.0 <= self.agreement <= 100.0 and 0.0 <= self.mean_confidence <= 100.0):
            raise ArgumentError("percentages must lie in [0, 100]")
        if self.n <= 0:
            raise ArgumentError("row needs n > 0")


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[MetricsRow, ...]
    random_baseline: float
    ece: Optional[float] = None
    family_averages: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "rows": [vars(r) | {"per_seed": list(r.per_seed)} for r in self.rows],
            "random_baseline": self.random_baseline,
            "ece": self.ece,
            "family_averages": self.family_averages,
            "provenance": self.provenance,
        }, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["transform", "agreement", "mean_confidence", "n"])
        for r in self.rows:
            writer.writerow([r.transform, f"{r.agreement:.2f}",
                             f"{r.mean_confidence:.2f}", r.n])
        for fam, avg in sorted(self.family_averages.items()):
            writer.writerow([f"avg_{fam}", f"{avg:.2f}", "", ""])
        writer.writerow(["random", f"{self.random_baseline:.2f}", "", ""])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = ["| Transform | Agreement | Confidence | n |",
                 "|---|---|---|---|"]
        for r in self.rows:
            lines.append(f"| {r.transform} | {r.agreement:.2f} "
                         f"| {r.mean_confidence:.2f} | {r.n} |")
        for fam, avg in sorted(self.family_averages.items()):
            lines.append(f"| Avg. {fam.capitalize()} | {avg:.2f} | | |")
        lines.append(f"| Random | {self.random_baseline:.2f} | | |")
        return "\n".join(lines) + "\n"


def build_report(rows: Sequence[MetricsRow], n_classes: int,
                 ece_value: Optional[float] = None,
                 provenance: Optional[dict] = None) -> MetricsReport:
    """Assemble rows with the 100/N random baseline and family averages."""
    if not rows:
        raise ArgumentError("report needs at least one row")
    families = {}
    for fam, kinds in (("lexical", LEXICAL_KINDS), ("gradient", GRADIENT_KINDS)):
        vals = [r.agreement for r in rows if r.transform.split(":")[0] in kinds]
        if vals:
            families[fam] = sum(vals) / len(vals)
    return MetricsReport(tuple(rows), 100.0 / n_classes, ece_value,
                         families, provenance or {})


def report_from_json(text: str) -> MetricsReport:
    obj = json.loads(text)
    rows = tuple(MetricsRow(r["transform"], r["agreement"], r["mean_confidence"],
                            r["n"], tuple(r.get("per_seed", ())))
                 for r in obj["rows"])
    return MetricsReport(rows, obj["random_baseline"], obj.get("ece"),
                         obj.get("family_averages", {}), obj.get("provenance", {}))
