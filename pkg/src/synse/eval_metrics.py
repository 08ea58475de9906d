"""Class-balanced accuracy metrics and the combined ZSL/GZSL report."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MetricError, ShapeError


def per_class_mean_accuracy(predictions, labels, class_ids) -> float:
    """Mean over classes of the per-class accuracy, as a percentage.

    Class-balanced: every class contributes equally regardless of its sample
    count. Every class in *class_ids* must have at least one labeled sample.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ShapeError(f"predictions {predictions.shape} vs labels {labels.shape}")
    accs = []
    for cid in class_ids:
        mask = labels == int(cid)
        if not mask.any():
            raise MetricError(f"class {cid} has no test samples")
        accs.append(float(np.mean(predictions[mask] == int(cid))))
    return 100.0 * float(np.mean(accs))


def harmonic_mean(s: float, u: float) -> float:
    """2su/(s+u); zero whenever either accuracy is zero."""
    if s < 0 or u < 0:
        raise MetricError("accuracies must be non-negative")
    if s == 0 or u == 0:
        return 0.0
    return 2.0 * s * u / (s + u)


@dataclass(frozen=True)
class MetricsReport:
    zsl_accuracy: float
    seen_accuracy: float
    unseen_accuracy: float
    harmonic_mean: float
    per_class: dict[int, float]

    def __post_init__(self):
        for name in ("zsl_accuracy", "seen_accuracy", "unseen_accuracy", "harmonic_mean"):
            value = getattr(self, name)
            if not (0.0 <= value <= 100.0):
                raise MetricError(f"{name}={value} outside [0, 100]")

    def to_dict(self) -> dict:
        return {
            "zsl_accuracy": self.zsl_accuracy,
            "seen_accuracy": self.seen_accuracy,
            "unseen_accuracy": self.unseen_accuracy,
            "harmonic_mean": self.harmonic_mean,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        return MetricsReport(
            zsl_accuracy=float(d["zsl_accuracy"]),
            seen_accuracy=float(d["seen_accuracy"]),
            unseen_accuracy=float(d["unseen_accuracy"]),
            harmonic_mean=float(d["harmonic_mean"]),
            per_class={int(k): float(v) for k, v in d["per_class"].items()},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "MetricsReport":
        return MetricsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def assemble_report(zsl_predictions, gzsl_predictions, split, spec) -> MetricsReport:
    """Build the full report from prediction vectors aligned with the split's test sets.

    zsl_predictions covers test_unseen (restricted to unseen classes);
    gzsl_predictions is the (test_seen preds, test_unseen preds) pair over the
    union of all classes. The per_class map holds the gated per-class
    accuracies on both test sets.
    """
    zsl_predictions = np.asarray(zsl_predictions, dtype=np.int64)
    gzsl_seen, gzsl_unseen = (np.asarray(p, dtype=np.int64) for p in gzsl_predictions)
    if zsl_predictions.shape[0] != split.test_unseen.n_samples:
        raise ShapeError(
            f"zsl predictions ({zsl_predictions.shape[0]}) do not align with "
            f"test_unseen ({split.test_unseen.n_samples})"
        )
    if gzsl_seen.shape[0] != split.test_seen.n_samples:
        raise ShapeError("gzsl seen predictions do not align with test_seen")
    if gzsl_unseen.shape[0] != split.test_unseen.n_samples:
        raise ShapeError("gzsl unseen predictions do not align with test_unseen")

    zsl = per_class_mean_accuracy(zsl_predictions, split.test_unseen.labels, spec.unseen_ids)
    s = per_class_mean_accuracy(gzsl_seen, split.test_seen.labels, spec.seen_ids)
    u = per_class_mean_accuracy(gzsl_unseen, split.test_unseen.labels, spec.unseen_ids)

    per_class: dict[int, float] = {}
    for cid in spec.seen_ids:
        mask = split.test_seen.labels == cid
        per_class[int(cid)] = 100.0 * float(np.mean(gzsl_seen[mask] == cid))
    for cid in spec.unseen_ids:
        mask = split.test_unseen.labels == cid
        per_class[int(cid)] = 100.0 * float(np.mean(gzsl_unseen[mask] == cid))

    return MetricsReport(
        zsl_accuracy=zsl,
        seen_accuracy=s,
        unseen_accuracy=u,
        harmonic_mean=harmonic_mean(s, u),
        per_class=per_class,
    )
