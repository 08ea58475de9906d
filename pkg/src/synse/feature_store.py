"""Feature sets, seen/unseen split specifications, and the zero-shot partition contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import CatalogError, DataError, FormatError, SplitError

FEATURE_DTYPE = np.float32


@dataclass(frozen=True)
class LabeledFeatureSet:
    """A dense matrix of visual feature vectors with per-row integer class labels."""

    features: np.ndarray  # (n_samples, dim) float32
    labels: np.ndarray  # (n_samples,) int64
    source_tag: str = "unknown"

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=FEATURE_DTYPE)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DataError(f"features must be 2-d, got ndim={feats.ndim}")
        if feats.shape[0] < 1:
            raise DataError("feature set must contain at least one row")
        if labels.shape != (feats.shape[0],):
            raise DataError(
                f"labels length {labels.shape} does not match {feats.shape[0]} rows"
            )
        bad = ~np.isfinite(feats)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise DataError(f"non-finite feature value at row {row}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_ids(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, indices: np.ndarray) -> "LabeledFeatureSet":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledFeatureSet(self.features[idx], self.labels[idx], self.source_tag)


def save_feature_set(data: LabeledFeatureSet, path: str | Path) -> None:
    meta = {
        "rows": data.n_samples,
        "cols": data.dim,
        "label_ids": [int(c) for c in data.class_ids()],
        "source_tag": data.source_tag,
        "byte_order": "little",
        "dtype": "float32",
    }
    write_container(path, {"features": data.features, "labels": data.labels}, meta)


def load_feature_set(path: str | Path, expected_dim: int | None = None) -> LabeledFeatureSet:
    """Load a feature container, checking geometry, finiteness and the label catalog."""
    arrays, meta = read_container(path)
    if "features" not in arrays or "labels" not in arrays:
        raise FormatError(f"{path}: feature container must hold 'features' and 'labels'")
    feats = arrays["features"]
    labels = arrays["labels"]
    if feats.ndim != 2:
        raise FormatError(f"{path}: features must be a matrix, got shape {feats.shape}")
    declared_cols = int(meta.get("cols", feats.shape[1]))
    declared_rows = int(meta.get("rows", feats.shape[0]))
    if feats.shape != (declared_rows, declared_cols):
        raise FormatError(
            f"{path}: header declares {declared_rows}x{declared_cols} "
            f"but payload is {feats.shape[0]}x{feats.shape[1]}"
        )
    if expected_dim is not None and feats.shape[1] != expected_dim:
        raise FormatError(
            f"{path}: feature width {feats.shape[1]} found, expected {expected_dim}"
        )
    bad = ~np.isfinite(feats)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise DataError(f"{path}: non-finite feature value at row {row}")
    catalog = meta.get("label_ids")
    if catalog is not None:
        known = set(int(c) for c in catalog)
        unknown = [int(l) for l in np.unique(labels) if int(l) not in known]
        if unknown:
            raise CatalogError(f"{path}: label id {unknown[0]} not in header catalog")
    return LabeledFeatureSet(feats, labels, str(meta.get("source_tag", "unknown")))


@dataclass(frozen=True)
class SplitSpec:
    """Which classes are seen/unseen, and how seen-class samples are carved up.

    Per seen class the carve is: gate_train, gate_val and test_seen fractions
    (floor, minimum one sample each), remainder to train. Unseen classes route
    entirely to test_unseen.
    """

    seen_ids: tuple[int, ...]
    unseen_ids: tuple[int, ...]
    gate_train_fraction: float = 0.05
    gate_val_fraction: float = 0.05
    test_seen_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seen_ids", tuple(int(c) for c in self.seen_ids))
        object.__setattr__(self, "unseen_ids", tuple(int(c) for c in self.unseen_ids))
        if not self.seen_ids or not self.unseen_ids:
            raise SplitError("seen_ids and unseen_ids must both be non-empty")
        overlap = set(self.seen_ids) & set(self.unseen_ids)
        if overlap:
            raise SplitError(f"seen/unseen class sets overlap: {sorted(overlap)}")
        for name, frac in (
            ("gate_train_fraction", self.gate_train_fraction),
            ("gate_val_fraction", self.gate_val_fraction),
            ("test_seen_fraction", self.test_seen_fraction),
        ):
            if not (0.0 < frac < 1.0):
                raise SplitError(f"{name} must lie in (0, 1), got {frac}")
        if self.gate_train_fraction + self.gate_val_fraction + self.test_seen_fraction >= 1.0:
            raise SplitError("carve fractions must sum to less than 1")

    def to_dict(self) -> dict:
        return {
            "seen_ids": list(self.seen_ids),
            "unseen_ids": list(self.unseen_ids),
            "gate_train_fraction": self.gate_train_fraction,
            "gate_val_fraction": self.gate_val_fraction,
            "test_seen_fraction": self.test_seen_fraction,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "SplitSpec":
        return SplitSpec(
            seen_ids=tuple(d["seen_ids"]),
            unseen_ids=tuple(d["unseen_ids"]),
            gate_train_fraction=float(d.get("gate_train_fraction", 0.05)),
            gate_val_fraction=float(d.get("gate_val_fraction", 0.05)),
            test_seen_fraction=float(d.get("test_seen_fraction", 0.2)),
            seed=int(d.get("seed", 0)),
        )


SUBSET_NAMES = ("train", "test_unseen", "test_seen", "gate_train", "gate_val")


@dataclass(frozen=True)
class SplitResult:
    """The five disjoint subsets produced by partition, with original row indices."""

    train: LabeledFeatureSet
    test_unseen: LabeledFeatureSet
    test_seen: LabeledFeatureSet
    gate_train: LabeledFeatureSet
    gate_val: LabeledFeatureSet
    indices: dict[str, np.ndarray] = field(default_factory=dict)

    def subset(self, name: str) -> LabeledFeatureSet:
        return getattr(self, name)


@dataclass(frozen=True)
class Violation:
    subset: str
    sample_index: int
    rule: str

    def __str__(self) -> str:
        return f"{self.subset}[{self.sample_index}]: {self.rule}"


def partition(data: LabeledFeatureSet, spec: SplitSpec) -> SplitResult:
    """Split *data* into train / test_unseen / test_seen / gate_train / gate_val.

    Deterministic in (data, spec): each seen class is shuffled with a child
    seed derived from (spec.seed, class id) and carved per the spec fractions,
    so no unseen-class sample can reach a training-side subset.
    """
    seen = set(spec.seen_ids)
    unseen = set(spec.unseen_ids)
    stray = [int(l) for l in np.unique(data.labels) if int(l) not in seen | unseen]
    if stray:
        raise SplitError(f"label {stray[0]} belongs to neither seen nor unseen set")

    picks: dict[str, list[np.ndarray]] = {name: [] for name in SUBSET_NAMES}
    for cls in spec.unseen_ids:
        idx = np.flatnonzero(data.labels == cls)
        if idx.size == 0:
            raise SplitError(f"unseen class {cls} has no samples in the data")
        picks["test_unseen"].append(idx)

    for cls in spec.seen_ids:
        idx = np.flatnonzero(data.labels == cls)
        if idx.size == 0:
            raise SplitError(f"seen class {cls} has no samples in the data")
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(cls)]))
        order = idx[rng.permutation(idx.size)]
        n = idx.size
        n_gt = max(1, int(np.floor(spec.gate_train_fraction * n)))
        n_gv = max(1, int(np.floor(spec.gate_val_fraction * n)))
        n_ts = max(1, int(np.floor(spec.test_seen_fraction * n)))
        n_tr = n - n_gt - n_gv - n_ts
        if n_tr < 1:
            raise SplitError(
                f"class {cls} has {n} samples, too few to fill train/test_seen/gate subsets"
            )
        cursor = 0
        for name, count in (
            ("gate_train", n_gt),
            ("gate_val", n_gv),
            ("test_seen", n_ts),
            ("train", n_tr),
        ):
            picks[name].append(np.sort(order[cursor : cursor + count]))
            cursor += count

    indices = {}
    subsets = {}
    for name in SUBSET_NAMES:
        if not picks[name]:
            raise SplitError(f"subset {name} is empty")
        idx = np.sort(np.concatenate(picks[name]))
        indices[name] = idx
        subsets[name] = data.subset(idx)
    return SplitResult(indices=indices, **subsets)


def validate_zero_shot(result: SplitResult, spec: SplitSpec) -> list[Violation]:
    """Return every violation of the zero-shot contract in *result* (empty list if clean)."""
    violations: list[Violation] = []
    seen = set(spec.seen_ids)
    unseen = set(spec.unseen_ids)

    membership = {
        "train": seen,
        "test_seen": seen,
        "gate_train": seen,
        "gate_val": seen,
        "test_unseen": unseen,
    }
    for name, allowed in membership.items():
        subset = result.subset(name)
        for pos, label in enumerate(subset.labels):
            if int(label) not in allowed:
                idx = result.indices.get(name)
                sample = int(idx[pos]) if idx is not None and pos < len(idx) else pos
                violations.append(
                    Violation(name, sample, f"label {int(label)} outside allowed class set")
                )

    names = list(result.indices)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            common = np.intersect1d(result.indices[a], result.indices[b])
            for sample in common:
                violations.append(
                    Violation(a, int(sample), f"sample index also present in {b}")
                )
    return violations
