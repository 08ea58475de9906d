"""Confidence-gated generalized zero-shot prediction.

A binary logistic gate looks at the top-k calibrated probabilities of the seen
classifier and the top-k probabilities of the unseen classifier and routes the
sample: hard mode picks exactly one classifier, soft mode mixes the two
distributions with weights (g, 1 - g).

The training set contains no real unseen visual samples, so unseen-side gate
examples are synthesized by decoding unseen-class text latents through the
skeleton decoder and running the pseudo features through both classifiers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression

from .alignment_trainer import AlignedModel
from .errors import ParameterError, ShapeError, TrainingError, TuningError
from .eval_metrics import harmonic_mean, per_class_mean_accuracy
from .generative_core import decode, encode
from .text_pipeline import PosEmbeddingTable
from .util import sigmoid, softmax
from .zsl_head import SoftmaxClassifier, generate_unseen_latents

GATE_MODES = ("hard", "soft")


def temperature_scale(logits: np.ndarray, temperature: float) -> np.ndarray:
    """softmax(logits / T). T must be positive; T = 1 is the plain softmax."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    return softmax(np.asarray(logits, dtype=np.float64) / temperature, axis=-1)


@dataclass(frozen=True)
class GateFeatures:
    """Length-2k vector: descending top-k seen probabilities, then unseen ones."""

    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=np.float64))
        if self.vector.ndim != 1 or self.vector.shape[0] % 2 != 0:
            raise ShapeError("gate feature vector must be 1-d with even length")


def _top_k_desc(probs: np.ndarray, k: int) -> np.ndarray:
    # Stable argsort on negated values: ties resolve to the lower class index.
    order = np.argsort(-probs, axis=-1, kind="stable")
    return np.take_along_axis(probs, order, axis=-1)[..., :k]


def build_gate_features(c_s: np.ndarray, c_u: np.ndarray, k: int) -> GateFeatures:
    c_s = np.asarray(c_s, dtype=np.float64)
    c_u = np.asarray(c_u, dtype=np.float64)
    if k < 1 or k > min(c_s.shape[-1], c_u.shape[-1]):
        raise ParameterError(
            f"k={k} must lie in [1, min({c_s.shape[-1]}, {c_u.shape[-1]})]"
        )
    return GateFeatures(np.concatenate([_top_k_desc(c_s, k), _top_k_desc(c_u, k)]))


def build_gate_feature_matrix(c_s: np.ndarray, c_u: np.ndarray, k: int) -> np.ndarray:
    """Row-wise gate features for batches of probability vectors."""
    c_s = np.atleast_2d(np.asarray(c_s, dtype=np.float64))
    c_u = np.atleast_2d(np.asarray(c_u, dtype=np.float64))
    if k < 1 or k > min(c_s.shape[1], c_u.shape[1]):
        raise ParameterError(f"k={k} out of range for class counts {c_s.shape[1]}/{c_u.shape[1]}")
    return np.concatenate([_top_k_desc(c_s, k), _top_k_desc(c_u, k)], axis=1)


@dataclass
class GateModel:
    temperature: float
    k: int
    weight: np.ndarray  # (2k,)
    bias: float
    threshold: float
    mode: str = "hard"
    regularization: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0 or not np.isfinite(self.temperature):
            raise ParameterError(f"gate temperature must be finite and positive, got {self.temperature}")
        if self.k < 1:
            raise ParameterError("gate k must be at least 1")
        if not (0.0 < self.threshold < 1.0):
            raise ParameterError(f"gate threshold must lie in (0, 1), got {self.threshold}")
        if self.mode not in GATE_MODES:
            raise ParameterError(f"gate mode must be one of {GATE_MODES}, got {self.mode!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.shape != (2 * self.k,):
            raise ShapeError(f"gate weight shape {self.weight.shape}, expected ({2 * self.k},)")

    def probability_seen(self, features: np.ndarray) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return sigmoid(f @ self.weight + self.bias)

    def save(self, path: str | Path) -> None:
        doc = {
            "temperature": self.temperature,
            "k": self.k,
            "threshold": self.threshold,
            "mode": self.mode,
            "C": self.regularization,
            "weight": self.weight.tolist(),
            "bias": float(self.bias),
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "GateModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return GateModel(
            temperature=float(doc["temperature"]),
            k=int(doc["k"]),
            weight=np.asarray(doc["weight"], dtype=np.float64),
            bias=float(doc["bias"]),
            threshold=float(doc["threshold"]),
            mode=doc.get("mode", "hard"),
            regularization=float(doc.get("C", 1.0)),
        )


def train_gate(
    seen_examples: np.ndarray,
    unseen_examples: np.ndarray,
    regularization: float = 1.0,
) -> tuple[np.ndarray, float]:
    """Fit the binary logistic gate (label 1 = seen) with a deterministic solver.

    Returns (weight vector, bias). regularization is the aggressiveness
    parameter C of the regularized maximum-likelihood objective.
    """
    seen_examples = np.atleast_2d(np.asarray(seen_examples, dtype=np.float64))
    unseen_examples = np.atleast_2d(np.asarray(unseen_examples, dtype=np.float64))
    if seen_examples.shape[0] == 0 or unseen_examples.shape[0] == 0:
        raise TrainingError("gate training needs examples on both sides")
    x = np.concatenate([seen_examples, unseen_examples], axis=0)
    y = np.concatenate([np.ones(seen_examples.shape[0]), np.zeros(unseen_examples.shape[0])])
    clf = LogisticRegression(C=regularization, solver="lbfgs", max_iter=2000, tol=1e-10)
    clf.fit(x, y)
    return clf.coef_[0].copy(), float(clf.intercept_[0])


@dataclass
class GatePack:
    """Classifier outputs for a set of gate examples, before feature construction.

    Kept in raw form (seen logits, unseen probabilities) because the seen side
    is re-calibrated for every candidate temperature during tuning.
    """

    seen_logits: np.ndarray  # (n, |seen classes|)
    unseen_probs: np.ndarray  # (n, |unseen classes|)
    is_seen: np.ndarray  # (n,) bool
    class_labels: np.ndarray  # (n,) true class ids

    def __post_init__(self):
        n = self.seen_logits.shape[0]
        if not (self.unseen_probs.shape[0] == n and self.is_seen.shape[0] == n and self.class_labels.shape[0] == n):
            raise ShapeError("gate pack arrays must share their leading dimension")

    @staticmethod
    def concatenate(a: "GatePack", b: "GatePack") -> "GatePack":
        return GatePack(
            seen_logits=np.concatenate([a.seen_logits, b.seen_logits], axis=0),
            unseen_probs=np.concatenate([a.unseen_probs, b.unseen_probs], axis=0),
            is_seen=np.concatenate([a.is_seen, b.is_seen]),
            class_labels=np.concatenate([a.class_labels, b.class_labels]),
        )


def real_gate_pack(
    x: np.ndarray,
    labels: np.ndarray,
    model: AlignedModel,
    seen_classifier: SoftmaxClassifier,
    zsl_classifier: SoftmaxClassifier,
) -> GatePack:
    """Gate pack for held-out real seen-class samples."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu, _ = encode(model.vae_s, x)
    return GatePack(
        seen_logits=seen_classifier.logits(x),
        unseen_probs=zsl_classifier.probabilities(mu),
        is_seen=np.ones(x.shape[0], dtype=bool),
        class_labels=np.asarray(labels, dtype=np.int64),
    )


def residual_noise_std(model: AlignedModel, features: np.ndarray) -> np.ndarray:
    """Per-dimension std of what the skeleton decoder cannot reconstruct.

    Estimated on training-side data only; used to make synthesized gate
    negatives match the noise level of real features.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    mu, _ = encode(model.vae_s, x)
    residual = x - decode(model.vae_s, mu)
    return residual.std(axis=0)


def synthesize_unseen_gate_pack(
    model: AlignedModel,
    table: PosEmbeddingTable,
    unseen_ids: tuple[int, ...],
    per_class_count: int,
    seed: int,
    seen_classifier: SoftmaxClassifier,
    zsl_classifier: SoftmaxClassifier,
    noise_std: np.ndarray | None = None,
) -> GatePack:
    """Unseen-side gate examples from decoded text latents.

    Text latents of each unseen class are decoded through the skeleton decoder
    into pseudo visual features, which then flow through both classifiers
    exactly like real samples would. Passing a per-dimension noise_std (from
    residual_noise_std) perturbs the pseudo features so their confidence
    patterns match real, noisy inputs.
    """
    samples = generate_unseen_latents(model, table, unseen_ids, per_class_count, seed)
    pseudo_x = decode(model.vae_s, samples.latents)
    if noise_std is not None:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
        pseudo_x = pseudo_x + rng.standard_normal(pseudo_x.shape) * np.asarray(noise_std)
    mu, _ = encode(model.vae_s, pseudo_x)
    return GatePack(
        seen_logits=seen_classifier.logits(pseudo_x),
        unseen_probs=zsl_classifier.probabilities(mu),
        is_seen=np.zeros(pseudo_x.shape[0], dtype=bool),
        class_labels=samples.labels,
    )


def _combine(
    c_s: np.ndarray, c_u: np.ndarray, g: np.ndarray, mode: str, threshold: float
) -> np.ndarray:
    """Full distribution over seen-then-unseen class columns."""
    n, n_seen = c_s.shape
    n_unseen = c_u.shape[1]
    dist = np.zeros((n, n_seen + n_unseen))
    if mode == "hard":
        seen_rows = g >= threshold
        dist[seen_rows, :n_seen] = c_s[seen_rows]
        dist[~seen_rows, n_seen:] = c_u[~seen_rows]
    else:
        dist[:, :n_seen] = g[:, None] * c_s
        dist[:, n_seen:] = (1.0 - g)[:, None] * c_u
    return dist


def gzsl_predict(
    x: np.ndarray,
    seen_classifier: SoftmaxClassifier,
    model: AlignedModel,
    zsl_classifier: SoftmaxClassifier,
    gate: GateModel,
) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """Gated prediction over all classes.

    Returns (predicted ids, per-row distribution over seen-then-unseen class
    columns, the combined class-id order). Accepts a single row or a batch.
    """
    single = np.asarray(x).ndim == 1
    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    c_s = temperature_scale(seen_classifier.logits(xb), gate.temperature)
    mu, _ = encode(model.vae_s, xb)
    c_u = zsl_classifier.probabilities(mu)
    feats = build_gate_feature_matrix(c_s, c_u, gate.k)
    g = gate.probability_seen(feats)
    dist = _combine(c_s, c_u, g, gate.mode, gate.threshold)
    order = tuple(seen_classifier.class_ids) + tuple(zsl_classifier.class_ids)
    preds = np.asarray(order, dtype=np.int64)[np.argmax(dist, axis=1)]
    if single:
        return preds[0], dist[0], order
    return preds, dist, order


def _pack_predictions(
    pack: GatePack, weight: np.ndarray, bias: float, temperature: float, k: int, mode: str, threshold: float,
    seen_ids: tuple[int, ...], unseen_ids: tuple[int, ...],
) -> np.ndarray:
    c_s = temperature_scale(pack.seen_logits, temperature)
    feats = build_gate_feature_matrix(c_s, pack.unseen_probs, k)
    g = sigmoid(feats @ weight + bias)
    dist = _combine(c_s, pack.unseen_probs, g, mode, threshold)
    order = np.asarray(tuple(seen_ids) + tuple(unseen_ids), dtype=np.int64)
    return order[np.argmax(dist, axis=1)]


def tune_gate(
    train_pack: GatePack,
    val_pack: GatePack,
    temperature_grid: tuple[float, ...],
    threshold_grid: tuple[float, ...],
    k: int,
    seen_ids: tuple[int, ...],
    unseen_ids: tuple[int, ...],
    mode: str = "hard",
    regularization: float = 1.0,
) -> GateModel:
    """Exhaustive (temperature, threshold) search maximizing harmonic mean on the
    validation pack. The gate is refit per temperature because its features are
    calibrated probabilities. Ties break to the smallest temperature, then the
    smallest threshold. Returns the gate fitted at the winning settings."""
    if bool(val_pack.is_seen.all()) or not val_pack.is_seen.any():
        raise TuningError("gate validation set must contain both seen and unseen examples")
    val_seen = np.flatnonzero(val_pack.is_seen)
    val_unseen = np.flatnonzero(~val_pack.is_seen)
    seen_classes = sorted(set(int(c) for c in val_pack.class_labels[val_seen]))
    unseen_classes = sorted(set(int(c) for c in val_pack.class_labels[val_unseen]))

    best = None  # (h, T, tau, weight, bias)
    for temperature in sorted(temperature_grid):
        c_s_train = temperature_scale(train_pack.seen_logits, temperature)
        feats_train = build_gate_feature_matrix(c_s_train, train_pack.unseen_probs, k)
        weight, bias = train_gate(
            feats_train[train_pack.is_seen], feats_train[~train_pack.is_seen], regularization
        )
        for threshold in sorted(threshold_grid):
            preds = _pack_predictions(
                val_pack, weight, bias, temperature, k, mode, threshold, seen_ids, unseen_ids
            )
            s = per_class_mean_accuracy(
                preds[val_seen], val_pack.class_labels[val_seen], seen_classes
            )
            u = per_class_mean_accuracy(
                preds[val_unseen], val_pack.class_labels[val_unseen], unseen_classes
            )
            h = harmonic_mean(s, u)
            if best is None or h > best[0] + 1e-12:
                best = (h, temperature, threshold, weight, bias)
    _, temperature, threshold, weight, bias = best
    return GateModel(
        temperature=temperature,
        k=k,
        weight=weight,
        bias=bias,
        threshold=threshold,
        mode=mode,
        regularization=regularization,
    )
