"""Latent-space classification: sample generation for unseen classes, a single
affine softmax classifier, mean-latent inference, and the gate-free joint
classifier used by the no-gating ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment_trainer import AlignedModel, concat_pos_latents
from .container import read_container, write_container
from .errors import DegenerateTaskError, ShapeError, SplitError, TrainingError, VocabularyError
from .feature_store import LabeledFeatureSet
from .generative_core import encode, reparameterize
from .optim import Adam
from .text_pipeline import PosEmbeddingTable
from .util import softmax


@dataclass
class LatentSampleSet:
    """Latent rows with class labels. per_class_count is set for generated sets
    (where every class has exactly that many rows) and None for encoded real data."""

    latents: np.ndarray
    labels: np.ndarray
    per_class_count: int | None = None

    def __post_init__(self):
        self.latents = np.asarray(self.latents, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.latents.ndim != 2 or self.latents.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"latents {self.latents.shape} do not align with labels {self.labels.shape}"
            )
        if self.per_class_count is not None:
            counts = np.unique(self.labels, return_counts=True)[1]
            if counts.size and not np.all(counts == self.per_class_count):
                raise ShapeError("every class must have exactly per_class_count rows")


def generate_unseen_latents(
    model: AlignedModel,
    table: PosEmbeddingTable,
    unseen_ids: tuple[int, ...],
    per_class_count: int = 500,
    seed: int = 0,
    noise_scale: float = 1.0,
) -> LatentSampleSet:
    """Draw per-class latent samples from the text encoders of each unseen class.

    Each row is the concatenation of a reparameterized verb latent and noun
    latent. noise_scale=0 collapses every draw to the encoder means.
    """
    for cid in unseen_ids:
        if not table.has_class(int(cid)):
            raise VocabularyError(f"unseen class {cid} has no embedding")
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for cid in unseen_ids:
        mu_v, lv_v = encode(model.vae_v, table.verb_vec(cid).astype(np.float64))
        mu_n, lv_n = encode(model.vae_n, table.noun_vec(cid).astype(np.float64))
        eps_v = noise_scale * rng.standard_normal((per_class_count, model.vae_v.latent_dim))
        eps_n = noise_scale * rng.standard_normal((per_class_count, model.vae_n.latent_dim))
        z_v = reparameterize(np.repeat(mu_v, per_class_count, axis=0), np.repeat(lv_v, per_class_count, axis=0), eps_v)
        z_n = reparameterize(np.repeat(mu_n, per_class_count, axis=0), np.repeat(lv_n, per_class_count, axis=0), eps_n)
        blocks.append(concat_pos_latents(z_v, z_n))
        labels.append(np.full(per_class_count, int(cid), dtype=np.int64))
    latents = np.concatenate(blocks, axis=0)
    if latents.shape[1] != model.vae_s.latent_dim:
        raise ShapeError("generated latent width does not match the skeleton latent width")
    return LatentSampleSet(latents, np.concatenate(labels), per_class_count)


def encode_seen_latents(
    model: AlignedModel,
    data: LabeledFeatureSet,
    seed: int = 0,
    per_class_count: int | None = None,
) -> LatentSampleSet:
    """Sampled skeleton latents of real seen-class features.

    With per_class_count unset, one draw per sample. Otherwise each class
    contributes exactly per_class_count draws (rows resampled with
    replacement, fresh reparameterization noise per draw), which balances the
    seen side against generated unseen sample sets.
    """
    rng = np.random.default_rng(seed)
    x = data.features.astype(np.float64)
    if per_class_count is None:
        mu, lv = encode(model.vae_s, x)
        noise = rng.standard_normal(mu.shape)
        return LatentSampleSet(reparameterize(mu, lv, noise), data.labels, None)

    blocks, labels = [], []
    for cid in np.unique(data.labels):
        rows = np.flatnonzero(data.labels == cid)
        take = rows[rng.integers(0, rows.size, size=per_class_count)]
        mu, lv = encode(model.vae_s, x[take])
        noise = rng.standard_normal(mu.shape)
        blocks.append(reparameterize(mu, lv, noise))
        labels.append(np.full(per_class_count, int(cid), dtype=np.int64))
    return LatentSampleSet(np.concatenate(blocks), np.concatenate(labels), per_class_count)


@dataclass
class SoftmaxClassifier:
    """Single affine layer followed by softmax; columns are ordered by class_ids."""

    weight: np.ndarray  # (dim, n_classes)
    bias: np.ndarray  # (n_classes,)
    class_ids: tuple[int, ...]

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if len(set(self.class_ids)) != len(self.class_ids):
            raise SplitError("classifier class_ids contain duplicates")
        if self.weight.shape[1] != len(self.class_ids) or self.bias.shape != (len(self.class_ids),):
            raise ShapeError("classifier parameter shapes do not match class count")

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"classifier input width {x.shape[1]}, expected {self.input_dim}")
        return x @ self.weight + self.bias

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x), axis=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        ids = np.asarray(self.class_ids, dtype=np.int64)
        return ids[np.argmax(self.logits(x), axis=1)]


def train_softmax(
    samples: LatentSampleSet,
    epochs: int = 300,
    learning_rate: float = 1e-3,
    seed: int = 0,
    batch_size: int = 64,
) -> SoftmaxClassifier:
    """Cross-entropy training of the affine softmax layer with Adam; deterministic in seed."""
    x = samples.latents
    class_ids = tuple(int(c) for c in np.unique(samples.labels))
    if len(class_ids) < 2:
        raise DegenerateTaskError("softmax training needs at least two classes")
    col = {c: i for i, c in enumerate(class_ids)}
    y = np.array([col[int(l)] for l in samples.labels], dtype=np.int64)
    n, dim = x.shape
    n_classes = len(class_ids)

    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (dim + n_classes))
    params = {
        "weight": rng.uniform(-bound, bound, size=(dim, n_classes)),
        "bias": np.zeros(n_classes),
    }
    opt = Adam(lr=learning_rate)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x[idx], y[idx]
            probs = softmax(xb @ params["weight"] + params["bias"], axis=1)
            probs[np.arange(idx.size), yb] -= 1.0
            probs /= idx.size
            opt.step(params, {"weight": xb.T @ probs, "bias": probs.sum(axis=0)})
    return SoftmaxClassifier(params["weight"], params["bias"], class_ids)


def zsl_predict(model: AlignedModel, classifier: SoftmaxClassifier, x: np.ndarray) -> np.ndarray:
    """Classify rows of x by their mean skeleton latent (no sampling on this path)."""
    if classifier.input_dim != model.vae_s.latent_dim:
        raise ShapeError(
            f"classifier width {classifier.input_dim} != skeleton latent {model.vae_s.latent_dim}"
        )
    mu, _ = encode(model.vae_s, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return classifier.predict(mu)


def train_joint_classifier(
    model: AlignedModel,
    table: PosEmbeddingTable,
    seen_samples: LatentSampleSet,
    unseen_samples: LatentSampleSet,
    epochs: int = 300,
    learning_rate: float = 1e-3,
    seed: int = 0,
) -> SoftmaxClassifier:
    """One softmax over seen and unseen classes, trained on the pooled sample sets.

    Used only by the gate-free ablation; raises SplitError on id collisions.
    """
    if seen_samples.latents.shape[0] == 0 or unseen_samples.latents.shape[0] == 0:
        raise TrainingError("joint classifier needs non-empty seen and unseen sample sets")
    seen_ids = set(int(c) for c in np.unique(seen_samples.labels))
    unseen_ids = set(int(c) for c in np.unique(unseen_samples.labels))
    clash = seen_ids & unseen_ids
    if clash:
        raise SplitError(f"class id {sorted(clash)[0]} appears on both sides of the joint task")
    pooled = LatentSampleSet(
        np.concatenate([seen_samples.latents, unseen_samples.latents], axis=0),
        np.concatenate([seen_samples.labels, unseen_samples.labels]),
        None,
    )
    return train_softmax(pooled, epochs=epochs, learning_rate=learning_rate, seed=seed)


def save_classifier(clf: SoftmaxClassifier, path: str | Path) -> None:
    write_container(path, {"weight": clf.weight, "bias": clf.bias}, {"class_ids": list(clf.class_ids)})


def load_classifier(path: str | Path) -> SoftmaxClassifier:
    arrays, meta = read_container(path)
    return SoftmaxClassifier(arrays["weight"], arrays["bias"], tuple(meta["class_ids"]))
