"""Joint training of the three modality VAEs under the cross-modal objective.

The skeleton latent is twice as wide as each text latent so that the
concatenated (verb, noun) latent and the skeleton latent are interchangeable
decoder inputs. The total objective is the summed per-modality VAE loss plus
alpha times the cross-modal reconstruction term; beta follows a cyclic ramp
and alpha a delayed step, both functions of the global epoch.

Gradients are computed analytically (the whole graph is affine plus the
reparameterization and the residual-norm terms) and verified against central
finite differences in the test suite.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ParameterError, ShapeError, VocabularyError
from .feature_store import LabeledFeatureSet
from .generative_core import VaePair, init_vae_pair
from .optim import Adam
from .text_pipeline import PosEmbeddingTable
from .util import ROLE_MODEL_INIT, ROLE_TRAIN, derived_seed

# Keeps the residual-norm gradient finite at exactly-zero residuals.
NORM_EPS = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    """Cyclic beta ramp and delayed constant alpha, indexed by epoch within a cycle."""

    cycle_length_epochs: int
    beta_start_epoch: int
    beta_rate_per_epoch: float
    alpha_start_epoch: int
    alpha_value: float = 1.0
    num_cycles: int = 2

    def __post_init__(self):
        if not (0 <= self.beta_start_epoch < self.alpha_start_epoch < self.cycle_length_epochs):
            raise ParameterError(
                "schedule requires beta_start_epoch < alpha_start_epoch < cycle_length_epochs"
            )
        if self.beta_rate_per_epoch < 0 or self.alpha_value < 0:
            raise ParameterError("schedule rates must be non-negative")
        if self.num_cycles < 1:
            raise ParameterError("num_cycles must be at least 1")

    @property
    def total_epochs(self) -> int:
        return self.num_cycles * self.cycle_length_epochs

    def to_dict(self) -> dict:
        return {
            "cycle_length_epochs": self.cycle_length_epochs,
            "beta_start_epoch": self.beta_start_epoch,
            "beta_rate_per_epoch": self.beta_rate_per_epoch,
            "alpha_start_epoch": self.alpha_start_epoch,
            "alpha_value": self.alpha_value,
            "num_cycles": self.num_cycles,
        }

    @staticmethod
    def from_dict(d: dict) -> "AnnealSchedule":
        return AnnealSchedule(
            cycle_length_epochs=int(d["cycle_length_epochs"]),
            beta_start_epoch=int(d["beta_start_epoch"]),
            beta_rate_per_epoch=float(d["beta_rate_per_epoch"]),
            alpha_start_epoch=int(d["alpha_start_epoch"]),
            alpha_value=float(d.get("alpha_value", 1.0)),
            num_cycles=int(d.get("num_cycles", 2)),
        )


# Reference schedules for full-scale dataset runs (5 and 10+ unseen classes).
NTU60_SCHEDULE = AnnealSchedule(1700, 1000, 0.0021, 1400, 1.0, 2)
NTU120_SCHEDULE = AnnealSchedule(1900, 1000, 0.0021, 1500, 1.0, 2)


def anneal_coefficients(global_epoch: int, schedule: AnnealSchedule) -> tuple[float, float]:
    """(beta, alpha) at *global_epoch*; both reset at every cycle boundary."""
    if global_epoch < 0:
        raise ShapeError("global_epoch must be non-negative")
    e = global_epoch % schedule.cycle_length_epochs
    beta = 0.0 if e < schedule.beta_start_epoch else (e - schedule.beta_start_epoch) * schedule.beta_rate_per_epoch
    alpha = 0.0 if e < schedule.alpha_start_epoch else schedule.alpha_value
    return beta, alpha


@dataclass(frozen=True)
class TrainConfig:
    schedule: AnnealSchedule
    skeleton_latent_dim: int
    pos_latent_dim: int
    learning_rate: float = 1e-4
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.skeleton_latent_dim != 2 * self.pos_latent_dim:
            raise ShapeError(
                f"skeleton latent dim {self.skeleton_latent_dim} must be twice the "
                f"pos latent dim {self.pos_latent_dim}"
            )
        if self.batch_size < 1:
            raise ParameterError("batch_size must be at least 1")

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "skeleton_latent_dim": self.skeleton_latent_dim,
            "pos_latent_dim": self.pos_latent_dim,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(
            schedule=AnnealSchedule.from_dict(d["schedule"]),
            skeleton_latent_dim=int(d["skeleton_latent_dim"]),
            pos_latent_dim=int(d["pos_latent_dim"]),
            learning_rate=float(d.get("learning_rate", 1e-4)),
            batch_size=int(d.get("batch_size", 64)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class AlignedModel:
    vae_s: VaePair
    vae_v: VaePair
    vae_n: VaePair
    config: TrainConfig
    trained_epochs: int = 0

    def __post_init__(self):
        if self.vae_s.latent_dim != self.vae_v.latent_dim + self.vae_n.latent_dim:
            raise ShapeError(
                f"skeleton latent width {self.vae_s.latent_dim} must equal "
                f"{self.vae_v.latent_dim} + {self.vae_n.latent_dim}"
            )

    def copy(self) -> "AlignedModel":
        return AlignedModel(
            vae_s=self.vae_s.copy(),
            vae_v=self.vae_v.copy(),
            vae_n=self.vae_n.copy(),
            config=self.config,
            trained_epochs=self.trained_epochs,
        )

    def vaes(self) -> dict[str, VaePair]:
        return {"s": self.vae_s, "v": self.vae_v, "n": self.vae_n}

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for tag, vae in self.vaes().items():
            out[f"{tag}.enc_weight"] = vae.enc_weight
            out[f"{tag}.enc_bias"] = vae.enc_bias
            out[f"{tag}.dec_weight"] = vae.dec_weight
            out[f"{tag}.dec_bias"] = vae.dec_bias
        return out


def build_model(visual_dim: int, embed_dim: int, config: TrainConfig) -> AlignedModel:
    """Freshly initialized model; per-modality init seeds derive from config.seed."""
    base = derived_seed(config.seed, ROLE_MODEL_INIT)
    return AlignedModel(
        vae_s=init_vae_pair("s", visual_dim, config.skeleton_latent_dim, base),
        vae_v=init_vae_pair("v", embed_dim, config.pos_latent_dim, base + 1),
        vae_n=init_vae_pair("n", embed_dim, config.pos_latent_dim, base + 2),
        config=config,
    )


def concat_pos_latents(verb_latent: np.ndarray, noun_latent: np.ndarray) -> np.ndarray:
    """Columnwise concatenation, verb block first."""
    v = np.atleast_2d(np.asarray(verb_latent, dtype=np.float64))
    n = np.atleast_2d(np.asarray(noun_latent, dtype=np.float64))
    if v.shape[0] != n.shape[0]:
        raise ShapeError(f"batch sizes differ: {v.shape[0]} vs {n.shape[0]}")
    return np.concatenate([v, n], axis=1)


def split_skeleton_latent(skeleton_latent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous equal halves of the skeleton latent (verb half, noun half)."""
    z = np.atleast_2d(np.asarray(skeleton_latent, dtype=np.float64))
    width = z.shape[1]
    if width % 2 != 0:
        raise ShapeError(f"skeleton latent width {width} is odd; cannot split in half")
    half = width // 2
    return z[:, :half], z[:, half:]


def _residual_norms(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    diff = pred - target
    return np.sqrt(np.sum(diff * diff, axis=1) + NORM_EPS)


def cross_modal_loss(
    x_s: np.ndarray,
    verb_embed: np.ndarray,
    noun_embed: np.ndarray,
    z_l: np.ndarray,
    z_sv: np.ndarray,
    z_sn: np.ndarray,
    model: AlignedModel,
) -> float:
    """Mean over the batch of the three cross-decoding residual L2 norms."""
    from .generative_core import decode

    t_s = _residual_norms(decode(model.vae_s, z_l), np.atleast_2d(x_s))
    t_v = _residual_norms(decode(model.vae_v, z_sv), np.atleast_2d(verb_embed))
    t_n = _residual_norms(decode(model.vae_n, z_sn), np.atleast_2d(noun_embed))
    return float(np.mean(t_s + t_v + t_n))


def total_loss(vae_component: float, cmr_component: float, alpha: float) -> float:
    return float(vae_component + alpha * cmr_component)


def loss_and_grads(
    model: AlignedModel,
    x_s: np.ndarray,
    verb_embed: np.ndarray,
    noun_embed: np.ndarray,
    noises: dict[str, np.ndarray],
    beta: float,
    alpha: float,
) -> tuple[float, dict[str, float], dict[str, np.ndarray]]:
    """One mini-batch forward pass plus analytic gradients of the total objective.

    Returns (total, components, grads) where components holds the vae and
    cross-modal parts and grads is keyed like "s.enc_weight".
    """
    inputs = {"s": np.atleast_2d(x_s), "v": np.atleast_2d(verb_embed), "n": np.atleast_2d(noun_embed)}
    batch = inputs["s"].shape[0]
    vaes = model.vaes()

    mu, log_var, std, z, recon = {}, {}, {}, {}, {}
    rec_loss, kl_loss = {}, {}
    for tag, vae in vaes.items():
        x = inputs[tag]
        h = x @ vae.enc_weight + vae.enc_bias
        mu[tag] = h[:, : vae.latent_dim]
        log_var[tag] = h[:, vae.latent_dim :]
        std[tag] = np.exp(0.5 * log_var[tag])
        z[tag] = mu[tag] + std[tag] * noises[tag]
        recon[tag] = z[tag] @ vae.dec_weight + vae.dec_bias
        rec_loss[tag] = float(np.mean((recon[tag] - x) ** 2))
        kl_loss[tag] = float(
            0.5 * np.sum(mu[tag] ** 2 + np.exp(log_var[tag]) - 1.0 - log_var[tag]) / batch
        )

    vae_component = sum(rec_loss.values()) + beta * sum(kl_loss.values())

    z_l = np.concatenate([z["v"], z["n"]], axis=1)
    half = vaes["s"].latent_dim // 2
    z_sv, z_sn = z["s"][:, :half], z["s"][:, half:]
    cross_pred = {
        "s": z_l @ vaes["s"].dec_weight + vaes["s"].dec_bias,
        "v": z_sv @ vaes["v"].dec_weight + vaes["v"].dec_bias,
        "n": z_sn @ vaes["n"].dec_weight + vaes["n"].dec_bias,
    }
    cross_diff = {tag: cross_pred[tag] - inputs[tag] for tag in vaes}
    cross_norm = {
        tag: np.sqrt(np.sum(d * d, axis=1) + NORM_EPS) for tag, d in cross_diff.items()
    }
    cmr_component = float(np.mean(cross_norm["s"] + cross_norm["v"] + cross_norm["n"]))

    total = vae_component + alpha * cmr_component

    grads = {key: np.zeros_like(val) for key, val in model.parameters().items()}
    dz = {tag: np.zeros_like(z[tag]) for tag in vaes}

    # Per-modality reconstruction path.
    for tag, vae in vaes.items():
        x = inputs[tag]
        d_recon = 2.0 * (recon[tag] - x) / (batch * vae.input_dim)
        grads[f"{tag}.dec_weight"] += z[tag].T @ d_recon
        grads[f"{tag}.dec_bias"] += d_recon.sum(axis=0)
        dz[tag] += d_recon @ vae.dec_weight.T

    # Cross-modal residual-norm paths.
    if alpha != 0.0:
        d_cs = alpha * cross_diff["s"] / (batch * cross_norm["s"][:, None])
        grads["s.dec_weight"] += z_l.T @ d_cs
        grads["s.dec_bias"] += d_cs.sum(axis=0)
        dz_l = d_cs @ vaes["s"].dec_weight.T
        dz["v"] += dz_l[:, : vaes["v"].latent_dim]
        dz["n"] += dz_l[:, vaes["v"].latent_dim :]

        d_cv = alpha * cross_diff["v"] / (batch * cross_norm["v"][:, None])
        grads["v.dec_weight"] += z_sv.T @ d_cv
        grads["v.dec_bias"] += d_cv.sum(axis=0)
        dz["s"][:, :half] += d_cv @ vaes["v"].dec_weight.T

        d_cn = alpha * cross_diff["n"] / (batch * cross_norm["n"][:, None])
        grads["n.dec_weight"] += z_sn.T @ d_cn
        grads["n.dec_bias"] += d_cn.sum(axis=0)
        dz["s"][:, half:] += d_cn @ vaes["n"].dec_weight.T

    # Back through the reparameterization and the encoder affine map.
    for tag, vae in vaes.items():
        d_mu = dz[tag] + beta * mu[tag] / batch
        d_lv = dz[tag] * noises[tag] * 0.5 * std[tag] + beta * 0.5 * (np.exp(log_var[tag]) - 1.0) / batch
        dh = np.concatenate([d_mu, d_lv], axis=1)
        grads[f"{tag}.enc_weight"] += inputs[tag].T @ dh
        grads[f"{tag}.enc_bias"] += dh.sum(axis=0)

    components = {
        "vae": float(vae_component),
        "cmr": cmr_component,
        **{f"recon_{t}": rec_loss[t] for t in vaes},
        **{f"kl_{t}": kl_loss[t] for t in vaes},
    }
    return float(total), components, grads


@dataclass
class EpochRecord:
    epoch: int
    beta: float
    alpha: float
    total: float
    vae: float
    cmr: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "beta": self.beta,
            "alpha": self.alpha,
            "total": self.total,
            "vae": self.vae,
            "cmr": self.cmr,
        }


@dataclass
class TrainResult:
    model: AlignedModel
    trajectory: list[EpochRecord] = field(default_factory=list)


def train(
    model: AlignedModel,
    train_data: LabeledFeatureSet,
    embeddings: PosEmbeddingTable,
    config: TrainConfig | None = None,
) -> TrainResult:
    """Run the full annealed schedule over *train_data*; returns a trained copy.

    Every sample's verb/noun embedding is looked up by its label. Batches,
    reparameterization noise and shuffling all derive from config.seed, so two
    runs with equal inputs produce bitwise-equal parameters.

    Raises VocabularyError if a label has no embedding, DivergenceError (with
    epoch and batch index) if the loss leaves the finite range.
    """
    cfg = config or model.config
    model = model.copy()

    labels = train_data.labels
    missing = [int(c) for c in np.unique(labels) if not embeddings.has_class(int(c))]
    if missing:
        raise VocabularyError(f"class {missing[0]} has no entry in the embedding table")

    rows = embeddings.rows_for(labels)
    x_all = train_data.features.astype(np.float64)
    verb_all = embeddings.verb_vecs.astype(np.float64)[rows]
    noun_all = embeddings.noun_vecs.astype(np.float64)[rows]
    n = x_all.shape[0]

    rng = np.random.default_rng(derived_seed(cfg.seed, ROLE_TRAIN))
    params = model.parameters()
    opt = Adam(lr=cfg.learning_rate)
    latent_dims = {"s": model.vae_s.latent_dim, "v": model.vae_v.latent_dim, "n": model.vae_n.latent_dim}

    trajectory: list[EpochRecord] = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(cfg.schedule.total_epochs):
            beta, alpha = anneal_coefficients(epoch, cfg.schedule)
            order = rng.permutation(n)
            sums = {"total": 0.0, "vae": 0.0, "cmr": 0.0}
            for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                noises = {
                    tag: rng.standard_normal((idx.size, latent_dims[tag])) for tag in ("s", "v", "n")
                }
                loss, comps, grads = loss_and_grads(
                    model, x_all[idx], verb_all[idx], noun_all[idx], noises, beta, alpha
                )
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch}, batch {batch_index}",
                        epoch=epoch,
                        batch=batch_index,
                    )
                opt.step(params, grads)
                sums["total"] += loss * idx.size
                sums["vae"] += comps["vae"] * idx.size
                sums["cmr"] += comps["cmr"] * idx.size
            trajectory.append(
                EpochRecord(
                    epoch=epoch,
                    beta=beta,
                    alpha=alpha,
                    total=sums["total"] / n,
                    vae=sums["vae"] / n,
                    cmr=sums["cmr"] / n,
                )
            )

    model.trained_epochs += cfg.schedule.total_epochs
    return TrainResult(model=model, trajectory=trajectory)
