"""Single-dense-layer VAE primitives: affine encode/decode, reparameterization,
closed-form KL to the standard normal, and the per-modality loss.

Encoders emit a concatenated (mean, log-variance) pair; there is no activation
nonlinearity anywhere, so every map here is exactly affine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import FormatError, NumericError, ShapeError

MODALITIES = ("s", "v", "n")


@dataclass
class VaePair:
    """Encoder/decoder affine parameters for one modality."""

    modality: str
    input_dim: int
    latent_dim: int
    enc_weight: np.ndarray  # (input_dim, 2 * latent_dim)
    enc_bias: np.ndarray  # (2 * latent_dim,)
    dec_weight: np.ndarray  # (latent_dim, input_dim)
    dec_bias: np.ndarray  # (input_dim,)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ShapeError(f"unknown modality {self.modality!r}")
        self.enc_weight = np.asarray(self.enc_weight, dtype=np.float64)
        self.enc_bias = np.asarray(self.enc_bias, dtype=np.float64)
        self.dec_weight = np.asarray(self.dec_weight, dtype=np.float64)
        self.dec_bias = np.asarray(self.dec_bias, dtype=np.float64)
        expect = {
            "enc_weight": (self.input_dim, 2 * self.latent_dim),
            "enc_bias": (2 * self.latent_dim,),
            "dec_weight": (self.latent_dim, self.input_dim),
            "dec_bias": (self.input_dim,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{self.modality}.{name}: shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise NumericError(f"{self.modality}.{name} contains non-finite values")

    def copy(self) -> "VaePair":
        return replace(
            self,
            enc_weight=self.enc_weight.copy(),
            enc_bias=self.enc_bias.copy(),
            dec_weight=self.dec_weight.copy(),
            dec_bias=self.dec_bias.copy(),
        )


def _fan_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_vae_pair(modality: str, input_dim: int, latent_dim: int, seed: int) -> VaePair:
    """Fan-balanced uniform weights, zero biases, deterministic in *seed*."""
    rng = np.random.default_rng(seed)
    return VaePair(
        modality=modality,
        input_dim=input_dim,
        latent_dim=latent_dim,
        enc_weight=_fan_uniform(rng, input_dim, 2 * latent_dim, (input_dim, 2 * latent_dim)),
        enc_bias=np.zeros(2 * latent_dim),
        dec_weight=_fan_uniform(rng, latent_dim, input_dim, (latent_dim, input_dim)),
        dec_bias=np.zeros(input_dim),
    )


def _as_batch(x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


def encode(vae: VaePair, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Affine encode: returns the (mean, log-variance) halves of x @ W + b."""
    xb = _as_batch(x)
    if xb.shape[1] != vae.input_dim:
        raise ShapeError(
            f"encode({vae.modality}): input width {xb.shape[1]}, expected {vae.input_dim}"
        )
    h = xb @ vae.enc_weight + vae.enc_bias
    return h[:, : vae.latent_dim], h[:, vae.latent_dim :]


def reparameterize(mu: np.ndarray, log_var: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """z = mu + exp(log_var / 2) * noise, elementwise."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if mu.shape != log_var.shape or mu.shape != noise.shape:
        raise ShapeError(
            f"reparameterize: shapes differ (mu {mu.shape}, log_var {log_var.shape}, "
            f"noise {noise.shape})"
        )
    return mu + np.exp(0.5 * log_var) * noise


@dataclass
class GaussianLatent:
    """A batch of (mean, log-variance, sample) triples plus the noise that produced z."""

    mu: np.ndarray
    log_var: np.ndarray
    z: np.ndarray
    noise: np.ndarray | None = None

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape or self.mu.shape != self.z.shape:
            raise ShapeError("GaussianLatent fields must share one shape")

    @staticmethod
    def sample(mu: np.ndarray, log_var: np.ndarray, noise: np.ndarray) -> "GaussianLatent":
        return GaussianLatent(mu=mu, log_var=log_var, z=reparameterize(mu, log_var, noise), noise=noise)


def decode(vae: VaePair, z: np.ndarray) -> np.ndarray:
    """Affine decode: z @ W + b."""
    zb = _as_batch(z)
    if zb.shape[1] != vae.latent_dim:
        raise ShapeError(
            f"decode({vae.modality}): latent width {zb.shape[1]}, expected {vae.latent_dim}"
        )
    return zb @ vae.dec_weight + vae.dec_bias


def kl_to_standard_normal(mu: np.ndarray, log_var: np.ndarray) -> float:
    """Mean over the batch of 0.5 * sum_dims(mu^2 + exp(log_var) - 1 - log_var)."""
    mu = _as_batch(mu)
    log_var = _as_batch(log_var)
    if mu.shape != log_var.shape:
        raise ShapeError(f"kl: mu {mu.shape} vs log_var {log_var.shape}")
    if not (np.isfinite(mu).all() and np.isfinite(log_var).all()):
        raise NumericError("kl: non-finite input")
    per_sample = 0.5 * np.sum(mu**2 + np.exp(log_var) - 1.0 - log_var, axis=1)
    return float(per_sample.mean())


def reconstruction_mse(x: np.ndarray, recon: np.ndarray) -> float:
    x = _as_batch(x)
    recon = _as_batch(recon)
    if x.shape != recon.shape:
        raise ShapeError(f"mse: {x.shape} vs {recon.shape}")
    return float(np.mean((x - recon) ** 2))


def vae_loss(vae: VaePair, x: np.ndarray, latent: GaussianLatent, beta: float) -> float:
    """Reconstruction MSE of decode(z) against x, plus beta times the KL term."""
    recon = decode(vae, latent.z)
    return reconstruction_mse(x, recon) + beta * kl_to_standard_normal(latent.mu, latent.log_var)


def multimodal_vae_loss(
    terms: list[tuple[VaePair, np.ndarray, GaussianLatent]], beta: float
) -> float:
    """Sum of the per-modality losses under one shared beta."""
    return float(sum(vae_loss(vae, x, latent, beta) for vae, x, latent in terms))


def save_vae_pair(vae: VaePair, path: str | Path, init_seed: int | None = None) -> None:
    meta = {
        "modality": vae.modality,
        "input_dim": vae.input_dim,
        "latent_dim": vae.latent_dim,
        "init_seed": init_seed,
    }
    write_container(
        path,
        {
            "enc_weight": vae.enc_weight,
            "enc_bias": vae.enc_bias,
            "dec_weight": vae.dec_weight,
            "dec_bias": vae.dec_bias,
        },
        meta,
    )


def load_vae_pair(path: str | Path) -> VaePair:
    arrays, meta = read_container(path)
    try:
        return VaePair(
            modality=meta["modality"],
            input_dim=int(meta["input_dim"]),
            latent_dim=int(meta["latent_dim"]),
            enc_weight=arrays["enc_weight"],
            enc_bias=arrays["enc_bias"],
            dec_weight=arrays["dec_weight"],
            dec_bias=arrays["dec_bias"],
        )
    except KeyError as exc:
        raise FormatError(f"{path}: checkpoint missing entry {exc.args[0]!r}") from exc
