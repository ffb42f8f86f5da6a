"""KL-regularized RGBD autoencoder.

Encodes a 4-channel RGBD image to a diagonal-Gaussian latent at 1/8 spatial
resolution and decodes back, trained with per-channel-group reconstruction
plus a small KL penalty so latents stay near unit scale. The estimator
follows sklearn conventions: hyperparameters in __init__, fitted state in
trailing-underscore attributes, transform/inverse_transform for the
latent round trip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from torch import nn

from .data import DOWNSAMPLE_FACTOR
from .exceptions import ConfigError, DataError, NumericalError
from .seeding import derive_seed, numpy_rng, torch_generator
from .validation import check_batch, check_image

LOGVAR_MIN = -30.0
LOGVAR_MAX = 20.0
LATENT_CHANNELS = 4


@dataclass
class LatentDistribution:
    """Diagonal-Gaussian encoder output; logvar is clamped to a finite range."""

    mean: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32)
        self.logvar = np.clip(
            np.asarray(self.logvar, dtype=np.float32), LOGVAR_MIN, LOGVAR_MAX
        )
        if self.mean.shape != self.logvar.shape:
            raise DataError(
                f"mean and logvar shapes differ: {self.mean.shape} vs {self.logvar.shape}"
            )
        if not np.all(np.isfinite(self.mean)):
            raise DataError("latent mean contains non-finite values")


@dataclass
class Latent:
    """A sampled latent; ``scale_applied`` marks diffusion-space scaling."""

    z: np.ndarray
    scale_applied: bool = True

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float32)
        if not np.all(np.isfinite(self.z)):
            raise DataError("latent contains non-finite values")


def sample_latent(dist: LatentDistribution, seed: int, latent_scale: float = 1.0,
                  apply_scale: bool = True) -> Latent:
    """Reparameterized draw z = mean + exp(logvar/2) * eps, deterministic per seed."""
    eps = numpy_rng(seed, "latent-sample").standard_normal(dist.mean.shape)
    z = dist.mean + np.exp(0.5 * dist.logvar) * eps.astype(np.float32)
    if apply_scale:
        z = z * latent_scale
    return Latent(z=z.astype(np.float32), scale_applied=apply_scale)


def ae_loss(
    x: np.ndarray,
    x_hat: np.ndarray,
    dist: LatentDistribution,
    recon_weight_rgb: float = 1.0,
    recon_weight_depth: float = 1.0,
    kl_weight: float = 1e-6,
) -> dict:
    """Reconstruction (per-channel-group MAE) + closed-form KL to N(0, I).

    Returned recon terms include their weights; total is their sum plus
    kl_weight * kl. KL is averaged over latent elements.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DataError(f"x and x_hat shapes differ: {x.shape} vs {x_hat.shape}")
    if x.shape[-3] != 4:
        raise DataError(f"expected 4-channel tensors, got shape {x.shape}")
    err = np.abs(x_hat - x)
    recon_rgb = recon_weight_rgb * float(err[..., :3, :, :].mean())
    recon_depth = recon_weight_depth * float(err[..., 3:, :, :].mean())
    mean = dist.mean.astype(np.float64)
    logvar = dist.logvar.astype(np.float64)
    kl = float(0.5 * np.mean(mean**2 + np.exp(logvar) - 1.0 - logvar))
    total = recon_rgb + recon_depth + kl_weight * kl
    return {"recon_rgb": recon_rgb, "recon_depth": recon_depth, "kl": kl, "total": total}


class _AeBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        groups = 4 if channels % 4 == 0 else 1
        self.norm1 = nn.GroupNorm(groups, channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return x + h


class _Encoder(nn.Module):
    def __init__(self, base: int, mults: tuple, blocks_per_level: int):
        super().__init__()
        widths = [base] + [base * m for m in mults]
        self.conv_in = nn.Conv2d(4, widths[0], 3, padding=1)
        downs, blocks = [], []
        for i in range(3):
            downs.append(nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1))
            blocks.append(nn.Sequential(*[_AeBlock(widths[i + 1]) for _ in range(blocks_per_level)]))
        self.downs = nn.ModuleList(downs)
        self.blocks = nn.ModuleList(blocks)
        self.conv_out = nn.Conv2d(widths[3], 2 * LATENT_CHANNELS, 3, padding=1)

    def forward(self, x):
        h = self.conv_in(x)
        for down, block in zip(self.downs, self.blocks):
            h = block(torch.nn.functional.silu(down(h)))
        return self.conv_out(h)


class _Decoder(nn.Module):
    def __init__(self, base: int, mults: tuple, blocks_per_level: int):
        super().__init__()
        widths = [base] + [base * m for m in mults]
        self.conv_in = nn.Conv2d(LATENT_CHANNELS, widths[3], 3, padding=1)
        self.bottom = nn.Sequential(*[_AeBlock(widths[3]) for _ in range(blocks_per_level)])
        ups, blocks = [], []
        for i in reversed(range(3)):
            ups.append(nn.Conv2d(widths[i + 1], widths[i], 3, padding=1))
            blocks.append(nn.Sequential(*[_AeBlock(widths[i]) for _ in range(blocks_per_level)]))
        self.ups = nn.ModuleList(ups)
        self.blocks = nn.ModuleList(blocks)
        self.conv_out = nn.Conv2d(widths[0], 4, 3, padding=1)

    def forward(self, z):
        h = self.bottom(self.conv_in(z))
        for up, block in zip(self.ups, self.blocks):
            h = torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            h = block(torch.nn.functional.silu(up(h)))
        return torch.tanh(self.conv_out(h))


class RgbdAutoencoder(BaseEstimator):
    """Variational autoencoder over (N, 4, H, W) RGBD batches in [-1, 1].

    ``fit`` trains with reconstruction + KL; ``transform`` returns scaled
    latent means at 1/8 resolution; ``inverse_transform`` decodes back.
    ``latent_scale="auto"`` recomputes the scale as 1/std of training-set
    latent means after fitting, so downstream diffusion sees near-unit
    variance.
    """

    def __init__(
        self,
        base_channels: int = 16,
        channel_multipliers: tuple = (1, 2, 2),
        blocks_per_level: int = 1,
        kl_weight: float = 1e-6,
        recon_weight_rgb: float = 1.0,
        recon_weight_depth: float = 1.0,
        latent_scale: float | str = "auto",
        learning_rate: float = 2e-3,
        batch_size: int = 4,
        n_steps: int = 2000,
        warm_start: bool = False,
        seed: int = 0,
    ):
        self.base_channels = base_channels
        self.channel_multipliers = channel_multipliers
        self.blocks_per_level = blocks_per_level
        self.kl_weight = kl_weight
        self.recon_weight_rgb = recon_weight_rgb
        self.recon_weight_depth = recon_weight_depth
        self.latent_scale = latent_scale
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.warm_start = warm_start
        self.seed = seed

    # -- construction ------------------------------------------------------

    def _check_params(self):
        if len(tuple(self.channel_multipliers)) != 3:
            raise ConfigError(
                "channel_multipliers must have exactly 3 entries (three stride-2 "
                f"stages make the x8 reduction), got {self.channel_multipliers}"
            )
        if self.kl_weight < 0:
            raise ConfigError(f"kl_weight must be >= 0, got {self.kl_weight}")
        if self.latent_scale != "auto" and not float(self.latent_scale) > 0:
            raise ConfigError(f"latent_scale must be positive or 'auto', got {self.latent_scale}")

    def _init_modules(self, init_seed: int | None = None):
        self._check_params()
        torch.manual_seed(derive_seed(self.seed if init_seed is None else init_seed, "ae-init"))
        self.encoder_ = _Encoder(self.base_channels, tuple(self.channel_multipliers),
                                 self.blocks_per_level)
        self.decoder_ = _Decoder(self.base_channels, tuple(self.channel_multipliers),
                                 self.blocks_per_level)
        self.latent_scale_ = 1.0 if self.latent_scale == "auto" else float(self.latent_scale)
        self.loss_history_ = []
        return self

    def _require_fitted(self):
        if not hasattr(self, "encoder_"):
            raise NotFittedError("autoencoder is not fitted; call fit() or load a checkpoint")

    # -- core ops ----------------------------------------------------------

    def encode(self, x: np.ndarray) -> LatentDistribution:
        """Encode one (4, H, W) image (H, W divisible by 8) to a latent Gaussian."""
        self._require_fitted()
        x = check_image(x, channels=4, divisible_by=DOWNSAMPLE_FACTOR,
                        value_range=(-1.0, 1.0), name="x")
        with torch.no_grad():
            out = self.encoder_(torch.from_numpy(x)[None])
        mean, logvar = out[0, :LATENT_CHANNELS].numpy(), out[0, LATENT_CHANNELS:].numpy()
        return LatentDistribution(mean=mean, logvar=logvar)

    def sample_latent(self, dist: LatentDistribution, seed: int) -> Latent:
        self._require_fitted()
        return sample_latent(dist, seed, latent_scale=self.latent_scale_)

    def decode(self, latent) -> np.ndarray:
        """Decode a Latent (or raw unscaled (4, h, w) array) to a (4, 8h, 8w) image."""
        self._require_fitted()
        if isinstance(latent, Latent):
            z = latent.z / self.latent_scale_ if latent.scale_applied else latent.z
        else:
            z = np.asarray(latent, dtype=np.float32)
        z = check_image(z, channels=LATENT_CHANNELS, name="z")
        with torch.no_grad():
            out = self.decoder_(torch.from_numpy(z)[None])
        return out[0].numpy()

    def loss_terms(self, x: np.ndarray, x_hat: np.ndarray, dist: LatentDistribution) -> dict:
        return ae_loss(
            x, x_hat, dist,
            recon_weight_rgb=self.recon_weight_rgb,
            recon_weight_depth=self.recon_weight_depth,
            kl_weight=self.kl_weight,
        )

    def _loss_torch(self, x: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
        """Differentiable total loss for a batch; eps drives the reparameterized draw."""
        enc = self.encoder_(x)
        mean, logvar = enc[:, :LATENT_CHANNELS], enc[:, LATENT_CHANNELS:]
        logvar = torch.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX)
        z = mean + torch.exp(0.5 * logvar) * eps
        x_hat = self.decoder_(z)
        err = torch.abs(x_hat - x)
        recon = (self.recon_weight_rgb * err[:, :3].mean()
                 + self.recon_weight_depth * err[:, 3:].mean())
        kl = 0.5 * torch.mean(mean**2 + torch.exp(logvar) - 1.0 - logvar)
        return recon + self.kl_weight * kl

    # -- sklearn surface ----------------------------------------------------

    def fit(self, X, y=None):
        """Train on an (N, 4, H, W) batch; deterministic given the seed.

        With ``warm_start`` and an already-fitted model, training continues
        from the current weights and step numbering carries on.
        """
        X = check_batch(X, channels=4, divisible_by=DOWNSAMPLE_FACTOR, name="X")
        if not (self.warm_start and hasattr(self, "encoder_")):
            self._init_modules()
        offset = len(self.loss_history_)
        params = list(self.encoder_.parameters()) + list(self.decoder_.parameters())
        opt = torch.optim.Adam(params, lr=self.learning_rate)
        n = X.shape[0]
        data = torch.from_numpy(X)
        for step in range(offset, offset + self.n_steps):
            idx = numpy_rng(self.seed, "ae-batch", step).integers(0, n, size=min(self.batch_size, n))
            batch = data[torch.from_numpy(np.ascontiguousarray(idx))]
            gen = torch_generator(self.seed, "ae-eps", step)
            eps = torch.randn(batch.shape[0], LATENT_CHANNELS,
                              batch.shape[2] // 8, batch.shape[3] // 8, generator=gen)
            loss = self._loss_torch(batch, eps)
            if not torch.isfinite(loss):
                raise NumericalError(f"autoencoder training diverged at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            self.loss_history_.append(float(loss.detach()))
        if self.latent_scale == "auto":
            self.latent_scale_ = self._fit_latent_scale(data)
        return self

    def _fit_latent_scale(self, data: torch.Tensor) -> float:
        with torch.no_grad():
            means = self.encoder_(data)[:, :LATENT_CHANNELS]
        std = float(means.std())
        return 1.0 / max(std, 1e-8)

    def transform(self, X) -> np.ndarray:
        """Scaled latent means for an (N, 4, H, W) batch: (N, 4, H/8, W/8)."""
        self._require_fitted()
        X = check_batch(X, channels=4, divisible_by=DOWNSAMPLE_FACTOR, name="X")
        with torch.no_grad():
            means = self.encoder_(torch.from_numpy(X))[:, :LATENT_CHANNELS]
        return (means * self.latent_scale_).numpy()

    def inverse_transform(self, Z) -> np.ndarray:
        """Decode (N, 4, h, w) scaled latents back to (N, 4, 8h, 8w) images."""
        self._require_fitted()
        Z = check_batch(Z, channels=LATENT_CHANNELS, name="Z")
        with torch.no_grad():
            out = self.decoder_(torch.from_numpy(Z) / self.latent_scale_)
        return out.numpy()

    # -- persistence hooks (used by checkpoints module) ----------------------

    def state_dict(self) -> dict:
        self._require_fitted()
        return {"encoder": self.encoder_.state_dict(), "decoder": self.decoder_.state_dict()}

    def load_state(self, state: dict, latent_scale: float, loss_history=None):
        self._init_modules()
        self.encoder_.load_state_dict(state["encoder"])
        self.decoder_.load_state_dict(state["decoder"])
        self.latent_scale_ = float(latent_scale)
        self.loss_history_ = list(loss_history or [])
        return self
