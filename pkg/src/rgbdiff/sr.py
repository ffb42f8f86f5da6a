"""x4 RGBD super-resolution: the lightweight blur/resize/noise/JPEG
degradation, the three LR-depth conditioning strategies, LR-latent
preparation, and end-to-end upscaling.

Depth conditioning strategies (selected per sample at degradation time):
  O  keep the original HR depth map unchanged;
  B  bicubic degrade the depth (down x4, back up x4);
  D  run a depth-estimator provider on the degraded LR image, then resize up.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import gaussian_filter
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autoencoder import Latent, RgbdAutoencoder
from .data import RgbdSample, merge_channels, split_channels, unit_to_rgb, rgb_to_unit
from .diffusion import LatentDiffusion, sample_ddim, sample_ddpm
from .exceptions import ConfigError, DataError
from .seeding import derive_seed, numpy_rng
from .validation import check_image

SCALE_FACTOR = 4  # the pipeline is x4 only
_INTERP_MODES = ("bicubic", "bilinear", "nearest")


@dataclass
class DegradationRecipe:
    """Seeded parameter bundle for the LR degradation; expansion to concrete
    draws is a pure function of the seed."""

    blur_sigma: tuple = (0.2, 2.0)
    noise_sigma: tuple = (0.0, 10.0 / 255.0)
    jpeg_quality: tuple = (60, 95)
    interp_weights: tuple = (("bicubic", 0.7), ("bilinear", 0.2), ("nearest", 0.1))
    downscale_factor: int = SCALE_FACTOR
    seed: int = 0

    def __post_init__(self):
        if self.downscale_factor != SCALE_FACTOR:
            raise ConfigError(f"downscale factor is fixed at {SCALE_FACTOR}")
        for name, rng_ in (("blur_sigma", self.blur_sigma),
                           ("noise_sigma", self.noise_sigma),
                           ("jpeg_quality", self.jpeg_quality)):
            lo, hi = rng_
            if not lo <= hi:
                raise ConfigError(f"{name} range must be nonempty, got {rng_}")
        modes = [m for m, _ in self.interp_weights]
        if not modes or any(m not in _INTERP_MODES for m in modes):
            raise ConfigError(f"interp modes must be among {_INTERP_MODES}, got {modes}")
        if any(w < 0 for _, w in self.interp_weights) or sum(w for _, w in self.interp_weights) <= 0:
            raise ConfigError("interp weights must be non-negative with positive sum")

    def draw(self) -> dict:
        """Concrete degradation parameters for this recipe's seed."""
        rng = numpy_rng(self.seed, "degrade-draw")
        modes = [m for m, _ in self.interp_weights]
        weights = np.array([w for _, w in self.interp_weights], dtype=np.float64)
        weights /= weights.sum()
        return {
            "blur_sigma": float(rng.uniform(*self.blur_sigma)),
            "interp_mode": modes[int(rng.choice(len(modes), p=weights))],
            "noise_sigma": float(rng.uniform(*self.noise_sigma)),
            "jpeg_quality": int(rng.integers(self.jpeg_quality[0], self.jpeg_quality[1] + 1)),
        }

    def with_seed(self, seed: int) -> "DegradationRecipe":
        return DegradationRecipe(
            blur_sigma=self.blur_sigma, noise_sigma=self.noise_sigma,
            jpeg_quality=self.jpeg_quality, interp_weights=self.interp_weights,
            downscale_factor=self.downscale_factor, seed=seed,
        )

    def to_dict(self) -> dict:
        return {
            "blur_sigma": list(self.blur_sigma),
            "noise_sigma": list(self.noise_sigma),
            "jpeg_quality": list(self.jpeg_quality),
            "interp_weights": [[m, w] for m, w in self.interp_weights],
            "downscale_factor": self.downscale_factor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationRecipe":
        d = dict(d)
        if "interp_weights" in d:
            d["interp_weights"] = tuple((m, w) for m, w in d["interp_weights"])
        for key in ("blur_sigma", "noise_sigma", "jpeg_quality"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def resize(x: np.ndarray, scale: float, mode: str = "bicubic") -> np.ndarray:
    """Resize a (C, H, W) array by a scale factor. No antialiasing, matching
    the classic degradation pipelines; bicubic reproduces linear signals
    exactly away from borders."""
    if mode not in _INTERP_MODES:
        raise ConfigError(f"unknown interp mode {mode!r}")
    t = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))[None]
    kwargs = {} if mode == "nearest" else {"align_corners": False}
    out = torch.nn.functional.interpolate(t, scale_factor=scale, mode=mode, **kwargs)
    return out[0].numpy()


def _jpeg_roundtrip(rgb_unit: np.ndarray, quality: int) -> np.ndarray:
    raw = unit_to_rgb(rgb_unit).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(raw).save(buf, format="JPEG", quality=quality)
    back = np.asarray(Image.open(io.BytesIO(buf.getvalue())))
    return rgb_to_unit(back).transpose(2, 0, 1)


def bsr_degrade(hr_rgb: np.ndarray, recipe: DegradationRecipe) -> np.ndarray:
    """Lightweight degradation: Gaussian blur -> /4 resize -> additive noise
    -> JPEG round trip, with all draws taken from the recipe seed. Maps a
    (3, H, W) image in [-1, 1] to (3, H/4, W/4) in [-1, 1]."""
    hr_rgb = check_image(hr_rgb, channels=3, value_range=(-1.0, 1.0), name="hr_rgb")
    _, h, w = hr_rgb.shape
    if h % SCALE_FACTOR or w % SCALE_FACTOR:
        raise DataError(f"HR dims must divide by {SCALE_FACTOR}, got {h}x{w}")
    p = recipe.draw()
    x = hr_rgb.astype(np.float64)
    if p["blur_sigma"] > 0:
        x = np.stack([gaussian_filter(c, sigma=p["blur_sigma"], mode="nearest") for c in x])
    x = resize(x, 1.0 / SCALE_FACTOR, p["interp_mode"]).astype(np.float64)
    if p["noise_sigma"] > 0:
        noise = numpy_rng(recipe.seed, "degrade-noise").standard_normal(x.shape)
        x = x + 2.0 * p["noise_sigma"] * noise  # sigma is in [0,1] units; range here is 2 wide
    x = np.clip(x, -1.0, 1.0)
    return _jpeg_roundtrip(x, p["jpeg_quality"]).astype(np.float32)


class BsrDegrader(BaseEstimator):
    """Stateless transformer applying per-sample seeded degradations to an
    (N, 3, H, W) batch; sample i uses a seed derived from (seed, i)."""

    def __init__(self, recipe: DegradationRecipe | None = None, seed: int = 0):
        self.recipe = recipe
        self.seed = seed

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 4 or X.shape[1] != 3:
            raise DataError(f"X must be (N, 3, H, W), got {X.shape}")
        base = self.recipe or DegradationRecipe()
        out = [
            bsr_degrade(x, base.with_seed(derive_seed(self.seed, "degrader", i)))
            for i, x in enumerate(X)
        ]
        return np.stack(out)


@dataclass
class DepthLrStrategy:
    """LR-depth conditioning strategy: D (estimate), O (original), B (bicubic)."""

    kind: str
    estimator: object = None  # depth provider, required iff kind == "D"

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in ("D", "O", "B"):
            raise ConfigError(f"strategy kind must be D, O or B, got {self.kind!r}")
        if self.kind == "D" and self.estimator is None:
            raise ConfigError("strategy D requires a depth estimator provider")


def make_lr_depth(hr_depth: np.ndarray, lr_rgb: np.ndarray | None,
                  strategy: DepthLrStrategy) -> np.ndarray:
    """Produce the depth conditioning map at HR spatial dims.

    O returns hr_depth unchanged; B degrades it bicubically (down x4, up x4);
    D applies the estimator to the degraded LR image and resizes its output
    up x4. The result always matches HR dims so it can enter the
    conditioning encoder alongside the upsampled LR image.
    """
    hr_depth = check_image(hr_depth, channels=1, name="hr_depth")
    if strategy.kind == "O":
        return hr_depth.copy()
    if strategy.kind == "B":
        lr = resize(hr_depth, 1.0 / SCALE_FACTOR, "bicubic")
        return np.clip(resize(lr, float(SCALE_FACTOR), "bicubic"), -1.0, 1.0)
    if lr_rgb is None:
        raise DataError("strategy D needs the degraded LR image")
    lr_rgb = check_image(lr_rgb, channels=3, name="lr_rgb")
    est = strategy.estimator(lr_rgb)
    est = check_image(est, channels=1, name="estimated depth")
    up = resize(est, hr_depth.shape[1] / est.shape[1], "bicubic")
    if up.shape != hr_depth.shape:
        raise DataError(f"estimator output upsampled to {up.shape}, expected {hr_depth.shape}")
    return np.clip(up, -1.0, 1.0)


def prepare_lr_latent(lr_rgb: np.ndarray, lr_depth_cond: np.ndarray,
                      ae: RgbdAutoencoder) -> np.ndarray:
    """Encode the LR conditioning: upsample LR RGB x4, merge with the depth
    conditioning map, and take the scaled latent mean (4, H/8, W/8)."""
    lr_rgb = check_image(lr_rgb, channels=3, name="lr_rgb")
    lr_depth_cond = check_image(lr_depth_cond, channels=1, name="lr_depth_cond")
    up = np.clip(resize(lr_rgb, float(SCALE_FACTOR), "bicubic"), -1.0, 1.0)
    if up.shape[1:] != lr_depth_cond.shape[1:]:
        raise DataError(
            f"upsampled LR {up.shape[1:]} does not match depth cond {lr_depth_cond.shape[1:]}"
        )
    merged = np.concatenate([up, lr_depth_cond], axis=0)
    dist = ae.encode(merged)
    return (dist.mean * ae.latent_scale_).astype(np.float32)


def bicubic_upscale_rgbd(lr_rgb: np.ndarray, lr_depth: np.ndarray) -> RgbdSample:
    """The regression baseline: plain bicubic x4 on both channels."""
    rgb = np.clip(resize(lr_rgb, float(SCALE_FACTOR), "bicubic"), -1.0, 1.0)
    depth = np.clip(resize(lr_depth, float(SCALE_FACTOR), "bicubic"), -1.0, 1.0)
    return RgbdSample(rgb=rgb, depth=depth, caption="", id="bicubic")


def upscale(
    lr_rgb: np.ndarray,
    lr_depth_cond: np.ndarray,
    caption: str,
    ae: RgbdAutoencoder,
    ldm: LatentDiffusion,
    sampler: str = "ddim",
    steps: int = 25,
    eta: float = 0.0,
    guidance_scale: float = 1.0,
    seed: int = 0,
) -> RgbdSample:
    """End-to-end x4 upscaling: sample a 4-channel latent conditioned on the
    LR latent (initial state is pure noise), decode, split into RGBD."""
    if ldm.in_channels != 8:
        raise ConfigError(f"upscaling needs an 8-channel denoiser, got {ldm.in_channels}")
    lr_latent = prepare_lr_latent(lr_rgb, lr_depth_cond, ae)
    shape = lr_latent.shape
    cond = ldm.embed(caption)
    uncond = ldm.text_encoder_.unconditional() if guidance_scale != 1.0 else None
    common = dict(cond=cond, extra_latent=lr_latent[None], sched=ldm.schedule_,
                  seed=seed, guidance_scale=guidance_scale, uncond=uncond)
    if sampler == "ddim":
        latent = sample_ddim(ldm.module_, shape, steps=steps, eta=eta, **common)
    elif sampler == "ddpm":
        latent = sample_ddpm(ldm.module_, shape, **common)
    else:
        raise ConfigError(f"unknown sampler {sampler!r}")
    decoded = ae.decode(latent)
    rgb, depth = split_channels(np.clip(decoded, -1.0, 1.0))
    return RgbdSample(rgb=rgb, depth=depth, caption=caption, id="upscaled")


class RgbdUpscaler(BaseEstimator):
    """fit/predict wrapper over the SR path.

    ``fit`` takes HR samples plus their LR observations, encodes both sides
    with a trained autoencoder, and fits an 8-channel diffusion model on the
    latent pairs. ``predict`` upscales a batch of LR observations.
    """

    def __init__(self, autoencoder: RgbdAutoencoder | None = None,
                 diffusion_params: dict | None = None,
                 sampler: str = "ddim", steps: int = 25, eta: float = 0.0,
                 guidance_scale: float = 1.0, seed: int = 0):
        self.autoencoder = autoencoder
        self.diffusion_params = diffusion_params
        self.sampler = sampler
        self.steps = steps
        self.eta = eta
        self.guidance_scale = guidance_scale
        self.seed = seed

    def fit(self, X, y=None, lr_pairs=None):
        """X: (N, 4, H, W) HR RGBD; lr_pairs: list of (lr_rgb, lr_depth_cond);
        y: optional captions."""
        if self.autoencoder is None:
            raise ConfigError("RgbdUpscaler needs a trained autoencoder")
        X = np.asarray(X, dtype=np.float32)
        if lr_pairs is None or len(lr_pairs) != X.shape[0]:
            raise DataError("lr_pairs must align with X")
        captions = list(y) if y is not None else [""] * X.shape[0]
        hr_latents = self.autoencoder.transform(X)
        lr_latents = np.stack([
            prepare_lr_latent(lr_rgb, lr_depth, self.autoencoder)
            for lr_rgb, lr_depth in lr_pairs
        ])
        params = dict(self.diffusion_params or {})
        params["in_channels"] = 8
        params.setdefault("seed", self.seed)
        self.diffusion_ = LatentDiffusion(**params)
        self.diffusion_.fit(hr_latents, captions, extra=lr_latents)
        return self

    def predict(self, lr_pairs, captions=None, seed: int | None = None) -> np.ndarray:
        if not hasattr(self, "diffusion_"):
            raise NotFittedError("upscaler is not fitted")
        captions = list(captions) if captions is not None else [""] * len(lr_pairs)
        base_seed = self.seed if seed is None else seed
        out = []
        for i, (lr_rgb, lr_depth) in enumerate(lr_pairs):
            sample = upscale(
                lr_rgb, lr_depth, captions[i], self.autoencoder, self.diffusion_,
                sampler=self.sampler, steps=self.steps, eta=self.eta,
                guidance_scale=self.guidance_scale,
                seed=derive_seed(base_seed, "upscale", i),
            )
            out.append(merge_channels(sample))
        return np.stack(out)
