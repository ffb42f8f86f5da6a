"""Equirectangular panorama utilities.

Covers the dataset-preparation side of panorama generation: HDR radiance to
LDR tone mapping, the panorama-exact horizontal-roll augmentation, a seam
continuity probe, and the caption prefix convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import RgbdSample
from .exceptions import DataError
from .seeding import derive_seed, numpy_rng
from .validation import check_image

PANO_PREFIX_MAIN = "360 view of "
PANO_PREFIX_ALT = "panoramic view of "
PANO_PREFIX_MAIN_PROB = 0.70
PANO_PREFIX_ALT_PROB = 0.04


@dataclass
class Panorama:
    """An RGBD sample in 2:1 equirectangular layout; left/right edges are adjacent."""

    rgbd: RgbdSample
    wraps_horizontally: bool = True

    def __post_init__(self):
        if self.rgbd.width != 2 * self.rgbd.height:
            raise DataError(
                f"equirectangular panorama needs W == 2H, got {self.rgbd.height}x{self.rgbd.width}"
            )


def tonemap_hdr(hdr: np.ndarray, exposure: float = 1.0, gamma: float = 2.2) -> np.ndarray:
    """Tone-map non-negative radiance to LDR in [-1, 1] via exposure + gamma.

    v -> clamp((exposure * v)^(1/gamma), 0, 1), then mapped to [-1, 1].
    Monotone in the input.
    """
    hdr = check_image(hdr, channels=3, nonnegative=True, name="hdr")
    if exposure <= 0 or gamma <= 0:
        raise DataError(f"exposure and gamma must be positive, got {exposure}, {gamma}")
    v = np.clip((exposure * hdr.astype(np.float64)) ** (1.0 / gamma), 0.0, 1.0)
    return (v * 2.0 - 1.0).astype(np.float32)


def roll_fraction_to_shift(fraction: float, width: int) -> int:
    if not 0.0 <= fraction < 1.0:
        raise DataError(f"roll fraction must lie in [0, 1), got {fraction}")
    return int(round(fraction * width)) % width


def roll_pano(p: Panorama, fraction: float) -> Panorama:
    """Circularly shift panorama columns by round(fraction * W). Lossless."""
    shift = roll_fraction_to_shift(fraction, p.rgbd.width)
    rgb = np.roll(p.rgbd.rgb, shift, axis=2)
    depth = np.roll(p.rgbd.depth, shift, axis=2)
    return Panorama(rgbd=p.rgbd.with_(rgb=rgb, depth=depth))


def seam_discontinuity(p: Panorama) -> float:
    """Largest mean absolute difference between circularly adjacent columns.

    Columns are treated as a ring (the wrap pair last/first included), so the
    value locates the seam wherever a roll has moved it and is exactly
    invariant under roll_pano. A wrap-continuous panorama scores the same as
    its interior smoothness; a hard seam dominates.
    """
    x = np.concatenate([p.rgbd.rgb, p.rgbd.depth], axis=0).astype(np.float64)
    diffs = np.abs(x - np.roll(x, 1, axis=2))  # column j vs its left neighbor, ring-wise
    per_pair = diffs.mean(axis=(0, 1))  # mean over channels and rows, one value per pair
    return float(per_pair.max())


def make_pano_caption(raw: str, seed: int) -> str:
    """Apply the panorama caption prefix convention, seeded per (raw, seed).

    With probability 0.70 prefixes "360 view of ", with 0.04 "panoramic view
    of ", otherwise leaves the caption unchanged. Already-prefixed captions
    pass through untouched.
    """
    if not raw:
        raise DataError("caption must be nonempty")
    if raw.startswith(PANO_PREFIX_MAIN) or raw.startswith(PANO_PREFIX_ALT):
        return raw
    u = numpy_rng(seed, "pano-caption", raw).random()
    if u < PANO_PREFIX_MAIN_PROB:
        return PANO_PREFIX_MAIN + raw
    if u < PANO_PREFIX_MAIN_PROB + PANO_PREFIX_ALT_PROB:
        return PANO_PREFIX_ALT + raw
    return raw


def load_hdr(path) -> np.ndarray:
    """Load a floating-point radiance raster (.npy), returned as (3, H, W)."""
    path = Path(path)
    try:
        arr = np.load(path)
    except Exception as exc:
        raise DataError(f"cannot read HDR raster {path}: {exc}") from exc
    if arr.ndim != 3:
        raise DataError(f"{path}: expected a 3-d radiance array, got shape {arr.shape}")
    if arr.shape[0] != 3 and arr.shape[2] == 3:
        arr = arr.transpose(2, 0, 1)
    if arr.shape[0] != 3:
        raise DataError(f"{path}: expected 3 channels, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0:
        raise DataError(f"{path}: radiance must be finite and non-negative")
    return arr.astype(np.float32)


def pano_augmentation_params(seed: int, source_id: str, index: int) -> dict:
    """Seeded per-augmentation jitter parameters (roll fraction, exposure, gamma)."""
    rng = numpy_rng(seed, "pano-aug", source_id, index)
    return {
        "roll_fraction": float(rng.random()),
        "exposure": float(2.0 ** rng.uniform(-1.0, 1.0)),
        "gamma": float(rng.uniform(1.8, 2.6)),
        "caption_seed": derive_seed(seed, "pano-aug-caption", source_id, index),
    }
