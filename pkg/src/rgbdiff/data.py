"""RGBD data model, image IO, normalization conventions, and dataset manifests.

A sample couples an RGB image with a single-channel disparity-space depth
map. Both are exchanged as float32 arrays in [-1, 1]; on disk RGB lives in
8-bit images and depth in 16-bit single-channel PNGs. Manifests are
line-delimited JSON: one header record (resolution, split) followed by one
record per sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import DataError
from .validation import check_image

DOWNSAMPLE_FACTOR = 8  # autoencoder spatial reduction; sample dims must divide by it


@dataclass
class RgbdSample:
    """One RGBD sample: rgb (3, H, W) and depth (1, H, W), both in [-1, 1]."""

    rgb: np.ndarray
    depth: np.ndarray
    caption: str = ""
    id: str = ""
    source_depth_bits: int = 16

    def __post_init__(self):
        self.rgb = check_image(
            self.rgb, channels=3, divisible_by=DOWNSAMPLE_FACTOR,
            value_range=(-1.0, 1.0), name="rgb",
        )
        self.depth = check_image(
            self.depth, channels=1, value_range=(-1.0, 1.0), name="depth",
        )
        if self.rgb.shape[1:] != self.depth.shape[1:]:
            raise DataError(
                f"rgb and depth spatial dims differ: {self.rgb.shape[1:]} vs {self.depth.shape[1:]}"
            )

    @property
    def height(self) -> int:
        return self.rgb.shape[1]

    @property
    def width(self) -> int:
        return self.rgb.shape[2]

    def with_(self, **kwargs) -> "RgbdSample":
        return replace(self, **kwargs)


def merge_channels(sample: RgbdSample) -> np.ndarray:
    """Stack a sample into a single (4, H, W) array, channel order [R, G, B, D]."""
    return np.concatenate([sample.rgb, sample.depth], axis=0)


def split_channels(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a (4, H, W) array back into (rgb, depth). Exact inverse of merge."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != 4:
        raise DataError(f"expected a (4, H, W) array, got {x.shape}")
    return x[:3], x[3:4]


# ---------------------------------------------------------------------------
# normalization: integer rasters <-> [-1, 1]

def rgb_to_unit(arr: np.ndarray) -> np.ndarray:
    """Map 8-bit RGB values linearly from [0, 255] to [-1, 1]."""
    return (arr.astype(np.float32) / 255.0) * 2.0 - 1.0


def unit_to_rgb(x: np.ndarray) -> np.ndarray:
    v = np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)
    return np.round(v * 255.0).astype(np.uint8)


def depth_to_unit(arr: np.ndarray, bits: int = 16) -> np.ndarray:
    """Map integer disparity values linearly from [0, 2^bits - 1] to [-1, 1]."""
    peak = float(2**bits - 1)
    return (arr.astype(np.float32) / peak) * 2.0 - 1.0


def unit_to_depth(x: np.ndarray, bits: int = 16) -> np.ndarray:
    peak = 2**bits - 1
    v = np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)
    out = np.round(v * peak)
    return out.astype(np.uint16 if bits <= 16 else np.uint32)


# ---------------------------------------------------------------------------
# image files

def load_rgb_image(path) -> np.ndarray:
    """Load an 8-bit RGB image as a (3, H, W) array in [-1, 1]."""
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DataError(f"cannot read rgb image {path}: {exc}") from exc
    if img.mode != "RGB":
        raise DataError(f"{path}: expected 3-channel 8-bit RGB, got mode {img.mode}")
    return rgb_to_unit(np.asarray(img)).transpose(2, 0, 1)


def load_depth_image(path, bits: int = 16) -> np.ndarray:
    """Load an integer single-channel depth raster as a (1, H, W) array in [-1, 1]."""
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DataError(f"cannot read depth image {path}: {exc}") from exc
    if img.mode not in ("I;16", "I", "L"):
        raise DataError(
            f"{path}: expected single-channel integer raster, got mode {img.mode}"
        )
    raw = np.asarray(img)
    if raw.ndim != 2:
        raise DataError(f"{path}: depth must be single-channel, got shape {raw.shape}")
    if raw.max(initial=0) > 2**bits - 1:
        raise DataError(f"{path}: values exceed {bits}-bit range")
    return depth_to_unit(raw, bits)[None]


def save_rgb_image(x: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(unit_to_rgb(x).transpose(1, 2, 0)).save(path, format="PNG")


def save_depth_image(x: np.ndarray, path, bits: int = 16) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(x)
    if arr.ndim == 3:
        arr = arr[0]
    Image.fromarray(unit_to_depth(arr, bits)).save(path, format="PNG")


def load_rgbd(rgb_path, depth_path, bits: int = 16, *, caption: str = "",
              sample_id: str | None = None) -> RgbdSample:
    """Load an RGBD sample from an 8-bit RGB image and an integer depth raster."""
    rgb = load_rgb_image(rgb_path)
    depth = load_depth_image(depth_path, bits)
    return RgbdSample(
        rgb=rgb, depth=depth, caption=caption,
        id=sample_id if sample_id is not None else Path(rgb_path).stem,
        source_depth_bits=bits,
    )


def save_rgbd(sample: RgbdSample, rgb_path, depth_path) -> None:
    """Write a sample as an 8-bit RGB PNG plus a 16-bit depth PNG."""
    save_rgb_image(sample.rgb, rgb_path)
    save_depth_image(sample.depth, depth_path, 16)


# ---------------------------------------------------------------------------
# manifests

@dataclass
class ManifestEntry:
    id: str
    rgb_path: str
    depth_path: str
    caption: str = ""


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    resolution: tuple[int, int] = (64, 64)  # (H, W)
    split: str = "train"
    base_dir: Path | None = None  # set when read from disk; paths resolve against it

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(
        {"resolution": list(manifest.resolution), "split": manifest.split},
        sort_keys=True,
    )]
    for e in manifest.entries:
        lines.append(json.dumps(
            {"id": e.id, "rgb_path": e.rgb_path, "depth_path": e.depth_path,
             "caption": e.caption},
            sort_keys=True, ensure_ascii=False,
        ))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, *, check_paths: bool = True) -> DatasetManifest:
    """Read a manifest, validating unique ids and (optionally) path resolvability."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"manifest is empty: {path}")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DataError(f"bad manifest line in {path}: {exc}") from exc
    if "resolution" not in header:
        raise DataError(f"manifest {path} missing header record with resolution")
    manifest = DatasetManifest(
        entries=[ManifestEntry(r["id"], r["rgb_path"], r["depth_path"], r.get("caption", ""))
                 for r in records],
        resolution=tuple(int(v) for v in header["resolution"]),
        split=header.get("split", "train"),
        base_dir=path.parent,
    )
    seen = set()
    for e in manifest.entries:
        if e.id in seen:
            raise DataError(f"duplicate id in manifest: {e.id}")
        seen.add(e.id)
        if check_paths:
            for p in (e.rgb_path, e.depth_path):
                if not manifest.resolve(p).exists():
                    raise DataError(f"manifest {path}: missing file {p}")
    return manifest


def load_entry(manifest: DatasetManifest, entry: ManifestEntry, bits: int = 16) -> RgbdSample:
    sample = load_rgbd(
        manifest.resolve(entry.rgb_path), manifest.resolve(entry.depth_path),
        bits, caption=entry.caption, sample_id=entry.id,
    )
    if (sample.height, sample.width) != tuple(manifest.resolution):
        raise DataError(
            f"sample {entry.id} is {sample.height}x{sample.width}, "
            f"manifest says {manifest.resolution}"
        )
    return sample


def load_dataset(manifest: DatasetManifest, bits: int = 16) -> list[RgbdSample]:
    return [load_entry(manifest, e, bits) for e in manifest.entries]


def dataset_array(samples: list[RgbdSample]) -> np.ndarray:
    """Stack samples into the (N, 4, H, W) batch layout the estimators consume."""
    if not samples:
        raise DataError("empty sample list")
    return np.stack([merge_channels(s) for s in samples], axis=0)
