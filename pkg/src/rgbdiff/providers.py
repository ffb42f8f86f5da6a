"""Pluggable model providers for evaluation and depth conditioning.

The real pipeline plugs in pretrained feature extractors, classifiers,
image/text embedders and monocular depth estimators. At desk scale those are
replaced by small deterministic stand-ins (seeded fixed projections), which
keeps every metric testable end to end. Register alternatives by name to
swap in real models.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, DataError
from .seeding import numpy_rng
from .validation import check_image

_POOL = 8  # stand-ins pool images to POOL x POOL before projecting


def _pool_image(img: np.ndarray, out: int = _POOL) -> np.ndarray:
    """Average-pool a (C, H, W) image to (C, out, out); pads by edge if needed."""
    c, h, w = img.shape
    if h < out or w < out:
        reps = (1, int(np.ceil(out / h)), int(np.ceil(out / w)))
        img = np.tile(img, reps)[:, : max(h, out), : max(w, out)]
        c, h, w = img.shape
    hs, ws = h // out, w // out
    img = img[:, : hs * out, : ws * out]
    return img.reshape(c, out, hs, out, ws).mean(axis=(2, 4))


def _projection(seed_tag: str, in_dim: int, out_dim: int) -> tuple[np.ndarray, np.ndarray]:
    rng = numpy_rng(0, "provider", seed_tag, in_dim, out_dim)
    w = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
    b = 0.1 * rng.standard_normal(out_dim)
    return w.astype(np.float64), b.astype(np.float64)


class RandomProjectionFeatures:
    """Deterministic image -> feature-vector map: pooled pixels through a fixed
    random projection and tanh."""

    def __init__(self, dim: int = 16, name: str = "toy-features"):
        self.dim = dim
        self.name = name
        self._w, self._b = _projection(name, 3 * _POOL * _POOL, dim)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        img = check_image(img, channels=3, name="img")
        flat = _pool_image(img).ravel().astype(np.float64)
        return np.tanh(self._w @ flat + self._b)


class RandomProjectionClassifier:
    """Deterministic image -> class-probability map (softmax of a fixed projection)."""

    def __init__(self, n_classes: int = 10, name: str = "toy-classifier"):
        self.n_classes = n_classes
        self.name = name
        self._w, self._b = _projection(name, 3 * _POOL * _POOL, n_classes)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        img = check_image(img, channels=3, name="img")
        logits = 4.0 * (self._w @ _pool_image(img).ravel().astype(np.float64)) + self._b
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()


class RandomProjectionImageEmbedder:
    """Deterministic image -> embedding map for CLIP-style similarity."""

    def __init__(self, dim: int = 32, name: str = "toy-image-embed"):
        self.dim = dim
        self.name = name
        self._features = RandomProjectionFeatures(dim, name=name)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        v = self._features(img)
        return v / np.linalg.norm(v)


class HashTokenTextEmbedder:
    """Deterministic text -> embedding: mean of seeded per-token vectors."""

    def __init__(self, dim: int = 32, name: str = "toy-text-embed"):
        self.dim = dim
        self.name = name

    def __call__(self, text: str) -> np.ndarray:
        tokens = [t for t in "".join(c if c.isalnum() else " " for c in text.lower()).split()]
        if not tokens:
            tokens = ["<empty>"]
        vecs = [
            numpy_rng(0, "provider-token", self.name, t).standard_normal(self.dim)
            for t in tokens
        ]
        v = np.mean(vecs, axis=0)
        return v / np.linalg.norm(v)


class LuminanceDepthEstimator:
    """Toy monocular depth stand-in: smoothed luminance as pseudo-disparity in [-1, 1]."""

    name = "luminance"

    def __call__(self, rgb: np.ndarray) -> np.ndarray:
        rgb = check_image(rgb, channels=3, name="rgb")
        lum = (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]).astype(np.float64)
        # box smoothing keeps it cheap and fully deterministic
        k = max(1, min(lum.shape) // 8)
        if k > 1:
            c = np.cumsum(np.cumsum(np.pad(lum, ((1, 0), (1, 0))), axis=0), axis=1)
            h, w = lum.shape
            ys = np.clip(np.arange(h) + 1, None, h)
            y0 = np.clip(np.arange(h) + 1 - k, 0, None)
            xs = np.clip(np.arange(w) + 1, None, w)
            x0 = np.clip(np.arange(w) + 1 - k, 0, None)
            area = (ys - y0)[:, None] * (xs - x0)[None, :]
            lum = (c[ys[:, None], xs[None, :]] - c[y0[:, None], xs[None, :]]
                   - c[ys[:, None], x0[None, :]] + c[y0[:, None], x0[None, :]]) / area
        return np.clip(lum, -1.0, 1.0).astype(np.float32)[None]


class ChannelMeanDepthEstimator:
    """Identity-style stand-in: channel mean of the input, unchanged otherwise.

    Feeding it a depth map replicated to 3 channels returns that map, which is
    what the degradation-strategy equivalence tests rely on.
    """

    name = "identity"

    def __call__(self, rgb: np.ndarray) -> np.ndarray:
        rgb = check_image(rgb, channels=3, name="rgb")
        return rgb.mean(axis=0, keepdims=True).astype(np.float32)


_FEATURE_PROVIDERS = {"toy-features": lambda: RandomProjectionFeatures()}
_CLASSIFIER_PROVIDERS = {"toy-classifier": lambda: RandomProjectionClassifier()}
_IMAGE_EMBED_PROVIDERS = {"toy-image-embed": lambda: RandomProjectionImageEmbedder()}
_TEXT_EMBED_PROVIDERS = {"toy-text-embed": lambda: HashTokenTextEmbedder()}
_DEPTH_PROVIDERS = {
    "luminance": LuminanceDepthEstimator,
    "identity": ChannelMeanDepthEstimator,
}


def _get(table: dict, kind: str, name: str):
    try:
        return table[name]()
    except KeyError:
        raise ConfigError(f"unknown {kind} provider {name!r}; known: {sorted(table)}") from None


def get_feature_extractor(name: str = "toy-features"):
    return _get(_FEATURE_PROVIDERS, "feature", name)


def get_classifier(name: str = "toy-classifier"):
    return _get(_CLASSIFIER_PROVIDERS, "classifier", name)


def get_image_embedder(name: str = "toy-image-embed"):
    return _get(_IMAGE_EMBED_PROVIDERS, "image-embed", name)


def get_text_embedder(name: str = "toy-text-embed"):
    return _get(_TEXT_EMBED_PROVIDERS, "text-embed", name)


def get_depth_estimator(name: str):
    if name is None:
        raise ConfigError("depth estimator provider required but not configured")
    return _get(_DEPTH_PROVIDERS, "depth", name)


def register_depth_estimator(name: str, factory) -> None:
    _DEPTH_PROVIDERS[name] = factory
