"""Quantitative evaluation: PSNR, SSIM, Frechet distance, Inception Score,
CLIP-style similarity, and the disparity-space depth protocol (scale-shift
least-squares alignment over sampled points, MARE, percentile outlier
filtering).

All metrics are pure functions of (inputs, seed). Feature/classifier/
embedding models enter through providers, so the whole suite runs with the
deterministic stand-ins.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import providers
from .data import DatasetManifest, load_entry
from .exceptions import DataError, NumericalError
from .seeding import derive_seed, numpy_rng
from .validation import check_same_shape, check_vector

# ---------------------------------------------------------------------------
# paired image metrics


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs return +inf.

    The default peak of 2.0 matches the [-1, 1] value convention.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, ("a", "b"))
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = 11,
    sigma: float = 1.5,
    data_range: float = 2.0,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity over all fully valid Gaussian windows.

    Inputs are 2-d maps; multichannel images should be channel-averaged
    first. Windowed means/variances use the standard Gaussian weighting.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2:
        raise DataError(f"ssim expects 2-d maps, got shape {a.shape}")
    check_same_shape(a, b, ("a", "b"))
    h, w = a.shape
    if window > h or window > w:
        raise DataError(f"window {window} exceeds image size {h}x{w}")
    kern = _gaussian_window(window, sigma)

    def wfilter(x):
        # valid-mode weighted local sums via stride tricks; images here are small
        from numpy.lib.stride_tricks import sliding_window_view

        patches = sliding_window_view(x, (window, window))
        return np.einsum("ijkl,kl->ij", patches, kern)

    mu_a = wfilter(a)
    mu_b = wfilter(b)
    var_a = wfilter(a * a) - mu_a**2
    var_b = wfilter(b * b) - mu_b**2
    cov = wfilter(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# distributional metrics


@dataclass
class FeatureStats:
    """Mean and covariance of a feature set."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).ravel()
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        d = self.mu.size
        if self.sigma.shape != (d, d):
            raise DataError(f"sigma must be {d}x{d}, got {self.sigma.shape}")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-8):
            raise DataError("sigma must be symmetric")


def feature_stats(features: np.ndarray) -> FeatureStats:
    """Stats of an (N, d) feature matrix; needs N >= 2 for a covariance."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise DataError(f"need an (N>=2, d) feature matrix, got {f.shape}")
    mu = f.mean(axis=0)
    sigma = np.cov(f, rowvar=False)
    sigma = np.atleast_2d(sigma)
    return FeatureStats(mu=mu, sigma=(sigma + sigma.T) / 2.0)


def _psd_sqrt(mat: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition; small negative
    eigen-noise (above -tol) is clipped, anything worse is an error."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < -tol * max(1.0, abs(vals.max())):
        raise NumericalError(
            f"matrix square root failed: eigenvalue {vals.min():.3e} below tolerance"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(s1: FeatureStats, s2: FeatureStats) -> float:
    """Frechet distance between two Gaussians:
    ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))."""
    if s1.mu.size != s2.mu.size:
        raise DataError(f"feature dims differ: {s1.mu.size} vs {s2.mu.size}")
    diff = s1.mu - s2.mu
    root1 = _psd_sqrt(s1.sigma)
    inner = _psd_sqrt(root1 @ s2.sigma @ root1)
    value = float(diff @ diff + np.trace(s1.sigma) + np.trace(s2.sigma) - 2.0 * np.trace(inner))
    if value < -1e-6:
        raise NumericalError(f"frechet distance came out negative: {value}")
    return max(value, 0.0)


def inception_score(probs: np.ndarray, splits: int = 10) -> tuple[float, float]:
    """Inception score over class-probability rows: per split,
    exp(mean_i KL(p(y|x_i) || p(y))). Returns (mean, std) across splits."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise DataError(f"probs must be (N, K), got {p.shape}")
    if p.min() < 0 or np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise DataError("probability rows must be non-negative and sum to 1")
    n = p.shape[0]
    if not 1 <= splits <= n:
        raise DataError(f"splits must lie in [1, {n}], got {splits}")
    scores = []
    bounds = np.linspace(0, n, splits + 1).astype(int)
    eps = 1e-16
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        part = p[lo:hi]
        marginal = part.mean(axis=0)
        kl = np.sum(part * (np.log(part + eps) - np.log(marginal + eps)), axis=1)
        scores.append(math.exp(float(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


def clip_similarity(image_emb: np.ndarray, text_emb: np.ndarray) -> float:
    """100 x cosine similarity between an image and a text embedding."""
    a = check_vector(image_emb, name="image_emb")
    b = check_vector(text_emb, name="text_emb")
    if a.size != b.size:
        raise DataError(f"embedding dims differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DataError("embeddings must be nonzero")
    return float(100.0 * (a @ b) / (na * nb))


# ---------------------------------------------------------------------------
# depth protocol (disparity space)


def fit_scale_shift(pred_pts: np.ndarray, ref_pts: np.ndarray) -> tuple[float, float]:
    """Least-squares (scale, shift) minimizing sum (s*pred + t - ref)^2,
    solved from the 2x2 normal equations. Constant pred is non-identifiable."""
    pred = check_vector(pred_pts, min_len=2, name="pred_pts")
    ref = check_vector(ref_pts, min_len=2, name="ref_pts")
    if pred.size != ref.size:
        raise DataError(f"point counts differ: {pred.size} vs {ref.size}")
    n = pred.size
    sp, sr = pred.sum(), ref.sum()
    spp, spr = (pred * pred).sum(), (pred * ref).sum()
    det = n * spp - sp * sp
    if det <= 1e-12 * max(1.0, n * spp):
        raise NumericalError("scale is non-identifiable: prediction points are constant")
    s = (n * spr - sp * sr) / det
    t = (sr - s * sp) / n
    return float(s), float(t)


def mare(
    pred: np.ndarray,
    ref: np.ndarray,
    n_points: int = 500,
    seed: int = 0,
    eps: float = 1e-3,
) -> tuple[float, float, float]:
    """Mean absolute relative error after scale-shift alignment in disparity space.

    Samples ``n_points`` pixels with a seeded RNG, fits (s, t) on them by
    least squares, applies the fit to the full map, and averages
    |s*pred + t - ref| / max(|ref|, eps) over all pixels. Returns
    (value, s, t). Maps smaller than n_points use every pixel.
    """
    p = np.asarray(pred, dtype=np.float64).ravel()
    r = np.asarray(ref, dtype=np.float64).ravel()
    if p.size != r.size:
        raise DataError(f"pred and ref sizes differ: {p.size} vs {r.size}")
    if p.size < 2:
        raise DataError("maps need at least 2 pixels")
    if n_points < 2:
        raise DataError(f"n_points must be >= 2, got {n_points}")
    if n_points >= p.size:
        idx = np.arange(p.size)
    else:
        idx = numpy_rng(seed, "mare-points").choice(p.size, size=n_points, replace=False)
    s, t = fit_scale_shift(p[idx], r[idx])
    rel = np.abs(s * p + t - r) / np.maximum(np.abs(r), eps)
    return float(rel.mean()), s, t


@dataclass
class DepthEvalReport:
    """Per-sample aligned MARE values plus filtered/unfiltered aggregates."""

    per_sample_mare: np.ndarray
    scale: np.ndarray
    shift: np.ndarray
    mare_mean: float
    mare_std: float
    mare_filtered_mean: float
    mare_filtered_std: float
    percentile: float = 90.0
    n_points: int = 500
    seed: int = 0
    sample_ids: list = field(default_factory=list)


def aggregate_depth_eval(per_sample: np.ndarray, percentile: float = 90.0) -> dict:
    """Mean/std over all samples plus over those at or below the error percentile."""
    v = check_vector(per_sample, min_len=1, name="per_sample")
    if not 0.0 < percentile <= 100.0:
        raise DataError(f"percentile must lie in (0, 100], got {percentile}")
    threshold = float(np.percentile(v, percentile))
    kept = v[v <= threshold]
    return {
        "mare_mean": float(v.mean()),
        "mare_std": float(v.std()),
        "mare_filtered_mean": float(kept.mean()),
        "mare_filtered_std": float(kept.std()),
        "percentile": float(percentile),
        "threshold": threshold,
        "n_total": int(v.size),
        "n_kept": int(kept.size),
    }


def depth_eval_report(
    preds: list[np.ndarray],
    refs: list[np.ndarray],
    sample_ids: list[str],
    n_points: int = 500,
    percentile: float = 90.0,
    seed: int = 0,
    eps: float = 1e-3,
) -> DepthEvalReport:
    """Run the full depth protocol: per-sample alignment seeded by
    (run seed, sample id), then percentile-filtered aggregation."""
    if not (len(preds) == len(refs) == len(sample_ids)) or not preds:
        raise DataError("preds, refs and sample_ids must be nonempty and aligned")
    values, scales, shifts = [], [], []
    for p, r, sid in zip(preds, refs, sample_ids):
        v, s, t = mare(p, r, n_points=n_points, seed=derive_seed(seed, "depth-eval", sid), eps=eps)
        values.append(v)
        scales.append(s)
        shifts.append(t)
    agg = aggregate_depth_eval(np.asarray(values), percentile)
    return DepthEvalReport(
        per_sample_mare=np.asarray(values),
        scale=np.asarray(scales),
        shift=np.asarray(shifts),
        mare_mean=agg["mare_mean"],
        mare_std=agg["mare_std"],
        mare_filtered_mean=agg["mare_filtered_mean"],
        mare_filtered_std=agg["mare_filtered_std"],
        percentile=percentile,
        n_points=n_points,
        seed=seed,
        sample_ids=list(sample_ids),
    )


# ---------------------------------------------------------------------------
# full evaluation runs


DEFAULT_METRICS = ("psnr", "ssim", "fid", "is", "clipsim", "mare")


@dataclass
class EvalConfig:
    metrics: tuple = DEFAULT_METRICS
    seed: int = 0
    n_points: int = 500
    percentile: float = 90.0
    is_splits: int = 10
    psnr_peak: float = 2.0
    ssim_window: int = 11
    feature_provider: str = "toy-features"
    classifier_provider: str = "toy-classifier"
    image_embed_provider: str = "toy-image-embed"
    text_embed_provider: str = "toy-text-embed"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["metrics"] = list(self.metrics)
        return d


def _pair_entries(generated: DatasetManifest, reference: DatasetManifest):
    ref_by_id = {e.id: e for e in reference.entries}
    pairs = []
    for e in generated.entries:
        if e.id not in ref_by_id:
            raise DataError(f"generated id {e.id!r} missing from reference manifest")
        pairs.append((e, ref_by_id[e.id]))
    if not pairs:
        raise DataError("no paired samples to evaluate")
    return pairs


def evaluate_run(
    generated: DatasetManifest,
    reference: DatasetManifest,
    config: EvalConfig | None = None,
) -> dict:
    """Compute all configured metrics between two id-aligned manifests.

    Returns a JSON-ready report dict: per-metric value/dispersion/sample
    count plus a config echo. Deterministic given the config seed.
    """
    cfg = config or EvalConfig()
    pairs = _pair_entries(generated, reference)
    gen = [load_entry(generated, g) for g, _ in pairs]
    ref = [load_entry(reference, r) for _, r in pairs]
    n = len(pairs)
    report: dict = {"metrics": {}, "config": cfg.to_dict(), "n_samples": n, "seed": cfg.seed}

    want = set(cfg.metrics)
    unknown = want - set(DEFAULT_METRICS)
    if unknown:
        raise DataError(f"unknown metrics: {sorted(unknown)}")

    if "psnr" in want:
        vals = [psnr(np.concatenate([g.rgb, g.depth]), np.concatenate([r.rgb, r.depth]),
                     peak=cfg.psnr_peak) for g, r in zip(gen, ref)]
        report["metrics"]["psnr"] = _summary(vals)
    if "ssim" in want:
        vals = [ssim(g.rgb.mean(axis=0), r.rgb.mean(axis=0), window=cfg.ssim_window)
                for g, r in zip(gen, ref)]
        report["metrics"]["ssim"] = _summary(vals)
    if "fid" in want:
        if n < 2:
            raise DataError("fid needs at least 2 samples per set")
        extractor = providers.get_feature_extractor(cfg.feature_provider)
        fg = np.stack([extractor(g.rgb) for g in gen])
        fr = np.stack([extractor(r.rgb) for r in ref])
        value = frechet_distance(feature_stats(fg), feature_stats(fr))
        report["metrics"]["fid"] = {"value": value, "dispersion": 0.0, "n": n}
    if "is" in want:
        classifier = providers.get_classifier(cfg.classifier_provider)
        probs = np.stack([classifier(g.rgb) for g in gen])
        splits = min(cfg.is_splits, n)
        mean, std = inception_score(probs, splits=splits)
        report["metrics"]["is"] = {"value": mean, "dispersion": std, "n": n,
                                   "splits": splits}
    if "clipsim" in want:
        img_embed = providers.get_image_embedder(cfg.image_embed_provider)
        txt_embed = providers.get_text_embedder(cfg.text_embed_provider)
        vals = [clip_similarity(img_embed(g.rgb), txt_embed(g.caption or "")) for g in gen]
        report["metrics"]["clipsim"] = _summary(vals)
    if "mare" in want:
        depth_report = depth_eval_report(
            [g.depth for g in gen], [r.depth for r in ref],
            [g.id for g in gen], n_points=cfg.n_points,
            percentile=cfg.percentile, seed=cfg.seed,
        )
        report["metrics"]["mare"] = {
            "value": depth_report.mare_mean,
            "dispersion": depth_report.mare_std,
            "filtered_value": depth_report.mare_filtered_mean,
            "filtered_dispersion": depth_report.mare_filtered_std,
            "percentile": depth_report.percentile,
            "n": n,
        }
    return report


def _summary(vals) -> dict:
    arr = np.asarray(vals, dtype=np.float64)
    return {"value": float(arr.mean()), "dispersion": float(arr.std()), "n": int(arr.size)}


def write_report(report: dict, path) -> Path:
    """Serialize a report deterministically (sorted keys, fixed layout)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
