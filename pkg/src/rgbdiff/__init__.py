"""Joint RGB+depth latent diffusion: text-to-panorama generation, x4 RGBD
super-resolution via latent concatenation, and the matching evaluation
suite (image metrics plus the disparity-space depth protocol)."""

from .autoencoder import (
    Latent,
    LatentDistribution,
    RgbdAutoencoder,
    ae_loss,
    sample_latent,
)
from .checkpoints import load_autoencoder, load_diffusion, save_checkpoint
from .data import (
    DatasetManifest,
    ManifestEntry,
    RgbdSample,
    dataset_array,
    load_dataset,
    load_rgbd,
    merge_channels,
    read_manifest,
    save_rgbd,
    split_channels,
    write_manifest,
)
from .diffusion import (
    LatentDiffusion,
    denoise_step,
    sample_ddim,
    sample_ddpm,
    training_loss,
)
from .exceptions import ConfigError, DataError, NumericalError
from .metrics import (
    DepthEvalReport,
    EvalConfig,
    FeatureStats,
    aggregate_depth_eval,
    clip_similarity,
    evaluate_run,
    feature_stats,
    fit_scale_shift,
    frechet_distance,
    inception_score,
    mare,
    psnr,
    ssim,
    write_report,
)
from .pano import (
    Panorama,
    make_pano_caption,
    roll_pano,
    seam_discontinuity,
    tonemap_hdr,
)
from .schedule import NoiseSchedule, add_noise, make_schedule
from .sr import (
    BsrDegrader,
    DegradationRecipe,
    DepthLrStrategy,
    RgbdUpscaler,
    bicubic_upscale_rgbd,
    bsr_degrade,
    make_lr_depth,
    prepare_lr_latent,
    upscale,
)
from .text import HashTextEncoder, TextCondition, embed_text

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "NumericalError",
    "RgbdSample", "DatasetManifest", "ManifestEntry",
    "load_rgbd", "save_rgbd", "merge_channels", "split_channels",
    "read_manifest", "write_manifest", "load_dataset", "dataset_array",
    "RgbdAutoencoder", "LatentDistribution", "Latent", "ae_loss", "sample_latent",
    "NoiseSchedule", "make_schedule", "add_noise",
    "LatentDiffusion", "denoise_step", "training_loss", "sample_ddpm", "sample_ddim",
    "HashTextEncoder", "TextCondition", "embed_text",
    "DegradationRecipe", "BsrDegrader", "DepthLrStrategy", "RgbdUpscaler",
    "bsr_degrade", "make_lr_depth", "prepare_lr_latent", "upscale",
    "bicubic_upscale_rgbd",
    "Panorama", "tonemap_hdr", "roll_pano", "seam_discontinuity", "make_pano_caption",
    "psnr", "ssim", "FeatureStats", "feature_stats", "frechet_distance",
    "inception_score", "clip_similarity", "fit_scale_shift", "mare",
    "aggregate_depth_eval", "DepthEvalReport", "EvalConfig", "evaluate_run",
    "write_report",
    "save_checkpoint", "load_autoencoder", "load_diffusion",
]
