"""Command-line entry point.

Subcommands: prepare-pano, degrade, train, sample-pano, upscale, evaluate.
Each command resolves its configuration from built-in defaults, an optional
JSON config file, and CLI flags (flags win), rejects unknown keys before
touching the filesystem, and writes the resolved config next to its
outputs so any run can be reproduced byte for byte.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import pano as pano_mod
from . import providers
from .autoencoder import RgbdAutoencoder
from .checkpoints import load_autoencoder, load_diffusion, save_checkpoint
from .data import (
    DatasetManifest,
    ManifestEntry,
    RgbdSample,
    dataset_array,
    load_dataset,
    load_depth_image,
    load_rgb_image,
    read_manifest,
    save_depth_image,
    save_rgb_image,
    split_channels,
    write_manifest,
)
from .diffusion import LatentDiffusion
from .exceptions import ConfigError, DataError, NumericalError
from .metrics import EvalConfig, evaluate_run, write_report
from .seeding import derive_seed
from .sr import (
    SCALE_FACTOR,
    DegradationRecipe,
    DepthLrStrategy,
    bsr_degrade,
    make_lr_depth,
    prepare_lr_latent,
    resize,
    upscale,
)

OUTPUT_ROOT_ENV = "RGBDIFF_OUTPUT_ROOT"


# ---------------------------------------------------------------------------
# config plumbing

def _merge_config(defaults: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where} must be a mapping")
            out[key] = _merge_config(out[key], value, where)
        else:
            out[key] = value
    return out


def resolve_config(defaults: dict, config_path, flag_overrides: dict) -> dict:
    cfg = copy.deepcopy(defaults)
    if config_path:
        p = Path(config_path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            loaded = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        cfg = _merge_config(cfg, loaded)
    overrides = {k: v for k, v in flag_overrides.items() if v is not None}
    cfg = _merge_config(cfg, overrides)
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    if not out.is_absolute():
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root:
            out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(cfg: dict, out: Path) -> None:
    (out / "resolved_config.json").write_text(
        json.dumps(cfg, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _require(cfg: dict, key: str) -> str:
    if not cfg.get(key):
        raise ConfigError(f"missing required option: {key.replace('_', '-')}")
    return cfg[key]


# ---------------------------------------------------------------------------
# prepare-pano

PREPARE_PANO_DEFAULTS = {
    "hdr_dir": None,
    "out": "pano_dataset",
    "height": 512,
    "augmentations": 4,
    "depth_provider": "luminance",
    "captions_file": None,
    "split": "train",
    "seed": 0,
}


def cmd_prepare_pano(args) -> int:
    cfg = resolve_config(
        PREPARE_PANO_DEFAULTS, args.config,
        {"hdr_dir": args.hdr_dir, "out": args.out, "height": args.height,
         "augmentations": args.augmentations, "depth_provider": args.depth_provider,
         "captions_file": args.captions_file, "split": args.split, "seed": args.seed},
    )
    hdr_dir = Path(_require(cfg, "hdr_dir"))
    if not hdr_dir.is_dir():
        raise DataError(f"hdr dir not found: {hdr_dir}")
    files = sorted(hdr_dir.glob("*.npy"))
    if not files:
        raise DataError(f"no .npy radiance rasters in {hdr_dir}")
    height = int(cfg["height"])
    if height < 8 or height % 8:
        raise ConfigError(f"height must be a positive multiple of 8, got {height}")
    captions = {}
    if cfg["captions_file"]:
        captions = json.loads(Path(cfg["captions_file"]).read_text(encoding="utf-8"))

    out = _out_dir(cfg)
    _write_resolved(cfg, out)
    depth_provider = providers.get_depth_estimator(cfg["depth_provider"])
    entries = []
    for f in files:
        hdr = pano_mod.load_hdr(f)
        hdr = np.clip(resize(hdr, height / hdr.shape[1], "bicubic"), 0.0, None)
        if hdr.shape[1:] != (height, 2 * height):
            hdr = np.clip(_resize_to(hdr, (height, 2 * height)), 0.0, None)
        raw_caption = captions.get(f.stem, f.stem.replace("_", " "))
        for i in range(int(cfg["augmentations"])):
            params = pano_mod.pano_augmentation_params(cfg["seed"], f.stem, i)
            ldr = pano_mod.tonemap_hdr(hdr, params["exposure"], params["gamma"])
            depth = depth_provider(ldr)
            sample = RgbdSample(rgb=ldr, depth=depth, caption="", id=f"{f.stem}_{i:03d}")
            rolled = pano_mod.roll_pano(
                pano_mod.Panorama(rgbd=sample), params["roll_fraction"]
            ).rgbd
            caption = pano_mod.make_pano_caption(raw_caption, params["caption_seed"])
            rgb_rel = f"images/{rolled.id}_rgb.png"
            depth_rel = f"images/{rolled.id}_depth.png"
            save_rgb_image(rolled.rgb, out / rgb_rel)
            save_depth_image(rolled.depth, out / depth_rel)
            entries.append(ManifestEntry(rolled.id, rgb_rel, depth_rel, caption))
    manifest = DatasetManifest(entries=entries, resolution=(height, 2 * height),
                               split=cfg["split"])
    write_manifest(manifest, out / "manifest.jsonl")
    print(f"wrote {len(entries)} samples to {out / 'manifest.jsonl'}")
    return 0


def _resize_to(x: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    import torch

    t = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))[None]
    out = torch.nn.functional.interpolate(t, size=hw, mode="bicubic", align_corners=False)
    return out[0].numpy()


# ---------------------------------------------------------------------------
# degrade

DEGRADE_DEFAULTS = {
    "manifest": None,
    "out": "lr_dataset",
    "strategy": "b",
    "depth_provider": None,
    "seed": 0,
    "recipe": {
        "blur_sigma": [0.2, 2.0],
        "noise_sigma": [0.0, 10.0 / 255.0],
        "jpeg_quality": [60, 95],
        "interp_weights": [["bicubic", 0.7], ["bilinear", 0.2], ["nearest", 0.1]],
    },
}


def _strategy_from_cfg(cfg: dict) -> DepthLrStrategy:
    kind = str(cfg["strategy"]).upper()
    estimator = None
    if kind == "D":
        estimator = providers.get_depth_estimator(cfg.get("depth_provider"))
    return DepthLrStrategy(kind=kind, estimator=estimator)


def cmd_degrade(args) -> int:
    cfg = resolve_config(
        DEGRADE_DEFAULTS, args.config,
        {"manifest": args.manifest, "out": args.out, "strategy": args.strategy,
         "depth_provider": args.depth_provider, "seed": args.seed},
    )
    manifest = read_manifest(_require(cfg, "manifest"))
    strategy = _strategy_from_cfg(cfg)
    recipe = DegradationRecipe.from_dict({**cfg["recipe"], "seed": 0})
    out = _out_dir(cfg)
    _write_resolved(cfg, out)
    entries = []
    for e in manifest.entries:
        hr_rgb = load_rgb_image(manifest.resolve(e.rgb_path))
        hr_depth = load_depth_image(manifest.resolve(e.depth_path))
        sample_recipe = recipe.with_seed(derive_seed(cfg["seed"], "degrade", e.id))
        lr_rgb = bsr_degrade(hr_rgb, sample_recipe)
        cond = make_lr_depth(hr_depth, lr_rgb, strategy)
        rgb_rel = f"images/{e.id}_lr_rgb.png"
        depth_rel = f"images/{e.id}_depth_cond.png"
        save_rgb_image(lr_rgb, out / rgb_rel)
        save_depth_image(cond, out / depth_rel)
        entries.append(ManifestEntry(e.id, rgb_rel, depth_rel, e.caption))
    h, w = manifest.resolution
    lr_manifest = DatasetManifest(
        entries=entries, resolution=(h // SCALE_FACTOR, w // SCALE_FACTOR),
        split=manifest.split,
    )
    write_manifest(lr_manifest, out / "manifest.jsonl")
    print(f"wrote {len(entries)} degraded pairs to {out / 'manifest.jsonl'}")
    return 0


def _load_lr_pair(manifest: DatasetManifest, entry: ManifestEntry):
    """LR rgb at manifest resolution plus its depth map, which may sit at
    either LR or conditioning (4x) resolution."""
    lr_rgb = load_rgb_image(manifest.resolve(entry.rgb_path))
    depth = load_depth_image(manifest.resolve(entry.depth_path))
    return lr_rgb, depth


def _conditioning_depth(lr_rgb: np.ndarray, depth: np.ndarray, cfg: dict) -> np.ndarray:
    """Bring the stored depth to conditioning (HR) resolution per strategy."""
    hr_hw = (lr_rgb.shape[1] * SCALE_FACTOR, lr_rgb.shape[2] * SCALE_FACTOR)
    if depth.shape[1:] == hr_hw:
        return depth
    if depth.shape[1:] != lr_rgb.shape[1:]:
        raise DataError(
            f"depth {depth.shape[1:]} matches neither LR {lr_rgb.shape[1:]} nor HR {hr_hw}"
        )
    kind = str(cfg["strategy"]).upper()
    if kind == "O":
        raise DataError("strategy O needs depth at HR resolution, got LR dims")
    if kind == "D":
        est = providers.get_depth_estimator(cfg.get("depth_provider"))
        depth = est(lr_rgb)
    return np.clip(resize(depth, float(SCALE_FACTOR), "bicubic"), -1.0, 1.0)


# ---------------------------------------------------------------------------
# train

TRAIN_DEFAULTS = {
    "kind": None,
    "manifest": None,
    "lr_manifest": None,
    "ae_checkpoint": None,
    "resume": None,
    "out": "train_run",
    "seed": 0,
    "steps": None,  # overrides the active section's n_steps when set
    "strategy": "b",
    "depth_provider": None,
    "ae": {
        "base_channels": 16,
        "channel_multipliers": [1, 2, 2],
        "blocks_per_level": 1,
        "kl_weight": 1e-6,
        "recon_weight_rgb": 1.0,
        "recon_weight_depth": 1.0,
        "learning_rate": 2e-3,
        "batch_size": 4,
        "n_steps": 2000,
    },
    "diffusion": {
        "base_width": 32,
        "channel_mult": [1, 2],
        "attn_levels": [0, 1],
        "context_dim": 32,
        "timesteps": 1000,
        "beta_min": 1e-4,
        "beta_max": 0.02,
        "learning_rate": 2e-3,
        "batch_size": 8,
        "n_steps": 1000,
        "uncond_prob": 0.1,
    },
}


def cmd_train(args) -> int:
    cfg = resolve_config(
        TRAIN_DEFAULTS, args.config,
        {"kind": args.kind, "manifest": args.manifest, "lr_manifest": args.lr_manifest,
         "ae_checkpoint": args.ae_checkpoint, "resume": args.resume, "out": args.out,
         "seed": args.seed, "steps": args.steps, "strategy": args.strategy,
         "depth_provider": args.depth_provider},
    )
    kind = _require(cfg, "kind")
    if kind not in ("ae", "diffusion-pano", "diffusion-sr"):
        raise ConfigError(f"kind must be ae, diffusion-pano or diffusion-sr, got {kind!r}")
    if cfg["steps"] is not None:
        section = "ae" if kind == "ae" else "diffusion"
        cfg[section]["n_steps"] = int(cfg["steps"])
    manifest = read_manifest(_require(cfg, "manifest"))
    samples = load_dataset(manifest)
    if not samples:
        raise DataError("manifest has no samples")
    out = _out_dir(cfg)
    _write_resolved(cfg, out)

    if kind == "ae":
        estimator = _train_ae(cfg, samples)
        save_checkpoint(out / "checkpoint.pt", estimator, "ae")
    else:
        estimator = _train_diffusion(cfg, kind, manifest, samples)
        save_checkpoint(out / "checkpoint.pt", estimator, "diffusion")
    _write_loss_log(estimator.loss_history_, out / "loss_log.txt")
    print(f"wrote checkpoint to {out / 'checkpoint.pt'}")
    return 0


def _train_ae(cfg: dict, samples) -> RgbdAutoencoder:
    X = dataset_array(samples)
    if cfg["resume"]:
        ae = load_autoencoder(cfg["resume"])
        ae.set_params(warm_start=True, n_steps=int(cfg["ae"]["n_steps"]))
    else:
        ae_cfg = dict(cfg["ae"])
        ae_cfg["channel_multipliers"] = tuple(ae_cfg["channel_multipliers"])
        ae = RgbdAutoencoder(**ae_cfg, seed=cfg["seed"])
    return ae.fit(X)


def _train_diffusion(cfg: dict, kind: str, manifest, samples) -> LatentDiffusion:
    ae = load_autoencoder(_require(cfg, "ae_checkpoint"))
    X = dataset_array(samples)
    latents = ae.transform(X)
    captions = [s.caption for s in samples]
    in_channels = 8 if kind == "diffusion-sr" else 4

    extra = None
    if kind == "diffusion-sr":
        lr_manifest = read_manifest(_require(cfg, "lr_manifest"))
        lr_by_id = {e.id: e for e in lr_manifest.entries}
        conds = []
        for s in samples:
            if s.id not in lr_by_id:
                raise DataError(f"lr manifest missing id {s.id!r}")
            lr_rgb, depth = _load_lr_pair(lr_manifest, lr_by_id[s.id])
            cond_depth = _conditioning_depth(lr_rgb, depth, cfg)
            conds.append(prepare_lr_latent(lr_rgb, cond_depth, ae))
        extra = np.stack(conds)

    if cfg["resume"]:
        ldm = load_diffusion(cfg["resume"], expect_in_channels=in_channels)
        ldm.set_params(warm_start=True, n_steps=int(cfg["diffusion"]["n_steps"]))
    else:
        d_cfg = dict(cfg["diffusion"])
        d_cfg["channel_mult"] = tuple(d_cfg["channel_mult"])
        d_cfg["attn_levels"] = tuple(d_cfg["attn_levels"])
        ldm = LatentDiffusion(in_channels=in_channels, **d_cfg, seed=cfg["seed"])
    if ldm.in_channels != in_channels:
        raise ConfigError(
            f"{kind} needs a {in_channels}-channel denoiser, config says {ldm.in_channels}"
        )
    return ldm.fit(latents, captions, extra=extra)


def _write_loss_log(history, path: Path) -> None:
    lines = [f"{i}\t{loss!r}" for i, loss in enumerate(history)]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ---------------------------------------------------------------------------
# sample-pano

SAMPLE_PANO_DEFAULTS = {
    "prompt": "",
    "ae_checkpoint": None,
    "diffusion_checkpoint": None,
    "out": "pano_samples",
    "height": 512,
    "sampler": "ddim",
    "steps": 50,
    "eta": 0.0,
    "guidance_scale": None,  # falls back to the checkpoint's configured scale
    "seed": 0,
}


def cmd_sample_pano(args) -> int:
    cfg = resolve_config(
        SAMPLE_PANO_DEFAULTS, args.config,
        {"prompt": args.prompt, "ae_checkpoint": args.ae_checkpoint,
         "diffusion_checkpoint": args.diffusion_checkpoint, "out": args.out,
         "height": args.height, "sampler": args.sampler, "steps": args.steps,
         "eta": args.eta, "guidance_scale": args.guidance_scale, "seed": args.seed},
    )
    ae = load_autoencoder(_require(cfg, "ae_checkpoint"))
    ldm = load_diffusion(_require(cfg, "diffusion_checkpoint"), expect_in_channels=4)
    height = int(cfg["height"])
    if height % 8:
        raise ConfigError(f"height must be a multiple of 8, got {height}")
    latent_shape = (4, height // 8, height // 4)  # decoded output is H x 2H
    out = _out_dir(cfg)
    _write_resolved(cfg, out)
    latent = ldm.sample(
        caption=cfg["prompt"], shape=latent_shape, method=cfg["sampler"],
        steps=int(cfg["steps"]), eta=float(cfg["eta"]),
        guidance_scale=cfg["guidance_scale"], seed=cfg["seed"],
    )
    decoded = np.clip(ae.decode(latent), -1.0, 1.0)
    rgb, depth = split_channels(decoded)
    save_rgb_image(rgb, out / "rgb.png")
    save_depth_image(depth, out / "depth.png")
    meta = {
        "prompt": cfg["prompt"], "seed": cfg["seed"], "steps": int(cfg["steps"]),
        "guidance_scale": cfg["guidance_scale"] if cfg["guidance_scale"] is not None
        else ldm.guidance_scale,
        "sampler": cfg["sampler"], "eta": float(cfg["eta"]),
        "height": height, "width": 2 * height,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")
    print(f"wrote panorama to {out}")
    return 0


# ---------------------------------------------------------------------------
# upscale

UPSCALE_DEFAULTS = {
    "lr_manifest": None,
    "ae_checkpoint": None,
    "diffusion_checkpoint": None,
    "out": "upscaled",
    "strategy": "b",
    "depth_provider": None,
    "sampler": "ddim",
    "steps": 25,
    "eta": 0.0,
    "guidance_scale": 1.0,
    "seed": 0,
}


def cmd_upscale(args) -> int:
    cfg = resolve_config(
        UPSCALE_DEFAULTS, args.config,
        {"lr_manifest": args.lr_manifest, "ae_checkpoint": args.ae_checkpoint,
         "diffusion_checkpoint": args.diffusion_checkpoint, "out": args.out,
         "strategy": args.strategy, "depth_provider": args.depth_provider,
         "sampler": args.sampler, "steps": args.steps, "eta": args.eta,
         "guidance_scale": args.guidance_scale, "seed": args.seed},
    )
    if str(cfg["strategy"]).upper() == "D":
        providers.get_depth_estimator(cfg.get("depth_provider"))  # fail fast
    ae = load_autoencoder(_require(cfg, "ae_checkpoint"))
    ldm = load_diffusion(_require(cfg, "diffusion_checkpoint"), expect_in_channels=8)
    manifest = read_manifest(_require(cfg, "lr_manifest"))
    out = _out_dir(cfg)
    _write_resolved(cfg, out)
    entries = []
    for e in manifest.entries:
        lr_rgb, depth = _load_lr_pair(manifest, e)
        cond = _conditioning_depth(lr_rgb, depth, cfg)
        sample = upscale(
            lr_rgb, cond, e.caption, ae, ldm,
            sampler=cfg["sampler"], steps=int(cfg["steps"]), eta=float(cfg["eta"]),
            guidance_scale=float(cfg["guidance_scale"]),
            seed=derive_seed(cfg["seed"], "upscale", e.id),
        )
        rgb_rel = f"images/{e.id}_rgb.png"
        depth_rel = f"images/{e.id}_depth.png"
        save_rgb_image(sample.rgb, out / rgb_rel)
        save_depth_image(sample.depth, out / depth_rel)
        meta = {
            "id": e.id, "strategy": str(cfg["strategy"]).upper(),
            "sampler": cfg["sampler"], "steps": int(cfg["steps"]),
            "eta": float(cfg["eta"]), "guidance_scale": float(cfg["guidance_scale"]),
            "seed": cfg["seed"], "caption": e.caption,
        }
        (out / f"images/{e.id}_meta.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        entries.append(ManifestEntry(e.id, rgb_rel, depth_rel, e.caption))
    h, w = manifest.resolution
    hr_manifest = DatasetManifest(
        entries=entries, resolution=(h * SCALE_FACTOR, w * SCALE_FACTOR),
        split=manifest.split,
    )
    write_manifest(hr_manifest, out / "manifest.jsonl")
    print(f"wrote {len(entries)} upscaled pairs to {out / 'manifest.jsonl'}")
    return 0


# ---------------------------------------------------------------------------
# evaluate

EVALUATE_DEFAULTS = {
    "generated": None,
    "reference": None,
    "out": "eval",
    "metrics": list(EvalConfig().metrics),
    "n_points": 500,
    "percentile": 90.0,
    "is_splits": 10,
    "seed": 0,
    "feature_provider": "toy-features",
    "classifier_provider": "toy-classifier",
    "image_embed_provider": "toy-image-embed",
    "text_embed_provider": "toy-text-embed",
}


def cmd_evaluate(args) -> int:
    metrics = args.metrics.split(",") if args.metrics else None
    cfg = resolve_config(
        EVALUATE_DEFAULTS, args.config,
        {"generated": args.generated, "reference": args.reference, "out": args.out,
         "metrics": metrics, "n_points": args.n_points, "percentile": args.percentile,
         "seed": args.seed, "is_splits": args.is_splits,
         "feature_provider": args.feature_provider,
         "classifier_provider": args.classifier_provider},
    )
    generated = read_manifest(_require(cfg, "generated"))
    reference = read_manifest(_require(cfg, "reference"))
    eval_cfg = EvalConfig(
        metrics=tuple(cfg["metrics"]), seed=int(cfg["seed"]),
        n_points=int(cfg["n_points"]), percentile=float(cfg["percentile"]),
        is_splits=int(cfg["is_splits"]),
        feature_provider=cfg["feature_provider"],
        classifier_provider=cfg["classifier_provider"],
        image_embed_provider=cfg["image_embed_provider"],
        text_embed_provider=cfg["text_embed_provider"],
    )
    out = _out_dir(cfg)
    _write_resolved(cfg, out)
    report = evaluate_run(generated, reference, eval_cfg)
    path = write_report(report, out / "report.json")
    print(f"wrote report to {path}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgbdiff",
        description="Joint RGBD latent diffusion: panorama generation, x4 "
                    "super-resolution, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("prepare-pano", help="tone-map, augment and caption HDR panoramas")
    common(p)
    p.add_argument("--hdr-dir")
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--augmentations", type=int, default=None)
    p.add_argument("--depth-provider", default=None)
    p.add_argument("--captions-file", default=None)
    p.add_argument("--split", default=None)
    p.set_defaults(func=cmd_prepare_pano)

    p = sub.add_parser("degrade", help="produce LR observations from an HR manifest")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--strategy", choices=["d", "o", "b", "D", "O", "B"], default=None)
    p.add_argument("--depth-provider", default=None)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train the autoencoder or a diffusion model")
    common(p)
    p.add_argument("--kind", choices=["ae", "diffusion-pano", "diffusion-sr"])
    p.add_argument("--manifest")
    p.add_argument("--lr-manifest", default=None)
    p.add_argument("--ae-checkpoint", default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--strategy", choices=["d", "o", "b", "D", "O", "B"], default=None)
    p.add_argument("--depth-provider", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample-pano", help="text-to-panorama RGBD sampling")
    common(p)
    p.add_argument("--prompt", default=None)
    p.add_argument("--ae-checkpoint")
    p.add_argument("--diffusion-checkpoint")
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--sampler", choices=["ddim", "ddpm"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--guidance-scale", type=float, default=None)
    p.set_defaults(func=cmd_sample_pano)

    p = sub.add_parser("upscale", help="x4 RGBD upscaling of LR inputs")
    common(p)
    p.add_argument("--lr-manifest")
    p.add_argument("--ae-checkpoint")
    p.add_argument("--diffusion-checkpoint")
    p.add_argument("--strategy", choices=["d", "o", "b", "D", "O", "B"], default=None)
    p.add_argument("--depth-provider", default=None)
    p.add_argument("--sampler", choices=["ddim", "ddpm"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--guidance-scale", type=float, default=None)
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("evaluate", help="compute metrics between two manifests")
    common(p)
    p.add_argument("--generated")
    p.add_argument("--reference")
    p.add_argument("--metrics", default=None, help="comma-separated subset")
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--percentile", type=float, default=None)
    p.add_argument("--is-splits", type=int, default=None)
    p.add_argument("--feature-provider", default=None)
    p.add_argument("--classifier-provider", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
