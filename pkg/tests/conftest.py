import numpy as np
import pytest

import rgbdiff as rd
from rgbdiff.sr import resize


def low_freq_field(rng, size, coarse=8, amplitude=0.8):
    """Smooth random field in [-amplitude, amplitude] via bicubic upsampling."""
    grid = rng.uniform(-amplitude, amplitude, (1, coarse, coarse))
    field = resize(grid, size / coarse, "bicubic")[0]
    return np.clip(field, -1.0, 1.0)


def synthetic_rgbd_batch(n, size, seed):
    """Structured RGBD samples: smooth fields plus hard-edged rectangles,
    depth correlated with the shapes."""
    rng = np.random.default_rng(seed)
    out = np.zeros((n, 4, size, size), dtype=np.float32)
    for i in range(n):
        for c in range(3):
            out[i, c] = low_freq_field(rng, size)
        depth = low_freq_field(rng, size, coarse=4, amplitude=0.6)
        for _ in range(3):
            h0, w0 = rng.integers(0, size - size // 4, size=2)
            h1 = h0 + rng.integers(size // 8, size // 4)
            w1 = w0 + rng.integers(size // 8, size // 4)
            color = rng.uniform(-1, 1, size=3)
            out[i, :3, h0:h1, w0:w1] = color[:, None, None]
            depth[h0:h1, w0:w1] = rng.uniform(-1, 1)
        out[i, 3] = depth
    return np.clip(out, -1.0, 1.0)


def blocky_rgbd_batch(n, size, seed, block=4):
    """Piecewise-constant random blocks: high-frequency content that bicubic
    upsampling reconstructs poorly."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-1.0, 1.0, (n, 4, size // block, size // block))
    return np.kron(coarse, np.ones((1, 1, block, block))).astype(np.float32)


def rgbd_sample_from(x, caption="", sample_id="s"):
    rgb, depth = x[:3], x[3:4]
    return rd.RgbdSample(rgb=rgb, depth=depth, caption=caption, id=sample_id)


def write_dataset(tmpdir, X, captions=None, split="train"):
    """Write an (N, 4, H, W) batch to disk as a manifest + PNG pairs."""
    entries = []
    for i, x in enumerate(X):
        sid = f"s{i:03d}"
        rgb_rel, depth_rel = f"{sid}_rgb.png", f"{sid}_depth.png"
        sample = rgbd_sample_from(x, sample_id=sid)
        rd.save_rgbd(sample, tmpdir / rgb_rel, tmpdir / depth_rel)
        entries.append(rd.ManifestEntry(sid, rgb_rel, depth_rel,
                                        captions[i] if captions else f"sample {i}"))
    manifest = rd.DatasetManifest(entries=entries, resolution=X.shape[2:], split=split)
    path = tmpdir / "manifest.jsonl"
    rd.write_manifest(manifest, path)
    return path


# ---------------------------------------------------------------------------
# heavy session fixtures, shared between unit tests and the acceptance suite

AE_OVERFIT_STEPS = 2000
DIFFUSION_OVERFIT_STEPS = 3000


@pytest.fixture(scope="session")
def ae_overfit():
    """The toy-training run from the acceptance protocol: 20 synthetic 64x64
    samples, 2000 steps."""
    X = synthetic_rgbd_batch(20, 64, seed=0)
    ae = rd.RgbdAutoencoder(
        base_channels=12, channel_multipliers=(1, 2, 2), blocks_per_level=1,
        kl_weight=1e-6, learning_rate=2e-3, batch_size=4,
        n_steps=AE_OVERFIT_STEPS, seed=0,
    )
    ae.fit(X)
    return ae, X


@pytest.fixture(scope="session")
def diffusion_overfit():
    """Overfit run on 8 fixed latents, 3000 steps."""
    rng = np.random.default_rng(42)
    Z = rng.normal(size=(8, 4, 8, 8)).astype(np.float32)
    captions = [f"sample number {i}" for i in range(8)]
    ldm = rd.LatentDiffusion(
        in_channels=4, base_width=32, channel_mult=(1, 2), context_dim=16,
        timesteps=100, beta_min=0.01, beta_max=0.2,
        learning_rate=2e-3, lr_decay="cosine", batch_size=8,
        n_steps=DIFFUSION_OVERFIT_STEPS, uncond_prob=0.1, seed=0,
    )
    ldm.fit(Z, captions)
    return ldm, Z


@pytest.fixture(scope="session")
def sr_overfit():
    """SR toy overfit: 4 blocky 32x32 pairs, benign degradation, trained AE
    plus an 8-channel diffusion model."""
    X = blocky_rgbd_batch(4, 32, seed=7, block=4)
    recipe = rd.DegradationRecipe(
        blur_sigma=(0.0, 0.0), noise_sigma=(0.0, 0.0), jpeg_quality=(100, 100),
        interp_weights=(("bicubic", 1.0),), seed=0,
    )
    lr_pairs = []
    for i, x in enumerate(X):
        lr_rgb = rd.bsr_degrade(x[:3], recipe.with_seed(i))
        cond = rd.make_lr_depth(x[3:4], lr_rgb, rd.DepthLrStrategy("B"))
        lr_pairs.append((lr_rgb, cond))

    ae = rd.RgbdAutoencoder(
        base_channels=24, channel_multipliers=(1, 2, 2), blocks_per_level=1,
        kl_weight=1e-6, learning_rate=2e-3, batch_size=4, n_steps=1500, seed=1,
    )
    ae.fit(X)

    upscaler = rd.RgbdUpscaler(
        autoencoder=ae,
        diffusion_params=dict(
            base_width=32, channel_mult=(1, 2), context_dim=16, timesteps=100,
            beta_min=0.01, beta_max=0.2, learning_rate=2e-3, lr_decay="cosine",
            batch_size=4, n_steps=2500, uncond_prob=0.0,
        ),
        sampler="ddim", steps=50, eta=0.0, guidance_scale=1.0, seed=2,
    )
    captions = [f"pattern {i}" for i in range(4)]
    upscaler.fit(X, captions, lr_pairs=lr_pairs)
    return upscaler, X, lr_pairs, captions
