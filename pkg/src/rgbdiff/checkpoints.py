"""Checkpoint container shared by the autoencoder and diffusion estimators.

One serialized file holds named parameter tensors, the estimator's
hyperparameters, fitted extras, and a format version integer. Saves are
byte-deterministic for identical contents.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .autoencoder import RgbdAutoencoder
from .diffusion import LatentDiffusion
from .exceptions import ConfigError, DataError

FORMAT_VERSION = 1
_KINDS = ("ae", "diffusion")


def save_checkpoint(path, estimator, kind: str, extra: dict | None = None) -> Path:
    if kind not in _KINDS:
        raise ConfigError(f"unknown checkpoint kind {kind!r}; expected one of {_KINDS}")
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "params": estimator.get_params(),
        "state": estimator.state_dict(),
        "loss_history": list(getattr(estimator, "loss_history_", [])),
        "extra": dict(extra or {}),
    }
    if kind == "ae":
        payload["extra"]["latent_scale"] = float(estimator.latent_scale_)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format version {version!r}")
    if payload.get("kind") not in _KINDS:
        raise DataError(f"unsupported checkpoint kind {payload.get('kind')!r}")
    return payload


def load_autoencoder(path) -> RgbdAutoencoder:
    payload = load_checkpoint(path)
    if payload["kind"] != "ae":
        raise DataError(f"{path} holds a {payload['kind']!r} checkpoint, expected 'ae'")
    ae = RgbdAutoencoder(**payload["params"])
    ae.load_state(payload["state"], payload["extra"]["latent_scale"], payload["loss_history"])
    return ae


def load_diffusion(path, expect_in_channels: int | None = None) -> LatentDiffusion:
    payload = load_checkpoint(path)
    if payload["kind"] != "diffusion":
        raise DataError(f"{path} holds a {payload['kind']!r} checkpoint, expected 'diffusion'")
    ldm = LatentDiffusion(**payload["params"])
    if expect_in_channels is not None and ldm.in_channels != expect_in_channels:
        raise ConfigError(
            f"checkpoint has a {ldm.in_channels}-channel denoiser, "
            f"this pipeline needs {expect_in_channels}"
        )
    ldm.load_state(payload["state"], payload["loss_history"])
    return ldm
