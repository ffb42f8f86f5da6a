"""Variance-preserving noise schedule and the closed-form forward process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import ConfigError, DataError

DEFAULT_TIMESTEPS = 1000
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02


@dataclass
class NoiseSchedule:
    """Per-timestep beta/alpha tables; timesteps are 1-indexed (t in [1, T])."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t: int) -> float:
        """Cumulative product at step t; t=0 extends to the identity (1.0)."""
        if not 0 <= t <= self.T:
            raise DataError(f"t must lie in [0, {self.T}], got {t}")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])


def make_schedule(
    T: int = DEFAULT_TIMESTEPS,
    beta_min: float = DEFAULT_BETA_MIN,
    beta_max: float = DEFAULT_BETA_MAX,
) -> NoiseSchedule:
    """Linear beta schedule with alpha_bar_t = prod_{s<=t} (1 - beta_s)."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def add_noise(z0, t: int, eps, sched: NoiseSchedule):
    """Closed-form forward process:
    z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.

    Accepts numpy arrays or torch tensors (z0 and eps of the same shape and
    kind) and returns the matching kind. t=0 returns z0.
    """
    ab = sched.alpha_bar(t)
    if isinstance(z0, torch.Tensor) != isinstance(eps, torch.Tensor):
        raise DataError("z0 and eps must both be numpy arrays or both torch tensors")
    if tuple(z0.shape) != tuple(eps.shape):
        raise DataError(f"z0 and eps shapes differ: {tuple(z0.shape)} vs {tuple(eps.shape)}")
    if isinstance(z0, torch.Tensor):
        return math_sqrt(ab) * z0 + math_sqrt(1.0 - ab) * eps
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def math_sqrt(x: float) -> float:
    return float(np.sqrt(x))
