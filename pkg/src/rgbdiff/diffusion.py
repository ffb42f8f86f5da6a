"""Latent-space diffusion: training objective, DDPM/DDIM samplers, and the
estimator tying them to a conditioned U-Net.

The module-level functions (denoise_step, training_loss, sample_ddpm,
sample_ddim) accept any model implementing the denoiser contract — an
``in_channels`` attribute plus ``model(z, t, context, mask)`` returning a
4-channel prediction — so oracle stubs slot in for testing. The
``LatentDiffusion`` estimator wraps a CondUNet with a deterministic
training loop; with an 8-channel input it conditions on a second latent by
channel concatenation (super-resolution), with 4 channels it rejects one.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autoencoder import Latent
from .exceptions import ConfigError, DataError, NumericalError
from .schedule import NoiseSchedule, make_schedule
from .seeding import derive_seed, numpy_rng, torch_generator
from .text import HashTextEncoder, TextCondition
from .unet import CondUNet, pack_conditions

DEFAULT_GUIDANCE_SCALE = 5.0  # ours, not inherited; the base models leave it unstated
LATENT_CHANNELS = 4


def _as_batch_tensor(x, name: str) -> tuple[torch.Tensor, bool]:
    if isinstance(x, torch.Tensor):
        t = x
    else:
        t = torch.from_numpy(np.ascontiguousarray(np.asarray(x, dtype=np.float32)))
    if t.dim() == 3:
        return t[None], True
    if t.dim() == 4:
        return t, False
    raise DataError(f"{name} must be (4, h, w) or (B, 4, h, w), got {tuple(t.shape)}")


def _check_extra(model, z_t: torch.Tensor, extra) -> torch.Tensor | None:
    """Enforce the channel contract: 8-channel models require a conditioning
    latent of matching spatial size; 4-channel models reject one."""
    in_ch = model.in_channels
    if in_ch == 4:
        if extra is not None:
            raise ConfigError("4-channel denoiser does not accept extra_latent")
        return None
    if extra is None:
        raise ConfigError("8-channel denoiser requires extra_latent")
    e, _ = _as_batch_tensor(extra, "extra_latent")
    if e.shape[0] == 1 and z_t.shape[0] > 1:
        e = e.expand(z_t.shape[0], -1, -1, -1)
    if e.shape != z_t.shape:
        raise ConfigError(
            f"extra_latent shape {tuple(e.shape)} must match z_t {tuple(z_t.shape)}"
        )
    return e.to(z_t.dtype)


def _model_eps(model, z_t: torch.Tensor, t: torch.Tensor,
               conds: list[TextCondition], extra) -> torch.Tensor:
    if z_t.shape[1] != LATENT_CHANNELS:
        raise DataError(f"z_t must have 4 channels, got {z_t.shape[1]}")
    extra_t = _check_extra(model, z_t, extra)
    net_in = torch.cat([z_t, extra_t], dim=1) if extra_t is not None else z_t
    if isinstance(model, torch.nn.Module):
        dtype = next(model.parameters()).dtype
        net_in = net_in.to(dtype)
        t = t.to(dtype)
    ctx_dim = getattr(model, "context_dim", conds[0].dim)
    context, mask = pack_conditions(conds, ctx_dim, dtype=net_in.dtype)
    if len(conds) == 1 and z_t.shape[0] > 1:
        context = context.expand(z_t.shape[0], -1, -1)
        mask = mask.expand(z_t.shape[0], -1)
    eps_hat = model(net_in, t, context, mask)
    if eps_hat.shape != z_t.shape:
        raise DataError(
            f"denoiser must return 4-channel output of shape {tuple(z_t.shape)}, "
            f"got {tuple(eps_hat.shape)}"
        )
    return eps_hat


def denoise_step(model, z_t, t: int, cond: TextCondition, extra_latent=None) -> np.ndarray:
    """One denoiser evaluation: predicted noise for z_t at timestep t."""
    z, squeeze = _as_batch_tensor(z_t, "z_t")
    tt = torch.full((z.shape[0],), float(t))
    with torch.no_grad():
        eps = _model_eps(model, z, tt, [cond], extra_latent)
    eps = eps.to(torch.float32).numpy()
    return eps[0] if squeeze else eps


def training_loss(model, z0, cond, extra_latent, sched: NoiseSchedule, seed: int) -> float:
    """Epsilon-prediction objective: MSE between drawn and predicted noise,
    with t uniform in [1, T] and the draw seeded. Deterministic per seed."""
    z, _ = _as_batch_tensor(z0, "z0")
    conds = cond if isinstance(cond, list) else [cond]
    if len(conds) not in (1, z.shape[0]):
        raise DataError(f"got {len(conds)} conditions for batch of {z.shape[0]}")
    t_np = numpy_rng(seed, "loss-t").integers(1, sched.T + 1, size=z.shape[0])
    eps = torch.randn(z.shape, generator=torch_generator(seed, "loss-eps"), dtype=z.dtype)
    with torch.no_grad():
        loss = _diffusion_mse(model, z, torch.from_numpy(t_np), eps, conds, extra_latent, sched)
    return float(loss)


def _diffusion_mse(model, z0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor,
                   conds: list[TextCondition], extra, sched: NoiseSchedule) -> torch.Tensor:
    ab = torch.from_numpy(sched.alpha_bars[(t.long() - 1).numpy()]).to(z0.dtype)
    ab = ab.view(-1, 1, 1, 1)
    z_t = torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps
    eps_hat = _model_eps(model, z_t, t.to(z0.dtype), conds, extra)
    return torch.mean((eps_hat - eps.to(eps_hat.dtype)) ** 2)


def _predict_eps(model, z, t_scalar, cond, uncond, extra, guidance_scale):
    tt = torch.full((z.shape[0],), float(t_scalar), dtype=z.dtype)
    e_c = _model_eps(model, z, tt, [cond], extra)
    if guidance_scale == 1.0:
        return e_c
    if uncond is None:
        raise ConfigError("guidance_scale != 1 requires an unconditional embedding")
    e_u = _model_eps(model, z, tt, [uncond], extra)
    return e_u + guidance_scale * (e_c - e_u)


def _check_sample_shape(shape) -> tuple[int, int, int]:
    c, h, w = shape
    if c != LATENT_CHANNELS:
        raise ConfigError(f"sample shape must have 4 channels, got {c}")
    return int(c), int(h), int(w)


def sample_ddpm(model, shape, cond: TextCondition, extra_latent, sched: NoiseSchedule,
                seed: int, guidance_scale: float = 1.0, uncond: TextCondition | None = None,
                trace_dir=None) -> Latent:
    """Ancestral sampler: iterates t = T..1 with the standard posterior
    mean/variance. Deterministic given the seed."""
    shape = _check_sample_shape(shape)
    z = torch.randn(1, *shape, generator=torch_generator(seed, "sampler-init"))
    with torch.no_grad():
        for t in range(sched.T, 0, -1):
            eps = _predict_eps(model, z, t, cond, uncond, extra_latent, guidance_scale)
            beta = float(sched.betas[t - 1])
            alpha = 1.0 - beta
            ab_t = sched.alpha_bar(t)
            ab_prev = sched.alpha_bar(t - 1)
            mean = (z - beta / np.sqrt(1.0 - ab_t) * eps) / np.sqrt(alpha)
            sigma = np.sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_t))
            if sigma > 0:
                noise = torch.randn(z.shape, generator=torch_generator(seed, "sampler-noise", t))
                z = mean + sigma * noise
            else:
                z = mean
            _maybe_trace(trace_dir, t, z)
    return Latent(z=z[0].numpy(), scale_applied=True)


def ddim_timesteps(T: int, steps: int) -> np.ndarray:
    """Evenly spaced increasing subsequence of [1, T]; steps=1 gives [T]."""
    if not 1 <= steps <= T:
        raise ConfigError(f"steps must lie in [1, {T}], got {steps}")
    if steps == 1:
        return np.array([T], dtype=int)
    return np.round(np.linspace(1, T, steps)).astype(int)


def sample_ddim(model, shape, cond: TextCondition, extra_latent, sched: NoiseSchedule,
                seed: int, steps: int, eta: float = 0.0, guidance_scale: float = 1.0,
                uncond: TextCondition | None = None, trace_dir=None) -> Latent:
    """DDIM sampler over an evenly spaced timestep subsequence. With eta=0 the
    trajectory is deterministic after the initial draw; with eta=1 and
    steps=T it matches the DDPM posterior step for step."""
    shape = _check_sample_shape(shape)
    taus = ddim_timesteps(sched.T, steps)
    z = torch.randn(1, *shape, generator=torch_generator(seed, "sampler-init"))
    with torch.no_grad():
        for i in range(len(taus) - 1, -1, -1):
            t = int(taus[i])
            t_prev = int(taus[i - 1]) if i > 0 else 0
            ab_t = sched.alpha_bar(t)
            ab_prev = sched.alpha_bar(t_prev)
            eps = _predict_eps(model, z, t, cond, uncond, extra_latent, guidance_scale)
            x0 = (z - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
            sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)
            coeff = np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0))
            z = np.sqrt(ab_prev) * x0 + coeff * eps
            if sigma > 0:
                noise = torch.randn(z.shape, generator=torch_generator(seed, "sampler-noise", t))
                z = z + sigma * noise
            _maybe_trace(trace_dir, t, z)
    return Latent(z=z[0].numpy(), scale_applied=True)


def _maybe_trace(trace_dir, t: int, z: torch.Tensor) -> None:
    if trace_dir is None:
        return
    from pathlib import Path

    d = Path(trace_dir)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / f"step_{t:04d}.npy", z[0].numpy())


class LatentDiffusion(BaseEstimator):
    """Text-conditioned diffusion over (N, 4, h, w) latents.

    ``in_channels=4`` is the generation variant; ``in_channels=8``
    concatenates a conditioning latent (training: alongside the clean
    latent; inference: alongside noise) for super-resolution. ``fit``
    optimizes epsilon-prediction MSE with seeded draws; sampling goes
    through ``sample`` (DDIM by default) or the module-level samplers.
    """

    def __init__(
        self,
        in_channels: int = 4,
        base_width: int = 32,
        channel_mult: tuple = (1, 2),
        attn_levels: tuple = (0, 1),
        context_dim: int = 32,
        temb_dim: int | None = None,
        timesteps: int = 1000,
        beta_min: float = 1e-4,
        beta_max: float = 0.02,
        learning_rate: float = 2e-3,
        lr_decay: str = "none",
        batch_size: int = 8,
        n_steps: int = 1000,
        uncond_prob: float = 0.1,
        guidance_scale: float = DEFAULT_GUIDANCE_SCALE,
        text_provider_id: str = "hash-table",
        warm_start: bool = False,
        seed: int = 0,
    ):
        self.in_channels = in_channels
        self.base_width = base_width
        self.channel_mult = channel_mult
        self.attn_levels = attn_levels
        self.context_dim = context_dim
        self.temb_dim = temb_dim
        self.timesteps = timesteps
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.uncond_prob = uncond_prob
        self.guidance_scale = guidance_scale
        self.text_provider_id = text_provider_id
        self.warm_start = warm_start
        self.seed = seed

    # -- construction ------------------------------------------------------

    def _init_modules(self):
        torch.manual_seed(derive_seed(self.seed, "diffusion-init"))
        self.module_ = CondUNet(
            in_channels=self.in_channels,
            base_width=self.base_width,
            channel_mult=tuple(self.channel_mult),
            context_dim=self.context_dim,
            attn_levels=tuple(self.attn_levels),
            temb_dim=self.temb_dim,
        )
        self.schedule_ = make_schedule(self.timesteps, self.beta_min, self.beta_max)
        self.text_encoder_ = HashTextEncoder(self.context_dim, self.text_provider_id)
        self.loss_history_ = []
        return self

    def _require_fitted(self):
        if not hasattr(self, "module_"):
            raise NotFittedError("diffusion model is not fitted; call fit() or load a checkpoint")

    def embed(self, caption: str) -> TextCondition:
        self._require_fitted()
        return self.text_encoder_.embed(caption)

    # -- training ----------------------------------------------------------

    def fit(self, Z, y=None, extra=None):
        """Train on latents Z (N, 4, h, w); y is an optional caption list.

        For 8-channel models ``extra`` supplies the per-sample conditioning
        latents. A fraction ``uncond_prob`` of captions is dropped to the
        unconditional embedding so classifier-free guidance has both paths.
        """
        Z = np.asarray(Z, dtype=np.float32)
        if Z.ndim != 4 or Z.shape[1] != LATENT_CHANNELS:
            raise DataError(f"Z must be (N, 4, h, w), got {Z.shape}")
        n = Z.shape[0]
        captions = list(y) if y is not None else [""] * n
        if len(captions) != n:
            raise DataError(f"got {len(captions)} captions for {n} latents")
        if not (self.warm_start and hasattr(self, "module_")):
            self._init_modules()
        if self.in_channels == 8:
            if extra is None:
                raise ConfigError("8-channel diffusion requires extra conditioning latents")
            extra = np.asarray(extra, dtype=np.float32)
            if extra.shape != Z.shape:
                raise DataError(f"extra shape {extra.shape} must match Z {Z.shape}")
        elif extra is not None:
            raise ConfigError("4-channel diffusion does not accept extra latents")

        uncond = self.text_encoder_.unconditional()
        embedded = [self.text_encoder_.embed(c) for c in captions]
        data = torch.from_numpy(Z)
        extra_t = torch.from_numpy(extra) if extra is not None else None
        opt = torch.optim.Adam(self.module_.parameters(), lr=self.learning_rate)
        if self.lr_decay not in ("none", "cosine"):
            raise ConfigError(f"lr_decay must be 'none' or 'cosine', got {self.lr_decay!r}")
        offset = len(self.loss_history_)
        for step in range(offset, offset + self.n_steps):
            if self.lr_decay == "cosine" and self.n_steps > 1:
                frac = (step - offset) / (self.n_steps - 1)
                for group in opt.param_groups:
                    group["lr"] = self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * frac))
            rng = numpy_rng(self.seed, "diffusion-batch", step)
            idx = rng.integers(0, n, size=min(self.batch_size, n))
            batch = data[torch.from_numpy(np.ascontiguousarray(idx))]
            conds = [
                uncond if rng.random() < self.uncond_prob else embedded[j] for j in idx
            ]
            t = torch.from_numpy(
                numpy_rng(self.seed, "diffusion-t", step).integers(
                    1, self.timesteps + 1, size=batch.shape[0]
                )
            )
            eps = torch.randn(batch.shape, generator=torch_generator(self.seed, "diffusion-eps", step))
            batch_extra = (
                extra_t[torch.from_numpy(np.ascontiguousarray(idx))] if extra_t is not None else None
            )
            loss = _diffusion_mse(self.module_, batch, t, eps, conds, batch_extra, self.schedule_)
            if not torch.isfinite(loss):
                raise NumericalError(f"diffusion training diverged at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            self.loss_history_.append(float(loss.detach()))
        return self

    def training_loss(self, z0, caption: str = "", extra_latent=None, seed: int = 0) -> float:
        self._require_fitted()
        return training_loss(
            self.module_, z0, self.embed(caption), extra_latent, self.schedule_, seed
        )

    # -- sampling ----------------------------------------------------------

    def sample(
        self,
        caption: str = "",
        shape: tuple = (4, 8, 8),
        extra_latent=None,
        method: str = "ddim",
        steps: int = 50,
        eta: float = 0.0,
        guidance_scale: float | None = None,
        seed: int = 0,
        trace_dir=None,
    ) -> Latent:
        self._require_fitted()
        cond = self.embed(caption)
        scale = self.guidance_scale if guidance_scale is None else guidance_scale
        uncond = self.text_encoder_.unconditional() if scale != 1.0 else None
        if method == "ddim":
            return sample_ddim(
                self.module_, shape, cond, extra_latent, self.schedule_, seed,
                steps=steps, eta=eta, guidance_scale=scale, uncond=uncond,
                trace_dir=trace_dir,
            )
        if method == "ddpm":
            return sample_ddpm(
                self.module_, shape, cond, extra_latent, self.schedule_, seed,
                guidance_scale=scale, uncond=uncond, trace_dir=trace_dir,
            )
        raise ConfigError(f"unknown sampler {method!r}; use 'ddim' or 'ddpm'")

    # -- persistence hooks ---------------------------------------------------

    def state_dict(self) -> dict:
        self._require_fitted()
        return {"unet": self.module_.state_dict()}

    def load_state(self, state: dict, loss_history=None):
        self._init_modules()
        self.module_.load_state_dict(state["unet"])
        self.loss_history_ = list(loss_history or [])
        return self
