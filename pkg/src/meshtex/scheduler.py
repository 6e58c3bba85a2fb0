"""Deterministic DDIM schedule, structured noise, and the joint 2D driver.

The core owns the denoising update: backends only return the guided noise
prediction. Latents within the mask are pulled toward their cross-image
mean after every step, which keeps N diffusion paths pixel-wise consistent
while the shared initial noise preserves the per-pixel variance the
denoiser was trained against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import Backend, DecodeRequest, DenoiseRequest
from .errors import ShapeMismatchError

TRAIN_STEPS = 1000
BETA_START = 0.00085
BETA_END = 0.012


def train_alpha_bars() -> np.ndarray:
    """Cumulative signal coefficients of the scaled-linear beta schedule."""
    betas = np.linspace(BETA_START**0.5, BETA_END**0.5, TRAIN_STEPS) ** 2
    return np.cumprod(1.0 - betas)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Strided timestep sequence; alpha_bar[0] is the least-noisy level."""

    num_steps: int
    alpha_bar: np.ndarray
    guidance_scale: float = 7.5

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        ab = self.alpha_bar
        if len(ab) != self.num_steps:
            raise ValueError("alpha_bar length must equal num_steps")
        if not (np.all(ab > 0.0) and np.all(ab <= 1.0) and np.all(np.diff(ab) < 0)):
            raise ValueError("alpha_bar must be strictly decreasing in (0, 1]")
        if self.guidance_scale < 1.0:
            raise ValueError("guidance_scale must be >= 1")

    def previous_alpha_bar(self, i: int) -> float:
        """alpha_bar of the step after i in sampling order (1.0 past the end)."""
        return float(self.alpha_bar[i - 1]) if i > 0 else 1.0

    def sampling_indices(self) -> range:
        """Noisiest first: num_steps-1 down to 0."""
        return range(self.num_steps - 1, -1, -1)


def make_schedule(num_steps: int = 50, guidance_scale: float = 7.5) -> DiffusionSchedule:
    """Leading-strided subsequence of the 1000-step training schedule."""
    if not (1 <= num_steps <= TRAIN_STEPS):
        raise ValueError("num_steps must be in [1, 1000]")
    stride = TRAIN_STEPS // num_steps
    timesteps = np.arange(num_steps) * stride
    return DiffusionSchedule(
        num_steps=num_steps,
        alpha_bar=train_alpha_bars()[timesteps],
        guidance_scale=guidance_scale,
    )


def ddim_step(x, eps, alpha_bar_t: float, alpha_bar_prev: float) -> np.ndarray:
    """Deterministic (eta = 0) denoising update from one noise level to the next."""
    x = np.asarray(x)
    eps = np.asarray(eps)
    sqrt_ab = np.sqrt(alpha_bar_t)
    x0 = (x - np.sqrt(1.0 - alpha_bar_t) * eps) / sqrt_ab
    return np.sqrt(alpha_bar_prev) * x0 + np.sqrt(1.0 - alpha_bar_prev) * eps


@dataclass(frozen=True)
class NoiseBundle:
    """Seeded i.i.d. normal fields: one shared, N independent, plus a mask."""

    shared: np.ndarray
    independent: np.ndarray
    mask: np.ndarray
    seed: int


def make_noise_bundle(
    n: int, height: int, width: int, channels: int, mask: np.ndarray, seed: int
) -> NoiseBundle:
    """Bit-reproducible for a given seed (PCG64 streams split per field)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (height, width):
        raise ShapeMismatchError("mask resolution must match latent resolution")
    ss = np.random.SeedSequence(seed)
    shared_ss, indep_ss = ss.spawn(2)
    shared = np.random.Generator(np.random.PCG64(shared_ss)).standard_normal(
        (1, height, width, channels)
    )
    independent = np.random.Generator(np.random.PCG64(indep_ss)).standard_normal(
        (n, height, width, channels)
    )
    return NoiseBundle(shared=shared, independent=independent, mask=mask, seed=seed)


def initial_latents(bundle: NoiseBundle, base: np.ndarray | None = None) -> np.ndarray:
    """where(mask, shared, independent_i) per image, plus an optional base latent.

    The default path starts from pure structured noise; pass `base` (an
    encoded seed image) only when intentionally biasing the start point.
    """
    m = bundle.mask[None, :, :, None]
    latents = np.where(m, bundle.shared, bundle.independent)
    if base is not None:
        base = np.asarray(base, dtype=np.float64)
        if base.shape != bundle.shared.shape[1:]:
            raise ShapeMismatchError("base latent shape mismatch")
        latents = latents + base
    return latents


def consistent_step(stepped: np.ndarray, mask: np.ndarray, alpha: float) -> np.ndarray:
    """Pull masked pixels toward the cross-image mean: a*U' + (1-a)*mean.

    alpha = 1 returns `stepped` unchanged (bitwise); outside the mask the
    per-image updates always pass through untouched.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must be in [0, 1]")
    if alpha == 1.0 or stepped.shape[0] == 1:
        # blending toward the mean of one element is the identity
        return stepped
    mean = stepped.mean(axis=0, keepdims=True)
    blended = alpha * stepped + (1.0 - alpha) * mean
    return np.where(np.asarray(mask, bool)[None, :, :, None], blended, stepped)


@dataclass
class Consistent2DResult:
    images: np.ndarray
    latents: np.ndarray
    masked_spread: list = field(default_factory=list)


def run_consistent_2d(
    prompts: list[str],
    mask: np.ndarray,
    alpha: float,
    schedule: DiffusionSchedule,
    backend: Backend,
    latent_size: int = 64,
    channels: int = 4,
    seed: int = 0,
    initial: np.ndarray | None = None,
) -> Consistent2DResult:
    """Jointly denoise N prompts so masked pixels agree across images.

    Per step each latent takes one DDIM update from the backend's noise
    prediction, then the masked region is blended toward the mean. Records
    the masked pairwise RMS spread per step for reporting.
    """
    n = len(prompts)
    if n < 1:
        raise ValueError("need at least one prompt")
    mask = np.asarray(mask, dtype=bool)
    if initial is None:
        bundle = make_noise_bundle(n, latent_size, latent_size, channels, mask, seed)
        latents = initial_latents(bundle)
    else:
        latents = np.array(initial, dtype=np.float64)
        if latents.shape != (n, latent_size, latent_size, channels):
            raise ShapeMismatchError("initial latents shape mismatch")

    spread_log: list[float] = []
    for i in schedule.sampling_indices():
        a_t = float(schedule.alpha_bar[i])
        eps = backend.predict_noise(
            DenoiseRequest(
                latents=latents,
                timestep_index=i,
                alpha_bar_t=a_t,
                prompts=list(prompts),
                guidance_scale=schedule.guidance_scale,
            )
        )
        stepped = ddim_step(latents, eps, a_t, schedule.previous_alpha_bar(i))
        latents = consistent_step(stepped, mask, alpha)
        spread_log.append(_masked_spread(latents, mask))

    images = backend.decode(DecodeRequest(latents=latents))
    return Consistent2DResult(images=images, latents=latents, masked_spread=spread_log)


def _masked_spread(latents: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any() or len(latents) < 2:
        return 0.0
    sel = latents[:, mask, :]
    return float(np.sqrt(((sel - sel.mean(axis=0)) ** 2).mean()))
