"""Toy backends: analytically invertible stand-ins for oracle testing.

The denoiser drives every latent toward a hidden per-prompt target (or an
explicitly supplied per-batch-item target), which makes the whole DDIM
recursion solvable by hand. The decoder is linear: nearest 8x upsample,
a fixed 4 -> 3 channel mix, +0.5 bias, no clamp, so its pullback and its
right inverse are exact.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import BackendShapeError
from . import Backend, DecodeRequest, DenoiseRequest

UPSAMPLE = 8

# Fixed full-rank channel mix (latent -> RGB); frozen so tests and
# documentation can rely on exact values.
MIX = np.array(
    [
        [0.35, 0.20, -0.10, 0.10],
        [-0.15, 0.30, 0.25, -0.05],
        [0.20, -0.10, 0.30, 0.25],
    ],
    dtype=np.float64,
)

MIX_PINV = np.linalg.pinv(MIX)

RGB_BIAS = 0.5


def _prompt_seed(prompt: str) -> int:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class ToyBackend(Backend):
    """Target denoiser plus linear decoder.

    With targets=None each prompt string hashes to a deterministic hidden
    target latent. Passing an explicit (B, h, w, C) array assigns targets
    by batch index instead, which keeps repeated prompt strings (e.g. two
    "side view" prompts) from sharing a target.
    """

    def __init__(self, targets: np.ndarray | None = None):
        self.targets = None if targets is None else np.asarray(targets, np.float64)

    def target_for_prompt(self, prompt: str, shape: tuple[int, int, int]) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(_prompt_seed(prompt)))
        return rng.standard_normal(shape)

    def _batch_targets(self, request: DenoiseRequest) -> np.ndarray:
        shape = request.latents.shape
        if self.targets is not None:
            if self.targets.shape != shape:
                raise BackendShapeError(
                    f"explicit targets {self.targets.shape} vs latents {shape}"
                )
            return self.targets
        return np.stack(
            [self.target_for_prompt(p, shape[1:]) for p in request.prompts]
        )

    def predict_noise(self, request: DenoiseRequest) -> np.ndarray:
        # Inverts x_t = sqrt(ab) x0 + sqrt(1-ab) eps for the hidden x0.
        ab = request.alpha_bar_t
        if ab >= 1.0:
            return np.zeros_like(request.latents)
        targets = self._batch_targets(request)
        return (request.latents - np.sqrt(ab) * targets) / np.sqrt(1.0 - ab)

    def decode(self, request: DecodeRequest) -> np.ndarray:
        latents = np.asarray(request.latents, dtype=np.float64)
        up = latents.repeat(UPSAMPLE, axis=1).repeat(UPSAMPLE, axis=2)
        return np.einsum("bhwc,rc->bhwr", up, MIX) + RGB_BIAS

    def decode_pullback(self, latents: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents)
        cotangent = np.asarray(cotangent, dtype=np.float64)
        b, h, w, c = latents.shape
        expect = (b, h * UPSAMPLE, w * UPSAMPLE, MIX.shape[0])
        if cotangent.shape != expect:
            raise BackendShapeError(f"cotangent {cotangent.shape}, expected {expect}")
        # Adjoint of nearest upsample is the 8x8 block sum.
        blocks = cotangent.reshape(b, h, UPSAMPLE, w, UPSAMPLE, MIX.shape[0])
        summed = blocks.sum(axis=(2, 4))
        return np.einsum("bhwr,rc->bhwc", summed, MIX)

    def encode_rgb(self, images: np.ndarray) -> np.ndarray:
        """Right inverse of decode: decode(encode_rgb(y)) reproduces the
        8x8-block means of y exactly (MIX has full row rank)."""
        images = np.asarray(images, dtype=np.float64)
        b, hh, ww, r = images.shape
        h, w = hh // UPSAMPLE, ww // UPSAMPLE
        blocks = images.reshape(b, h, UPSAMPLE, w, UPSAMPLE, r)
        means = blocks.mean(axis=(2, 4)) - RGB_BIAS
        return np.einsum("bhwr,cr->bhwc", means, MIX_PINV)
