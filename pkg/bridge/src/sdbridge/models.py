"""Model backends served by the bridge.

TinyDepthModel is a small seeded torch network with the same interfaces as
the real depth-conditioned latent diffusion model: text and depth enter
the noise prediction, classifier-free guidance is applied at the request's
scale, and the decoder is differentiable so pullbacks go through autograd.
It exists so the protocol, conditioning plumbing, and gradient path can be
exercised without downloading model weights.

StableDiffusionDepthModel wraps the depth variant of Stable Diffusion 2
through diffusers (install the [sd] extra); it consumes the request's
alpha_bar_t by mapping it onto the nearest training timestep, so the
client stays the single source of schedule truth.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch
import torch.nn.functional as F

LATENT_CHANNELS = 4
UPSAMPLE = 8

_EMBED_DIM = 16


def _seed_from(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") % (2**63)


class TinyDepthModel:
    """Deterministic stand-in model (CPU-friendly, no weights to fetch)."""

    def __init__(self, device: str = "cpu", seed: int = 1234):
        self.device = torch.device(device)
        g = torch.Generator(device="cpu").manual_seed(seed)

        def mk(*shape, scale):
            return (torch.randn(*shape, generator=g) * scale).to(self.device)

        hidden = _EMBED_DIM
        self.w1 = mk(hidden, LATENT_CHANNELS + 1, 3, 3, scale=0.2)
        self.b1 = torch.zeros(hidden, device=self.device)
        self.w2 = mk(LATENT_CHANNELS, hidden, 3, 3, scale=0.2)
        self.b2 = torch.zeros(LATENT_CHANNELS, device=self.device)
        self.dw1 = mk(8, LATENT_CHANNELS, 3, 3, scale=0.3)
        self.db1 = torch.zeros(8, device=self.device)
        self.dw2 = mk(3, 8, 3, 3, scale=0.3)
        self.db2 = torch.zeros(3, device=self.device)

    def _embed(self, prompt: str) -> torch.Tensor:
        g = torch.Generator(device="cpu").manual_seed(_seed_from(prompt))
        return (torch.randn(_EMBED_DIM, generator=g) * 0.5).to(self.device)

    def _features(self, x: torch.Tensor, depth: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = F.conv2d(torch.cat([x, depth], dim=1), self.w1, self.b1, padding=1)
        h = torch.tanh(h + emb[:, :, None, None])
        return torch.tanh(F.conv2d(h, self.w2, self.b2, padding=1))

    @torch.no_grad()
    def predict_noise(
        self,
        latents: np.ndarray,
        alpha_bar_t: float,
        prompts: list[str],
        guidance_scale: float,
        depth_maps: np.ndarray | None,
    ) -> np.ndarray:
        x = torch.from_numpy(np.ascontiguousarray(latents, np.float32))
        x = x.permute(0, 3, 1, 2).to(self.device)
        b, _, h, w = x.shape
        if depth_maps is not None:
            d = torch.from_numpy(np.ascontiguousarray(depth_maps, np.float32))
            d = d[:, None].to(self.device)
            d = F.interpolate(d, size=(h, w), mode="area")
        else:
            d = torch.zeros(b, 1, h, w, device=self.device)

        cond = torch.stack([self._embed(p) for p in prompts])
        uncond = torch.stack([self._embed("") for _ in prompts])
        f_cond = self._features(x, d, cond)
        f_uncond = self._features(x, d, uncond)
        guided = f_uncond + float(guidance_scale) * (f_cond - f_uncond)
        # predicting mostly-noise keeps the x0 estimate bounded at high noise
        eps = math.sqrt(max(0.0, 1.0 - float(alpha_bar_t))) * x + 0.5 * guided
        return eps.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)

    def _decode_torch(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(F.conv2d(x, self.dw1, self.db1, padding=1))
        h = F.interpolate(h, scale_factor=UPSAMPLE, mode="nearest")
        return torch.sigmoid(F.conv2d(h, self.dw2, self.db2, padding=1))

    @torch.no_grad()
    def decode(self, latents: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(np.ascontiguousarray(latents, np.float32))
        x = x.permute(0, 3, 1, 2).to(self.device)
        out = self._decode_torch(x)
        return out.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)

    def decode_pullback(self, latents: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(np.ascontiguousarray(latents, np.float32))
        x = x.permute(0, 3, 1, 2).to(self.device).requires_grad_(True)
        cot = torch.from_numpy(np.ascontiguousarray(cotangent, np.float32))
        cot = cot.permute(0, 3, 1, 2).to(self.device)
        out = self._decode_torch(x)
        (grad,) = torch.autograd.grad(out, x, grad_outputs=cot)
        return grad.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)


class StableDiffusionDepthModel:
    """Depth-conditioned Stable Diffusion 2 behind the same interface.

    Needs the [sd] extra plus downloadable weights; the unet sees the
    depth map as a fifth latent channel and guidance is applied here, per
    request, so the core never re-scales noise predictions.
    """

    def __init__(
        self,
        model_id: str = "stabilityai/stable-diffusion-2-depth",
        device: str = "cpu",
    ):
        try:
            from diffusers import AutoencoderKL, UNet2DConditionModel
            from transformers import CLIPTextModel, CLIPTokenizer
        except ImportError as exc:  # pragma: no cover - needs the sd extra
            raise RuntimeError(
                "StableDiffusionDepthModel needs `pip install sd-bridge[sd]`"
            ) from exc
        self.device = torch.device(device)
        self.unet = (
            UNet2DConditionModel.from_pretrained(model_id, subfolder="unet")
            .to(self.device).eval()
        )
        self.vae = (
            AutoencoderKL.from_pretrained(model_id, subfolder="vae")
            .to(self.device).eval()
        )
        self.tokenizer = CLIPTokenizer.from_pretrained(model_id, subfolder="tokenizer")
        self.text_encoder = (
            CLIPTextModel.from_pretrained(model_id, subfolder="text_encoder")
            .to(self.device).eval()
        )
        betas = torch.linspace(0.00085**0.5, 0.012**0.5, 1000) ** 2
        self.train_alpha_bars = torch.cumprod(1.0 - betas, dim=0)

    def _timestep_for(self, alpha_bar_t: float) -> torch.Tensor:
        idx = torch.argmin(torch.abs(self.train_alpha_bars - alpha_bar_t))
        return idx.to(self.device)

    def _embed(self, prompts: list[str]) -> torch.Tensor:
        tokens = self.tokenizer(
            prompts, padding="max_length", truncation=True,
            max_length=self.tokenizer.model_max_length, return_tensors="pt",
        )
        return self.text_encoder(tokens.input_ids.to(self.device))[0]

    @torch.no_grad()
    def predict_noise(self, latents, alpha_bar_t, prompts, guidance_scale, depth_maps):
        x = torch.from_numpy(np.ascontiguousarray(latents, np.float32))
        x = x.permute(0, 3, 1, 2).to(self.device)
        b, _, h, w = x.shape
        if depth_maps is None:
            depth = torch.zeros(b, 1, h, w, device=self.device)
        else:
            depth = torch.from_numpy(np.ascontiguousarray(depth_maps, np.float32))
            depth = depth[:, None].to(self.device)
            depth = F.interpolate(depth, size=(h, w), mode="bicubic")
            depth = 2.0 * depth - 1.0
        t = self._timestep_for(float(alpha_bar_t))
        latent_in = torch.cat([torch.cat([x, depth], dim=1)] * 2)
        context = torch.cat([self._embed([""] * b), self._embed(list(prompts))])
        eps = self.unet(latent_in, t, encoder_hidden_states=context).sample
        eps_uncond, eps_cond = eps.chunk(2)
        guided = eps_uncond + float(guidance_scale) * (eps_cond - eps_uncond)
        return guided.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)

    def _decode_torch(self, x: torch.Tensor) -> torch.Tensor:
        scaled = x / self.vae.config.scaling_factor
        img = self.vae.decode(scaled).sample
        return img / 2.0 + 0.5

    @torch.no_grad()
    def decode(self, latents):
        x = torch.from_numpy(np.ascontiguousarray(latents, np.float32))
        x = x.permute(0, 3, 1, 2).to(self.device)
        return self._decode_torch(x).permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)

    def decode_pullback(self, latents, cotangent):
        x = torch.from_numpy(np.ascontiguousarray(latents, np.float32))
        x = x.permute(0, 3, 1, 2).to(self.device).requires_grad_(True)
        cot = torch.from_numpy(np.ascontiguousarray(cotangent, np.float32))
        cot = cot.permute(0, 3, 1, 2).to(self.device)
        out = self._decode_torch(x)
        (grad,) = torch.autograd.grad(out, x, grad_outputs=cot)
        return grad.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)


def build_model(spec: str, device: str = "cpu"):
    """"tiny" or an sd model id (optionally prefixed "sd:")."""
    if spec == "tiny":
        return TinyDepthModel(device=device)
    model_id = spec[3:] if spec.startswith("sd:") else spec
    return StableDiffusionDepthModel(model_id=model_id, device=device)
