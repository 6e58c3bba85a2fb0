"""Denoiser/decoder backends: in-process toys and a wire-protocol client.

Latents travel over the wire as little-endian float32; in process they
keep the caller's dtype so the core can run float64 math against the toy
backends. Shapes follow the batch-last-channel layout B x h x w x C.
"""

from __future__ import annotations

import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ..errors import BackendShapeError

_DEF_ENV_VAR = "MESHTEX_BACKEND"


def _check_latents(latents: np.ndarray) -> None:
    if latents.ndim != 4 or latents.shape[0] < 1:
        raise BackendShapeError(f"latents must be B x h x w x C, got {latents.shape}")
    if not np.isfinite(latents).all():
        raise ValueError("latents contain non-finite values")


@dataclass
class DenoiseRequest:
    """One guided noise-prediction call.

    prompts already carry their view modifiers; depth_maps (optional) are
    at decoded resolution in [0, 1] with background 0.
    """

    latents: np.ndarray
    timestep_index: int
    alpha_bar_t: float
    prompts: list[str]
    guidance_scale: float = 7.5
    depth_maps: np.ndarray | None = None
    request_id: int = 0

    def __post_init__(self):
        self.latents = np.asarray(self.latents)
        _check_latents(self.latents)
        if len(self.prompts) != self.latents.shape[0]:
            raise BackendShapeError("need one prompt per batch item")
        if self.depth_maps is not None:
            self.depth_maps = np.asarray(self.depth_maps)
            if self.depth_maps.shape[0] != self.latents.shape[0]:
                raise BackendShapeError("need one depth map per batch item")


@dataclass
class DecodeRequest:
    latents: np.ndarray
    request_id: int = 0

    def __post_init__(self):
        self.latents = np.asarray(self.latents)
        _check_latents(self.latents)


class Backend(ABC):
    """Contract every denoiser/decoder implementation satisfies."""

    @abstractmethod
    def predict_noise(self, request: DenoiseRequest) -> np.ndarray:
        """Guided noise prediction, same shape as the request latents."""

    @abstractmethod
    def decode(self, request: DecodeRequest) -> np.ndarray:
        """Latents to RGB in [0, 1]-ish range, upsampled 8x per side."""

    @abstractmethod
    def decode_pullback(self, latents: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Vector-Jacobian product of decode at `latents`."""

    def close(self) -> None:  # remote backends override
        pass


def get_backend(spec: str | None = None):
    """Resolve "toy" or "remote:<host:port>"; falls back to $MESHTEX_BACKEND."""
    from .remote import RemoteBackend
    from .toy import ToyBackend

    if spec is None:
        spec = os.environ.get(_DEF_ENV_VAR, "toy")
    if spec == "toy":
        return ToyBackend()
    if spec.startswith("remote:"):
        address = spec[len("remote:") :]
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad remote backend address {address!r}")
        return RemoteBackend(host, int(port))
    raise ValueError(f"unknown backend spec {spec!r}")


__all__ = [
    "Backend",
    "DecodeRequest",
    "DenoiseRequest",
    "get_backend",
]
