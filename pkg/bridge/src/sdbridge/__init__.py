"""sd-bridge: a reference backend server for the meshtex wire protocol.

Wraps a depth-conditioned latent diffusion model (Stable Diffusion 2
depth variant via diffusers, or a built-in deterministic debug net) and
answers predict_noise / decode / decode_pullback frames over TCP.
"""

__version__ = "0.1.0"

from .models import StableDiffusionDepthModel, TinyDepthModel, build_model
from .server import BridgeServer, ServerConfig

__all__ = [
    "BridgeServer",
    "ServerConfig",
    "StableDiffusionDepthModel",
    "TinyDepthModel",
    "build_model",
    "__version__",
]
