"""meshtex: text-driven mesh texturing through consistent latent diffusion.

A UV-parameterized triangle mesh is textured by jointly denoising several
orthographic views against one spherical-harmonic latent texture map,
then aligning the decoded views in latent space and backprojecting them
into an RGB atlas. Denoiser/decoder backends are pluggable: built-in toys
for testing, or any server speaking the wire protocol in
`meshtex.backend.protocol`.
"""

__version__ = "0.1.0"

from .camera import CameraView, build_views, fibonacci_views
from .mesh_io import Mesh, load_mesh, write_mesh
from .pipeline import PipelineConfig, PipelineResult, export_texture, texture_mesh
from .scheduler import DiffusionSchedule, make_schedule, run_consistent_2d
from .sh_latent import ShTexture

__all__ = [
    "CameraView",
    "DiffusionSchedule",
    "Mesh",
    "PipelineConfig",
    "PipelineResult",
    "ShTexture",
    "build_views",
    "export_texture",
    "fibonacci_views",
    "load_mesh",
    "make_schedule",
    "run_consistent_2d",
    "texture_mesh",
    "write_mesh",
    "__version__",
]
