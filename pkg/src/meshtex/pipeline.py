"""End-to-end texturing: joint multi-view denoising on an SH latent
texture, latent alignment, and weighted RGB backprojection.

Per diffusion step every view is rendered from the shared latent texture,
denoised one DDIM step, and scattered back as (direction, value, weight)
texel samples; the texture is refit by blended weighted least squares.
After the loop the per-view latents are aligned in latent space, decoded,
and backprojected into the output RGB atlas.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .backend import Backend, DecodeRequest, DenoiseRequest
from .camera import build_views
from .errors import NoCoverageError
from .inversion import run_inversion
from .mesh_io import Mesh
from .raster import Accumulator, RenderMaps, backproject, gather_texel_samples, rasterize, render_latent
from .scheduler import ddim_step, make_schedule
from .sh_latent import ShTexture, TexelSamples, blended_fit

LATENT_DOWNSCALE = 8

FILL_VALUE = 0.5

ORBIT_RADIUS_FACTOR = 2.5
FRAME_FACTOR = 1.1


@dataclass
class ViewConfig:
    count: int = 8
    mode: str = "hemisphere"
    front_axis: list | None = None
    front_importance: float = 1.0
    resolution: int = 512


@dataclass
class InversionConfig:
    steps: int = 200
    lr: float = 0.05


@dataclass
class PipelineConfig:
    prompt: str = ""
    latent_texture_size: int = 128
    rgb_texture_size: int = 1024
    sh_order: int = 1
    alpha: float = 0.9
    steps: int = 50
    guidance_scale: float = 7.5
    seed: int = 0
    ridge: float = 1e-4
    channels: int = 4
    background: str = "fresh_noise"  # or "carry"
    shared_init: bool = False
    skip_inversion: bool = False
    trace_textures: bool = False
    views: ViewConfig = field(default_factory=ViewConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must be in [0, 1]")
        if self.latent_texture_size < 1 or self.rgb_texture_size < 1:
            raise ValueError("texture sizes must be >= 1")
        if self.views.resolution % LATENT_DOWNSCALE != 0:
            raise ValueError("view resolution must be divisible by 8")
        if self.background not in ("fresh_noise", "carry"):
            raise ValueError("background must be fresh_noise or carry")

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        views = ViewConfig(**raw.pop("views", {}))
        inversion = InversionConfig(**raw.pop("inversion", {}))
        diffusion = raw.pop("diffusion", {})
        mapped = {
            "steps": diffusion.get("steps"),
            "guidance_scale": diffusion.get("guidance_scale"),
            "alpha": diffusion.get("alpha"),
            "seed": diffusion.get("seed"),
        }
        for key, value in mapped.items():
            if value is not None:
                raw[key] = value
        return cls(views=views, inversion=inversion, **raw)


@dataclass
class PipelineResult:
    texture: np.ndarray
    covered: np.ndarray
    report: dict
    texture_trace: list[ShTexture] = field(default_factory=list)


def view_prompt(prompt: str, modifier: str) -> str:
    return prompt if modifier == "none" else f"{prompt}, {modifier} view"


def _render_residual(
    texture: ShTexture, maps: list[RenderMaps], stepped: np.ndarray
) -> float:
    """Weighted latent render loss: ||W * (render - denoised)||_2 over views."""
    total = 0.0
    for vi, view_maps in enumerate(maps):
        rendered = render_latent(view_maps, texture, background=0.0)
        diff = (rendered - stepped[vi]) * view_maps.weight[:, :, None]
        total += float((diff[view_maps.mask] ** 2).sum())
    return float(np.sqrt(total))


def texture_mesh(mesh: Mesh, config: PipelineConfig, backend: Backend) -> PipelineResult:
    """Run the full texturing pipeline; deterministic for a fixed seed.

    Raises NoCoverageError when no texel is observed by any view.
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    br = mesh.bounding_radius
    views = build_views(
        n=config.views.count,
        mode=config.views.mode,
        radius=ORBIT_RADIUS_FACTOR * br,
        half_extent=FRAME_FACTOR * br,
        resolution=config.views.resolution,
        front_axis=config.views.front_axis,
        front_importance=config.views.front_importance,
    )
    prompts = [view_prompt(config.prompt, v.prompt_modifier) for v in views]

    latent_res = config.views.resolution // LATENT_DOWNSCALE
    latent_views = [replace(v, resolution=latent_res) for v in views]
    latent_maps = [
        rasterize(mesh, v, config.latent_texture_size) for v in latent_views
    ]
    rgb_maps = [rasterize(mesh, v, config.rgb_texture_size) for v in views]
    depth_maps = np.stack([m.depth for m in rgb_maps])
    timings["rasterize"] = time.perf_counter() - t0

    if not any((m.mask & (m.weight > 0)).any() for m in latent_maps):
        raise NoCoverageError("no latent texel observed by any view")

    n_views = len(views)
    schedule = make_schedule(config.steps, config.guidance_scale)
    init_ss, bg_ss = np.random.SeedSequence(config.seed).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_ss))
    bg_rng = np.random.Generator(np.random.PCG64(bg_ss))

    shape = (n_views, latent_res, latent_res, config.channels)
    if config.shared_init:
        latents = np.broadcast_to(
            init_rng.standard_normal(shape[1:]), shape
        ).copy()
    else:
        latents = init_rng.standard_normal(shape)

    t0 = time.perf_counter()
    samples = TexelSamples(config.latent_texture_size, config.channels)
    for vi, view_maps in enumerate(latent_maps):
        gather_texel_samples(view_maps, latents[vi], samples)
    texture = blended_fit(
        samples, config.sh_order, config.alpha, config.ridge, prior=None
    )

    trace: list[ShTexture] = [texture.copy()] if config.trace_textures else []
    step_records: list[dict] = []
    carried = latents

    for i in schedule.sampling_indices():
        a_t = float(schedule.alpha_bar[i])
        a_prev = schedule.previous_alpha_bar(i)

        batch = np.empty(shape, dtype=np.float64)
        for vi, view_maps in enumerate(latent_maps):
            if config.background == "carry":
                bg = carried[vi]
            else:
                bg = np.sqrt(1.0 - a_t) * bg_rng.standard_normal(shape[1:])
            batch[vi] = render_latent(view_maps, texture, background=bg)

        eps = backend.predict_noise(
            DenoiseRequest(
                latents=batch,
                timestep_index=i,
                alpha_bar_t=a_t,
                prompts=prompts,
                guidance_scale=config.guidance_scale,
                depth_maps=depth_maps,
            )
        )
        stepped = ddim_step(batch, np.asarray(eps, dtype=np.float64), a_t, a_prev)
        carried = stepped

        samples = TexelSamples(config.latent_texture_size, config.channels)
        for vi, view_maps in enumerate(latent_maps):
            gather_texel_samples(view_maps, stepped[vi], samples)
        texture = blended_fit(
            samples, config.sh_order, config.alpha, config.ridge, prior=texture
        )

        if config.trace_textures:
            trace.append(texture.copy())
        step_records.append(
            {
                "step": len(step_records),
                "timestep_index": i,
                "alpha_bar": a_t,
                "render_residual": _render_residual(texture, latent_maps, stepped),
                "max_degree1_coeff": texture.max_degree1_abs(),
            }
        )
    timings["diffusion"] = time.perf_counter() - t0

    final_latents = np.empty(shape, dtype=np.float64)
    for vi, view_maps in enumerate(latent_maps):
        final_latents[vi] = render_latent(view_maps, texture, background=carried[vi])

    t0 = time.perf_counter()
    inversion_losses: list[float] = []
    if not config.skip_inversion and config.inversion.steps > 0:
        final_latents, inversion_losses = run_inversion(
            final_latents,
            rgb_maps,
            backend,
            steps=config.inversion.steps,
            learning_rate=config.inversion.lr,
        )
    timings["inversion"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    images = np.asarray(
        backend.decode(DecodeRequest(latents=final_latents)), dtype=np.float64
    )
    acc = Accumulator.zeros(config.rgb_texture_size, 3)
    for vi, view_maps in enumerate(rgb_maps):
        backproject(view_maps, images[vi], acc)
    values, covered = acc.resolve()
    if not covered.any():
        raise NoCoverageError("no RGB texel received any backprojected pixel")
    out = np.where(covered[:, :, None], values, FILL_VALUE)
    timings["backproject"] = time.perf_counter() - t0

    report = {
        "prompt": config.prompt,
        "view_prompts": prompts,
        "num_views": n_views,
        "latent_texture_size": config.latent_texture_size,
        "rgb_texture_size": config.rgb_texture_size,
        "sh_order": config.sh_order,
        "alpha": config.alpha,
        "seed": config.seed,
        "steps": step_records,
        "inversion_losses": inversion_losses,
        "coverage_fraction": float(covered.mean()),
        "uncovered_texels": int((~covered).sum()),
        "fill_value": FILL_VALUE,
        "timings_s": timings,
    }
    return PipelineResult(
        texture=out, covered=covered, report=report, texture_trace=trace
    )


def export_texture(texture: np.ndarray, path) -> None:
    """Clamp to [0, 1] and write an 8-bit PNG (round-half-up quantization).

    Rows are flipped so v=1 is the image top; NaN texels abort before any
    file is written.
    """
    from PIL import Image

    texture = np.asarray(texture, dtype=np.float64)
    if not np.isfinite(texture).all():
        raise ValueError("texture contains non-finite values")
    clamped = np.clip(texture, 0.0, 1.0)
    quantized = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quantized[::-1], mode="RGB").save(path)
