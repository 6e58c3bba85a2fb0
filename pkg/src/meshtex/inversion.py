"""Cross-view latent alignment by gradient descent ("GAN inversion").

Each view's latent is optimized so its decoded image, backprojected to
texture space, matches the weighted-average texture of all views. The
l1 objective is smoothed with sqrt(x^2 + eps^2) so its gradient vanishes
at zero residual, making mutually consistent views an exact fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .backend import Backend, DecodeRequest
from .errors import ShapeMismatchError
from .raster import RenderMaps

SMOOTH_EPS = 1e-6

DEFAULT_LR = 0.05
DEFAULT_STEPS = 200


@dataclass(frozen=True)
class InversionState:
    latents: np.ndarray
    step: int = 0
    learning_rate: float = DEFAULT_LR
    max_steps: int = DEFAULT_STEPS


def _scatter_view(maps: RenderMaps, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted scatter of one view's pixels: (sum, weight_sum) over texels."""
    t = maps.texture_size
    acc_sum = np.zeros((t, t, image.shape[-1]), dtype=np.float64)
    acc_w = np.zeros((t, t), dtype=np.float64)
    live = maps.mask & (maps.weight > 0.0)
    if live.any():
        w = maps.weight[live]
        np.add.at(acc_sum, (maps.texel_v[live], maps.texel_u[live]), w[:, None] * image[live])
        np.add.at(acc_w, (maps.texel_v[live], maps.texel_u[live]), w)
    return acc_sum, acc_w


def _decode_views(latents: np.ndarray, backend: Backend) -> np.ndarray:
    return np.asarray(backend.decode(DecodeRequest(latents=latents)), dtype=np.float64)


def average_texture(
    latents: np.ndarray, maps: list[RenderMaps], backend: Backend
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted-mean texture of all decoded views, plus its coverage mask."""
    if len(maps) != latents.shape[0]:
        raise ShapeMismatchError("need one RenderMaps per view")
    images = _decode_views(latents, backend)
    t = maps[0].texture_size
    total_sum = np.zeros((t, t, images.shape[-1]), dtype=np.float64)
    total_w = np.zeros((t, t), dtype=np.float64)
    for view_maps, image in zip(maps, images):
        s, w = _scatter_view(view_maps, image)
        total_sum += s
        total_w += w
    covered = total_w > 0.0
    texture = np.zeros_like(total_sum)
    texture[covered] = total_sum[covered] / total_w[covered, None]
    return texture, covered


def _view_loss_and_cotangent(
    maps: RenderMaps, image: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """Smoothed-l1 texture loss for one view and its RGB-image cotangent.

    Backprojection is a weighted mean per texel, so the pullback routes
    each texel's gradient to its pixels scaled by w_p / sum(w).
    """
    acc_sum, acc_w = _scatter_view(maps, image)
    covered = acc_w > 0.0
    k = int(covered.sum()) * image.shape[-1]
    if k == 0:
        return 0.0, np.zeros_like(image)
    texture = acc_sum[covered] / acc_w[covered, None]
    residual = texture - target[covered]
    rho = np.sqrt(residual * residual + SMOOTH_EPS * SMOOTH_EPS)
    loss = float(rho.sum() / k)

    grad_tex = np.zeros_like(acc_sum)
    grad_tex[covered] = residual / rho / k

    cot = np.zeros_like(image)
    live = maps.mask & (maps.weight > 0.0)
    tv = maps.texel_v[live]
    tu = maps.texel_u[live]
    scale = maps.weight[live] / acc_w[tv, tu]
    cot[live] = scale[:, None] * grad_tex[tv, tu]
    return loss, cot


def inversion_step(
    state: InversionState,
    target: np.ndarray,
    maps: list[RenderMaps],
    backend: Backend,
) -> tuple[InversionState, float]:
    """One joint descent update of all view latents against a fixed target.

    Gradients of every view are accumulated first, then applied together;
    non-finite gradients abort with step diagnostics.
    """
    latents = state.latents
    images = _decode_views(latents, backend)
    losses = []
    cotangents = np.zeros_like(images)
    for vi, view_maps in enumerate(maps):
        loss_v, cot_v = _view_loss_and_cotangent(view_maps, images[vi], target)
        losses.append(loss_v)
        cotangents[vi] = cot_v
    grads = np.asarray(backend.decode_pullback(latents, cotangents), dtype=np.float64)
    if not np.isfinite(grads).all():
        bad = int((~np.isfinite(grads)).sum())
        raise FloatingPointError(
            f"non-finite gradient at inversion step {state.step} "
            f"({bad}/{grads.size} entries)"
        )
    new_latents = latents - state.learning_rate * grads
    if not np.isfinite(new_latents).all():
        raise FloatingPointError(f"non-finite latents at inversion step {state.step}")
    new_state = replace(state, latents=new_latents, step=state.step + 1)
    return new_state, float(np.mean(losses))


def run_inversion(
    latents: np.ndarray,
    maps: list[RenderMaps],
    backend: Backend,
    steps: int = DEFAULT_STEPS,
    learning_rate: float = DEFAULT_LR,
) -> tuple[np.ndarray, list[float]]:
    """Alternate average-texture recomputation and joint descent steps.

    Returns the optimized latents and the per-step loss trajectory. The
    target is recomputed from the current latents every step, so mutually
    consistent views pass through unchanged.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    state = InversionState(
        latents=np.array(latents, dtype=np.float64),
        learning_rate=learning_rate,
        max_steps=steps,
    )
    trajectory: list[float] = []
    for _ in range(steps):
        target, _covered = average_texture(state.latents, maps, backend)
        state, loss = inversion_step(state, target, maps, backend)
        trajectory.append(loss)
    return state.latents, trajectory
