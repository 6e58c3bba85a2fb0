"""Software rasterization and texture-space backprojection.

Orthographic z-buffered triangle rasterization with nearest-neighbor texel
lookup: every covered pixel records which texel it samples, its normalized
depth, and a cosine weight. Backprojection scatters per-pixel values into
a weighted accumulator over texels; the weighted mean is taken at read
time. Accumulation runs in float64 so that values quantized at float32
survive a scatter/resolve round trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView
from .errors import ShapeMismatchError
from .mesh_io import Mesh
from .sh_latent import ShTexture, TexelSamples, direction_to_angles, evaluate_texels

Z_TIE_TOL = 1e-7

# Foreground depths map linearly onto [DEPTH_EPS, 1] (near = 1); background
# stays 0, keeping foreground strictly separated in the wire format.
DEPTH_EPS = 0.01


@dataclass
class RenderMaps:
    """Per-pixel rasterization products for one view.

    texel_u/texel_v are -1 on background; weight already includes the
    view's importance; view_theta/view_phi give the direction from the
    surface toward the camera (constant per view under orthographic
    projection).
    """

    texel_u: np.ndarray
    texel_v: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    weight: np.ndarray
    face_index: np.ndarray
    view_theta: float
    view_phi: float
    texture_size: int
    view: CameraView

    @property
    def resolution(self) -> int:
        return self.mask.shape[0]

    def direction_to_camera(self) -> np.ndarray:
        return self.view.direction_to_camera()


@dataclass
class Accumulator:
    """Weighted scatter target over a texel grid.

    sum holds sum(w * value), weight_sum holds sum(w); texels with zero
    weight are untouched (all-zero rows).
    """

    sum: np.ndarray
    weight_sum: np.ndarray

    @classmethod
    def zeros(cls, size: int, channels: int) -> "Accumulator":
        return cls(
            sum=np.zeros((size, size, channels), dtype=np.float64),
            weight_sum=np.zeros((size, size), dtype=np.float64),
        )

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.sum + other.sum, self.weight_sum + other.weight_sum)

    def resolve(self) -> tuple[np.ndarray, np.ndarray]:
        """(weighted-mean values, covered mask); uncovered texels are 0."""
        covered = self.weight_sum > 0.0
        out = np.zeros_like(self.sum)
        out[covered] = self.sum[covered] / self.weight_sum[covered, None]
        return out, covered


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _is_top_left(dx: float, dy: float) -> bool:
    # Pixel rows grow downward; a "top" edge runs +x with the interior
    # below it, a "left" edge runs -y with the interior to its right.
    return (dy == 0.0 and dx > 0.0) or dy < 0.0


def rasterize(mesh: Mesh, view: CameraView, texture_size: int) -> RenderMaps:
    """Z-buffered orthographic rasterization into per-pixel texel maps.

    Pixel centers inside a triangle (top-left fill rule) take the nearest
    fragment; z ties within Z_TIE_TOL keep the lower face index. Weight is
    importance * max(0, <face normal, -forward>); degenerate faces are
    skipped (they cover no area and carry no weight).
    """
    if texture_size < 1:
        raise ValueError("texture_size must be >= 1")
    res = view.resolution
    he = view.ortho_half_extent

    rel = mesh.vertices - view.position
    cols = (rel @ view.right / he + 1.0) * (res / 2.0) - 0.5
    rows = (1.0 - rel @ view.up / he) * (res / 2.0) - 0.5
    dists = rel @ view.forward

    zbuf = np.full((res, res), np.inf, dtype=np.float64)
    uv_u = np.zeros((res, res), dtype=np.float64)
    uv_v = np.zeros((res, res), dtype=np.float64)
    face_index = np.full((res, res), -1, dtype=np.int64)

    for fi in range(mesh.num_faces):
        if mesh.degenerate[fi]:
            continue
        idx = mesh.faces[fi]
        px = cols[idx].copy()
        py = rows[idx].copy()
        pz = dists[idx].copy()
        uv = mesh.face_uvs[fi].copy()

        denom = _edge(px[0], py[0], px[1], py[1], px[2], py[2])
        if denom == 0.0:
            continue
        if denom < 0.0:  # reorder to positive orientation
            px[1], px[2] = px[2], px[1]
            py[1], py[2] = py[2], py[1]
            pz[1], pz[2] = pz[2], pz[1]
            uv = uv[[0, 2, 1]]
            denom = -denom

        x_lo = max(0, int(np.ceil(px.min())))
        x_hi = min(res - 1, int(np.floor(px.max())))
        y_lo = max(0, int(np.ceil(py.min())))
        y_hi = min(res - 1, int(np.floor(py.max())))
        if x_lo > x_hi or y_lo > y_hi:
            continue

        gx = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        gy = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        pgx, pgy = np.meshgrid(gx, gy)

        w0 = _edge(px[1], py[1], px[2], py[2], pgx, pgy)
        w1 = _edge(px[2], py[2], px[0], py[0], pgx, pgy)
        w2 = _edge(px[0], py[0], px[1], py[1], pgx, pgy)
        tl0 = _is_top_left(px[2] - px[1], py[2] - py[1])
        tl1 = _is_top_left(px[0] - px[2], py[0] - py[2])
        tl2 = _is_top_left(px[1] - px[0], py[1] - py[0])
        inside = (
            ((w0 > 0.0) | ((w0 == 0.0) & tl0))
            & ((w1 > 0.0) | ((w1 == 0.0) & tl1))
            & ((w2 > 0.0) | ((w2 == 0.0) & tl2))
        )
        if not inside.any():
            continue

        b0 = w0 / denom
        b1 = w1 / denom
        b2 = w2 / denom
        z = b0 * pz[0] + b1 * pz[1] + b2 * pz[2]

        sub = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        accept = inside & (z < zbuf[sub] - Z_TIE_TOL)
        if not accept.any():
            continue
        zbuf[sub][accept] = z[accept]
        uv_u[sub][accept] = (
            b0 * uv[0, 0] + b1 * uv[1, 0] + b2 * uv[2, 0]
        )[accept]
        uv_v[sub][accept] = (
            b0 * uv[0, 1] + b1 * uv[1, 1] + b2 * uv[2, 1]
        )[accept]
        face_index[sub][accept] = fi

    mask = np.isfinite(zbuf)
    texel_u = np.full((res, res), -1, dtype=np.int64)
    texel_v = np.full((res, res), -1, dtype=np.int64)
    texel_u[mask] = np.clip(
        np.floor(uv_u[mask] * texture_size).astype(np.int64), 0, texture_size - 1
    )
    texel_v[mask] = np.clip(
        np.floor(uv_v[mask] * texture_size).astype(np.int64), 0, texture_size - 1
    )

    weight = np.zeros((res, res), dtype=np.float64)
    if mask.any():
        cosines = mesh.face_normals @ -view.forward
        weight[mask] = view.importance * np.maximum(0.0, cosines[face_index[mask]])

    depth = np.zeros((res, res), dtype=np.float64)
    if mask.any():
        znear = zbuf[mask].min()
        zfar = zbuf[mask].max()
        if zfar > znear:
            depth[mask] = DEPTH_EPS + (1.0 - DEPTH_EPS) * (zfar - zbuf[mask]) / (
                zfar - znear
            )
        else:
            depth[mask] = 1.0

    theta, phi = direction_to_angles(view.direction_to_camera())
    return RenderMaps(
        texel_u=texel_u,
        texel_v=texel_v,
        depth=depth,
        mask=mask,
        weight=weight,
        face_index=face_index,
        view_theta=float(theta),
        view_phi=float(phi),
        texture_size=texture_size,
        view=view,
    )


def render_latent(
    maps: RenderMaps,
    texture: ShTexture,
    background: np.ndarray | float = 0.0,
) -> np.ndarray:
    """Evaluate the texture at each covered pixel's texel from this view.

    Foreground pixels read SH(texel, view direction); background pixels
    take `background` (scalar fill or a full image, e.g. schedule noise).
    """
    if maps.texture_size != texture.size:
        raise ShapeMismatchError(
            f"maps built for texture size {maps.texture_size}, got {texture.size}"
        )
    res = maps.resolution
    out = np.empty((res, res, texture.channels), dtype=np.float64)
    if np.isscalar(background):
        out[...] = background
    else:
        background = np.asarray(background, dtype=np.float64)
        if background.shape != out.shape:
            raise ShapeMismatchError("background image shape mismatch")
        out[...] = background
    m = maps.mask
    if m.any():
        out[m] = evaluate_texels(
            texture, maps.texel_u[m], maps.texel_v[m], maps.direction_to_camera()
        )
    return out


def backproject(maps: RenderMaps, image: np.ndarray, acc: Accumulator) -> Accumulator:
    """Scatter weighted per-pixel values into the accumulator, in place.

    Only z-buffer-visible foreground pixels with weight > 0 contribute, so
    hidden surfaces never receive paint from this view.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != maps.mask.shape:
        raise ShapeMismatchError("image resolution does not match maps")
    if image.shape[2] != acc.sum.shape[2]:
        raise ShapeMismatchError("channel count does not match accumulator")
    live = maps.mask & (maps.weight > 0.0)
    if live.any():
        tu = maps.texel_u[live]
        tv = maps.texel_v[live]
        w = maps.weight[live]
        np.add.at(acc.sum, (tv, tu), w[:, None] * image[live])
        np.add.at(acc.weight_sum, (tv, tu), w)
    return acc


def gather_texel_samples(
    maps: RenderMaps, image: np.ndarray, samples: TexelSamples
) -> None:
    """Append this view's (direction, value, weight) texel observations."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != maps.mask.shape:
        raise ShapeMismatchError("image resolution does not match maps")
    live = maps.mask & (maps.weight > 0.0)
    if live.any():
        samples.add(
            maps.texel_u[live],
            maps.texel_v[live],
            maps.direction_to_camera(),
            image[live],
            maps.weight[live],
        )
