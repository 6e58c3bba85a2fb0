"""Orthographic view sampling on the sphere, hemisphere, or XZ circle.

Views orbit the origin, look at it, and carry a prompt modifier (front /
back / side) plus an importance multiplier applied to every pixel weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

_POLE_DOT = 1.0 - 1e-6

MODIFIERS = ("front", "back", "side", "none")


@dataclass(frozen=True)
class CameraView:
    """One orthographic camera.

    {right, up, forward} is orthonormal with forward = -normalize(position).
    ortho_half_extent is half the side length of the imaged square.
    """

    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    right: np.ndarray
    ortho_half_extent: float
    resolution: int
    prompt_modifier: str = "none"
    importance: float = 1.0

    def direction_to_camera(self) -> np.ndarray:
        """Unit direction from the surface toward this camera."""
        return -self.forward


def _frame_from_position(pos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    forward = -pos / np.linalg.norm(pos)
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(float(forward @ up_hint)) > _POLE_DOT:
        up_hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up_hint)
    right = right / np.linalg.norm(right)
    up = np.cross(right, forward)
    return forward, up, right


def fibonacci_positions(n: int, mode: str = "sphere") -> np.ndarray:
    """Unit positions: golden-angle lattice (sphere/hemisphere) or XZ circle.

    hemisphere folds the lattice with y <- |y|; xz_plane spaces n points at
    equal azimuth on the y=0 circle.
    """
    if n < 1:
        raise ValueError("need at least one view")
    if mode == "xz_plane":
        az = 2.0 * np.pi * np.arange(n) / n
        pts = np.stack([np.cos(az), np.zeros(n), np.sin(az)], axis=-1)
        return pts
    i = np.arange(n, dtype=np.float64)
    y = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    phi = GOLDEN_ANGLE * i
    pts = np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=-1)
    if mode == "hemisphere":
        pts[:, 1] = np.abs(pts[:, 1])
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    elif mode != "sphere":
        raise ValueError(f"unknown camera mode {mode!r}")
    return pts


def fibonacci_views(
    n: int,
    mode: str = "sphere",
    radius: float = 2.5,
    half_extent: float = 1.1,
    resolution: int = 512,
) -> list[CameraView]:
    """Build n orthographic views orbiting the origin."""
    views = []
    for pos in fibonacci_positions(n, mode) * radius:
        forward, up, right = _frame_from_position(pos)
        views.append(
            CameraView(
                position=pos,
                forward=forward,
                up=up,
                right=right,
                ortho_half_extent=float(half_extent),
                resolution=int(resolution),
            )
        )
    return views


def assign_prompt_modifier(view: CameraView, front_axis: np.ndarray) -> str:
    """front / back / side by the angle between the view and the mesh front.

    front_axis points out of the mesh's face; a camera looking against it
    (within 45 degrees) sees the front.
    """
    d = float(view.forward @ -np.asarray(front_axis, dtype=np.float64))
    threshold = math.cos(math.radians(45.0))
    if d > threshold:
        return "front"
    if d < -threshold:
        return "back"
    return "side"


def build_views(
    n: int = 8,
    mode: str = "hemisphere",
    radius: float = 2.5,
    half_extent: float = 1.1,
    resolution: int = 512,
    front_axis: np.ndarray | None = None,
    front_importance: float = 1.0,
) -> list[CameraView]:
    """View set with modifiers assigned and the front-most view boosted.

    With front_axis None, all modifiers stay "none" and no view is boosted.
    """
    views = fibonacci_views(n, mode, radius, half_extent, resolution)
    if front_axis is None:
        return views
    front_axis = np.asarray(front_axis, dtype=np.float64)
    front_axis = front_axis / np.linalg.norm(front_axis)
    views = [
        replace(v, prompt_modifier=assign_prompt_modifier(v, front_axis))
        for v in views
    ]
    if front_importance != 1.0:
        facing = [float(v.forward @ -front_axis) for v in views]
        idx = int(np.argmax(facing))
        views[idx] = replace(views[idx], importance=float(front_importance))
    return views
