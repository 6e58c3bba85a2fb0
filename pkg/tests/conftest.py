import math

import numpy as np
import pytest

from meshtex.camera import CameraView
from meshtex.mesh_io import load_mesh
from meshtex.primitives import cube_obj, quad_obj, sphere_obj
from meshtex.raster import RenderMaps
from meshtex.sh_latent import direction_to_angles


@pytest.fixture
def sphere_mesh(tmp_path):
    path = tmp_path / "sphere.obj"
    path.write_text(sphere_obj(stacks=12, sectors=24))
    return load_mesh(path)


@pytest.fixture
def cube_mesh(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(cube_obj())
    return load_mesh(path)


@pytest.fixture
def quad_mesh(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text(quad_obj())
    return load_mesh(path)


def make_view(
    direction=(0.0, 0.0, 1.0),
    radius=2.5,
    half_extent=1.1,
    resolution=64,
    importance=1.0,
) -> CameraView:
    """Camera at radius*direction looking at the origin."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    forward = -d
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(float(forward @ up_hint)) > 1.0 - 1e-6:
        up_hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up_hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return CameraView(
        position=d * radius,
        forward=forward,
        up=up,
        right=right,
        ortho_half_extent=half_extent,
        resolution=resolution,
        importance=importance,
    )


def synthetic_maps(texel_u, texel_v, weight, texture_size, direction=(0.0, 0.0, 1.0)):
    """Hand-built RenderMaps: texel_u < 0 marks background pixels."""
    texel_u = np.asarray(texel_u, dtype=np.int64)
    texel_v = np.asarray(texel_v, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.float64)
    mask = texel_u >= 0
    view = make_view(direction, resolution=texel_u.shape[0])
    theta, phi = direction_to_angles(view.direction_to_camera())
    return RenderMaps(
        texel_u=texel_u,
        texel_v=texel_v,
        depth=mask.astype(np.float64),
        mask=mask,
        weight=np.where(mask, weight, 0.0),
        face_index=np.where(mask, 0, -1),
        view_theta=float(theta),
        view_phi=float(phi),
        texture_size=texture_size,
        view=view,
    )


def rotated_quad_obj(angle_deg: float) -> str:
    """Quad spanning [-1,1]^2 rotated about the vertical (y) axis."""
    a = math.radians(angle_deg)
    lines = ["# rotated quad"]
    for x, y in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        rx = x * math.cos(a)
        rz = -x * math.sin(a)
        lines.append(f"v {rx:.12g} {y} {rz:.12g}")
    lines += ["vt 0 0", "vt 1 0", "vt 1 1", "vt 0 1", "f 1/1 2/2 3/3 4/4"]
    return "\n".join(lines) + "\n"
