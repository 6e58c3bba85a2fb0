"""Procedural test meshes written as OBJ text (UV sphere, cube, quad)."""

from __future__ import annotations

import math
from pathlib import Path


def sphere_obj(stacks: int = 16, sectors: int = 32) -> str:
    """Lat-long UV sphere; v runs 0 at the south pole to 1 at the north."""
    lines = ["# uv sphere"]
    for j in range(stacks + 1):
        theta = math.pi * j / stacks  # 0 = north pole (+y)
        for k in range(sectors + 1):
            phi = 2.0 * math.pi * k / sectors
            x = math.sin(theta) * math.cos(phi)
            y = math.cos(theta)
            z = math.sin(theta) * math.sin(phi)
            lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for j in range(stacks + 1):
        for k in range(sectors + 1):
            u = k / sectors
            v = 1.0 - j / stacks
            lines.append(f"vt {u:.9g} {v:.9g}")

    def vid(j: int, k: int) -> int:
        return j * (sectors + 1) + k + 1

    for j in range(stacks):
        for k in range(sectors):
            a, b = vid(j, k), vid(j + 1, k)
            c, d = vid(j + 1, k + 1), vid(j, k + 1)
            if j > 0:
                lines.append(f"f {a}/{a} {d}/{d} {b}/{b}")
            if j < stacks - 1:
                lines.append(f"f {b}/{b} {d}/{d} {c}/{c}")
    return "\n".join(lines) + "\n"


def cube_obj() -> str:
    """Unit cube, six quads, each face in its own cell of a 3x3 UV atlas."""
    verts = [
        (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
        (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
    ]
    # quad corner vertex ids (1-based), wound so normals point outward
    quads = [
        (1, 4, 3, 2),  # -z
        (5, 6, 7, 8),  # +z
        (1, 5, 8, 4),  # -x
        (2, 3, 7, 6),  # +x
        (1, 2, 6, 5),  # -y
        (4, 8, 7, 3),  # +y
    ]
    cells = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
    lines = ["# cube, 3x3 uv atlas"]
    for v in verts:
        lines.append(f"v {v[0]} {v[1]} {v[2]}")
    for ci, (cx, cy) in enumerate(cells):
        u0, v0 = cx / 3.0, cy / 3.0
        u1, v1 = (cx + 1) / 3.0, (cy + 1) / 3.0
        for uu, vv in ((u0, v0), (u1, v0), (u1, v1), (u0, v1)):
            lines.append(f"vt {uu:.9g} {vv:.9g}")
    for qi, quad in enumerate(quads):
        ts = [qi * 4 + 1, qi * 4 + 2, qi * 4 + 3, qi * 4 + 4]
        corners = " ".join(f"{v}/{t}" for v, t in zip(quad, ts))
        lines.append(f"f {corners}")
    return "\n".join(lines) + "\n"


def quad_obj(z: float = 0.0) -> str:
    """Single screen-parallel quad spanning [-1, 1]^2 at a fixed z."""
    lines = [
        "# quad",
        f"v -1 -1 {z:.9g}",
        f"v 1 -1 {z:.9g}",
        f"v 1 1 {z:.9g}",
        f"v -1 1 {z:.9g}",
        "vt 0 0",
        "vt 1 0",
        "vt 1 1",
        "vt 0 1",
        "f 1/1 2/2 3/3 4/4",
    ]
    return "\n".join(lines) + "\n"


GENERATORS = {"sphere": sphere_obj, "cube": cube_obj, "quad": quad_obj}


def write_primitive(kind: str, path: str | Path, **kwargs) -> Path:
    path = Path(path)
    path.write_text(GENERATORS[kind](**kwargs), newline="\n")
    return path
