"""Triangle meshes with per-corner UVs: OBJ loading, validation, normalization.

Only Wavefront OBJ is accepted, and every face corner must reference a
texture coordinate (`v/vt` or `v/vt/vn`); materials are ignored. Loaded
meshes are recentred so the bounding box sits at the origin and rescaled
so the longest axis spans 2 units.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFaceError, MissingUVError, ParseError

# Second normalization pass sees residuals at float rounding scale; treat
# anything below this as already normalized so the op is bit-idempotent.
_NORMALIZE_TOL = 1e-12

_DEGENERATE_REL_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh in model space.

    vertices:     (V, 3) float64 positions
    faces:        (F, 3) int64 vertex indices
    face_uvs:     (F, 3, 2) float64 per-corner UVs in [0, 1]
    face_normals: (F, 3) float64 unit normals; zero rows for degenerate faces
    degenerate:   (F,) bool, true where the face has ~zero area
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_uvs: np.ndarray
    face_normals: np.ndarray
    degenerate: np.ndarray

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())


def compute_face_normal(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Unit normal of triangle (a, b, c), right-hand winding.

    Raises DegenerateFaceError when the cross product is ~zero relative to
    the edge-length scale; callers keep such faces but weight them zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    cross = np.cross(b - a, c - a)
    norm = np.linalg.norm(cross)
    scale = max(
        np.linalg.norm(b - a), np.linalg.norm(c - a), np.linalg.norm(c - b)
    )
    if norm <= _DEGENERATE_REL_TOL * scale * scale or scale == 0.0:
        raise DegenerateFaceError("zero-area triangle")
    return cross / norm


def normalize_vertices(vertices: np.ndarray) -> np.ndarray:
    """Center the bounding box at the origin; longest axis gets extent 2.

    Idempotent: a second call returns the input array unchanged (the
    residual center/extent error of a first pass is far below tolerance).
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    center = (lo + hi) / 2.0
    extent = float((hi - lo).max())
    if extent == 0.0:
        raise ValueError("mesh has zero spatial extent")
    if np.abs(center).max() <= _NORMALIZE_TOL and abs(extent - 2.0) <= _NORMALIZE_TOL:
        return vertices
    return (vertices - center) * (2.0 / extent)


def _wrap_uv(uv: np.ndarray) -> np.ndarray:
    # Tiling atlases use coordinates outside [0,1]; wrap by fractional part
    # but leave exact 0.0/1.0 untouched (inclusive upper edge).
    outside = (uv < 0.0) | (uv > 1.0)
    return np.where(outside, uv - np.floor(uv), uv)


def _parse_corner(token: str, n_v: int, n_vt: int, line_no: int) -> tuple[int, int]:
    parts = token.split("/")
    if len(parts) < 2 or parts[1] == "":
        raise MissingUVError(f"face corner {token!r} has no vt index", line_no)
    try:
        vi = int(parts[0])
        ti = int(parts[1])
    except ValueError:
        raise ParseError(f"bad face corner {token!r}", line_no) from None
    # OBJ indices are 1-based; negatives count from the end.
    vi = vi - 1 if vi > 0 else n_v + vi
    ti = ti - 1 if ti > 0 else n_vt + ti
    if not (0 <= vi < n_v):
        raise ParseError(f"vertex index {parts[0]} out of range", line_no)
    if not (0 <= ti < n_vt):
        raise ParseError(f"vt index {parts[1]} out of range", line_no)
    return vi, ti


def load_mesh(path: str | Path) -> Mesh:
    """Load, validate and normalize an OBJ mesh.

    Polygons are fan-triangulated. Non-manifold input is accepted; only a
    missing UV reference is fatal. Degenerate triangles stay in the face
    list (flagged) so UV indexing stays in sync with the input.
    """
    path = Path(path)
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    corner_rows: list[list[tuple[int, int]]] = []

    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            kind = fields[0]
            if kind == "v":
                if len(fields) < 4:
                    raise ParseError("vertex needs 3 coordinates", line_no)
                try:
                    positions.append([float(x) for x in fields[1:4]])
                except ValueError:
                    raise ParseError("bad vertex coordinate", line_no) from None
            elif kind == "vt":
                if len(fields) < 3:
                    raise ParseError("vt needs 2 coordinates", line_no)
                try:
                    texcoords.append([float(x) for x in fields[1:3]])
                except ValueError:
                    raise ParseError("bad vt coordinate", line_no) from None
            elif kind == "f":
                if len(fields) < 4:
                    raise ParseError("face needs at least 3 corners", line_no)
                corners = [
                    _parse_corner(tok, len(positions), len(texcoords), line_no)
                    for tok in fields[1:]
                ]
                corner_rows.append(corners)
            # everything else (vn, usemtl, mtllib, o, g, s, ...) is ignored

    if not positions:
        raise ParseError("no vertices in file", 0)
    if not corner_rows:
        raise ParseError("no faces in file", 0)

    faces: list[tuple[int, int, int]] = []
    face_uv_idx: list[tuple[int, int, int]] = []
    for corners in corner_rows:
        v0, t0 = corners[0]
        for (v1, t1), (v2, t2) in zip(corners[1:-1], corners[2:]):
            faces.append((v0, v1, v2))
            face_uv_idx.append((t0, t1, t2))

    vertices = normalize_vertices(np.asarray(positions, dtype=np.float64))
    uv_table = _wrap_uv(np.asarray(texcoords, dtype=np.float64))
    faces_arr = np.asarray(faces, dtype=np.int64)
    face_uvs = uv_table[np.asarray(face_uv_idx, dtype=np.int64)]

    normals = np.zeros((len(faces_arr), 3), dtype=np.float64)
    degenerate = np.zeros(len(faces_arr), dtype=bool)
    tri = vertices[faces_arr]
    for i in range(len(faces_arr)):
        try:
            normals[i] = compute_face_normal(tri[i, 0], tri[i, 1], tri[i, 2])
        except DegenerateFaceError:
            degenerate[i] = True

    return Mesh(
        vertices=vertices,
        faces=faces_arr,
        face_uvs=face_uvs,
        face_normals=normals,
        degenerate=degenerate,
    )


def write_mesh(mesh: Mesh, path: str | Path, texture_name: str | None = None) -> None:
    """Write v/vt/f records (LF endings, 9 significant digits).

    When texture_name is given, also writes a sibling .mtl referencing it
    and points the OBJ at that material.
    """
    path = Path(path)
    lines: list[str] = []
    if texture_name is not None:
        mtl_path = path.with_suffix(".mtl")
        mtl_lines = [
            "newmtl textured",
            "Ka 1 1 1",
            "Kd 1 1 1",
            f"map_Kd {texture_name}",
        ]
        mtl_path.write_text("\n".join(mtl_lines) + "\n", newline="\n")
        lines.append(f"mtllib {mtl_path.name}")
        lines.append("usemtl textured")

    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")

    # Deduplicate per-corner UVs back into a vt table.
    uv_index: dict[tuple[float, float], int] = {}
    corner_vt = np.zeros(mesh.face_uvs.shape[:2], dtype=np.int64)
    for fi in range(mesh.num_faces):
        for ci in range(3):
            key = (float(mesh.face_uvs[fi, ci, 0]), float(mesh.face_uvs[fi, ci, 1]))
            if key not in uv_index:
                uv_index[key] = len(uv_index)
                lines.append(f"vt {key[0]:.9g} {key[1]:.9g}")
            corner_vt[fi, ci] = uv_index[key]

    for fi in range(mesh.num_faces):
        c = [
            f"{mesh.faces[fi, ci] + 1}/{corner_vt[fi, ci] + 1}" for ci in range(3)
        ]
        lines.append("f " + " ".join(c))

    path.write_text("\n".join(lines) + "\n", newline="\n")
