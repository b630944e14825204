"""ASCII triangle-mesh I/O.

Format (a strict OBJ subset): '#' comment lines, ``v x y z`` vertex lines
(meters, right-handed, +z up) and ``f i j k`` triangle lines with 1-based
vertex indices. Anything else is rejected. On load, zero-area faces are
dropped and face winding is normalized so normals point away from the mesh
centroid; both counts are reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import GeometryError, TriMesh

DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class MeshLoadReport:
    n_vertices: int
    n_faces: int
    n_dropped_degenerate: int
    n_rewound: int


def load_mesh(path) -> tuple[TriMesh, MeshLoadReport]:
    vertices = []
    faces = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v" and len(parts) == 4:
            vertices.append([float(x) for x in parts[1:]])
        elif parts[0] == "f" and len(parts) == 4:
            faces.append([int(x) - 1 for x in parts[1:]])
        else:
            raise GeometryError(f"{path}:{lineno}: unsupported line {raw!r}")
    if not vertices:
        raise GeometryError(f"{path}: no vertices")

    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    mesh = TriMesh(v, f)

    areas = mesh.face_areas()
    keep = areas > DEGENERATE_AREA
    n_dropped = int((~keep).sum())
    f = f[keep]

    # Outward-from-centroid winding heuristic; adequate for the compact
    # tabletop assets this loader targets.
    centroid = v.mean(axis=0)
    v0 = v[f[:, 0]]
    normals = np.cross(v[f[:, 1]] - v0, v[f[:, 2]] - v0)
    outward = np.einsum("ij,ij->i", normals, v0 - centroid)
    flip = outward < 0
    n_rewound = int(flip.sum())
    f[flip] = f[flip][:, [0, 2, 1]]

    mesh = TriMesh(v, f)
    report = MeshLoadReport(
        n_vertices=len(v),
        n_faces=len(f),
        n_dropped_degenerate=n_dropped,
        n_rewound=n_rewound,
    )
    return mesh, report


def save_mesh(path, mesh: TriMesh) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")
