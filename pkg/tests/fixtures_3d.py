"""Shared synthetic meshes, grasps, and corpora for the test suite."""

from __future__ import annotations

import numpy as np

from graspforge.geom import RigidTransform, TriMesh, rotation_about_z
from graspforge.sampling import Grasp, ObjectInstance


def make_box_mesh(extents=(0.1, 0.1, 0.1), center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box with outward-wound triangles."""
    ex, ey, ez = np.asarray(extents) / 2.0
    cx, cy, cz = center
    v = np.array([
        [cx - ex, cy - ey, cz - ez],
        [cx + ex, cy - ey, cz - ez],
        [cx + ex, cy + ey, cz - ez],
        [cx - ex, cy + ey, cz - ez],
        [cx - ex, cy - ey, cz + ez],
        [cx + ex, cy - ey, cz + ez],
        [cx + ex, cy + ey, cz + ez],
        [cx - ex, cy + ey, cz + ez],
    ])
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom (-z)
        [4, 5, 6], [4, 6, 7],  # top (+z)
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [1, 2, 6], [1, 6, 5],  # +x
        [3, 0, 4], [3, 4, 7],  # -x
    ])
    return TriMesh(v, f)


def make_square_sheet(side=1.0, z=0.0, center=(0.5, 0.5)) -> TriMesh:
    """Two-triangle square in the z=`z` plane."""
    cx, cy = center
    h = side / 2.0
    v = np.array([
        [cx - h, cy - h, z],
        [cx + h, cy - h, z],
        [cx + h, cy + h, z],
        [cx - h, cy + h, z],
    ])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(v, f)


def make_icosphere(radius=0.1, subdivisions=2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron scaled to `radius`."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]

    for _ in range(subdivisions):
        midpoint_cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint_cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    v = np.array(verts) * radius + np.asarray(center)
    return TriMesh(v, np.array(faces))


def sphere_facet_tolerance(radius: float, subdivisions: int) -> float:
    """Max radial deviation of the inscribed icosphere from the sphere."""
    mesh = make_icosphere(radius=radius, subdivisions=subdivisions)
    centers = mesh.vertices[mesh.faces].mean(axis=1)
    return float(radius - np.linalg.norm(centers, axis=1).min())


# L-shaped prism: asymmetric footprint, so planar PCA alignment is unique.
_L_OUTLINE = np.array([
    [0.0, 0.0], [2.0, 0.0], [2.0, 0.8], [0.8, 0.8], [0.8, 1.6], [0.0, 1.6],
])
_L_TOP_TRIS = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5)]


def make_l_prism(scale=0.08, height=0.04) -> TriMesh:
    outline = _L_OUTLINE * scale
    outline = outline - outline.mean(axis=0)  # center the footprint
    n = len(outline)
    bottom = np.column_stack([outline, np.zeros(n)])
    top = np.column_stack([outline, np.full(n, height)])
    v = np.vstack([bottom, top])
    faces = []
    for a, b, c in _L_TOP_TRIS:
        faces.append([a, c, b])              # bottom, wound downward
        faces.append([a + n, b + n, c + n])  # top, wound upward
    for i in range(n):
        j = (i + 1) % n
        faces.append([i, j, j + n])
        faces.append([i, j + n, i + n])
    return TriMesh(v, np.array(faces))


def transformed_mesh(mesh: TriMesh, transform: RigidTransform) -> TriMesh:
    return TriMesh(transform.apply(mesh.vertices), mesh.faces.copy())


def box_surface_cloud(n, extents=(0.2, 0.16, 0.1), rng=None) -> np.ndarray:
    """Uniform samples on the surface of an axis-aligned box."""
    rng = rng or np.random.default_rng(0)
    ex, ey, ez = np.asarray(extents) / 2.0
    areas = np.array([ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1, 1, size=n)
    v = rng.uniform(-1, 1, size=n)
    pts = np.empty((n, 3))
    for i in range(n):
        if face[i] == 0:
            pts[i] = (ex, u[i] * ey, v[i] * ez)
        elif face[i] == 1:
            pts[i] = (-ex, u[i] * ey, v[i] * ez)
        elif face[i] == 2:
            pts[i] = (u[i] * ex, ey, v[i] * ez)
        elif face[i] == 3:
            pts[i] = (u[i] * ex, -ey, v[i] * ez)
        elif face[i] == 4:
            pts[i] = (u[i] * ex, v[i] * ey, ez)
        else:
            pts[i] = (u[i] * ex, v[i] * ey, -ez)
    return pts


def sphere_surface_cloud(n, radius=0.1, rng=None) -> np.ndarray:
    rng = rng or np.random.default_rng(0)
    pts = rng.normal(size=(n, 3))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True) * radius


def random_rigid_transform(rng, max_angle=np.pi, max_translation=1.0) -> RigidTransform:
    from graspforge.geom import rotation_about_axis

    axis = rng.normal(size=3)
    angle = rng.uniform(-max_angle, max_angle)
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform(rotation_about_axis(axis, angle), t)


def grasp_at(gid: str, xyz, yaw=0.0, stable=True) -> Grasp:
    return Grasp(id=gid, pose=RigidTransform(rotation_about_z(yaw), np.asarray(xyz, dtype=float)),
                 stable=stable)


def make_instance(class_name: str, instance_id: str, mesh: TriMesh,
                  grasp_positions) -> ObjectInstance:
    grasps = [grasp_at(f"g{i:03d}", p) for i, p in enumerate(grasp_positions)]
    return ObjectInstance(class_name=class_name, instance_id=instance_id,
                          mesh=mesh, grasps=grasps)
