"""Core 3-D math: rigid transforms, pinhole cameras, triangle meshes,
ray casting, PCA, and planar projection utilities.

Conventions: meters everywhere, +z up, rotation matrices are world-facing
3x3 with det +1. Points are float64 arrays, shape (3,) or (N, 3); 2-D point
sets are (N, 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


class BehindCameraError(GeometryError):
    """Point projected from behind the image plane."""


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise GeometryError("cannot normalize near-zero vector")
    return v / n


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) pose: ``p_out = rotation @ p_in + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {r.shape}")
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise GeometryError("non-finite transform")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise GeometryError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise GeometryError(f"expected 4x4 matrix, got {m.shape}")
        return RigidTransform(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def invert(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.invert()


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (non-zero) axis."""
    k = normalize(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormalized(r: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise GeometryError("principal point outside image")

    def hfov(self) -> float:
        return 2.0 * np.arctan(self.width / (2.0 * self.fx))

    def vfov(self) -> float:
        return 2.0 * np.arctan(self.height / (2.0 * self.fy))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: `extrinsics` maps world points into the camera frame
    (x right, y down, z forward)."""

    intrinsics: Intrinsics
    extrinsics: RigidTransform

    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.extrinsics.invert().translation


def intrinsics_from_dfov(dfov_deg: float, width: int = 640, height: int = 480) -> Intrinsics:
    """Focal length from a diagonal field of view; principal point centered."""
    if not 0.0 < dfov_deg < 180.0:
        raise GeometryError(f"dfov must be in (0, 180) degrees, got {dfov_deg}")
    half = np.radians(dfov_deg) / 2.0
    f = (np.hypot(width, height) / 2.0) / np.tan(half)
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def project_camera_point(intr: Intrinsics, p_cam: np.ndarray) -> np.ndarray:
    """Project a camera-frame point; raises if at or behind the image plane."""
    x, y, z = np.asarray(p_cam, dtype=float)
    if z <= 1e-6:
        raise BehindCameraError(f"point behind camera (z={z:.3g})")
    return np.array([intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy])


def project(cam: CameraModel, p_world: np.ndarray) -> np.ndarray:
    return project_camera_point(cam.intrinsics, cam.extrinsics.apply(p_world))


def backproject(cam: CameraModel, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Invert `project` for a pixel at camera-frame depth `depth` (z)."""
    if depth <= 0:
        raise GeometryError("depth must be positive")
    u, v = np.asarray(pixel, dtype=float)
    intr = cam.intrinsics
    p_cam = np.array([(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth])
    return cam.extrinsics.invert().apply(p_cam)


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TriMesh:
    """Triangle mesh in meters, +z up, right-handed. Vertices (N,3) float64,
    faces (M,3) int64 (indices into vertices)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise GeometryError("vertices must be (N, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise GeometryError("faces must be (M, 3)")
        if not np.isfinite(self.vertices).all():
            raise GeometryError("non-finite vertex")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise GeometryError("face index out of range")

    def face_areas(self) -> np.ndarray:
        v0 = self.vertices[self.faces[:, 0]]
        e1 = self.vertices[self.faces[:, 1]] - v0
        e2 = self.vertices[self.faces[:, 2]] - v0
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def ray_mesh_first_hit(mesh: TriMesh, origin: np.ndarray, direction: np.ndarray,
                       eps: float = 1e-9):
    """First intersection of a ray with the mesh.

    Returns ``(point, distance)`` for the nearest hit with distance >= 0,
    or ``None`` when the ray misses every triangle. `direction` must be
    normalized.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise GeometryError("ray direction must be normalized")
    if len(mesh.faces) == 0:
        return None
    t, idx = kernels.ray_mesh_first_hit(mesh.vertices, mesh.faces, origin, direction, eps)
    if idx < 0:
        return None
    return origin + t * direction, float(t)


def closest_point_on_mesh(mesh: TriMesh, query: np.ndarray) -> np.ndarray:
    """Point on the mesh surface minimizing distance to `query`."""
    if len(mesh.faces) == 0:
        raise GeometryError("empty mesh")
    point, _, _ = kernels.closest_point_on_mesh(
        mesh.vertices, mesh.faces, np.asarray(query, dtype=np.float64)
    )
    return point


# ---------------------------------------------------------------------------
# PCA and planar projection
# ---------------------------------------------------------------------------

_REL_RANK_TOL = 1e-9


def principal_axes(points: np.ndarray) -> np.ndarray:
    """Principal axes of a 2-D or 3-D point set, as rows, ordered by
    descending eigenvalue of the centered covariance.

    Signs are fixed so each axis has non-negative dot product with +x,
    falling back to +y (then +z) on exact ties. Raises on rank-deficient
    (collinear) input.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise GeometryError("points must be (N, 2) or (N, 3)")
    if pts.shape[0] < 3:
        raise GeometryError("need at least 3 points")
    dim = pts.shape[1]
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    axes = eigvecs[:, order].T  # rows

    if eigvals[1] <= max(eigvals[0], 0.0) * _REL_RANK_TOL + 1e-30:
        raise GeometryError("rank-deficient point set (collinear points)")

    for i in range(dim):
        for ref in range(dim):
            d = axes[i, ref]
            if abs(d) > 1e-12:
                if d < 0:
                    axes[i] = -axes[i]
                break
    return axes


def project_to_plane_and_sample(mesh: TriMesh, n_points: int, seed: int = 0) -> np.ndarray:
    """Project mesh vertices onto the xy-plane, take the 2-D convex hull,
    and draw `n_points` uniform samples inside it by rejection sampling.

    Returns an (n_points, 2) array. Raises on a degenerate hull
    (area < 1e-12 m^2).
    """
    if len(mesh.vertices) == 0:
        raise GeometryError("empty mesh")
    flat = mesh.vertices[:, :2]
    try:
        hull = ConvexHull(flat)
    except QhullError as exc:
        raise GeometryError(f"degenerate planar projection: {exc}") from exc
    if hull.volume < 1e-12:  # 2-D hull "volume" is its area
        raise GeometryError(f"degenerate hull area {hull.volume:.3g} m^2")
    if n_points == 0:
        return np.empty((0, 2))

    lo = flat[hull.vertices].min(axis=0)
    hi = flat[hull.vertices].max(axis=0)
    # hull.equations: rows [a, b, offset] with a*x + b*y + offset <= 0 inside
    eqs = hull.equations
    rng = np.random.default_rng(seed)
    out = np.empty((n_points, 2))
    filled = 0
    while filled < n_points:
        batch = max(n_points - filled, 64)
        cand = rng.uniform(lo, hi, size=(batch, 2))
        inside = (cand @ eqs[:, :2].T + eqs[:, 2][None, :] <= 1e-12).all(axis=1)
        good = cand[inside]
        take = min(len(good), n_points - filled)
        out[filled:filled + take] = good[:take]
        filled += take
    return out


# ---------------------------------------------------------------------------
# Gripper
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GripperSpec:
    """Parallel-jaw finger geometry in the gripper frame.

    The TCP sits `tcp_offset` along `approach_axis` from the gripper
    origin; fingers close along `closing_axis` over `max_aperture` and are
    `finger_length` long, `finger_thickness` deep. Defaults follow a common
    parallel-jaw convention (approach +z, closing +x).
    """

    max_aperture: float = 0.08
    finger_length: float = 0.046
    finger_thickness: float = 0.02
    tcp_offset: float = 0.1034
    approach_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    closing_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "approach_axis", normalize(self.approach_axis))
        object.__setattr__(self, "closing_axis", normalize(self.closing_axis))
        if abs(float(self.approach_axis @ self.closing_axis)) > 1e-9:
            raise GeometryError("approach and closing axes must be perpendicular")
        for name in ("max_aperture", "finger_length", "finger_thickness", "tcp_offset"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be positive")

    def third_axis(self) -> np.ndarray:
        return np.cross(self.approach_axis, self.closing_axis)
