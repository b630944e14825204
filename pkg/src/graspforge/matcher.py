"""Pixel-space bridges between 6-DoF grasps and image points.

Supervision side: a grasp maps to a 2-D training point by raycasting from
its TCP along the approach axis onto the object mesh (closest-point
fallback on a miss). Inference side: a predicted pixel maps back to a
candidate grasp by projecting, for every candidate, the scene-cloud point
inside its finger box nearest the gripper origin, then taking the argmin
pixel distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geom import (
    BehindCameraError,
    GeometryError,
    GripperSpec,
    Intrinsics,
    RigidTransform,
    TriMesh,
    closest_point_on_mesh,
    project_camera_point,
    ray_mesh_first_hit,
)

RAYCAST_HIT = "raycast_hit"
CLOSEST_POINT_FALLBACK = "closest_point_fallback"


class NoSelectableGraspError(ValueError):
    """Every candidate grasp was excluded (no cloud point in any finger box)."""


@dataclass(frozen=True)
class SupervisionPoint:
    point: np.ndarray  # on the mesh surface, same frame as the grasp pose
    method: str

    def to_dict(self) -> dict:
        return {"point": [float(x) for x in self.point], "method": self.method}


@dataclass(eq=False)
class CandidateGraspSet:
    """Candidate grasps in the camera frame plus the scene cloud they are
    matched against."""

    grasps: list  # (grasp_id, RigidTransform) pairs, camera frame
    gripper: GripperSpec
    cloud: np.ndarray  # (N, 3) camera frame

    def __post_init__(self):
        self.cloud = np.ascontiguousarray(self.cloud, dtype=np.float64)
        if self.cloud.ndim != 2 or self.cloud.shape[1] != 3:
            raise GeometryError("scene cloud must be (N, 3)")


def tcp_point(pose: RigidTransform, gripper: GripperSpec) -> np.ndarray:
    return pose.apply(gripper.tcp_offset * gripper.approach_axis)


def supervision_point(mesh: TriMesh, grasp_pose: RigidTransform,
                      gripper: GripperSpec) -> SupervisionPoint:
    """2-D-supervision anchor for a grasp: first mesh hit of the ray from
    the TCP along the approach direction, else the mesh point closest to
    the TCP. Mesh and pose must share a frame."""
    if len(mesh.faces) == 0:
        raise GeometryError("empty mesh")
    origin = tcp_point(grasp_pose, gripper)
    direction = grasp_pose.rotate(gripper.approach_axis)
    hit = ray_mesh_first_hit(mesh, origin, direction)
    if hit is not None:
        return SupervisionPoint(point=hit[0], method=RAYCAST_HIT)
    return SupervisionPoint(point=closest_point_on_mesh(mesh, origin),
                            method=CLOSEST_POINT_FALLBACK)


def finger_box(pose: RigidTransform, gripper: GripperSpec):
    """Oriented box bounded by the gripper fingers, in the pose's frame.

    Returns ``(center, axes-rows, half_extents)``: aperture wide along the
    closing axis, finger_length deep along the approach axis (ending at the
    TCP), finger_thickness along the remaining axis.
    """
    center_local = (gripper.tcp_offset - gripper.finger_length / 2.0) * gripper.approach_axis
    center = pose.apply(center_local)
    axes = np.stack([
        pose.rotate(gripper.closing_axis),
        pose.rotate(gripper.approach_axis),
        pose.rotate(gripper.third_axis()),
    ])
    half_extents = np.array([
        gripper.max_aperture / 2.0,
        gripper.finger_length / 2.0,
        gripper.finger_thickness / 2.0,
    ])
    return center, axes, half_extents


def grasp_to_pixel(pose: RigidTransform, gripper: GripperSpec, cloud: np.ndarray,
                   intr: Intrinsics):
    """Pixel corresponding to a camera-frame grasp, or None when excluded.

    Gathers the scene-cloud points inside the grasp's finger box, picks the
    one nearest the gripper origin, and projects it. Excluded (None) when
    the box holds no point or the projection falls outside the image.
    """
    cloud = np.ascontiguousarray(cloud, dtype=np.float64)
    center, axes, half_extents = finger_box(pose, gripper)
    mask = kernels.points_in_box(cloud, center, axes, half_extents)
    mask &= cloud[:, 2] > 1e-6
    if not mask.any():
        return None
    inside = cloud[mask]
    dists = np.linalg.norm(inside - pose.translation[None, :], axis=1)
    point = inside[int(np.argmin(dists))]
    pixel = project_camera_point(intr, point)
    if not (0.0 <= pixel[0] < intr.width and 0.0 <= pixel[1] < intr.height):
        return None
    return pixel


def candidate_pixels(candidates: CandidateGraspSet, intr: Intrinsics) -> dict:
    """Map grasp id -> pixel (or None for excluded grasps)."""
    out = {}
    for grasp_id, pose in candidates.grasps:
        out[grasp_id] = grasp_to_pixel(pose, candidates.gripper, candidates.cloud, intr)
    return out


def select_by_pixel(pixels: dict, prediction: np.ndarray) -> str:
    """argmin pixel-distance selection over ``{id: pixel-or-None}``,
    breaking exact ties toward the lowest grasp id."""
    prediction = np.asarray(prediction, dtype=float)
    best_id = None
    best_d = np.inf
    for grasp_id in sorted(pixels):
        pixel = pixels[grasp_id]
        if pixel is None:
            continue
        d = float(np.linalg.norm(np.asarray(pixel) - prediction))
        if d < best_d:
            best_d = d
            best_id = grasp_id
    if best_id is None:
        raise NoSelectableGraspError("no candidate grasp maps to a pixel")
    return best_id


def select_grasp(candidates: CandidateGraspSet, intr: Intrinsics,
                 prediction: np.ndarray) -> str:
    """Grasp id whose image point is nearest the predicted pixel."""
    prediction = np.asarray(prediction, dtype=float)
    if not (0.0 <= prediction[0] < intr.width and 0.0 <= prediction[1] < intr.height):
        raise GeometryError(f"prediction {prediction} outside image bounds")
    return select_by_pixel(candidate_pixels(candidates, intr), prediction)
