"""Grasp subsampling: per-instance farthest-point sampling and
cross-instance round-robin sampling over class-aligned meshes.

Grasp-to-grasp distance is the Euclidean distance between grasp
translations in a common frame. All selections are deterministic: ties
break toward the lexicographically smallest grasp id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geom import (
    GeometryError,
    RigidTransform,
    TriMesh,
    principal_axes,
    project_to_plane_and_sample,
    rotation_about_z,
)
from .registration import icp_refine
from .util import rng_stream

DEFAULT_K = 4
ALIGN_FAIL_THRESHOLD = 0.02  # m, mean ICP residual


@dataclass(frozen=True, eq=False)
class Grasp:
    id: str
    pose: RigidTransform
    stable: bool = True


@dataclass(eq=False)
class ObjectInstance:
    class_name: str
    instance_id: str
    mesh: TriMesh
    grasps: list

    def stable_grasps(self) -> list:
        return [g for g in self.grasps if g.stable]


@dataclass
class AlignmentResult:
    transform: RigidTransform
    residual: float
    success: bool


@dataclass
class ClassAlignment:
    """Per-instance transforms into a shared class frame (the reference
    instance's frame). Failed alignments stay listed with success=False."""

    reference_id: str
    transforms: dict
    success: dict

    def covers(self, instance_ids) -> bool:
        return all(iid in self.transforms for iid in instance_ids)


def _check_unique_ids(grasps) -> None:
    ids = [g.id for g in grasps]
    if len(set(ids)) != len(ids):
        raise ValueError("grasp ids must be unique within an object")


def farthest_point_sample(grasps, k: int, seed_index: int | None = None) -> list:
    """Greedy max-min selection of `k` grasp ids by translation distance.

    Starts from `seed_index` (position in the input list) or, by default,
    from the grasp with the lexicographically smallest id.
    """
    if k > len(grasps):
        raise ValueError(f"k={k} exceeds number of grasps ({len(grasps)})")
    if k <= 0:
        return []
    _check_unique_ids(grasps)

    order = sorted(range(len(grasps)), key=lambda i: grasps[i].id)
    ids = [grasps[i].id for i in order]
    positions = np.array([grasps[i].pose.translation for i in order])

    if seed_index is None:
        start = 0
    else:
        if not 0 <= seed_index < len(grasps):
            raise ValueError(f"seed_index {seed_index} out of range")
        start = order.index(seed_index)

    picked = np.zeros(len(ids), dtype=bool)
    picked[start] = True
    selected = [start]
    min_d = kernels.update_min_dists(
        positions, positions[start], np.full(len(ids), np.inf)
    )
    while len(selected) < k:
        scores = np.where(picked, -np.inf, min_d)
        nxt = int(np.argmax(scores))  # first max = lowest id on ties
        picked[nxt] = True
        selected.append(nxt)
        min_d = kernels.update_min_dists(positions, positions[nxt], min_d)
    return [ids[i] for i in selected]


# ---------------------------------------------------------------------------
# Class-level mesh alignment (xy-plane)
# ---------------------------------------------------------------------------

def _lift(points2d: np.ndarray) -> np.ndarray:
    return np.column_stack([points2d, np.zeros(len(points2d))])


def _planar_transform(yaw: float, txy: np.ndarray) -> RigidTransform:
    return RigidTransform(rotation_about_z(yaw), np.array([txy[0], txy[1], 0.0]))


def _axis_angle_2d(axes: np.ndarray) -> float:
    return math.atan2(axes[0, 1], axes[0, 0])


def align_instance(reference: ObjectInstance, target: ObjectInstance, seed: int,
                   n_points: int = 1000, fail_threshold: float = ALIGN_FAIL_THRESHOLD,
                   icp_max_iters: int = 100) -> AlignmentResult:
    """xy-plane rigid transform mapping `target`'s mesh onto `reference`'s.

    Projects both meshes to the plane, samples `n_points` in each hull,
    matches centroids and principal axes (both 180-degree-ambiguous
    orientations tried), then refines with ICP on the z=0-lifted sets.
    Alignment fails (success=False) when the mean residual exceeds
    `fail_threshold`.
    """
    # One shared sampling stream: identical meshes then sample identically,
    # which pins align_instance(m, m) to the exact identity.
    plane_seed = int(rng_stream(seed, "plane").integers(2**32))
    ref2d = project_to_plane_and_sample(reference.mesh, n_points, seed=plane_seed)
    tgt2d = project_to_plane_and_sample(target.mesh, n_points, seed=plane_seed)
    c_ref = ref2d.mean(axis=0)
    c_tgt = tgt2d.mean(axis=0)
    base_yaw = _axis_angle_2d(principal_axes(ref2d)) - _axis_angle_2d(principal_axes(tgt2d))

    ref3d = _lift(ref2d)
    best = None
    for yaw in (base_yaw, base_yaw + math.pi):
        rot2 = np.array([[math.cos(yaw), -math.sin(yaw)], [math.sin(yaw), math.cos(yaw)]])
        init = _planar_transform(yaw, c_ref - rot2 @ c_tgt)
        result = icp_refine(_lift(tgt2d), ref3d, init, max_iters=icp_max_iters)
        if best is None or result.residual < best.residual:
            best = result

    # Snap to an exact in-plane transform (ICP noise can leak out of plane).
    rot = best.transform.rotation
    yaw = math.atan2(rot[1, 0], rot[0, 0])
    transform = _planar_transform(yaw, best.transform.translation[:2])
    return AlignmentResult(
        transform=transform,
        residual=best.residual,
        success=best.residual <= fail_threshold,
    )


def align_class(members, seed: int, **kwargs) -> ClassAlignment:
    """Align every instance of a class to the reference instance (the one
    with the lexicographically smallest id, which maps to identity)."""
    if not members:
        raise ValueError("empty class")
    members = sorted(members, key=lambda m: m.instance_id)
    reference = members[0]
    transforms = {reference.instance_id: RigidTransform.identity()}
    success = {reference.instance_id: True}
    for member in members[1:]:
        result = align_instance(reference, member,
                                seed=rng_stream(seed, member.instance_id).integers(2**32),
                                **kwargs)
        transforms[member.instance_id] = result.transform
        success[member.instance_id] = result.success
    return ClassAlignment(reference_id=reference.instance_id,
                          transforms=transforms, success=success)


# ---------------------------------------------------------------------------
# Cross-instance round-robin sampling
# ---------------------------------------------------------------------------

def cross_instance_sample(class_members, alignment: ClassAlignment,
                          k_per_instance: int = DEFAULT_K, seed: int = 0) -> dict:
    """Round-robin farthest-point sampling across all instances of a class.

    Instances are visited in sorted instance_id order; each visit picks the
    instance's stable grasp maximizing the minimum class-frame distance to
    every grasp selected so far (on any instance), until each instance has
    `k_per_instance` picks. Instances whose alignment failed fall back to
    independent per-instance FPS and do not contribute to the shared set.

    `seed` is accepted for interface stability; the selection itself is
    fully deterministic (ties break toward the lowest grasp id).
    """
    del seed
    members = sorted(class_members, key=lambda m: m.instance_id)
    if not alignment.covers(m.instance_id for m in members):
        missing = [m.instance_id for m in members if m.instance_id not in alignment.transforms]
        raise ValueError(f"alignment missing instances: {missing}")

    result = {}
    aligned = []
    for member in members:
        pool = sorted(member.stable_grasps(), key=lambda g: g.id)
        _check_unique_ids(pool)
        if len(pool) < k_per_instance:
            raise ValueError(
                f"instance {member.instance_id!r} has {len(pool)} stable grasps; "
                f"need {k_per_instance}"
            )
        if alignment.success[member.instance_id]:
            transform = alignment.transforms[member.instance_id]
            positions = transform.apply(np.array([g.pose.translation for g in pool]))
            aligned.append({
                "instance_id": member.instance_id,
                "ids": [g.id for g in pool],
                "positions": positions,
                "min_d": np.full(len(pool), np.inf),
                "picked": np.zeros(len(pool), dtype=bool),
            })
        else:
            result[member.instance_id] = farthest_point_sample(pool, k_per_instance)

    for entry in aligned:
        result.setdefault(entry["instance_id"], [])
    for _ in range(k_per_instance):
        for entry in aligned:
            scores = np.where(entry["picked"], -np.inf, entry["min_d"])
            idx = int(np.argmax(scores))
            entry["picked"][idx] = True
            result[entry["instance_id"]].append(entry["ids"][idx])
            new_point = entry["positions"][idx]
            for other in aligned:
                other["min_d"] = kernels.update_min_dists(
                    other["positions"], new_point, other["min_d"]
                )
    return result
