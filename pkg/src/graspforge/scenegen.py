"""Procedural tabletop scene composition, camera/lighting randomization,
per-view grasp visibility, and view filtering.

World frame: origin at the center of the table top, +z up, so the table
surface is the z=0 plane. Room dimensions and the table's position inside
the room are recorded as metadata for the external renderer; only the
table extent constrains geometry. Object placement is a documented
stand-in for a full composition engine: rejection sampling of (x, y, yaw)
with bounding-circle overlap tests.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .geom import (
    BehindCameraError,
    CameraModel,
    GeometryError,
    RigidTransform,
    intrinsics_from_dfov,
    project,
    ray_mesh_first_hit,
    rotation_about_z,
)
from .util import rng_stream

SELF_HIT_TOLERANCE = 1e-4  # m, slack for the ray hitting its own surface point


class PlacementError(RuntimeError):
    """Object placement exhausted its rejection-sampling attempts."""


@dataclass(frozen=True)
class RandomizationConfig:
    """Scene-randomization bounds. Each 2-tuple is a closed interval.

    `table_extent` and `table_height` are stand-in knobs for the external
    composition engine; everything else mirrors the standard randomization
    table (room/camera/lighting bounds, view and annotation counts).
    """

    room_dims: tuple = (4.0, 10.0)              # m, per axis
    min_table_wall_distance: float = 2.0        # m, table edge to wall
    table_extent: tuple = (0.8, 1.6)            # m, per side
    table_height: float = 0.75                  # m, metadata only
    dfov_deg: tuple = (60.0, 110.0)
    camera_distance: tuple = (0.25, 1.25)       # m, to scene center
    pitch_perturb_frac: tuple = (0.0, 0.02)     # fraction of VFOV
    yaw_perturb_frac: tuple = (0.0, 0.05)       # fraction of HFOV
    roll_perturb_rad: tuple = (0.0, 0.39)
    elevation_rad: tuple = (math.pi / 8, math.pi / 3)
    image_width: int = 640
    image_height: int = 480
    views_per_scene: int = 10
    min_annotations_per_view: int = 2
    n_objects: tuple = (6, 12)
    max_grasp_distance: float = 1.0             # m, camera to supervision point
    color_temperature: tuple = (2000.0, 10000.0)  # K
    light_intensity: tuple = (10.0, 25.0)         # lux
    light_azimuth: tuple = (0.0, 2 * math.pi)
    light_inclination: tuple = (0.0, math.pi / 3)

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                if len(value) != 2 or value[0] > value[1]:
                    raise ValueError(f"{f.name}: invalid range {value}")

    @staticmethod
    def from_dict(d: dict) -> "RandomizationConfig":
        known = {f.name for f in dataclasses.fields(RandomizationConfig)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown randomization keys: {sorted(unknown)}")
        coerced = {
            k: tuple(v) if isinstance(v, (list, tuple)) else v for k, v in d.items()
        }
        return RandomizationConfig(**coerced)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


@dataclass(frozen=True)
class PlacedObject:
    instance_id: str
    pose: RigidTransform  # object -> world
    footprint_radius: float


@dataclass(eq=False)
class SceneLayout:
    scene_id: str
    table_extent: tuple          # (x, y) m
    room_dims: tuple             # (x, y) m
    table_center_in_room: tuple  # (x, y) m, metadata
    objects: list                # PlacedObject

    def center(self) -> np.ndarray:
        xy = np.array([o.pose.translation[:2] for o in self.objects]).mean(axis=0)
        return np.array([xy[0], xy[1], 0.0])


@dataclass(frozen=True)
class Lighting:
    temperature: float
    intensity: float
    azimuth: float
    inclination: float


@dataclass(eq=False)
class ViewSpec:
    view_id: str
    camera: CameraModel
    lighting: Lighting
    visible_annotations: list = field(default_factory=list)  # (iid, gid, (u, v))
    retained: bool = True


def footprint_radius(mesh) -> float:
    """Yaw-invariant bounding-circle radius of the mesh footprint."""
    return float(np.linalg.norm(mesh.vertices[:, :2], axis=1).max())


def _rest_height(mesh) -> float:
    return float(-mesh.vertices[:, 2].min())


def sample_layout(objects, cfg: RandomizationConfig, seed: int,
                  scene_id: str = "scene", max_attempts: int = 1000) -> SceneLayout:
    """Compose one tabletop layout: draw object count and instances from
    the pool, then place each with rejection sampling (bounding-circle
    overlap tests, <= `max_attempts` tries per object)."""
    rng = rng_stream(seed, "layout")
    lo, hi = int(cfg.n_objects[0]), int(cfg.n_objects[1])
    n = int(rng.integers(lo, hi + 1))
    if n > len(objects):
        raise ValueError(f"pool of {len(objects)} objects cannot fill a scene of {n}")

    extent = rng.uniform(cfg.table_extent[0], cfg.table_extent[1], size=2)
    clearance = 2.0 * cfg.min_table_wall_distance
    room = rng.uniform(cfg.room_dims[0], cfg.room_dims[1], size=2)
    while (room < extent + clearance).any():
        room = rng.uniform(cfg.room_dims[0], cfg.room_dims[1], size=2)
    table_pos = np.array([
        rng.uniform(cfg.min_table_wall_distance + extent[i] / 2.0,
                    room[i] - cfg.min_table_wall_distance - extent[i] / 2.0)
        for i in range(2)
    ])

    pool = sorted(objects, key=lambda o: o.instance_id)
    chosen = [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]

    placed = []
    centers = np.empty((0, 2))
    radii = np.empty(0)
    for obj in chosen:
        radius = footprint_radius(obj.mesh)
        half = extent / 2.0 - radius
        if (half <= 0).any():
            raise PlacementError(
                f"object {obj.instance_id!r} (radius {radius:.3f} m) exceeds table extent"
            )
        for attempt in range(max_attempts):
            xy = rng.uniform(-half, half)
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            if len(centers) == 0 or (
                np.linalg.norm(centers - xy[None, :], axis=1) > radii + radius
            ).all():
                break
        else:
            raise PlacementError(
                f"could not place {obj.instance_id!r} after {max_attempts} attempts"
            )
        pose = RigidTransform(rotation_about_z(yaw),
                              np.array([xy[0], xy[1], _rest_height(obj.mesh)]))
        placed.append(PlacedObject(obj.instance_id, pose, radius))
        centers = np.vstack([centers, xy[None, :]])
        radii = np.append(radii, radius)

    return SceneLayout(
        scene_id=scene_id,
        table_extent=(float(extent[0]), float(extent[1])),
        room_dims=(float(room[0]), float(room[1])),
        table_center_in_room=(float(table_pos[0]), float(table_pos[1])),
        objects=placed,
    )


def _look_at(eye: np.ndarray, aim: np.ndarray) -> RigidTransform:
    """World->camera extrinsics for a camera at `eye` looking at `aim`
    (x right, y down, z forward; world +z up)."""
    forward = aim - eye
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        raise GeometryError("camera looking straight along the up axis")
    right /= nr
    down = np.cross(forward, right)
    r_cw = np.stack([right, down, forward], axis=1)  # camera -> world (columns)
    r_wc = r_cw.T
    return RigidTransform(r_wc, -r_wc @ eye)


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def sample_views(layout: SceneLayout, cfg: RandomizationConfig, seed: int) -> list:
    """Draw `views_per_scene` camera + lighting specs for a layout.

    Per view: DFOV, distance, elevation and azimuth place the camera on a
    sphere around the scene center, aimed at it; pitch/yaw/roll are then
    perturbed in the camera frame by random-signed magnitudes drawn from
    the configured fractions of the FOV (roll in radians directly).
    """
    center = layout.center()
    views = []
    for i in range(cfg.views_per_scene):
        rng = rng_stream(seed, "view", i)
        dfov = rng.uniform(*cfg.dfov_deg)
        distance = rng.uniform(*cfg.camera_distance)
        elevation = rng.uniform(*cfg.elevation_rad)
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        intr = intrinsics_from_dfov(dfov, cfg.image_width, cfg.image_height)

        eye = center + distance * np.array([
            math.cos(elevation) * math.cos(azimuth),
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
        ])
        extrinsics = _look_at(eye, center)

        pitch = rng.uniform(*cfg.pitch_perturb_frac) * intr.vfov() * rng.choice([-1.0, 1.0])
        yaw = rng.uniform(*cfg.yaw_perturb_frac) * intr.hfov() * rng.choice([-1.0, 1.0])
        roll = rng.uniform(*cfg.roll_perturb_rad) * rng.choice([-1.0, 1.0])
        perturb = rotation_about_z(roll) @ _rot_x(pitch) @ _rot_y(yaw)
        extrinsics = RigidTransform(perturb @ extrinsics.rotation,
                                    perturb @ extrinsics.translation)

        lighting = Lighting(
            temperature=rng.uniform(*cfg.color_temperature),
            intensity=rng.uniform(*cfg.light_intensity),
            azimuth=rng.uniform(*cfg.light_azimuth),
            inclination=rng.uniform(*cfg.light_inclination),
        )
        views.append(ViewSpec(
            view_id=f"view_{i:02d}",
            camera=CameraModel(intrinsics=intr, extrinsics=extrinsics),
            lighting=lighting,
        ))
    return views


def grasp_visibility(layout: SceneLayout, view: ViewSpec, objects: dict,
                     supervision_points: dict, cfg: RandomizationConfig) -> list:
    """Visible annotations for one view: (instance_id, grasp_id, (u, v)).

    A grasp is visible iff its supervision point projects inside the
    image, lies within `max_grasp_distance` of the camera, and the ray
    from the camera reaches it without first hitting another object (or
    its own mesh more than SELF_HIT_TOLERANCE before the point).
    """
    cam = view.camera
    cam_pos = cam.position()
    visible = []
    for placed in layout.objects:
        instance = objects[placed.instance_id]
        for grasp_id, sp in supervision_points.get(placed.instance_id, []):
            world_point = placed.pose.apply(sp)
            try:
                pixel = project(cam, world_point)
            except BehindCameraError:
                continue
            if not (0.0 <= pixel[0] < cam.intrinsics.width
                    and 0.0 <= pixel[1] < cam.intrinsics.height):
                continue
            span = world_point - cam_pos
            distance = float(np.linalg.norm(span))
            if distance > cfg.max_grasp_distance:
                continue
            direction = span / distance
            if _occluded(layout, objects, placed.instance_id, cam_pos, direction, distance):
                continue
            visible.append((placed.instance_id, grasp_id,
                            (float(pixel[0]), float(pixel[1]))))
    return visible


def _occluded(layout, objects, own_id, origin, direction, distance) -> bool:
    for placed in layout.objects:
        slack = SELF_HIT_TOLERANCE if placed.instance_id == own_id else 1e-9
        inv = placed.pose.invert()
        hit = ray_mesh_first_hit(objects[placed.instance_id].mesh,
                                 inv.apply(origin), inv.rotate(direction))
        if hit is not None and hit[1] < distance - slack:
            return True
    return False


@dataclass(frozen=True)
class FilterReport:
    n_views: int
    n_retained: int
    n_dropped: int


def filter_views(views, cfg: RandomizationConfig):
    """Drop views with fewer than `min_annotations_per_view` visible
    annotations. Returns (retained views, FilterReport); the input views'
    `retained` flags are updated in place."""
    retained = []
    for view in views:
        view.retained = len(view.visible_annotations) >= cfg.min_annotations_per_view
        if view.retained:
            retained.append(view)
    return retained, FilterReport(
        n_views=len(views),
        n_retained=len(retained),
        n_dropped=len(views) - len(retained),
    )


# ---------------------------------------------------------------------------
# Scene manifest (the contract consumed by the renderer and by assembly)
# ---------------------------------------------------------------------------

def scene_manifest(layout: SceneLayout, views, filter_report: FilterReport) -> dict:
    return {
        "schema": "graspforge/scene",
        "version": 1,
        "scene_id": layout.scene_id,
        "layout": {
            "table_extent": list(layout.table_extent),
            "room_dims": list(layout.room_dims),
            "table_center_in_room": list(layout.table_center_in_room),
            "objects": [
                {
                    "instance_id": o.instance_id,
                    "pose": [[float(x) for x in row] for row in o.pose.as_matrix()],
                    "footprint_radius": o.footprint_radius,
                }
                for o in layout.objects
            ],
        },
        "views": [
            {
                "view_id": v.view_id,
                "intrinsics": {
                    "fx": v.camera.intrinsics.fx,
                    "fy": v.camera.intrinsics.fy,
                    "cx": v.camera.intrinsics.cx,
                    "cy": v.camera.intrinsics.cy,
                    "width": v.camera.intrinsics.width,
                    "height": v.camera.intrinsics.height,
                },
                "extrinsics": [[float(x) for x in row] for row in v.camera.extrinsics.as_matrix()],
                "lighting": dataclasses.asdict(v.lighting),
                "retained": v.retained,
                "visible": [
                    {"instance_id": iid, "grasp_id": gid, "pixel": [u, vv]}
                    for iid, gid, (u, vv) in v.visible_annotations
                ],
            }
            for v in views
        ],
        "filter": dataclasses.asdict(filter_report),
    }


def manifest_views(manifest: dict):
    """Rehydrate (view_id, CameraModel, retained, visible list) tuples."""
    from .geom import Intrinsics  # local to avoid polluting module surface

    out = []
    for v in manifest["views"]:
        intr = Intrinsics(**v["intrinsics"])
        cam = CameraModel(intrinsics=intr,
                          extrinsics=RigidTransform.from_matrix(np.array(v["extrinsics"])))
        visible = [(a["instance_id"], a["grasp_id"], tuple(a["pixel"])) for a in v["visible"]]
        out.append((v["view_id"], cam, v["retained"], visible))
    return out


def manifest_object_poses(manifest: dict) -> dict:
    return {
        o["instance_id"]: RigidTransform.from_matrix(np.array(o["pose"]))
        for o in manifest["layout"]["objects"]
    }
