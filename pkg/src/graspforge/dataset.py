"""Final dataset assembly, serialization, splitting, and statistics.

Samples are newline-delimited JSON with a versioned header line. One
sample is emitted per (retained view x task-grasp triple visible in that
view), ordered by (scene_id, view_id, instance_id, grasp_id, task hash) so
output bytes are independent of shard order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotate import TaskGraspTriple
from .geom import RigidTransform, project
from .scenegen import manifest_object_poses, manifest_views
from .util import rng_stream, sha256_text

SCHEMA = "graspforge/samples"
SCHEMA_VERSION = 1
PIXEL_CONSISTENCY_TOL = 0.5  # px


class IntegrityError(RuntimeError):
    """A record references a key that does not resolve upstream."""


@dataclass(frozen=True, eq=False)
class SampleRecord:
    scene_id: str
    view_id: str
    render_ref: str
    task_text: str
    grasp_pose_camera: RigidTransform
    grasp_description: str
    pixel: tuple
    instance_id: str
    grasp_id: str

    @property
    def task_hash(self) -> str:
        return sha256_text(self.task_text)[:16]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "view_id": self.view_id,
            "render_ref": self.render_ref,
            "task_text": self.task_text,
            "task_hash": self.task_hash,
            "grasp_pose_camera": [[float(x) for x in row]
                                  for row in self.grasp_pose_camera.as_matrix()],
            "grasp_description": self.grasp_description,
            "pixel": [float(self.pixel[0]), float(self.pixel[1])],
            "instance_id": self.instance_id,
            "grasp_id": self.grasp_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "SampleRecord":
        return SampleRecord(
            scene_id=d["scene_id"],
            view_id=d["view_id"],
            render_ref=d["render_ref"],
            task_text=d["task_text"],
            grasp_pose_camera=RigidTransform.from_matrix(np.array(d["grasp_pose_camera"])),
            grasp_description=d["grasp_description"],
            pixel=tuple(d["pixel"]),
            instance_id=d["instance_id"],
            grasp_id=d["grasp_id"],
        )


def assemble(manifests, triples_by_scene: dict, grasp_poses: dict,
             supervision_points: dict, render_root=None):
    """Yield SampleRecords for every (retained view, visible triple) pair.

    `grasp_poses` and `supervision_points` map (instance_id, grasp_id) to
    the object-frame grasp pose / supervision point. The stored pixel is
    re-projected from the camera and checked against the manifest's
    visible-annotation pixel; any unresolved key aborts with the offending
    key. When `render_root` is given, referenced renders are checked for
    existence and missing ones collected on the returned generator's
    ``missing_renders`` attribute (geometry-only mode otherwise).
    """
    missing_renders = []

    def generate():
        for manifest in sorted(manifests, key=lambda m: m["scene_id"]):
            scene_id = manifest["scene_id"]
            poses = manifest_object_poses(manifest)
            triples = triples_by_scene.get(scene_id, [])
            triples = sorted(triples, key=lambda t: (t.instance_id, t.grasp_id,
                                                     t.task.task_id))
            for view_id, cam, retained, visible in manifest_views(manifest):
                if not retained:
                    continue
                pixel_by_key = {(iid, gid): px for iid, gid, px in visible}
                for triple in triples:
                    key = (triple.instance_id, triple.grasp_id)
                    if key not in pixel_by_key:
                        continue
                    if triple.instance_id not in poses:
                        raise IntegrityError(
                            f"scene {scene_id}: triple references unplaced instance "
                            f"{triple.instance_id!r}"
                        )
                    if key not in grasp_poses:
                        raise IntegrityError(f"unknown grasp pose for {key!r}")
                    if key not in supervision_points:
                        raise IntegrityError(f"unknown supervision point for {key!r}")

                    object_pose = poses[triple.instance_id]
                    pose_camera = cam.extrinsics.compose(object_pose).compose(
                        grasp_poses[key])
                    world_point = object_pose.apply(supervision_points[key])
                    pixel = project(cam, world_point)
                    stored = np.asarray(pixel_by_key[key])
                    if np.linalg.norm(pixel - stored) > PIXEL_CONSISTENCY_TOL:
                        raise IntegrityError(
                            f"scene {scene_id} {view_id}: pixel drift for {key!r}: "
                            f"{pixel} vs manifest {stored}"
                        )
                    render_ref = f"renders/{scene_id}/{view_id}.png"
                    if render_root is not None and not (Path(render_root) / render_ref).exists():
                        missing_renders.append(render_ref)
                    yield SampleRecord(
                        scene_id=scene_id,
                        view_id=view_id,
                        render_ref=render_ref,
                        task_text=triple.task.task_text,
                        grasp_pose_camera=pose_camera,
                        grasp_description=triple.matched_description.text,
                        pixel=(float(pixel[0]), float(pixel[1])),
                        instance_id=triple.instance_id,
                        grasp_id=triple.grasp_id,
                    )

    gen = generate()
    gen = _AttrGenerator(gen, missing_renders)
    return gen


class _AttrGenerator:
    """Generator wrapper exposing the missing-render list."""

    def __init__(self, gen, missing_renders):
        self._gen = gen
        self.missing_renders = missing_renders

    def __iter__(self):
        return self

    def __next__(self):
        return next(self._gen)


def write_records(path, records, extra_header: dict | None = None) -> int:
    """Write a versioned JSONL file; returns the record count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w") as fh:
        header = {"schema": SCHEMA, "version": SCHEMA_VERSION}
        if extra_header:
            header.update(extra_header)
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            n += 1
    return n


def read_records(path):
    """Read a versioned JSONL file; returns (header, list of SampleRecord)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise ValueError(f"{path}: unexpected schema {header.get('schema')!r}")
    return header, [SampleRecord.from_dict(json.loads(line)) for line in lines[1:]]


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

DEFAULT_HELD_OUT_CLASSES = ("TeaCup", "Fork", "DSLRCamera", "PillBottle")
HOLD_OUT_FRACTION = 0.10


@dataclass
class SplitSpec:
    held_out_instances: dict  # class_name -> sorted list of instance ids
    held_out_classes: list

    def is_test_instance(self, class_name: str, instance_id: str) -> bool:
        if class_name in self.held_out_classes:
            return True
        return instance_id in self.held_out_instances.get(class_name, ())

    def to_dict(self) -> dict:
        return {
            "held_out_instances": {k: list(v) for k, v in self.held_out_instances.items()},
            "held_out_classes": list(self.held_out_classes),
        }

    @staticmethod
    def from_dict(d: dict) -> "SplitSpec":
        return SplitSpec(
            held_out_instances={k: list(v) for k, v in d["held_out_instances"].items()},
            held_out_classes=list(d["held_out_classes"]),
        )


def make_splits(instances, seed: int, held_out_classes=DEFAULT_HELD_OUT_CLASSES) -> SplitSpec:
    """Hold out ceil(10%) of instances per class (seeded shuffle) plus the
    listed classes in their entirety.

    `instances` is an iterable of (class_name, instance_id). Unknown names
    in `held_out_classes` raise.
    """
    by_class: dict = {}
    for class_name, instance_id in instances:
        by_class.setdefault(class_name, []).append(instance_id)
    if not by_class:
        raise ValueError("empty corpus")
    unknown = set(held_out_classes) - set(by_class)
    if unknown:
        raise ValueError(f"held-out classes not in corpus: {sorted(unknown)}")

    held = {}
    for class_name in sorted(by_class):
        ids = sorted(by_class[class_name])
        rng = rng_stream(seed, "split", class_name)
        rng.shuffle(ids)
        n_held = math.ceil(HOLD_OUT_FRACTION * len(ids))
        held[class_name] = sorted(ids[:n_held])
    return SplitSpec(held_out_instances=held, held_out_classes=sorted(held_out_classes))


def split_records(records, split: SplitSpec, class_of: dict):
    """Partition records into (train, test) by their instance's class."""
    train, test = [], []
    for record in records:
        class_name = class_of.get(record.instance_id)
        if class_name is None:
            raise IntegrityError(f"record references unknown instance {record.instance_id!r}")
        (test if split.is_test_instance(class_name, record.instance_id) else train).append(record)
    return train, test


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class DatasetStats:
    n_records: int
    n_unique_objects: int
    n_unique_object_grasps: int
    records_per_class: dict
    views_per_scene: dict  # scene_id -> distinct view count

    def to_dict(self) -> dict:
        histogram: dict = {}
        for count in self.views_per_scene.values():
            histogram[str(count)] = histogram.get(str(count), 0) + 1
        return {
            "n_records": self.n_records,
            "n_unique_objects": self.n_unique_objects,
            "n_unique_object_grasps": self.n_unique_object_grasps,
            "records_per_class": dict(sorted(self.records_per_class.items())),
            "views_per_scene_histogram": histogram,
        }

    def summary(self) -> str:
        d = self.to_dict()
        lines = [
            f"records:              {d['n_records']}",
            f"unique objects:       {d['n_unique_objects']}",
            f"unique object-grasps: {d['n_unique_object_grasps']}",
            "records per class:    "
            + ", ".join(f"{k}={v}" for k, v in d["records_per_class"].items()),
            "views/scene histogram: "
            + ", ".join(f"{k} views x{v}" for k, v in sorted(d["views_per_scene_histogram"].items())),
        ]
        return "\n".join(lines)


def stats(records, class_of: dict | None = None) -> DatasetStats:
    """Corpus statistics over an iterable of SampleRecords."""
    objects = set()
    object_grasps = set()
    per_class: dict = {}
    views: dict = {}
    n = 0
    for record in records:
        n += 1
        objects.add(record.instance_id)
        object_grasps.add((record.instance_id, record.grasp_id))
        if class_of is not None:
            class_name = class_of.get(record.instance_id, "<unknown>")
            per_class[class_name] = per_class.get(class_name, 0) + 1
        views.setdefault(record.scene_id, set()).add(record.view_id)
    return DatasetStats(
        n_records=n,
        n_unique_objects=len(objects),
        n_unique_object_grasps=len(object_grasps),
        records_per_class=per_class,
        views_per_scene={k: len(v) for k, v in views.items()},
    )
