"""End-to-end pipeline orchestration: configuration, corpus loading, and
the file-based stages chained by the CLI.

Every stage reads prior-stage outputs by path contract, writes plain JSON
artifacts under the output directory, and records a content fingerprint so
re-runs with unchanged inputs short-circuit. All artifacts are
byte-deterministic functions of (corpus, config, seed).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import annotate as annotate_mod
from . import dataset as dataset_mod
from .annotate import (
    GraspDescription,
    ObjectGrasps,
    PipelineStats,
    TaskGraspTriple,
    TaskSpec,
)
from .clients import CachedClient, ClientCache, HttpMatchingClient, InstrumentedClient, MockMatchingClient
from .geom import GripperSpec, RigidTransform
from .matcher import supervision_point
from .meshio import load_mesh
from .sampling import ClassAlignment, Grasp, ObjectInstance, align_class, cross_instance_sample
from .scenegen import (
    RandomizationConfig,
    filter_views,
    grasp_visibility,
    sample_layout,
    sample_views,
    scene_manifest,
)
from .util import content_key, mat_to_list, read_json, sha256_file, write_json


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


@dataclass
class PipelineConfig:
    assets_dir: str = ""
    grasps_dir: str = ""
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    client: str = "mock"  # "mock" | "http"
    http_endpoint: str = ""
    api_key_env: str = "GRASPFORGE_API_KEY"
    n_scenes: int = 5
    k_grasps_per_instance: int = 4
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    gripper: GripperSpec = field(default_factory=GripperSpec)
    held_out_classes: tuple = dataset_mod.DEFAULT_HELD_OUT_CLASSES
    verification_edits: str = ""
    cache_dir: str = ""
    render_root: str = ""
    mixture: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "randomization" in kwargs:
            kwargs["randomization"] = RandomizationConfig.from_dict(kwargs["randomization"])
        if "gripper" in kwargs:
            g = dict(kwargs["gripper"])
            for axis in ("approach_axis", "closing_axis"):
                if axis in g:
                    g[axis] = np.asarray(g[axis], dtype=float)
            kwargs["gripper"] = GripperSpec(**g)
        if "held_out_classes" in kwargs:
            kwargs["held_out_classes"] = tuple(kwargs["held_out_classes"])
        try:
            return PipelineConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "assets_dir": self.assets_dir,
            "grasps_dir": self.grasps_dir,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "jobs": self.jobs,
            "client": self.client,
            "http_endpoint": self.http_endpoint,
            "api_key_env": self.api_key_env,
            "n_scenes": self.n_scenes,
            "k_grasps_per_instance": self.k_grasps_per_instance,
            "randomization": self.randomization.to_dict(),
            "gripper": {
                "max_aperture": self.gripper.max_aperture,
                "finger_length": self.gripper.finger_length,
                "finger_thickness": self.gripper.finger_thickness,
                "tcp_offset": self.gripper.tcp_offset,
                "approach_axis": [float(x) for x in self.gripper.approach_axis],
                "closing_axis": [float(x) for x in self.gripper.closing_axis],
            },
            "held_out_classes": list(self.held_out_classes),
            "verification_edits": self.verification_edits,
            "cache_dir": self.cache_dir,
            "render_root": self.render_root,
            "mixture": dict(self.mixture),
        }

    def validate_paths(self) -> None:
        for name in ("assets_dir", "grasps_dir"):
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"{name} is required")
            if not Path(value).is_dir():
                raise ConfigError(f"{name} does not exist: {value}")
        if self.client not in ("mock", "http"):
            raise ConfigError(f"client must be 'mock' or 'http', got {self.client!r}")
        if self.client == "http" and not self.http_endpoint:
            raise ConfigError("http client requires http_endpoint")
        if self.verification_edits and not Path(self.verification_edits).is_file():
            raise ConfigError(f"verification_edits does not exist: {self.verification_edits}")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        import json

        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return PipelineConfig.from_dict(data)


def build_client(cfg: PipelineConfig):
    """(cached client, instrumented backend) per the config."""
    if cfg.client == "http":
        backend = HttpMatchingClient(cfg.http_endpoint, api_key_env=cfg.api_key_env)
    else:
        backend = MockMatchingClient()
    instrumented = InstrumentedClient(backend)
    cache = ClientCache(cfg.cache_dir or None)
    return CachedClient(instrumented, cache), instrumented


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

def load_grasp_file(path) -> list:
    data = read_json(path)
    grasps = []
    for g in data["grasps"]:
        grasps.append(Grasp(
            id=g["id"],
            pose=RigidTransform.from_matrix(np.array(g["pose"], dtype=float)),
            stable=bool(g.get("stable", True)),
        ))
    return grasps


def load_corpus(assets_dir, grasps_dir) -> list:
    """Load every <class>/<instance>.obj mesh with its grasp-set JSON.

    Instance ids (file stems) must be globally unique.
    """
    assets_dir = Path(assets_dir)
    grasps_dir = Path(grasps_dir)
    instances = []
    seen = set()
    for mesh_path in sorted(assets_dir.glob("*/*.obj")):
        class_name = mesh_path.parent.name
        instance_id = mesh_path.stem
        if instance_id in seen:
            raise ConfigError(f"duplicate instance id {instance_id!r}")
        seen.add(instance_id)
        grasp_path = grasps_dir / class_name / f"{instance_id}.json"
        if not grasp_path.is_file():
            raise ConfigError(f"missing grasp file for {instance_id!r}: {grasp_path}")
        mesh, _ = load_mesh(mesh_path)
        instances.append(ObjectInstance(
            class_name=class_name,
            instance_id=instance_id,
            mesh=mesh,
            grasps=load_grasp_file(grasp_path),
        ))
    if not instances:
        raise ConfigError(f"no meshes found under {assets_dir}")
    return instances


def corpus_digest(assets_dir, grasps_dir) -> str:
    entries = []
    for root in (Path(assets_dir), Path(grasps_dir)):
        for path in sorted(root.glob("*/*")):
            if path.is_file():
                entries.append([f"{path.parent.name}/{path.name}", sha256_file(path)])
    return content_key(entries)


# ---------------------------------------------------------------------------
# Stage fingerprinting (idempotent re-runs)
# ---------------------------------------------------------------------------

class StageGuard:
    """Content-hash short-circuit for one stage."""

    def __init__(self, out_dir, stage: str, fingerprint: dict, outputs):
        self.stage = stage
        self.hash_path = Path(out_dir) / "hashes" / f"{stage}.json"
        self.digest = content_key(fingerprint)
        self.outputs = [Path(p) for p in outputs]

    def fresh(self) -> bool:
        if not self.hash_path.exists():
            return False
        if read_json(self.hash_path).get("fingerprint") != self.digest:
            return False
        return all(p.exists() for p in self.outputs)

    def mark_done(self) -> None:
        write_json(self.hash_path, {"stage": self.stage, "fingerprint": self.digest})


def _config_fingerprint(cfg: PipelineConfig) -> dict:
    d = cfg.to_dict()
    # Content, not location, decides staleness.
    for key in ("assets_dir", "grasps_dir", "out_dir", "cache_dir", "render_root"):
        d.pop(key, None)
    return d


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _out(cfg) -> Path:
    return Path(cfg.out_dir)


def stage_align_class(cfg: PipelineConfig, corpus=None) -> Path:
    out_path = _out(cfg) / "alignments.json"
    guard = StageGuard(cfg.out_dir, "align-class", {
        "config": _config_fingerprint(cfg),
        "corpus": corpus_digest(cfg.assets_dir, cfg.grasps_dir),
    }, [out_path])
    if guard.fresh():
        return out_path
    corpus = corpus if corpus is not None else load_corpus(cfg.assets_dir, cfg.grasps_dir)
    by_class: dict = {}
    for inst in corpus:
        by_class.setdefault(inst.class_name, []).append(inst)
    payload = {}
    for class_name in sorted(by_class):
        alignment = align_class(by_class[class_name], seed=cfg.seed)
        payload[class_name] = {
            "reference": alignment.reference_id,
            "transforms": {iid: mat_to_list(t.as_matrix())
                           for iid, t in alignment.transforms.items()},
            "success": alignment.success,
        }
    write_json(out_path, {"classes": payload})
    guard.mark_done()
    return out_path


def read_alignments(path) -> dict:
    data = read_json(path)
    out = {}
    for class_name, entry in data["classes"].items():
        out[class_name] = ClassAlignment(
            reference_id=entry["reference"],
            transforms={iid: RigidTransform.from_matrix(np.array(m))
                        for iid, m in entry["transforms"].items()},
            success=dict(entry["success"]),
        )
    return out


def stage_sample_grasps(cfg: PipelineConfig, corpus=None) -> Path:
    out_path = _out(cfg) / "grasps.json"
    align_path = _out(cfg) / "alignments.json"
    if not align_path.exists():
        raise FileNotFoundError(f"run align-class first: missing {align_path}")
    guard = StageGuard(cfg.out_dir, "sample-grasps", {
        "config": _config_fingerprint(cfg),
        "alignments": sha256_file(align_path),
        "corpus": corpus_digest(cfg.assets_dir, cfg.grasps_dir),
    }, [out_path])
    if guard.fresh():
        return out_path
    corpus = corpus if corpus is not None else load_corpus(cfg.assets_dir, cfg.grasps_dir)
    alignments = read_alignments(align_path)
    by_class: dict = {}
    for inst in corpus:
        by_class.setdefault(inst.class_name, []).append(inst)

    instances_payload = {}
    for class_name in sorted(by_class):
        members = by_class[class_name]
        selected = cross_instance_sample(members, alignments[class_name],
                                         k_per_instance=cfg.k_grasps_per_instance,
                                         seed=cfg.seed)
        for member in members:
            grasp_by_id = {g.id: g for g in member.grasps}
            entries = []
            for gid in selected[member.instance_id]:
                grasp = grasp_by_id[gid]
                sp = supervision_point(member.mesh, grasp.pose, cfg.gripper)
                entries.append({
                    "id": gid,
                    "pose": mat_to_list(grasp.pose.as_matrix()),
                    "supervision_point": [float(x) for x in sp.point],
                    "supervision_method": sp.method,
                })
            instances_payload[member.instance_id] = {
                "class_name": class_name,
                "grasps": entries,
            }
    write_json(out_path, {
        "k_per_instance": cfg.k_grasps_per_instance,
        "instances": instances_payload,
    })
    guard.mark_done()
    return out_path


@dataclass
class SelectedGrasps:
    class_of: dict            # instance_id -> class_name
    grasp_ids: dict           # instance_id -> [grasp_id]
    poses: dict               # (instance_id, grasp_id) -> RigidTransform
    supervision: dict         # (instance_id, grasp_id) -> np.ndarray
    supervision_methods: dict


def read_selected_grasps(path) -> SelectedGrasps:
    data = read_json(path)
    sel = SelectedGrasps({}, {}, {}, {}, {})
    for iid, entry in data["instances"].items():
        sel.class_of[iid] = entry["class_name"]
        sel.grasp_ids[iid] = [g["id"] for g in entry["grasps"]]
        for g in entry["grasps"]:
            key = (iid, g["id"])
            sel.poses[key] = RigidTransform.from_matrix(np.array(g["pose"]))
            sel.supervision[key] = np.array(g["supervision_point"])
            sel.supervision_methods[key] = g["supervision_method"]
    return sel


def stage_gen_scenes(cfg: PipelineConfig, corpus=None) -> Path:
    scenes_dir = _out(cfg) / "scenes"
    grasps_path = _out(cfg) / "grasps.json"
    if not grasps_path.exists():
        raise FileNotFoundError(f"run sample-grasps first: missing {grasps_path}")
    guard = StageGuard(cfg.out_dir, "gen-scenes", {
        "config": _config_fingerprint(cfg),
        "grasps": sha256_file(grasps_path),
        "corpus": corpus_digest(cfg.assets_dir, cfg.grasps_dir),
    }, [scenes_dir / f"scene_{i:05d}.json" for i in range(cfg.n_scenes)])
    if guard.fresh():
        return scenes_dir
    corpus = corpus if corpus is not None else load_corpus(cfg.assets_dir, cfg.grasps_dir)
    selected = read_selected_grasps(grasps_path)
    objects = {inst.instance_id: inst for inst in corpus}
    sp_by_instance = {}
    for (iid, gid), point in sorted(selected.supervision.items()):
        sp_by_instance.setdefault(iid, []).append((gid, point))

    for i in range(cfg.n_scenes):
        scene_id = f"scene_{i:05d}"
        layout = sample_layout(corpus, cfg.randomization,
                               seed=cfg.seed * 1_000_003 + i, scene_id=scene_id)
        views = sample_views(layout, cfg.randomization, seed=cfg.seed * 1_000_003 + i)
        for view in views:
            view.visible_annotations = grasp_visibility(
                layout, view, objects, sp_by_instance, cfg.randomization)
        _, report = filter_views(views, cfg.randomization)
        write_json(scenes_dir / f"{scene_id}.json", scene_manifest(layout, views, report))
    guard.mark_done()
    return scenes_dir


def _scene_manifests(cfg) -> list:
    scenes_dir = _out(cfg) / "scenes"
    paths = sorted(scenes_dir.glob("scene_*.json"))
    if not paths:
        raise FileNotFoundError(f"run gen-scenes first: no manifests in {scenes_dir}")
    return [read_json(p) for p in paths]


def stage_annotate(cfg: PipelineConfig) -> Path:
    ann_dir = _out(cfg) / "annotations"
    grasps_path = _out(cfg) / "grasps.json"
    if not grasps_path.exists():
        raise FileNotFoundError(f"run sample-grasps first: missing {grasps_path}")
    scenes_dir = _out(cfg) / "scenes"
    scene_paths = sorted(scenes_dir.glob("scene_*.json"))
    if not scene_paths:
        raise FileNotFoundError(f"run gen-scenes first: no manifests in {scenes_dir}")
    outputs = [ann_dir / name for name in
               ("descriptions.json", "tasks.json", "triples.json", "stats.json")]
    guard = StageGuard(cfg.out_dir, "annotate", {
        "config": _config_fingerprint(cfg),
        "grasps": sha256_file(grasps_path),
        "scenes": [sha256_file(p) for p in scene_paths],
        "edits": sha256_file(cfg.verification_edits) if cfg.verification_edits else "",
    }, outputs)
    if guard.fresh():
        return ann_dir

    selected = read_selected_grasps(grasps_path)
    client, instrumented = build_client(cfg)

    object_grasps = [
        ObjectGrasps(
            class_name=selected.class_of[iid],
            instance_id=iid,
            grasp_ids=tuple(selected.grasp_ids[iid]),
        )
        for iid in sorted(selected.class_of)
    ]
    descriptions, missing, stats = annotate_mod.generate_descriptions(
        object_grasps, client, max_in_flight=cfg.jobs)
    verification_counts = None
    if cfg.verification_edits:
        edits = read_json(cfg.verification_edits)
        descriptions, verification_counts = annotate_mod.apply_verification_edits(
            descriptions, edits)

    classes = sorted(set(selected.class_of.values()))
    desc_by_class: dict = {}
    for d in descriptions:
        desc_by_class.setdefault(selected.class_of[d.instance_id], []).append(d.text)
    tasks, task_stats = annotate_mod.generate_tasks(classes, client, desc_by_class)
    stats.issued_calls_by_stage.update(task_stats.issued_calls_by_stage)
    stats.n_tasks = len(tasks)
    stats.grasps_per_object = cfg.k_grasps_per_instance

    triples_by_scene = {}
    for path in scene_paths:
        manifest = read_json(path)
        contexts = annotate_mod.scene_contexts_from_manifest(manifest, selected.class_of)
        triples = annotate_mod.match_tasks_to_grasps(contexts, descriptions, tasks,
                                                     client, stats=stats)
        triples_by_scene[manifest["scene_id"]] = triples

    stats.backend_calls_by_stage = dict(instrumented.calls)

    write_json(ann_dir / "descriptions.json", {
        "descriptions": [
            {"instance_id": d.instance_id, "grasp_id": d.grasp_id,
             "text": d.text, "source": d.source}
            for d in descriptions
        ],
        "missing": [list(m) for m in missing],
    })
    write_json(ann_dir / "tasks.json", {"tasks": [t.to_dict() for t in tasks]})
    write_json(ann_dir / "triples.json", {
        "scenes": {
            scene_id: [
                {
                    "task": t.task.to_dict(),
                    "instance_id": t.instance_id,
                    "grasp_id": t.grasp_id,
                    "matched_description": {
                        "instance_id": t.matched_description.instance_id,
                        "grasp_id": t.matched_description.grasp_id,
                        "text": t.matched_description.text,
                        "source": t.matched_description.source,
                    },
                }
                for t in triples
            ]
            for scene_id, triples in sorted(triples_by_scene.items())
        }
    })
    stats_payload = stats.to_dict()
    if verification_counts is not None:
        stats_payload["verification_counts"] = verification_counts
    write_json(ann_dir / "stats.json", stats_payload)
    guard.mark_done()
    return ann_dir


def read_triples(path) -> dict:
    data = read_json(path)
    out = {}
    for scene_id, entries in data["scenes"].items():
        triples = []
        for e in entries:
            desc = e["matched_description"]
            triples.append(TaskGraspTriple(
                task=TaskSpec.from_dict(e["task"]),
                instance_id=e["instance_id"],
                grasp_id=e["grasp_id"],
                matched_description=GraspDescription(
                    instance_id=desc["instance_id"],
                    grasp_id=desc["grasp_id"],
                    text=desc["text"],
                    source=desc["source"],
                ),
            ))
        out[scene_id] = triples
    return out


def stage_assemble(cfg: PipelineConfig) -> Path:
    out_path = _out(cfg) / "dataset" / "samples.jsonl"
    grasps_path = _out(cfg) / "grasps.json"
    triples_path = _out(cfg) / "annotations" / "triples.json"
    for required in (grasps_path, triples_path):
        if not required.exists():
            raise FileNotFoundError(f"missing upstream artifact {required}")
    scene_paths = sorted((_out(cfg) / "scenes").glob("scene_*.json"))
    guard = StageGuard(cfg.out_dir, "assemble", {
        "config": _config_fingerprint(cfg),
        "grasps": sha256_file(grasps_path),
        "triples": sha256_file(triples_path),
        "scenes": [sha256_file(p) for p in scene_paths],
    }, [out_path])
    if guard.fresh():
        return out_path

    selected = read_selected_grasps(grasps_path)
    manifests = [read_json(p) for p in scene_paths]
    records = dataset_mod.assemble(
        manifests,
        read_triples(triples_path),
        selected.poses,
        selected.supervision,
        render_root=cfg.render_root or None,
    )
    header = {}
    if cfg.mixture:
        header["mixture"] = dict(cfg.mixture)
    n = dataset_mod.write_records(out_path, records, extra_header=header or None)
    if cfg.render_root and records.missing_renders:
        write_json(_out(cfg) / "dataset" / "missing_renders.json",
                   {"missing": sorted(set(records.missing_renders))})
    del n
    guard.mark_done()
    return out_path


def stage_split(cfg: PipelineConfig) -> Path:
    out_path = _out(cfg) / "dataset" / "splits.json"
    grasps_path = _out(cfg) / "grasps.json"
    samples_path = _out(cfg) / "dataset" / "samples.jsonl"
    for required in (grasps_path, samples_path):
        if not required.exists():
            raise FileNotFoundError(f"missing upstream artifact {required}")
    train_path = _out(cfg) / "dataset" / "train.jsonl"
    test_path = _out(cfg) / "dataset" / "test.jsonl"
    guard = StageGuard(cfg.out_dir, "split", {
        "config": _config_fingerprint(cfg),
        "grasps": sha256_file(grasps_path),
        "samples": sha256_file(samples_path),
    }, [out_path, train_path, test_path])
    if guard.fresh():
        return out_path

    selected = read_selected_grasps(grasps_path)
    instances = sorted((c, iid) for iid, c in selected.class_of.items())
    split = dataset_mod.make_splits(instances, seed=cfg.seed,
                                    held_out_classes=cfg.held_out_classes)
    write_json(out_path, split.to_dict())

    header, records = dataset_mod.read_records(samples_path)
    train, test = dataset_mod.split_records(records, split, selected.class_of)
    extra = {k: v for k, v in header.items() if k not in ("schema", "version")}
    dataset_mod.write_records(train_path, train, extra_header={**extra, "split": "train"})
    dataset_mod.write_records(test_path, test, extra_header={**extra, "split": "test"})
    guard.mark_done()
    return out_path


def stage_stats(cfg: PipelineConfig) -> dict:
    grasps_path = _out(cfg) / "grasps.json"
    samples_path = _out(cfg) / "dataset" / "samples.jsonl"
    for required in (grasps_path, samples_path):
        if not required.exists():
            raise FileNotFoundError(f"missing upstream artifact {required}")
    selected = read_selected_grasps(grasps_path)
    _, records = dataset_mod.read_records(samples_path)
    result = dataset_mod.stats(records, class_of=selected.class_of)
    write_json(_out(cfg) / "dataset" / "stats.json", result.to_dict())
    return result.to_dict()


PIPELINE_STAGES = (
    ("align-class", stage_align_class),
    ("sample-grasps", stage_sample_grasps),
    ("gen-scenes", stage_gen_scenes),
    ("annotate", stage_annotate),
    ("assemble", stage_assemble),
    ("split", stage_split),
    ("stats", stage_stats),
)


def run_pipeline(cfg: PipelineConfig, log=print) -> None:
    cfg.validate_paths()
    for name, fn in PIPELINE_STAGES:
        log(f"[{name}] running")
        fn(cfg)
    log("[pipeline] done")
