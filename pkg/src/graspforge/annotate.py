"""Grasp-descriptions-as-a-bridge annotation pipeline.

Tasks and grasps are never annotated jointly. Each (object, grasp) pair
gets one natural-language description; each object class gets 8 tasks (two
grasp slots x four tasks), each carrying a proposed grasp description; a
matching client then decides, per scene object and task, which annotated
descriptions mean the same grasp. Total client traffic is therefore
O(T + O*G) rather than the O(T*O*G) of labeling every triple, and match
results are cached by content so repeated scenes are free.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from .util import content_key, sha256_text

SYNTHETIC = "synthetic"
VERIFIED = "verified"
CORRECTED = "corrected"

TASKS_PER_SLOT = 4
GRASP_SLOTS = ("A", "B")
TASKS_PER_CLASS = TASKS_PER_SLOT * len(GRASP_SLOTS)


class MatchingClientError(RuntimeError):
    """A matching-client call failed or returned malformed output."""


@dataclass(frozen=True)
class GraspDescription:
    instance_id: str
    grasp_id: str
    text: str
    source: str = SYNTHETIC

    def __post_init__(self):
        if not self.text:
            raise ValueError("description text must be non-empty")

    @property
    def key(self) -> str:
        return f"{self.instance_id}/{self.grasp_id}"


@dataclass(frozen=True)
class TaskSpec:
    class_name: str
    task_text: str
    proposed_grasp_description: str
    grasp_slot: str  # "A" | "B"
    num_grippers: int = 1

    @property
    def task_id(self) -> str:
        return sha256_text(f"{self.class_name}\x1f{self.grasp_slot}\x1f{self.task_text}")[:16]

    def to_dict(self) -> dict:
        return {
            "class_name": self.class_name,
            "task_text": self.task_text,
            "proposed_grasp_description": self.proposed_grasp_description,
            "grasp_slot": self.grasp_slot,
            "num_grippers": self.num_grippers,
        }

    @staticmethod
    def from_dict(d: dict) -> "TaskSpec":
        return TaskSpec(**d)


@dataclass(frozen=True)
class TaskGraspTriple:
    task: TaskSpec
    instance_id: str
    grasp_id: str
    matched_description: GraspDescription


@dataclass
class PipelineStats:
    """Call accounting for the annotation stages.

    `issued_calls_by_stage` counts calls the pipeline issued (cache hits
    included); `backend_calls_by_stage` counts calls that reached the
    underlying client (cache misses), when an instrumented client is used.
    """

    n_tasks: int = 0
    n_objects: int = 0
    grasps_per_object: int = 0
    issued_calls_by_stage: dict = field(default_factory=dict)
    backend_calls_by_stage: dict = field(default_factory=dict)

    def add_issued(self, stage: str, n: int = 1) -> None:
        self.issued_calls_by_stage[stage] = self.issued_calls_by_stage.get(stage, 0) + n

    def to_dict(self) -> dict:
        return {
            "n_tasks": self.n_tasks,
            "n_objects": self.n_objects,
            "grasps_per_object": self.grasps_per_object,
            "issued_calls_by_stage": dict(self.issued_calls_by_stage),
            "backend_calls_by_stage": dict(self.backend_calls_by_stage),
        }


@runtime_checkable
class MatchingClient(Protocol):
    """Behavior contract for the annotation backend (LLM or mock)."""

    def describe(self, class_name: str, instance_id: str, grasp_id: str,
                 view_refs: tuple = ()) -> str:
        """Natural-language description of how the grasp grips the object."""
        ...

    def generate_tasks(self, class_name: str, grasp_descriptions: tuple = ()) -> list:
        """8 TaskSpec for a class (2 slots x 4 tasks), or [] to skip it."""
        ...

    def match(self, candidate_description: str, annotated_descriptions: tuple) -> list:
        """Subset of `annotated_descriptions` meaning the same grasp."""
        ...


@dataclass(frozen=True)
class ObjectGrasps:
    """One object's sampled grasps, as fed to description generation."""

    class_name: str
    instance_id: str
    grasp_ids: tuple
    view_refs: tuple = ()


def generate_descriptions(objects, client, max_retries: int = 3,
                          max_in_flight: int = 1):
    """One client.describe call per (object, grasp).

    Failed calls are retried up to `max_retries` times, then recorded in
    the missing list; the pipeline continues. Calls may be issued
    concurrently (`max_in_flight`); results are merged in sorted
    (instance_id, grasp_id) order so concurrency never changes output.

    Returns (descriptions, missing, stats).
    """
    stats = PipelineStats(n_objects=len(objects))
    lock = threading.Lock()

    def one(obj: ObjectGrasps, grasp_id: str):
        last_error = None
        for _ in range(1 + max_retries):
            with lock:
                stats.add_issued("describe")
            try:
                text = client.describe(obj.class_name, obj.instance_id, grasp_id,
                                       obj.view_refs)
                return GraspDescription(obj.instance_id, grasp_id, text)
            except MatchingClientError as exc:
                last_error = exc
        return (obj.instance_id, grasp_id, str(last_error))

    jobs = [(obj, gid) for obj in sorted(objects, key=lambda o: o.instance_id)
            for gid in obj.grasp_ids]
    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(lambda j: one(*j), jobs))
    else:
        results = [one(*j) for j in jobs]

    descriptions = sorted(
        (r for r in results if isinstance(r, GraspDescription)),
        key=lambda d: (d.instance_id, d.grasp_id),
    )
    missing = sorted((r[0], r[1]) for r in results if not isinstance(r, GraspDescription))
    if objects:
        stats.grasps_per_object = max(len(o.grasp_ids) for o in objects)
    return descriptions, missing, stats


def apply_verification_edits(descriptions, edits: dict):
    """Fold human-verification results into the descriptions.

    `edits` maps "instance_id/grasp_id" to either ``{"verified": true}``
    (text confirmed) or ``{"text": "..."}`` (correction). Unknown keys are
    rejected. Returns (new descriptions, counts by source).
    """
    by_key = {d.key: d for d in descriptions}
    unknown = set(edits) - set(by_key)
    if unknown:
        raise ValueError(f"verification edits reference unknown grasps: {sorted(unknown)}")
    out = []
    for d in descriptions:
        edit = edits.get(d.key)
        if edit is None:
            out.append(d)
        elif "text" in edit:
            out.append(GraspDescription(d.instance_id, d.grasp_id, edit["text"], CORRECTED))
        elif edit.get("verified"):
            out.append(GraspDescription(d.instance_id, d.grasp_id, d.text, VERIFIED))
        else:
            raise ValueError(f"edit for {d.key!r} has neither 'text' nor 'verified'")
    counts = {SYNTHETIC: 0, VERIFIED: 0, CORRECTED: 0}
    for d in out:
        counts[d.source] += 1
    return out, counts


def generate_tasks(classes, client, descriptions_by_class: dict | None = None):
    """One client.generate_tasks call per class.

    A class may yield exactly TASKS_PER_CLASS tasks (4 per slot) or an
    empty list (skipped class); anything else raises naming the class.
    Returns (tasks, stats).
    """
    descriptions_by_class = descriptions_by_class or {}
    stats = PipelineStats()
    tasks = []
    for class_name in sorted(set(classes)):
        stats.add_issued("generate_tasks")
        result = client.generate_tasks(class_name,
                                       tuple(descriptions_by_class.get(class_name, ())))
        if not result:
            continue
        if len(result) != TASKS_PER_CLASS:
            raise MatchingClientError(
                f"class {class_name!r}: expected {TASKS_PER_CLASS} tasks or none, "
                f"got {len(result)}"
            )
        for slot in GRASP_SLOTS:
            n_slot = sum(1 for t in result if t.grasp_slot == slot)
            if n_slot != TASKS_PER_SLOT:
                raise MatchingClientError(
                    f"class {class_name!r}: slot {slot} has {n_slot} tasks, "
                    f"expected {TASKS_PER_SLOT}"
                )
        if any(t.class_name != class_name for t in result):
            raise MatchingClientError(f"class {class_name!r}: task with wrong class name")
        tasks.extend(result)
    stats.n_tasks = len(tasks)
    return tasks, stats


@dataclass(frozen=True)
class SceneObjectContext:
    """One scene object with the grasps visible in >= 1 retained view."""

    instance_id: str
    class_name: str
    visible_grasp_ids: tuple


def scene_contexts_from_manifest(manifest: dict, class_of: dict) -> list:
    """Build per-object matching contexts from a scene manifest, using the
    union of visible annotations over retained views."""
    visible: dict = {}
    for view in manifest["views"]:
        if not view["retained"]:
            continue
        for a in view["visible"]:
            visible.setdefault(a["instance_id"], set()).add(a["grasp_id"])
    return [
        SceneObjectContext(
            instance_id=iid,
            class_name=class_of[iid],
            visible_grasp_ids=tuple(sorted(gids)),
        )
        for iid, gids in sorted(visible.items())
    ]


def match_tasks_to_grasps(scene_objects, descriptions, tasks, client,
                          stats: PipelineStats | None = None) -> list:
    """Match class tasks against the visible grasps of each scene object.

    For each object, one client.match call per task of its class compares
    the task's proposed description with the object's annotated visible
    descriptions; every returned description emits one triple. Objects
    with no visible described grasps issue no calls.
    """
    stats = stats if stats is not None else PipelineStats()
    desc_by_key = {d.key: d for d in descriptions}
    tasks_by_class: dict = {}
    for t in tasks:
        tasks_by_class.setdefault(t.class_name, []).append(t)

    triples = []
    for obj in sorted(scene_objects, key=lambda o: o.instance_id):
        annotated = []
        for gid in obj.visible_grasp_ids:
            d = desc_by_key.get(f"{obj.instance_id}/{gid}")
            if d is not None:
                annotated.append((gid, d))
        if not annotated:
            continue
        texts = tuple(d.text for _, d in annotated)
        for task in tasks_by_class.get(obj.class_name, []):
            stats.add_issued("match")
            matched = client.match(task.proposed_grasp_description, texts)
            bad = [m for m in matched if m not in texts]
            if bad:
                raise MatchingClientError(
                    f"match returned descriptions outside its input: {bad!r}"
                )
            matched_set = set(matched)
            for gid, d in annotated:
                if d.text in matched_set:
                    triples.append(TaskGraspTriple(
                        task=task,
                        instance_id=obj.instance_id,
                        grasp_id=gid,
                        matched_description=d,
                    ))
    return triples


def match_cache_key(task: TaskSpec, annotated_texts: tuple) -> str:
    return content_key({
        "stage": "match",
        "candidate": task.proposed_grasp_description,
        "annotated": sorted(annotated_texts),
    })
