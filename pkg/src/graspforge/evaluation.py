"""Scoring harness: top-1 grasp-prediction accuracy, per-task
normalization, and the analytic random baseline.

Prediction records are self-contained: each carries its ground-truth grasp
id, candidate count, and either a predicted grasp id or a predicted pixel
with per-candidate pixels (resolved through the same argmin rule the
matcher uses). Task normalization groups records by task key (default:
the leading verb of the task text) and averages per-task accuracies
unweighted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .matcher import select_by_pixel


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    key: str
    task: str
    truth_id: str
    n_candidates: int
    predicted_id: str | None = None
    predicted_pixel: tuple | None = None
    candidate_pixels: dict | None = None
    execution_success: bool | None = None

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError(f"{self.key}: candidate count must be >= 1")
        if self.predicted_id is None and self.predicted_pixel is None:
            raise ValueError(f"{self.key}: need predicted_id or predicted_pixel")
        if self.predicted_pixel is not None and not self.candidate_pixels:
            raise ValueError(f"{self.key}: pixel prediction requires candidate_pixels")

    def resolve(self) -> str:
        if self.predicted_id is not None:
            return self.predicted_id
        return select_by_pixel(
            {k: np.asarray(v) for k, v in self.candidate_pixels.items()},
            np.asarray(self.predicted_pixel),
        )

    @staticmethod
    def from_dict(d: dict) -> "PredictionRecord":
        return PredictionRecord(
            key=d["key"],
            task=d["task"],
            truth_id=d["truth"],
            n_candidates=int(d["n_candidates"]),
            predicted_id=d.get("predicted"),
            predicted_pixel=tuple(d["predicted_pixel"]) if "predicted_pixel" in d else None,
            candidate_pixels={k: tuple(v) for k, v in d["candidate_pixels"].items()}
            if "candidate_pixels" in d else None,
            execution_success=d.get("execution_success"),
        )


def verb_key(task: str) -> str:
    words = task.strip().split()
    return words[0].lower() if words else ""


def _group_fn(group_by):
    if callable(group_by):
        return group_by
    if group_by == "verb":
        return lambda r: verb_key(r.task)
    if group_by == "task":
        return lambda r: r.task
    raise ValueError(f"unknown grouping {group_by!r} (use 'verb', 'task', or a callable)")


def top1(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("no prediction records")
    correct = sum(1 for r in records if r.resolve() == r.truth_id)
    return correct / len(records)


def per_task_accuracy(records, group_by="verb") -> dict:
    key_fn = _group_fn(group_by)
    groups: dict = {}
    for r in records:
        groups.setdefault(key_fn(r), []).append(r)
    if not groups:
        raise ValueError("no prediction records")
    return {key: top1(rs) for key, rs in sorted(groups.items())}


def task_normalized(records, group_by="verb") -> float:
    """Unweighted mean of per-task top-1 accuracies."""
    per_task = per_task_accuracy(records, group_by)
    return float(np.mean(list(per_task.values())))


def random_baseline(records) -> float:
    """Expected top-1 of uniform random selection: mean of 1/candidates."""
    records = list(records)
    if not records:
        raise ValueError("no prediction records")
    return float(np.mean([1.0 / r.n_candidates for r in records]))


@dataclass
class EvalReport:
    overall_top1: float
    task_normalized: float
    per_task: dict
    n_per_task: dict
    random_baseline: float
    random_baseline_task_normalized: float
    n_records: int
    execution_success_rate: float | None = None

    def to_dict(self) -> dict:
        return {
            "overall_top1": self.overall_top1,
            "task_normalized": self.task_normalized,
            "per_task": dict(sorted(self.per_task.items())),
            "n_per_task": dict(sorted(self.n_per_task.items())),
            "random_baseline": self.random_baseline,
            "random_baseline_task_normalized": self.random_baseline_task_normalized,
            "n_records": self.n_records,
            "execution_success_rate": self.execution_success_rate,
        }

    def table(self) -> str:
        rows = [
            ("Random (expected)", self.random_baseline, self.random_baseline_task_normalized),
            ("Predictions", self.overall_top1, self.task_normalized),
        ]
        lines = [f"{'':22s}{'Top-1':>10s}{'Task-norm':>12s}"]
        for name, a, b in rows:
            lines.append(f"{name:22s}{a * 100:9.1f}%{b * 100:11.1f}%")
        if self.execution_success_rate is not None:
            lines.append(f"{'Execution success':22s}{self.execution_success_rate * 100:9.1f}%")
        return "\n".join(lines)


def evaluate(records, group_by="verb") -> EvalReport:
    records = list(records)
    key_fn = _group_fn(group_by)
    per_task = per_task_accuracy(records, group_by)
    n_per_task = {}
    random_per_task: dict = {}
    for r in records:
        key = key_fn(r)
        n_per_task[key] = n_per_task.get(key, 0) + 1
        random_per_task.setdefault(key, []).append(1.0 / r.n_candidates)

    executed = [r.execution_success for r in records if r.execution_success is not None]
    return EvalReport(
        overall_top1=top1(records),
        task_normalized=float(np.mean(list(per_task.values()))),
        per_task=per_task,
        n_per_task=n_per_task,
        random_baseline=random_baseline(records),
        random_baseline_task_normalized=float(
            np.mean([np.mean(v) for v in random_per_task.values()])
        ),
        n_records=len(records),
        execution_success_rate=float(np.mean(executed)) if executed else None,
    )


def load_predictions(path) -> list:
    """Read prediction records from JSONL (one object per line)."""
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(PredictionRecord.from_dict(json.loads(line)))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad prediction record: {exc}") from exc
    return records
