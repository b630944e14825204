"""Matching-client implementations: deterministic offline mock,
call-counting wrapper, content-addressed cache, and the HTTP JSON client.

The mock grounds descriptions and matches in a small per-class part
lexicon: a candidate description matches an annotated one when they
mention the same object part (normalized-token containment). This makes
the whole annotation pipeline runnable and bit-reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from importlib import resources
from pathlib import Path

import requests

from .annotate import (
    GRASP_SLOTS,
    TASKS_PER_SLOT,
    MatchingClientError,
    TaskSpec,
)
from .util import content_key

DEFAULT_PARTS = ("body", "handle", "rim", "base")

PART_LEXICON = {
    "Mug": ("handle", "rim", "body", "base"),
    "TeaCup": ("handle", "rim", "body"),
    "Teapot": ("handle", "spout", "lid", "body"),
    "Knife": ("handle", "blade"),
    "Pan": ("handle", "rim", "body"),
    "Hammer": ("handle", "head"),
    "Bottle": ("cap", "neck", "body"),
    "WineBottle": ("neck", "body", "base"),
    "DrinkBottle": ("cap", "neck", "body"),
    "PillBottle": ("cap", "body"),
    "Fork": ("handle", "prongs"),
    "Spoon": ("handle", "bowl"),
    "Bowl": ("rim", "body", "base"),
    "Plate": ("rim", "body"),
    "DSLRCamera": ("grip", "lens", "body"),
    "Flashlight": ("head", "body"),
    "ScrewDriver": ("handle", "shaft"),
    "Scissors": ("handles", "blades"),
    "DeskLamp": ("shade", "arm", "base"),
    "Bag": ("straps", "body"),
    "PowerStrip": ("cord", "body"),
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list:
    return _TOKEN_RE.findall(text.lower())


def _contains_phrase(tokens: list, phrase: str) -> bool:
    needle = _tokens(phrase)
    n = len(needle)
    return any(tokens[i:i + n] == needle for i in range(len(tokens) - n + 1))


def _natural_name(class_name: str) -> str:
    words = re.findall(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+", class_name)
    return " ".join(w.lower() for w in words) if words else class_name.lower()


_TASK_TEMPLATES = {
    "A": (
        "pick up the {name} and hand it over",
        "move the {name} to the edge of the table",
        "lift the {name} up for a closer look",
        "pass the {name} to the person beside you",
    ),
    "B": (
        "steady the {name} while it is being used",
        "slide the {name} closer without lifting it",
        "hold the {name} in place on the table",
        "tuck the {name} away into a storage bin",
    ),
}


class MockMatchingClient:
    """Deterministic offline client grounded in a part lexicon."""

    def __init__(self, lexicon: dict | None = None):
        self.lexicon = dict(PART_LEXICON if lexicon is None else lexicon)
        parts = set(DEFAULT_PARTS)
        for values in self.lexicon.values():
            parts.update(values)
        # longer phrases first so "main body" wins over "body"
        self._all_parts = sorted(parts, key=lambda p: (-len(_tokens(p)), p))

    def parts_for(self, class_name: str) -> tuple:
        return tuple(self.lexicon.get(class_name, DEFAULT_PARTS))

    def describe(self, class_name, instance_id, grasp_id, view_refs=()) -> str:
        parts = self.parts_for(class_name)
        digest = hashlib.sha256(f"{instance_id}/{grasp_id}".encode()).hexdigest()
        part = parts[int(digest[:8], 16) % len(parts)]
        return f"The grasp is on the {part} of the {_natural_name(class_name)}."

    def generate_tasks(self, class_name, grasp_descriptions=()) -> list:
        parts = self.parts_for(class_name)
        if len(parts) < 2:
            return []
        name = _natural_name(class_name)
        tasks = []
        for slot, part in zip(GRASP_SLOTS, parts[:2]):
            proposed = f"grasp on the {part} of the {name}"
            for template in _TASK_TEMPLATES[slot][:TASKS_PER_SLOT]:
                tasks.append(TaskSpec(
                    class_name=class_name,
                    task_text=template.format(name=name),
                    proposed_grasp_description=proposed,
                    grasp_slot=slot,
                ))
        return tasks

    def _mentioned_parts(self, text: str) -> set:
        tokens = _tokens(text)
        found = set()
        for part in self._all_parts:
            if _contains_phrase(tokens, part):
                found.add(part)
        return found

    def match(self, candidate_description, annotated_descriptions) -> list:
        wanted = self._mentioned_parts(candidate_description)
        if not wanted:
            return []
        return [
            text for text in annotated_descriptions
            if self._mentioned_parts(text) & wanted
        ]


class InstrumentedClient:
    """Counts calls reaching the wrapped client, per stage (thread-safe)."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = {"describe": 0, "generate_tasks": 0, "match": 0}
        self._lock = threading.Lock()

    def _count(self, stage):
        with self._lock:
            self.calls[stage] += 1

    def total(self) -> int:
        return sum(self.calls.values())

    def describe(self, class_name, instance_id, grasp_id, view_refs=()):
        self._count("describe")
        return self.inner.describe(class_name, instance_id, grasp_id, view_refs)

    def generate_tasks(self, class_name, grasp_descriptions=()):
        self._count("generate_tasks")
        return self.inner.generate_tasks(class_name, grasp_descriptions)

    def match(self, candidate_description, annotated_descriptions):
        self._count("match")
        return self.inner.match(candidate_description, annotated_descriptions)


class ClientCache:
    """Content-addressed key-value store, in memory with an optional
    on-disk directory (one JSON file per key)."""

    _MISS = object()

    def __init__(self, cache_dir=None):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._mem = {}
        self._lock = threading.Lock()

    def get(self, key: str):
        with self._lock:
            if key in self._mem:
                return self._mem[key]
        if self.cache_dir:
            path = self.cache_dir / f"{key}.json"
            if path.exists():
                value = json.loads(path.read_text())["value"]
                with self._lock:
                    self._mem[key] = value
                return value
        return self._MISS

    def put(self, key: str, value) -> None:
        with self._lock:
            self._mem[key] = value
        if self.cache_dir:
            path = self.cache_dir / f"{key}.json"
            path.write_text(json.dumps({"value": value}, sort_keys=True))

    def is_miss(self, value) -> bool:
        return value is self._MISS


class CachedClient:
    """Caches client responses by content hash of (stage, payload)."""

    def __init__(self, inner, cache: ClientCache | None = None):
        self.inner = inner
        self.cache = cache if cache is not None else ClientCache()

    def describe(self, class_name, instance_id, grasp_id, view_refs=()):
        key = content_key({
            "stage": "describe", "class": class_name, "instance": instance_id,
            "grasp": grasp_id, "views": list(view_refs),
        })
        hit = self.cache.get(key)
        if not self.cache.is_miss(hit):
            return hit
        value = self.inner.describe(class_name, instance_id, grasp_id, view_refs)
        self.cache.put(key, value)
        return value

    def generate_tasks(self, class_name, grasp_descriptions=()):
        key = content_key({
            "stage": "generate_tasks", "class": class_name,
            "descriptions": sorted(grasp_descriptions),
        })
        hit = self.cache.get(key)
        if not self.cache.is_miss(hit):
            return [TaskSpec.from_dict(d) for d in hit]
        tasks = self.inner.generate_tasks(class_name, grasp_descriptions)
        self.cache.put(key, [t.to_dict() for t in tasks])
        return tasks

    def match(self, candidate_description, annotated_descriptions):
        key = content_key({
            "stage": "match", "candidate": candidate_description,
            "annotated": sorted(annotated_descriptions),
        })
        hit = self.cache.get(key)
        if not self.cache.is_miss(hit):
            return list(hit)
        matches = self.inner.match(candidate_description, annotated_descriptions)
        self.cache.put(key, list(matches))
        return matches


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------

def load_prompt(name: str) -> str:
    return resources.files("graspforge.prompts").joinpath(f"{name}.txt").read_text()


class HttpMatchingClient:
    """JSON-over-HTTP matching client.

    POSTs ``{"stage", "prompt", "payload"}`` to the endpoint and expects
    ``{"text"}``, ``{"tasks"}`` or ``{"matches"}`` depending on the stage.
    Credentials come from the environment variable named by
    `api_key_env` (sent as a bearer token when set).
    """

    def __init__(self, endpoint: str, api_key_env: str = "GRASPFORGE_API_KEY",
                 timeout: float = 30.0, session=None):
        import os

        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()
        self.headers = {"Content-Type": "application/json"}
        key = os.environ.get(api_key_env, "")
        if key:
            self.headers["Authorization"] = f"Bearer {key}"
        self.prompts = {
            "describe": {
                "system": load_prompt("describe_system"),
                "user": load_prompt("describe_user"),
            },
            "generate_tasks": {
                "grasp_definitions": load_prompt("task_grasp_definitions"),
                "semantic_tasks": load_prompt("task_semantic_tasks"),
            },
            "match": {
                "system": load_prompt("match_system"),
                "user": load_prompt("match_user"),
            },
        }

    def _post(self, stage: str, payload: dict) -> dict:
        body = {"stage": stage, "prompt": self.prompts[stage], "payload": payload}
        try:
            response = self.session.post(self.endpoint, json=body,
                                         headers=self.headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise MatchingClientError(f"{stage}: request failed: {exc}") from exc
        if response.status_code != 200:
            raise MatchingClientError(f"{stage}: HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise MatchingClientError(f"{stage}: non-JSON response") from exc

    def describe(self, class_name, instance_id, grasp_id, view_refs=()) -> str:
        data = self._post("describe", {
            "class_name": class_name, "instance_id": instance_id,
            "grasp_id": grasp_id, "view_refs": list(view_refs),
        })
        text = data.get("text")
        if not isinstance(text, str) or not text:
            raise MatchingClientError("describe: response missing non-empty 'text'")
        return text

    def generate_tasks(self, class_name, grasp_descriptions=()) -> list:
        data = self._post("generate_tasks", {
            "class_name": class_name,
            "grasp_descriptions": list(grasp_descriptions),
        })
        raw = data.get("tasks")
        if not isinstance(raw, list):
            raise MatchingClientError("generate_tasks: response missing 'tasks' list")
        try:
            return [TaskSpec.from_dict(d) for d in raw]
        except (TypeError, KeyError) as exc:
            raise MatchingClientError(f"generate_tasks: malformed task: {exc}") from exc

    def match(self, candidate_description, annotated_descriptions) -> list:
        data = self._post("match", {
            "candidate": candidate_description,
            "annotated": list(annotated_descriptions),
        })
        matches = data.get("matches")
        if not isinstance(matches, list) or not all(isinstance(m, str) for m in matches):
            raise MatchingClientError("match: response missing 'matches' list of strings")
        return matches


def load_class_vocabulary() -> list:
    """The built-in object-class vocabulary (one class per line)."""
    text = resources.files("graspforge.data").joinpath("object_classes.txt").read_text()
    return [line.strip() for line in text.splitlines() if line.strip()]
