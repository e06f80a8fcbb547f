"""Modalities, task categories, and the task registry.

The registry seeds from ``data/tasks.json`` (13 tasks); custom tasks can be
registered at runtime. Reads are lock-free; mutations serialize through a
single writer lock and bump a version counter so cached prompt contexts
know to rebuild.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import DuplicateTask, InvalidName, TaskNotFound


class Modality(str, Enum):
    TEXT = "text"
    SYMBOLIC = "symbolic"
    AUDIO = "audio"


class TaskCategory(str, Enum):
    GENERATION = "generation"
    UNDERSTANDING = "understanding"
    AUXILIARY = "auxiliary"


# First token plain, later tokens may carry "/" (e.g. artist/track-search).
TASK_NAME_RE = re.compile(r"^[a-z0-9]+(?:[-/][a-z0-9]+)*$")

# "text-to-music" appears in prose as a synonym for the registered
# text-to-symbolic-music task; resolve it transparently.
TASK_ALIASES = {"text-to-music": "text-to-symbolic-music"}


@dataclass(frozen=True)
class TaskSpec:
    name: str
    input: Modality
    output: Modality
    category: TaskCategory
    description: str = ""

    def __post_init__(self):
        if not TASK_NAME_RE.match(self.name):
            raise InvalidName(f"bad task name: {self.name!r}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "input": self.input.value,
            "output": self.output.value,
            "category": self.category.value,
            "description": self.description,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSpec":
        return cls(
            name=obj["name"],
            input=Modality(obj["input"]),
            output=Modality(obj["output"]),
            category=TaskCategory(obj["category"]),
            description=obj.get("description", ""),
        )


def check_chain(upstream: TaskSpec, downstream: TaskSpec) -> bool:
    """True iff upstream's output modality feeds downstream's input."""
    return upstream.output == downstream.input


class TaskRegistry:
    def __init__(self):
        self._tasks: dict[str, TaskSpec] = {}
        self._lock = threading.Lock()
        self.version = 0  # bumped on every mutation; prompt caches key on it

    def register(self, spec: TaskSpec, replace: bool = False):
        with self._lock:
            if spec.name in self._tasks and not replace:
                raise DuplicateTask(f"task {spec.name!r} already registered")
            self._tasks[spec.name] = spec
            self.version += 1

    def lookup(self, name: str) -> TaskSpec:
        name = TASK_ALIASES.get(name, name)
        try:
            return self._tasks[name]
        except KeyError:
            raise TaskNotFound(f"unknown task {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return TASK_ALIASES.get(name, name) in self._tasks

    def __len__(self) -> int:
        return len(self._tasks)

    def names(self) -> list[str]:
        return list(self._tasks)

    def specs(self) -> list[TaskSpec]:
        return list(self._tasks.values())

    def to_json(self) -> list[dict]:
        return [spec.to_json() for spec in self._tasks.values()]

    @classmethod
    def from_json(cls, rows: list[dict]) -> "TaskRegistry":
        reg = cls()
        for row in rows:
            reg.register(TaskSpec.from_json(row))
        return reg

    @classmethod
    def from_file(cls, path: str | Path) -> "TaskRegistry":
        return cls.from_json(json.loads(Path(path).read_text()))

    @classmethod
    def seeded(cls) -> "TaskRegistry":
        data = resources.files("musicagent.data").joinpath("tasks.json").read_text()
        return cls.from_json(json.loads(data))
