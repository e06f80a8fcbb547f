"""Tool registry: descriptors with scoring attributes, task-to-tool
mapping, and per-subtask selection via a deterministic weighted score or
an LLM judgment with rationale.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    DuplicateTool,
    NegativeAttribute,
    NoCandidates,
    LlmUnavailable,
    TaskNotFound,
    UnknownTool,
)
from .taxonomy import TaskRegistry

RESERVED_NUMERIC_ATTRS = ("stars", "downloads", "likes")


@dataclass(frozen=True)
class Adapter:
    kind: str  # "builtin" | "subprocess" | "http" | "remote"
    entry: str | None = None      # builtin function name
    template: str | None = None   # subprocess command / http endpoint
    provider: str | None = None   # remote api provider id

    def to_json(self) -> dict:
        obj = {"kind": self.kind}
        for key in ("entry", "template", "provider"):
            value = getattr(self, key)
            if value is not None:
                obj[key] = value
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Adapter":
        return cls(kind=obj["kind"], entry=obj.get("entry"),
                   template=obj.get("template"), provider=obj.get("provider"))


def _check_attributes(attributes: dict):
    for key, value in attributes.items():
        if isinstance(value, (int, float)) and value < 0:
            raise NegativeAttribute(f"attribute {key!r} = {value} is negative")


@dataclass
class ToolDescriptor:
    id: str
    display_name: str
    supported_tasks: set[str]
    adapter: Adapter
    attributes: dict = field(default_factory=dict)
    resource_cost: int = 1

    def __post_init__(self):
        if not self.supported_tasks:
            raise ValueError(f"tool {self.id!r} supports no tasks")
        _check_attributes(self.attributes)

    @property
    def description(self) -> str:
        return str(self.attributes.get("description", ""))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "tasks": sorted(self.supported_tasks),
            "adapter": self.adapter.to_json(),
            "attributes": dict(self.attributes),
            "resource_cost": self.resource_cost,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ToolDescriptor":
        return cls(
            id=obj["id"],
            display_name=obj.get("display_name", obj["id"]),
            supported_tasks=set(obj["tasks"]),
            adapter=Adapter.from_json(obj["adapter"]),
            attributes=dict(obj.get("attributes", {})),
            resource_cost=obj.get("resource_cost", 1),
        )


@dataclass(frozen=True)
class SelectionPolicy:
    mode: str = "deterministic"  # "deterministic" | "llm"
    weights: dict = field(default_factory=lambda: {"downloads": 0.5, "stars": 0.3, "likes": 0.2})


@dataclass
class Selection:
    tool_id: str
    rationale: str
    scores: dict = field(default_factory=dict)  # tool id -> score (deterministic mode)


SELECTOR_PREAMBLE = (
    "You are the tool selector of a music-processing agent. Given the task "
    "and candidate tools with their attributes, reply with ONLY a JSON "
    'object {"tool": "<tool-id>", "reason": "<why>"}.'
)


class ToolRegistry:
    """Read-mostly store of tool descriptors; mutations serialize through a
    single writer lock and bump `version` so cached selector prompts rebuild.
    """

    def __init__(self, tasks: TaskRegistry):
        self.tasks = tasks
        self._tools: dict[str, ToolDescriptor] = {}
        self._lock = threading.Lock()
        self.version = 0

    # -- mutation ----------------------------------------------------------

    def register_tool(self, desc: ToolDescriptor):
        with self._lock:
            if desc.id in self._tools:
                raise DuplicateTool(f"tool {desc.id!r} already registered")
            for task in desc.supported_tasks:
                if task not in self.tasks:
                    raise TaskNotFound(f"tool {desc.id!r} names unknown task {task!r}")
            self._tools[desc.id] = desc
            self.version += 1

    def update_tool_attributes(self, tool_id: str, patch: dict) -> ToolDescriptor:
        with self._lock:
            if tool_id not in self._tools:
                raise UnknownTool(f"no tool {tool_id!r}")
            _check_attributes(patch)
            tool = self._tools[tool_id]
            tool.attributes.update(patch)
            self.version += 1
            return tool

    # -- reads ----------------------------------------------------------------

    def get(self, tool_id: str) -> ToolDescriptor:
        try:
            return self._tools[tool_id]
        except KeyError:
            raise UnknownTool(f"no tool {tool_id!r}") from None

    def __len__(self):
        return len(self._tools)

    def all(self) -> list[ToolDescriptor]:
        return list(self._tools.values())

    def task_map(self) -> dict[str, list[str]]:
        mapping: dict[str, list[str]] = {}
        for tool in self._tools.values():
            for task in tool.supported_tasks:
                mapping.setdefault(task, []).append(tool.id)
        return {task: sorted(ids) for task, ids in mapping.items()}

    def candidates_for(self, task: str) -> list[ToolDescriptor]:
        if task not in self.tasks:
            raise TaskNotFound(f"unknown task {task!r}")
        found = [t for t in self._tools.values() if task in t.supported_tasks]
        return sorted(found, key=lambda t: t.id)

    # -- selection ------------------------------------------------------------

    def select_tool(
        self,
        task: str,
        policy: SelectionPolicy,
        context: str = "",
        llm=None,
    ) -> Selection:
        candidates = self.candidates_for(task)
        if not candidates:
            raise NoCandidates(f"no tools registered for task {task!r}")
        if policy.mode == "llm":
            selection = self._select_llm(task, candidates, context, llm)
            if selection is not None:
                return selection
            fallback = self._select_deterministic(task, candidates, policy)
            fallback.rationale = "(deterministic fallback) " + fallback.rationale
            return fallback
        return self._select_deterministic(task, candidates, policy)

    def _select_deterministic(
        self, task: str, candidates: list[ToolDescriptor], policy: SelectionPolicy
    ) -> Selection:
        weights = {
            attr: w for attr, w in policy.weights.items()
            if w > 0 and any(
                isinstance(c.attributes.get(attr), (int, float)) for c in candidates)
        }
        if not weights and len(candidates) > 1:
            # No usable numeric signal: fall back to stable id order.
            weights = {}
        scores: dict[str, float] = {c.id: 0.0 for c in candidates}
        for attr, weight in weights.items():
            values = {
                c.id: float(c.attributes.get(attr, 0) or 0) for c in candidates
            }
            lo, hi = min(values.values()), max(values.values())
            for cid, v in values.items():
                norm = 1.0 if hi == lo else (v - lo) / (hi - lo)
                scores[cid] += weight * norm

        best = max(scores.values())
        winner = min(cid for cid, s in scores.items() if s == best)
        top_attrs = sorted(weights, key=lambda a: -weights[a])
        if top_attrs:
            rationale = (
                f"Picked {winner} for {task}: highest weighted score "
                f"({', '.join(top_attrs)} weighted {best:.3f})."
            )
        else:
            rationale = f"Picked {winner} for {task}: only usable candidate order is by id."
        return Selection(tool_id=winner, rationale=rationale, scores=scores)

    def _select_llm(self, task, candidates, context, llm) -> Selection | None:
        if llm is None:
            return None
        lines = [SELECTOR_PREAMBLE, f"Task: {task}", f"User request: {context}", "Candidates:"]
        for c in candidates:
            lines.append(f"- {c.id}: {c.description} attributes={json.dumps({k: v for k, v in c.attributes.items() if k != 'description'})}")
        try:
            reply = llm.complete_text("\n".join(lines), purpose="selector", temperature=0.0)
        except LlmUnavailable:
            return None
        decoder = json.JSONDecoder()
        for pos, char in enumerate(reply):
            if char != "{":
                continue
            try:
                obj, _ = decoder.raw_decode(reply, pos)
            except ValueError:
                continue
            if isinstance(obj, dict) and obj.get("tool") in {c.id for c in candidates}:
                return Selection(
                    tool_id=obj["tool"],
                    rationale=str(obj.get("reason", "selected by LLM judgment")),
                )
        return None  # parse failure -> deterministic fallback

    # -- serialization -----------------------------------------------------------

    def to_json(self) -> list[dict]:
        return [t.to_json() for t in self._tools.values()]

    def load_json(self, rows: list[dict]):
        for row in rows:
            self.register_tool(ToolDescriptor.from_json(row))

    @classmethod
    def from_file(cls, tasks: TaskRegistry, path: str | Path) -> "ToolRegistry":
        reg = cls(tasks)
        reg.load_json(json.loads(Path(path).read_text()))
        return reg

    @classmethod
    def seeded(cls, tasks: TaskRegistry) -> "ToolRegistry":
        data = resources.files("musicagent.data").joinpath("tools.json").read_text()
        reg = cls(tasks)
        reg.load_json(json.loads(data))
        return reg
