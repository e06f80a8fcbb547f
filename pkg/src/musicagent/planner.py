"""Task planning: the plan wire schema, a strict parser for LLM output,
graph validation against the task registry, user-injected task flows, and
history truncation for the prompt budget.

Plan wire schema (JSON array, one object per subtask):

    [{"id": "t1", "task": "<task-name>", "deps": ["t0", ...],
      "args": {"input": <string | {"from": "t0"} | {"artifact": "res-3"}>}}]

`id` and `deps` are optional on input; ids are assigned `t1..tn` when
absent and implicit dependencies are added for every `{"from": ...}` ref.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    BudgetTooSmall,
    DuplicateId,
    EmptyRequest,
    MalformedSubTask,
    NoPlanFound,
)
from .session import SessionState, render_turn
from .taxonomy import TaskRegistry

# A prompt cannot be rendered meaningfully below this many characters.
MIN_PROMPT_BUDGET = 64


# --------------------------------------------------------------------------
# Argument values
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ArtifactRef:
    artifact_id: str


@dataclass(frozen=True)
class TaskOutputRef:
    subtask_id: str
    output: str | None = None  # named output; None = primary


ArgValue = "str | ArtifactRef | TaskOutputRef"


def arg_to_json(value):
    if isinstance(value, str):
        return value
    if isinstance(value, ArtifactRef):
        return {"artifact": value.artifact_id}
    if isinstance(value, TaskOutputRef):
        obj = {"from": value.subtask_id}
        if value.output is not None:
            obj["output"] = value.output
        return obj
    raise TypeError(f"not an ArgValue: {value!r}")


def arg_from_json(obj, subtask_label: str):
    if isinstance(obj, str):
        return obj
    if isinstance(obj, dict):
        if "from" in obj:
            return TaskOutputRef(subtask_id=obj["from"], output=obj.get("output"))
        if "artifact" in obj:
            return ArtifactRef(artifact_id=obj["artifact"])
    raise MalformedSubTask(f"{subtask_label}: bad arg value {obj!r}")


# --------------------------------------------------------------------------
# Graph types
# --------------------------------------------------------------------------

@dataclass
class SubTask:
    id: str
    task: str
    args: dict = field(default_factory=dict)
    deps: set = field(default_factory=set)

    def output_refs(self) -> list[TaskOutputRef]:
        return [v for v in self.args.values() if isinstance(v, TaskOutputRef)]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "task": self.task,
            "deps": sorted(self.deps),
            "args": {slot: arg_to_json(v) for slot, v in self.args.items()},
        }


@dataclass
class TaskGraph:
    subtasks: list[SubTask] = field(default_factory=list)
    request_id: str = ""

    def __len__(self):
        return len(self.subtasks)

    def by_id(self) -> dict[str, SubTask]:
        return {s.id: s for s in self.subtasks}

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.subtasks]


def serialize_plan(graph: TaskGraph) -> str:
    return json.dumps(graph.to_json())


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

def _extract_first_json_array(text: str):
    decoder = json.JSONDecoder()
    for pos, char in enumerate(text):
        if char != "[":
            continue
        try:
            value, _ = decoder.raw_decode(text, pos)
        except ValueError:
            continue
        if isinstance(value, list):
            return value
    raise NoPlanFound("no JSON array found in output")


def parse_plan(llm_output: str, request_id: str = "") -> TaskGraph:
    """Extract the first JSON array from arbitrary LLM text and build a
    TaskGraph. Ids `t1..tn` are assigned when absent; `{"from": ...}` refs
    are folded into deps. The result is not yet validated against the
    taxonomy (see validate_graph).
    """
    raw = _extract_first_json_array(llm_output)

    subtasks: list[SubTask] = []
    seen_ids: set[str] = set()
    for index, item in enumerate(raw, start=1):
        label = f"subtask #{index}"
        if not isinstance(item, dict):
            raise MalformedSubTask(f"{label}: expected an object, got {item!r}")
        if "task" not in item or not isinstance(item["task"], str):
            raise MalformedSubTask(f"{label}: missing 'task' field")
        subtask_id = item.get("id") or f"t{index}"
        if subtask_id in seen_ids:
            raise DuplicateId(f"duplicate subtask id {subtask_id!r}")
        seen_ids.add(subtask_id)

        args_obj = item.get("args", {})
        if not isinstance(args_obj, dict):
            raise MalformedSubTask(f"{label}: 'args' must be an object")
        args = {slot: arg_from_json(v, label) for slot, v in args_obj.items()}

        deps = set(item.get("deps", []))
        deps.update(ref.subtask_id for ref in args.values()
                    if isinstance(ref, TaskOutputRef))
        subtasks.append(SubTask(id=subtask_id, task=item["task"], args=args, deps=deps))

    return TaskGraph(subtasks=subtasks, request_id=request_id)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

class ViolationKind(str, Enum):
    UNKNOWN_TASK = "UnknownTask"
    CYCLE = "Cycle"
    MODALITY_MISMATCH = "ModalityMismatch"
    DANGLING_REF = "DanglingRef"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subtask_id: str
    detail: str = ""

    def __str__(self):
        return f"{self.kind.value}({self.subtask_id}): {self.detail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[ViolationKind]:
        return {v.kind for v in self.violations}


def _find_cycle_nodes(graph: TaskGraph) -> set[str]:
    """Nodes on some dependency cycle, by iterative DFS coloring."""
    ids = graph.by_id()
    color: dict[str, int] = {}  # 0 visiting, 1 done
    on_cycle: set[str] = set()

    def visit(start: str):
        stack = [(start, iter(sorted(ids[start].deps & ids.keys())))]
        color[start] = 0
        path = [start]
        while stack:
            node, deps = stack[-1]
            advanced = False
            for dep in deps:
                if color.get(dep) == 0:
                    # back edge: everything from dep on the path is cyclic
                    on_cycle.update(path[path.index(dep):])
                    on_cycle.add(node)
                elif dep not in color:
                    color[dep] = 0
                    stack.append((dep, iter(sorted(ids[dep].deps & ids.keys()))))
                    path.append(dep)
                    advanced = True
                    break
            if not advanced:
                color[node] = 1
                stack.pop()
                path.pop()

    for node_id in ids:
        if node_id not in color:
            visit(node_id)
    return on_cycle


def validate_graph(graph: TaskGraph, tasks: TaskRegistry) -> ValidationReport:
    report = ValidationReport()
    ids = graph.by_id()

    for sub in graph.subtasks:
        if sub.task not in tasks:
            report.violations.append(
                Violation(ViolationKind.UNKNOWN_TASK, sub.id, sub.task))
        if sub.id in sub.deps:
            report.violations.append(
                Violation(ViolationKind.CYCLE, sub.id, "self-dependency"))
        for dep in sorted(sub.deps - {sub.id}):
            if dep not in ids:
                report.violations.append(
                    Violation(ViolationKind.DANGLING_REF, sub.id,
                              f"dep {dep!r} not in graph"))
        for slot, value in sub.args.items():
            if isinstance(value, TaskOutputRef) and value.subtask_id not in ids:
                if value.subtask_id not in sub.deps:  # already reported via deps
                    report.violations.append(
                        Violation(ViolationKind.DANGLING_REF, sub.id,
                                  f"ref to missing subtask {value.subtask_id!r}"))

    for node_id in sorted(_find_cycle_nodes(graph)):
        report.violations.append(
            Violation(ViolationKind.CYCLE, node_id, "on a dependency cycle"))

    # Modality check on the primary input slot; secondary slots are free.
    for sub in graph.subtasks:
        if sub.task not in tasks:
            continue
        spec = tasks.lookup(sub.task)
        value = sub.args.get("input")
        if isinstance(value, TaskOutputRef) and value.subtask_id in ids:
            upstream = ids[value.subtask_id]
            if upstream.task in tasks:
                up_spec = tasks.lookup(upstream.task)
                if up_spec.output != spec.input:
                    report.violations.append(
                        Violation(
                            ViolationKind.MODALITY_MISMATCH, sub.id,
                            f"{upstream.task} outputs {up_spec.output.value}, "
                            f"{sub.task} expects {spec.input.value}"))
        elif isinstance(value, str) and spec.input.value != "text":
            report.violations.append(
                Violation(ViolationKind.MODALITY_MISMATCH, sub.id,
                          f"literal input for {spec.input.value} slot"))
    return report


# --------------------------------------------------------------------------
# Prompt building and history truncation
# --------------------------------------------------------------------------

@dataclass
class PlannerPrompt:
    system_preamble: str
    task_catalog: str
    exemplars: str
    history: str
    current_request: str

    def render(self) -> str:
        sections = [self.system_preamble, self.task_catalog, self.exemplars]
        if self.history:
            sections.append("Conversation so far:\n" + self.history)
        sections.append("Current request: " + self.current_request)
        return "\n\n".join(sections)


PLANNER_PREAMBLE = (
    "You are the task planner of a music-processing agent. Decompose the "
    "user's request into subtasks drawn from the supported task list and "
    "reply with ONLY a JSON array following this schema:\n"
    '[{"id": "t1", "task": "<task-name>", "deps": ["t0"], '
    '"args": {"input": "<text>" | {"from": "t0"} | {"artifact": "res-1"}}}]\n'
    "Use [] when no music task is needed and the request should be answered "
    "conversationally."
)

DEFAULT_EXEMPLARS = [
    {
        "request": "Write a pop song about rain and turn it into a melody",
        "plan": [
            {"id": "t1", "task": "lyric-generation",
             "args": {"input": "a pop song about rain"}},
            {"id": "t2", "task": "lyric-to-melody", "deps": ["t1"],
             "args": {"input": {"from": "t1"}}},
        ],
    },
    {
        "request": "What genre is this clip? (res-1)",
        "plan": [
            {"id": "t1", "task": "music-classification",
             "args": {"input": {"artifact": "res-1"}}},
        ],
    },
]


def load_exemplars(path: str | Path | None) -> list[dict]:
    if path is None:
        return copy.deepcopy(DEFAULT_EXEMPLARS)
    return json.loads(Path(path).read_text())


def render_catalog(tasks: TaskRegistry) -> str:
    lines = ["Supported tasks (name: input -> output, category):"]
    for spec in tasks.specs():
        lines.append(
            f"- {spec.name}: {spec.input.value} -> {spec.output.value}, "
            f"{spec.category.value}. {spec.description}"
        )
    return "\n".join(lines)


def render_exemplars(exemplars: list[dict]) -> str:
    lines = ["Examples:"]
    for ex in exemplars:
        lines.append(f"Request: {ex['request']}")
        lines.append(f"Plan: {json.dumps(ex['plan'])}")
    return "\n".join(lines)


def truncate_history(session: SessionState, budget: int) -> SessionState:
    """Return a copy of the session whose rendered history fits in `budget`
    characters. Whole oldest turns are dropped first; artifacts persist.
    """
    if budget <= MIN_PROMPT_BUDGET:
        raise BudgetTooSmall(f"budget {budget} <= minimum {MIN_PROMPT_BUDGET}")
    turns = list(session.turns)
    while turns and len("\n".join(render_turn(t) for t in turns)) > budget:
        turns.pop(0)
    trimmed = SessionState(
        session_id=session.session_id,
        turns=turns,
        artifact_index=session.artifact_index,
        truncation_budget=session.truncation_budget,
    )
    return trimmed


def build_planner_prompt(
    session: SessionState,
    request: str,
    tasks: TaskRegistry,
    exemplars: list[dict] | None = None,
    budget: int | None = None,
) -> PlannerPrompt:
    if not request.strip():
        raise EmptyRequest("planner request is empty")
    exemplars = exemplars if exemplars is not None else load_exemplars(None)
    budget = budget or session.truncation_budget

    preamble = PLANNER_PREAMBLE
    catalog = render_catalog(tasks)
    exemplar_text = render_exemplars(exemplars)

    fixed = len(preamble) + len(catalog) + len(exemplar_text) + len(request) + 64
    history_budget = budget - fixed
    if history_budget < 0:
        raise BudgetTooSmall(
            f"budget {budget} cannot fit preamble/catalog ({fixed} chars)")
    history_session = truncate_history(
        session, max(history_budget, MIN_PROMPT_BUDGET + 1))
    if history_budget <= MIN_PROMPT_BUDGET:
        history_session = SessionState(session_id=session.session_id)

    return PlannerPrompt(
        system_preamble=preamble,
        task_catalog=catalog,
        exemplars=exemplar_text,
        history=history_session.rendered_history(),
        current_request=request,
    )


def inject_task_flow(flow_text: str, request_id: str = "") -> TaskGraph:
    """Build a graph directly from user-supplied plan text, bypassing the
    LLM. Same schema and errors as parse_plan; the caller still runs
    validate_graph before execution.
    """
    return parse_plan(flow_text, request_id=request_id)
