"""Graph execution: ready-set scheduling, input binding, adapter dispatch,
a budgeted lazy-loading resource ledger, and failure propagation that
skips dependents while independent branches continue.
"""

from __future__ import annotations

import glob
import json
import os
import shlex
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from email import message_from_bytes
from pathlib import Path

import httpx

from . import stubs
from .artifacts import Artifact, ArtifactStore, Provenance
from .errors import (
    AdapterFailure,
    CostExceedsBudget,
    InvalidGraph,
    ModalityMismatch,
    ResourceTimeout,
    UnresolvedRef,
    UnsupportedTask,
)
from .planner import ArtifactRef, SubTask, TaskGraph, TaskOutputRef, validate_graph
from .registry import Selection, SelectionPolicy, ToolDescriptor, ToolRegistry
from .taxonomy import Modality, TaskRegistry

DEFAULT_TIMEOUT_S = 120.0


# --------------------------------------------------------------------------
# Execution state
# --------------------------------------------------------------------------

class Status:
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"

TERMINAL = {Status.DONE, Status.FAILED}


@dataclass
class ExecutionEvent:
    at: float
    subtask_id: str
    status: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"at": self.at, "subtask": self.subtask_id,
                "status": self.status, "detail": self.detail}


@dataclass
class ExecutionState:
    graph: TaskGraph
    status: dict = field(default_factory=dict)       # id -> Status value
    errors: dict = field(default_factory=dict)       # id -> error text
    outputs: dict = field(default_factory=dict)      # id -> [(name|None, Artifact)]
    selections: dict = field(default_factory=dict)   # id -> Selection
    trace: list = field(default_factory=list)        # ExecutionEvents, append-only

    def artifacts_of(self, subtask_id: str) -> list[Artifact]:
        return [a for _, a in self.outputs.get(subtask_id, [])]

    def primary_output(self, subtask_id: str, name: str | None = None) -> Artifact:
        pairs = self.outputs.get(subtask_id, [])
        if not pairs:
            raise UnresolvedRef(f"subtask {subtask_id!r} produced no outputs")
        if name is None:
            return pairs[0][1]
        for out_name, artifact in pairs:
            if out_name == name:
                return artifact
        raise UnresolvedRef(f"subtask {subtask_id!r} has no output {name!r}")

    def finished(self) -> bool:
        return all(s in TERMINAL for s in self.status.values())

    def trace_json(self) -> str:
        """Line-delimited JSON event export."""
        return "\n".join(json.dumps(e.to_json()) for e in self.trace)


# --------------------------------------------------------------------------
# Scheduling
# --------------------------------------------------------------------------

def schedule(graph: TaskGraph) -> list[list[str]]:
    """Kahn layering: each layer's subtasks are mutually independent and
    every dependency sits in an earlier layer.
    """
    ids = graph.by_id()
    remaining = {s.id: set(s.deps) & ids.keys() for s in graph.subtasks}
    layers: list[list[str]] = []
    while remaining:
        ready = sorted(sid for sid, deps in remaining.items() if not deps)
        if not ready:
            raise InvalidGraph([f"cycle among {sorted(remaining)}"])
        layers.append(ready)
        for sid in ready:
            del remaining[sid]
        for deps in remaining.values():
            deps.difference_update(ready)
    return layers


def dependents_closure(graph: TaskGraph, roots: set[str]) -> set[str]:
    """All subtasks transitively depending on any root (roots excluded)."""
    children: dict[str, set[str]] = {s.id: set() for s in graph.subtasks}
    for s in graph.subtasks:
        for dep in s.deps:
            if dep in children:
                children[dep].add(s.id)
    seen: set[str] = set()
    frontier = list(roots)
    while frontier:
        node = frontier.pop()
        for child in children.get(node, ()):
            if child not in seen:
                seen.add(child)
                frontier.append(child)
    return seen - roots


# --------------------------------------------------------------------------
# Resource ledger
# --------------------------------------------------------------------------

class ResourceLedger:
    """Budgeted lazy loading with LRU eviction of idle tools.

    Tools stay loaded after use; acquiring a new tool evicts the least
    recently used idle tools until the budget fits. Running tools are never
    evicted; if everything loaded is running and the budget cannot fit,
    acquisition blocks up to `timeout_s` then raises ResourceTimeout.
    """

    def __init__(self, budget: int, timeout_s: float = DEFAULT_TIMEOUT_S,
                 unload_hook=None):
        self.budget = budget
        self.timeout_s = timeout_s
        self.unload_hook = unload_hook
        self.loaded: dict[str, int] = {}
        self._lru: list[str] = []  # least recently used first
        self._running: dict[str, int] = {}
        self._cond = threading.Condition()

    @property
    def loaded_total(self) -> int:
        return sum(self.loaded.values())

    def _evict_until_fits(self, needed: int) -> bool:
        while self.loaded_total + needed > self.budget:
            idle = [tid for tid in self._lru if not self._running.get(tid)]
            if not idle:
                return False
            victim = idle[0]
            self._lru.remove(victim)
            del self.loaded[victim]
            if self.unload_hook:
                self.unload_hook(victim)
        return True

    def acquire(self, tool_id: str, cost: int):
        if cost > self.budget:
            raise CostExceedsBudget(
                f"tool {tool_id!r} cost {cost} exceeds budget {self.budget}")
        deadline = time.monotonic() + self.timeout_s
        with self._cond:
            while True:
                if tool_id in self.loaded:
                    self._lru.remove(tool_id)
                    self._lru.append(tool_id)
                    self._running[tool_id] = self._running.get(tool_id, 0) + 1
                    return
                if self._evict_until_fits(cost):
                    self.loaded[tool_id] = cost
                    self._lru.append(tool_id)
                    self._running[tool_id] = self._running.get(tool_id, 0) + 1
                    return
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._cond.wait(timeout=remaining):
                    raise ResourceTimeout(
                        f"could not fit tool {tool_id!r} (cost {cost}) within "
                        f"{self.timeout_s}s; budget {self.budget} busy")

    def release(self, tool_id: str):
        with self._cond:
            count = self._running.get(tool_id, 0)
            if count <= 1:
                self._running.pop(tool_id, None)
            else:
                self._running[tool_id] = count - 1
            self._cond.notify_all()


# --------------------------------------------------------------------------
# Input binding
# --------------------------------------------------------------------------

def bind_inputs(
    subtask: SubTask,
    store: ArtifactStore,
    state: ExecutionState,
    tasks: TaskRegistry,
) -> dict[str, Artifact]:
    spec = tasks.lookup(subtask.task)
    bound: dict[str, Artifact] = {}
    for slot, value in subtask.args.items():
        if isinstance(value, str):
            bound[slot] = store.add_text(value, Provenance.user())
        elif isinstance(value, ArtifactRef):
            try:
                bound[slot] = store.get(value.artifact_id)
            except Exception:
                raise UnresolvedRef(
                    f"{subtask.id}: artifact {value.artifact_id!r} not found") from None
        elif isinstance(value, TaskOutputRef):
            if state.status.get(value.subtask_id) != Status.DONE:
                raise UnresolvedRef(
                    f"{subtask.id}: subtask {value.subtask_id!r} has no completed output")
            bound[slot] = state.primary_output(value.subtask_id, value.output)
        else:
            raise UnresolvedRef(f"{subtask.id}: unbindable arg in slot {slot!r}")

    primary = bound.get("input")
    if primary is not None and primary.modality != spec.input:
        raise ModalityMismatch(
            f"{subtask.id}: slot 'input' is {primary.modality.value}, "
            f"task {subtask.task} expects {spec.input.value}")
    return bound


# --------------------------------------------------------------------------
# Adapters
# --------------------------------------------------------------------------

MODALITY_BY_EXT = {".txt": Modality.TEXT, ".mid": Modality.SYMBOLIC,
                   ".midi": Modality.SYMBOLIC, ".wav": Modality.AUDIO}


def _normalize_outputs(raw) -> list[tuple[str | None, Artifact]]:
    out = []
    for item in raw:
        if isinstance(item, Artifact):
            out.append((None, item))
        else:
            name, artifact = item
            out.append((name, artifact))
    return out


def invoke(
    tool: ToolDescriptor,
    task: str,
    inputs: dict[str, Artifact],
    store: ArtifactStore,
    subtask_id: str,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    http_client: httpx.Client | None = None,
) -> list[tuple[str | None, Artifact]]:
    if task not in tool.supported_tasks:
        raise UnsupportedTask(f"tool {tool.id!r} does not support task {task!r}")
    provenance = Provenance.produced(subtask_id, tool.id)
    adapter = tool.adapter

    if adapter.kind == "builtin":
        fn = stubs.BUILTINS.get(adapter.entry or "")
        if fn is None:
            raise AdapterFailure(f"no builtin entry {adapter.entry!r}")
        return _normalize_outputs(fn(task, inputs, store, provenance))

    if adapter.kind == "remote":
        return _normalize_outputs(
            stubs.remote_provider(adapter.provider or "", task, inputs, store, provenance))

    if adapter.kind == "subprocess":
        return _invoke_subprocess(adapter.template or "", task, inputs, store,
                                  provenance, timeout_s)

    if adapter.kind == "http":
        return _invoke_http(adapter.template or "", task, inputs, store,
                            provenance, timeout_s, http_client)

    raise AdapterFailure(f"unknown adapter kind {adapter.kind!r}")


def _invoke_subprocess(template, task, inputs, store, provenance, timeout_s):
    """CLI contract: <command> --task <name> --out <dir> [--<slot> <path>]...
    Exit 0 = success. Stdout may declare outputs as
    {"outputs":[{"slot","path","modality"}]}; otherwise the output directory
    is globbed and modality inferred from extensions.
    """
    with tempfile.TemporaryDirectory(prefix="musicagent-tool-") as out_dir:
        cmd = shlex.split(template) + ["--task", task, "--out", out_dir]
        for slot, artifact in sorted(inputs.items()):
            cmd += [f"--{slot}", str(artifact.path)]
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=timeout_s)
        except subprocess.TimeoutExpired as exc:
            raise AdapterFailure(f"tool command timed out after {timeout_s}s",
                                 diagnostics=str(exc)) from exc
        except OSError as exc:
            raise AdapterFailure(f"tool command failed to start: {exc}") from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", "replace")[-2000:]
            raise AdapterFailure(
                f"tool command exited {proc.returncode}",
                exit_code=proc.returncode, diagnostics=stderr)

        declared = None
        for line in proc.stdout.decode("utf-8", "replace").splitlines():
            line = line.strip()
            if line.startswith("{"):
                try:
                    obj = json.loads(line)
                except ValueError:
                    continue
                if isinstance(obj, dict) and "outputs" in obj:
                    declared = obj["outputs"]
                    break

        results = []
        if declared is not None:
            for item in declared:
                path = Path(item["path"])
                if not path.is_absolute():
                    path = Path(out_dir) / path
                modality = Modality(item["modality"])
                artifact = store.add_bytes(path.read_bytes(), modality, provenance)
                results.append((item.get("slot"), artifact))
        else:
            for path in sorted(glob.glob(os.path.join(out_dir, "*"))):
                ext = Path(path).suffix.lower()
                modality = MODALITY_BY_EXT.get(ext)
                if modality is None:
                    continue
                artifact = store.add_bytes(Path(path).read_bytes(), modality, provenance)
                results.append((Path(path).stem, artifact))
        if not results:
            raise AdapterFailure("tool command produced no outputs")
        return results


def _invoke_http(url, task, inputs, store, provenance, timeout_s, client):
    """POST multipart {task, <slot> files...}; response is either
    multipart (parts carry X-Slot / X-Modality headers or guessable
    extensions) or JSON {"outputs":[{"slot","modality","data_b64"}]}.
    """
    import base64

    close_client = client is None
    client = client or httpx.Client(timeout=timeout_s)
    files = {
        slot: (artifact.path.name, artifact.path.read_bytes(), artifact.content_type)
        for slot, artifact in inputs.items()
    }
    try:
        response = client.post(url, data={"task": task}, files=files, timeout=timeout_s)
        if response.status_code >= 400:
            raise AdapterFailure(
                f"tool endpoint returned HTTP {response.status_code}",
                diagnostics=response.text[:2000])
    except httpx.HTTPError as exc:
        raise AdapterFailure(f"tool endpoint unreachable: {exc}") from exc
    finally:
        if close_client:
            client.close()

    content_type = response.headers.get("content-type", "")
    results = []
    if content_type.startswith("multipart/"):
        blob = (f"Content-Type: {content_type}\r\n\r\n").encode() + response.content
        message = message_from_bytes(blob)
        for part in message.walk():
            if part.is_multipart():
                continue
            payload = part.get_payload(decode=True)
            if payload is None:
                continue
            slot = part.get("X-Slot") or part.get_filename()
            modality_header = part.get("X-Modality")
            if modality_header:
                modality = Modality(modality_header)
            else:
                ext = Path(part.get_filename() or "").suffix.lower()
                modality = MODALITY_BY_EXT.get(ext, Modality.TEXT)
            results.append((slot, store.add_bytes(payload, modality, provenance)))
    elif "json" in content_type:
        for item in response.json().get("outputs", []):
            payload = base64.b64decode(item["data_b64"])
            artifact = store.add_bytes(payload, Modality(item["modality"]), provenance)
            results.append((item.get("slot"), artifact))
    else:
        raise AdapterFailure(f"unexpected response content type {content_type!r}")
    if not results:
        raise AdapterFailure("tool endpoint returned no artifacts")
    return results


# --------------------------------------------------------------------------
# The run loop
# --------------------------------------------------------------------------

class Executor:
    def __init__(
        self,
        tasks: TaskRegistry,
        tools: ToolRegistry,
        store: ArtifactStore,
        policy: SelectionPolicy | None = None,
        ledger: ResourceLedger | None = None,
        llm=None,
        clock=time.time,
        parallelism: int = 1,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        http_client: httpx.Client | None = None,
    ):
        self.tasks = tasks
        self.tools = tools
        self.store = store
        self.policy = policy or SelectionPolicy()
        self.ledger = ledger or ResourceLedger(budget=16)
        self.llm = llm
        self.clock = clock
        self.parallelism = max(1, parallelism)
        self.timeout_s = timeout_s
        self.http_client = http_client
        self._state_lock = threading.Lock()

    def _event(self, state: ExecutionState, subtask_id: str, status: str, detail=""):
        with self._state_lock:
            state.status[subtask_id] = status
            state.trace.append(
                ExecutionEvent(at=self.clock(), subtask_id=subtask_id,
                               status=status, detail=detail))

    def run(self, graph: TaskGraph, context: str = "") -> ExecutionState:
        report = validate_graph(graph, self.tasks)
        if not report.ok:
            raise InvalidGraph(report.violations)

        state = ExecutionState(graph=graph)
        for sub in graph.subtasks:
            state.status[sub.id] = Status.PENDING

        ids = graph.by_id()
        for layer in schedule(graph):
            runnable = []
            for sid in layer:
                failed_deps = [d for d in sorted(ids[sid].deps)
                               if state.status.get(d) == Status.FAILED]
                if failed_deps:
                    detail = f"skipped: upstream {failed_deps[0]} failed"
                    state.errors[sid] = detail
                    self._event(state, sid, Status.FAILED, detail)
                else:
                    self._event(state, sid, Status.READY)
                    runnable.append(sid)

            if not runnable:
                continue
            if self.parallelism == 1 or len(runnable) == 1:
                for sid in runnable:
                    self._run_subtask(ids[sid], state, context)
            else:
                with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                    futures = [pool.submit(self._run_subtask, ids[sid], state, context)
                               for sid in runnable]
                    for future in futures:
                        future.result()
        return state

    def _run_subtask(self, sub: SubTask, state: ExecutionState, context: str):
        try:
            selection = self.tools.select_tool(
                sub.task, self.policy, context=context, llm=self.llm)
            state.selections[sub.id] = selection
            tool = self.tools.get(selection.tool_id)
            inputs = bind_inputs(sub, self.store, state, self.tasks)
            self.ledger.acquire(tool.id, tool.resource_cost)
            self._event(state, sub.id, Status.RUNNING, detail=tool.id)
            try:
                outputs = invoke(
                    tool, sub.task, inputs, self.store, sub.id,
                    timeout_s=self.timeout_s, http_client=self.http_client)
            finally:
                self.ledger.release(tool.id)
            state.outputs[sub.id] = outputs
            artifact_ids = ",".join(a.id for _, a in outputs)
            self._event(state, sub.id, Status.DONE, detail=artifact_ids)
        except Exception as exc:
            detail = f"{type(exc).__name__}: {exc}"
            state.errors[sub.id] = detail
            self._event(state, sub.id, Status.FAILED, detail=detail)
