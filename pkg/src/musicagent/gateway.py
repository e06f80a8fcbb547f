"""Entry-point wiring: configuration, the MusicAgent facade driving
planner -> selector -> executor -> responder, artifact upload, and the
chat result surface shared by the HTTP API and the REPL.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import media, planner as planner_mod, responder as responder_mod
from .artifacts import Artifact, ArtifactStore, Provenance
from .errors import (
    InvalidGraph,
    LlmUnavailable,
    NoPlanFound,
    UnsupportedModality,
)
from .executor import ExecutionState, Executor, ResourceLedger
from .llm import LlmBridge, MockLlm, RemoteChatLlm
from .media import SegmentLimit
from .planner import TaskGraph, build_planner_prompt, inject_task_flow, parse_plan, validate_graph
from .registry import SelectionPolicy, ToolDescriptor, ToolRegistry
from .responder import ResultBundle, build_response_prompt, ensure_citations, render_fallback
from .session import SessionState, Turn
from .taxonomy import Modality, TaskRegistry, TaskSpec

DEGRADED_RESPONSE = (
    "The language model backend is currently unavailable, so this is a "
    "degraded reply. Your request was recorded; please retry shortly."
)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass
class LlmConfig:
    endpoint: str = ""
    model: str = "gpt-4"
    temperatures: dict = field(default_factory=dict)


@dataclass
class PathsConfig:
    tasks_file: str = ""       # empty -> packaged seed
    tools_file: str = ""
    exemplars_file: str = ""
    artifacts_dir: str = "artifacts"
    sessions_dir: str = "sessions"


@dataclass
class ExecutorConfig:
    parallelism: int = 1
    timeout_s: float = 120.0
    resource_budget: int = 16


@dataclass
class MediaConfig:
    segment_seconds: float = 30.0


@dataclass
class SelectionConfig:
    mode: str = "deterministic"
    weights: dict = field(default_factory=lambda: {"downloads": 0.5, "stars": 0.3, "likes": 0.2})


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8075


@dataclass
class PlannerConfig:
    context_budget: int = 6000


@dataclass
class Config:
    llm: LlmConfig = field(default_factory=LlmConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    media: MediaConfig = field(default_factory=MediaConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        if self.executor.parallelism < 1 or self.executor.timeout_s <= 0:
            raise ValueError("executor settings must be positive")
        if self.media.segment_seconds <= 0 or self.executor.resource_budget <= 0:
            raise ValueError("segment limit and resource budget must be positive")

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        obj = json.loads(Path(path).read_text())
        return cls(
            llm=LlmConfig(**obj.get("llm", {})),
            paths=PathsConfig(**obj.get("paths", {})),
            executor=ExecutorConfig(**obj.get("executor", {})),
            media=MediaConfig(**obj.get("media", {})),
            selection=SelectionConfig(**obj.get("selection", {})),
            server=ServerConfig(**obj.get("server", {})),
            planner=PlannerConfig(**obj.get("planner", {})),
        )


# --------------------------------------------------------------------------
# Chat result
# --------------------------------------------------------------------------

@dataclass
class ChatResult:
    session_id: str
    response: str
    plan: TaskGraph
    trace: list  # ExecutionEvents
    artifacts: list  # dicts: {id, modality, path, url, preview?}
    degraded: bool = False

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "response": self.response,
            "plan": self.plan.to_json(),
            "trace": [e.to_json() for e in self.trace],
            "artifacts": self.artifacts,
            "degraded": self.degraded,
        }


# --------------------------------------------------------------------------
# The agent
# --------------------------------------------------------------------------

class MusicAgent:
    """Facade over the whole pipeline. One instance per process; sessions
    are independent and requests within a session serialize.
    """

    def __init__(self, config: Config | str | Path | None = None,
                 llm_backend=None, clock=time.time):
        if isinstance(config, (str, Path)):
            config = Config.load(config)
        self.config = config or Config()
        self.clock = clock

        paths = self.config.paths
        self.tasks = (TaskRegistry.from_file(paths.tasks_file)
                      if paths.tasks_file else TaskRegistry.seeded())
        self.tools = (ToolRegistry.from_file(self.tasks, paths.tools_file)
                      if paths.tools_file else ToolRegistry.seeded(self.tasks))
        self.exemplars = planner_mod.load_exemplars(paths.exemplars_file or None)

        if llm_backend is None and self.config.llm.endpoint:
            llm_backend = RemoteChatLlm(self.config.llm.endpoint, self.config.llm.model)
        self.llm = (LlmBridge(llm_backend, self.config.llm.temperatures)
                    if llm_backend is not None else None)

        self.policy = SelectionPolicy(mode=self.config.selection.mode,
                                      weights=dict(self.config.selection.weights))
        self.ledger = ResourceLedger(budget=self.config.executor.resource_budget,
                                     timeout_s=self.config.executor.timeout_s)
        self.segment_limit = SegmentLimit(self.config.media.segment_seconds)

        self._sessions: dict[str, tuple[SessionState, ArtifactStore]] = {}
        self._session_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- session management --------------------------------------------------

    def session(self, session_id: str) -> tuple[SessionState, ArtifactStore]:
        with self._registry_lock:
            if session_id not in self._sessions:
                store = ArtifactStore(
                    session_id, self.config.paths.artifacts_dir,
                    segment_limit=self.segment_limit, clock=self.clock)
                session = SessionState(
                    session_id=session_id,
                    truncation_budget=self.config.planner.context_budget)
                self._sessions[session_id] = (session, store)
                self._session_locks[session_id] = threading.Lock()
            return self._sessions[session_id]

    def _lock_for(self, session_id: str) -> threading.Lock:
        self.session(session_id)
        return self._session_locks[session_id]

    def find_artifact(self, artifact_id: str,
                      session_id: str | None = None) -> tuple[Artifact, ArtifactStore]:
        if session_id is not None:
            _, store = self.session(session_id)
            return store.get(artifact_id), store
        # Unqualified lookup: newest registration wins across sessions.
        best = None
        for _, store in self._sessions.values():
            if artifact_id in store:
                artifact = store.get(artifact_id)
                if best is None or artifact.created_at >= best[0].created_at:
                    best = (artifact, store)
        if best is None:
            from .errors import ArtifactNotFound
            raise ArtifactNotFound(f"no artifact {artifact_id!r}")
        return best

    # -- extension API (custom tasks / tools) ------------------------------------

    def register_task(self, spec: TaskSpec, replace: bool = False):
        self.tasks.register(spec, replace=replace)

    def register_tool(self, desc: ToolDescriptor):
        self.tools.register_tool(desc)

    def update_tool_attributes(self, tool_id: str, patch: dict) -> ToolDescriptor:
        return self.tools.update_tool_attributes(tool_id, patch)

    # -- llm helpers ------------------------------------------------------------

    def _complete(self, prompt: str, purpose: str) -> str:
        if self.llm is None:
            raise LlmUnavailable("no LLM backend configured")
        return self.llm.complete_text(prompt, purpose=purpose)

    # -- upload -------------------------------------------------------------------

    def upload_artifact(self, session_id: str, data: bytes, modality: str) -> Artifact:
        try:
            mod = Modality(modality)
        except ValueError:
            raise UnsupportedModality(f"unknown modality {modality!r}") from None
        session, store = self.session(session_id)
        artifact = store.add_bytes(data, mod, Provenance.user())
        session.index_artifact(artifact)
        self._persist(session)
        return artifact

    # -- chat -------------------------------------------------------------------

    def chat(self, session_id: str, text: str) -> ChatResult:
        with self._lock_for(session_id):
            return self._chat_locked(session_id, text)

    def _chat_locked(self, session_id: str, text: str) -> ChatResult:
        session, store = self.session(session_id)
        known_before = set(store.ids())
        degraded = False

        if text.strip().startswith("/flow"):
            flow_text = text.strip()[len("/flow"):].strip()
            graph = inject_task_flow(flow_text, request_id=session_id)
        else:
            prompt = build_planner_prompt(
                session, text, self.tasks,
                exemplars=self.exemplars, budget=session.truncation_budget)
            try:
                reply = self._complete(prompt.render(), "planner")
            except LlmUnavailable:
                return self._finish_degraded(session, store, text)
            try:
                graph = parse_plan(reply, request_id=session_id)
            except NoPlanFound as first_error:
                repair_prompt = (
                    prompt.render()
                    + f"\n\nYour previous reply could not be parsed ({first_error}). "
                      "Reply with ONLY the JSON array."
                )
                try:
                    reply = self._complete(repair_prompt, "planner")
                except LlmUnavailable:
                    return self._finish_degraded(session, store, text)
                graph = parse_plan(reply, request_id=session_id)

        report = validate_graph(graph, self.tasks)
        if not report.ok:
            raise InvalidGraph(report.violations)

        session.append_turn(Turn(role="user", text=text, at=self.clock()))

        if not graph.subtasks:
            state = ExecutionState(graph=graph)
            bundle = ResultBundle.from_state(state)
            prompt_text = build_response_prompt(session, bundle)
            try:
                response = self._complete(prompt_text, "responder")
            except LlmUnavailable:
                response = DEGRADED_RESPONSE
                degraded = True
        else:
            executor = Executor(
                self.tasks, self.tools, store,
                policy=self.policy, ledger=self.ledger, llm=self.llm,
                clock=self.clock, parallelism=self.config.executor.parallelism,
                timeout_s=self.config.executor.timeout_s)
            state = executor.run(graph, context=text)
            for artifact in store.all():
                session.index_artifact(artifact)
            bundle = ResultBundle.from_state(state)
            new_so_far = [aid for aid in store.ids() if aid not in known_before]
            try:
                response = self._complete(
                    build_response_prompt(session, bundle), "responder")
                response = ensure_citations(response, bundle,
                                            extra_ids=new_so_far)
            except LlmUnavailable:
                response = render_fallback(bundle)
                degraded = True

        new_ids = [aid for aid in store.ids() if aid not in known_before]
        session.append_turn(
            Turn(role="agent", text=response, artifact_ids=new_ids, at=self.clock()))
        self._persist(session)

        return ChatResult(
            session_id=session_id,
            response=response,
            plan=state.graph,
            trace=list(state.trace),
            artifacts=[self._artifact_view(store, aid) for aid in new_ids],
            degraded=degraded,
        )

    def _finish_degraded(self, session, store, text) -> ChatResult:
        session.append_turn(Turn(role="user", text=text, at=self.clock()))
        session.append_turn(
            Turn(role="agent", text=DEGRADED_RESPONSE, at=self.clock()))
        self._persist(session)
        return ChatResult(
            session_id=session.session_id,
            response=DEGRADED_RESPONSE,
            plan=TaskGraph(subtasks=[], request_id=session.session_id),
            trace=[],
            artifacts=[],
            degraded=True,
        )

    def _artifact_view(self, store: ArtifactStore, artifact_id: str) -> dict:
        artifact = store.get(artifact_id)
        view = {
            "id": artifact.id,
            "modality": artifact.modality.value,
            "path": str(artifact.path),
            "url": f"/artifacts/{artifact.id}?session_id={store.session_id}",
        }
        if artifact.modality == Modality.TEXT:
            view["preview"] = store.text(artifact.id)
        elif artifact.modality == Modality.SYMBOLIC:
            view["preview"] = media.score_to_text(store.score(artifact.id))
        elif artifact.modality == Modality.AUDIO:
            view["duration_seconds"] = round(
                store.audio(artifact.id).duration_seconds, 3)
        return view

    def session_view(self, session_id: str) -> dict:
        session, store = self.session(session_id)
        return {
            "session_id": session_id,
            "turns": [t.to_json() for t in session.turns],
            "artifacts": [self._artifact_view(store, aid) for aid in store.ids()],
        }

    def clear_history(self, session_id: str):
        session, _ = self.session(session_id)
        session.clear_history()
        self._persist(session)

    def _persist(self, session: SessionState):
        session.save(self.config.paths.sessions_dir)
