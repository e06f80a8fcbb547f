"""Response generation: compiles execution results into a user-facing
answer via an LLM summarization prompt, with a deterministic template
fallback for when the LLM is unavailable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ExecutionUnfinished
from .executor import ExecutionState, Status, schedule
from .planner import TaskGraph
from .session import SessionState

RESPONDER_PREAMBLE = (
    "You are the response generator of a music-processing agent. Summarize "
    "the finished workflow for the user in friendly prose. Cite every "
    "artifact id (res-<n>) verbatim so the interface can link them."
)

DIRECT_REPLY_PREAMBLE = (
    "You are a helpful music assistant. No music tools were needed for this "
    "request; reply conversationally."
)


@dataclass
class ResultBundle:
    graph: TaskGraph
    state: ExecutionState
    # subtask id -> (artifact ids, tool rationale)
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_state(cls, state: ExecutionState) -> "ResultBundle":
        outputs = {}
        for sub in state.graph.subtasks:
            ids = [a.id for a in state.artifacts_of(sub.id)]
            selection = state.selections.get(sub.id)
            outputs[sub.id] = (ids, selection.rationale if selection else "")
        return cls(graph=state.graph, state=state, outputs=outputs)

    def artifact_ids(self) -> list[str]:
        seen = []
        for sub in self.graph.subtasks:
            for aid in self.outputs.get(sub.id, ([], ""))[0]:
                if aid not in seen:
                    seen.append(aid)
        return seen


def _require_finished(bundle: ResultBundle):
    unfinished = [sid for sid, status in bundle.state.status.items()
                  if status not in (Status.DONE, Status.FAILED)]
    if unfinished:
        raise ExecutionUnfinished(f"subtasks still pending/running: {unfinished}")


def build_response_prompt(session: SessionState, bundle: ResultBundle) -> str:
    _require_finished(bundle)
    if not bundle.graph.subtasks:
        request = session.turns[-1].text if session.turns else ""
        return f"{DIRECT_REPLY_PREAMBLE}\nUser said: {request}"

    lines = [RESPONDER_PREAMBLE, "", "Workflow results:"]
    for sub in bundle.graph.subtasks:
        status = bundle.state.status.get(sub.id, "unknown")
        ids, _rationale = bundle.outputs.get(sub.id, ([], ""))
        tool = ""
        selection = bundle.state.selections.get(sub.id)
        if selection:
            tool = f" via {selection.tool_id}"
        line = f"- {sub.id} {sub.task}{tool}: {status}"
        if ids:
            artifacts = ", ".join(
                f"{aid} ({session.artifact_index[aid].modality.value})"
                if aid in session.artifact_index else aid
                for aid in ids)
            line += f" -> {artifacts}"
        if status == Status.FAILED:
            line += f" ({bundle.state.errors.get(sub.id, 'failed')})"
        lines.append(line)
    return "\n".join(lines)


def render_fallback(bundle: ResultBundle) -> str:
    """Deterministic templated response; total over any finished state."""
    _require_finished(bundle)
    if not bundle.graph.subtasks:
        return "Nothing to run for this request."

    ids_in_order = [sid for layer in schedule(bundle.graph) for sid in layer]
    by_id = bundle.graph.by_id()
    lines = []
    for sid in ids_in_order:
        sub = by_id[sid]
        status = bundle.state.status.get(sid)
        mark = "✓" if status == Status.DONE else "✗"
        selection = bundle.state.selections.get(sid)
        tool = selection.tool_id if selection else "(no tool)"
        ids, _ = bundle.outputs.get(sid, ([], ""))
        if status == Status.DONE:
            lines.append(f"{mark} {sub.task} via {tool} -> {', '.join(ids)}")
        else:
            error = bundle.state.errors.get(sid, "failed")
            error_class = error.split(":", 1)[0]
            lines.append(f"{mark} {sub.task} via {tool} -> {error_class}")
    artifact_ids = bundle.artifact_ids()
    if artifact_ids:
        lines.append("Artifacts: " + ", ".join(artifact_ids))
    return "\n".join(lines)


def ensure_citations(response: str, bundle: ResultBundle,
                     extra_ids: list[str] | None = None) -> str:
    """Append an artifact manifest line when the LLM omitted any id, so the
    interface can always linkify results. `extra_ids` covers artifacts that
    exist outside the bundle, such as bound literal inputs."""
    ids = list(bundle.artifact_ids())
    for aid in extra_ids or []:
        if aid not in ids:
            ids.append(aid)
    missing = [aid for aid in ids if aid not in response]
    if missing:
        response = response.rstrip() + "\nArtifacts: " + ", ".join(ids)
    return response
