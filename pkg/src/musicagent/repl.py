"""Interactive chat loop over the same pipeline as the HTTP API.

Commands: /tasks, /tools, /history, /clear, /flow <json>, /quit.
Anything else is sent to the agent as a request.
"""

from __future__ import annotations

import sys

from .errors import MusicAgentError
from .gateway import ChatResult, MusicAgent

PROMPT = "you> "


def repl(agent: MusicAgent, session_id: str = "repl",
         input_lines=None, out=sys.stdout) -> list[ChatResult]:
    """Run the loop. `input_lines` (an iterable of strings) replaces stdin
    for scripted runs; collected ChatResults are returned either way.
    """
    results: list[ChatResult] = []

    def emit(text=""):
        print(text, file=out)

    def read_lines():
        if input_lines is not None:
            yield from input_lines
            return
        while True:
            try:
                yield input(PROMPT)
            except EOFError:
                return

    emit("musicagent ready. /tasks /tools /history /clear /flow <json> /quit")
    for line in read_lines():
        line = line.strip()
        if not line:
            continue
        if line in ("/quit", "/exit"):
            break
        try:
            if line == "/tasks":
                for spec in agent.tasks.specs():
                    emit(f"{spec.name}: {spec.input.value} -> {spec.output.value} "
                         f"({spec.category.value})")
            elif line == "/tools":
                for tool in agent.tools.all():
                    emit(f"{tool.id}: {sorted(tool.supported_tasks)}")
            elif line == "/history":
                session, _ = agent.session(session_id)
                for turn in session.turns:
                    emit(f"[{turn.role}] {turn.text}")
            elif line == "/clear":
                agent.clear_history(session_id)
                emit("history cleared (artifacts retained)")
            else:
                # /flow <json> is forwarded verbatim; agent.chat handles it
                result = agent.chat(session_id, line)
                results.append(result)
                _print_result(result, emit)
        except MusicAgentError as exc:
            emit(f"error: {type(exc).__name__}: {exc}")
    return results


def _print_result(result: ChatResult, emit):
    if result.plan.subtasks:
        emit(f"plan ({len(result.plan.subtasks)} subtasks):")
        for sub in result.plan.subtasks:
            deps = f" <- {sorted(sub.deps)}" if sub.deps else ""
            emit(f"  {sub.id}: {sub.task}{deps}")
        for event in result.trace:
            emit(f"  [{event.status}] {event.subtask_id} {event.detail}")
    if result.degraded:
        emit("(degraded mode)")
    emit(result.response)
    for artifact in result.artifacts:
        emit(f"  {artifact['id']} ({artifact['modality']}): {artifact['path']}")
