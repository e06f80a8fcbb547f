"""Per-conversation session state: ordered turns, the artifact index, and
JSON persistence. One writer per session; distinct sessions independent.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .artifacts import Artifact, ArtifactStore

DEFAULT_TRUNCATION_BUDGET = 6000  # characters of rendered prompt


@dataclass
class Turn:
    role: str  # "user" | "agent"
    text: str
    artifact_ids: list[str] = field(default_factory=list)
    at: float = 0.0

    def to_json(self) -> dict:
        return {"role": self.role, "text": self.text,
                "artifact_ids": self.artifact_ids, "at": self.at}

    @classmethod
    def from_json(cls, obj: dict) -> "Turn":
        return cls(role=obj["role"], text=obj["text"],
                   artifact_ids=list(obj.get("artifact_ids", [])),
                   at=obj.get("at", 0.0))


def render_turn(turn: Turn) -> str:
    return f"{turn.role}: {turn.text}"


@dataclass
class SessionState:
    session_id: str
    turns: list[Turn] = field(default_factory=list)
    artifact_index: dict[str, Artifact] = field(default_factory=dict)
    truncation_budget: int = DEFAULT_TRUNCATION_BUDGET

    def append_turn(self, turn: Turn) -> "SessionState":
        self.turns.append(turn)
        return self

    def clear_history(self) -> "SessionState":
        """Drop the LLM context only; artifacts stay addressable."""
        self.turns = []
        return self

    def index_artifact(self, artifact: Artifact):
        self.artifact_index[artifact.id] = artifact

    def rendered_history(self) -> str:
        return "\n".join(render_turn(t) for t in self.turns)

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "truncation_budget": self.truncation_budget,
            "turns": [t.to_json() for t in self.turns],
            "artifacts": [a.to_json() for a in self.artifact_index.values()],
        }

    def save(self, sessions_dir: str | Path):
        path = Path(sessions_dir) / f"{self.session_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def from_json(cls, obj: dict, store: ArtifactStore | None = None) -> "SessionState":
        session = cls(
            session_id=obj["session_id"],
            turns=[Turn.from_json(t) for t in obj.get("turns", [])],
            truncation_budget=obj.get("truncation_budget", DEFAULT_TRUNCATION_BUDGET),
        )
        if store is not None:
            for artifact in store.all():
                session.index_artifact(artifact)
        return session
