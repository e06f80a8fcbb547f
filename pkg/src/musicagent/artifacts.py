"""Artifacts: typed, id-addressable units of music data flowing between
subtasks, plus the per-session store that allocates `res-<n>` handles and
persists payload files.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import media
from .errors import ArtifactNotFound, DecodeFailure, UnsupportedModality
from .media import AudioBuffer, Score, SegmentLimit
from .taxonomy import Modality

EXTENSIONS = {
    Modality.TEXT: ".txt",
    Modality.SYMBOLIC: ".mid",
    Modality.AUDIO: ".wav",
}

CONTENT_TYPES = {
    Modality.TEXT: "text/plain",
    Modality.SYMBOLIC: "audio/midi",
    Modality.AUDIO: "audio/wav",
}


@dataclass(frozen=True)
class Provenance:
    source: str  # "user" | "produced"
    subtask_id: str | None = None
    tool_id: str | None = None

    @classmethod
    def user(cls) -> "Provenance":
        return cls(source="user")

    @classmethod
    def produced(cls, subtask_id: str, tool_id: str) -> "Provenance":
        return cls(source="produced", subtask_id=subtask_id, tool_id=tool_id)

    def to_json(self) -> dict:
        return {"source": self.source, "subtask_id": self.subtask_id, "tool_id": self.tool_id}


@dataclass(frozen=True)
class Artifact:
    id: str
    modality: Modality
    path: Path
    provenance: Provenance
    created_at: float
    inline_text: str | None = None  # populated for text artifacts

    @property
    def content_type(self) -> str:
        return CONTENT_TYPES[self.modality]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "modality": self.modality.value,
            "path": str(self.path),
            "provenance": self.provenance.to_json(),
            "created_at": self.created_at,
        }


class ArtifactStore:
    """Per-session artifact storage.

    Id allocation is atomic; payload files are write-once under
    ``<root>/<session_id>/res-<n>.<ext>``. Every audio payload is trimmed
    to the segment limit on the way in.
    """

    def __init__(
        self,
        session_id: str,
        root: str | Path,
        segment_limit: SegmentLimit | None = None,
        clock=time.time,
    ):
        self.session_id = session_id
        self.root = Path(root) / session_id
        self.root.mkdir(parents=True, exist_ok=True)
        self.segment_limit = segment_limit or SegmentLimit()
        self.clock = clock
        self._counter = 0
        self._lock = threading.Lock()
        self._artifacts: dict[str, Artifact] = {}

    def _next_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"res-{self._counter}"

    def _register(self, modality: Modality, data: bytes, provenance: Provenance,
                  inline_text: str | None = None) -> Artifact:
        artifact_id = self._next_id()
        path = self.root / f"{artifact_id}{EXTENSIONS[modality]}"
        path.write_bytes(data)
        artifact = Artifact(
            id=artifact_id,
            modality=modality,
            path=path,
            provenance=provenance,
            created_at=self.clock(),
            inline_text=inline_text,
        )
        with self._lock:
            self._artifacts[artifact_id] = artifact
        return artifact

    # -- typed entry points ------------------------------------------------

    def add_text(self, text: str, provenance: Provenance) -> Artifact:
        return self._register(Modality.TEXT, text.encode("utf-8"), provenance, inline_text=text)

    def add_audio(self, buf: AudioBuffer, provenance: Provenance) -> Artifact:
        buf = media.trim_to_segment(buf, self.segment_limit)
        return self._register(Modality.AUDIO, media.write_wav(buf), provenance)

    def add_score(self, score: Score, provenance: Provenance) -> Artifact:
        return self._register(Modality.SYMBOLIC, media.write_midi(score), provenance)

    def add_bytes(self, data: bytes, modality: Modality, provenance: Provenance) -> Artifact:
        """Decode-validating entry point for uploads and adapter outputs."""
        if modality == Modality.TEXT:
            try:
                text = data.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DecodeFailure(f"not UTF-8 text: {exc}") from exc
            return self.add_text(text, provenance)
        if modality == Modality.AUDIO:
            try:
                buf = media.read_wav(data)
            except Exception as exc:
                raise DecodeFailure(f"not a PCM16 WAV: {exc}") from exc
            return self.add_audio(buf, provenance)
        if modality == Modality.SYMBOLIC:
            try:
                score = media.read_midi(data)
            except Exception as exc:
                raise DecodeFailure(f"not a standard MIDI file: {exc}") from exc
            return self.add_score(score, provenance)
        raise UnsupportedModality(f"unknown modality {modality!r}")

    # -- retrieval ----------------------------------------------------------

    def get(self, artifact_id: str) -> Artifact:
        try:
            return self._artifacts[artifact_id]
        except KeyError:
            raise ArtifactNotFound(f"no artifact {artifact_id!r}") from None

    def __contains__(self, artifact_id: str) -> bool:
        return artifact_id in self._artifacts

    def ids(self) -> list[str]:
        return list(self._artifacts)

    def all(self) -> list[Artifact]:
        return list(self._artifacts.values())

    def read_payload(self, artifact_id: str) -> bytes:
        return self.get(artifact_id).path.read_bytes()

    def text(self, artifact_id: str) -> str:
        artifact = self.get(artifact_id)
        if artifact.inline_text is not None:
            return artifact.inline_text
        return artifact.path.read_text()

    def audio(self, artifact_id: str) -> AudioBuffer:
        return media.read_wav(self.read_payload(artifact_id))

    def score(self, artifact_id: str) -> Score:
        return media.read_midi(self.read_payload(artifact_id))
