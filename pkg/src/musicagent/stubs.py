"""Deterministic stub tools standing in for the neural models of the
seeded registry. Each honors the modality contract of its tasks; outputs
are pure functions of the inputs so end-to-end runs are reproducible.

Builtin entry signature:
    fn(task, inputs, store, provenance) -> list[Artifact]
where `inputs` maps slot name -> Artifact.
"""

from __future__ import annotations

import hashlib

from . import media
from .artifacts import Artifact, ArtifactStore, Provenance
from .errors import UnsupportedTask
from .media import NoteEvent, Score
from .taxonomy import Modality

PENTATONIC = (0, 2, 4, 7, 9)  # offsets from the root, C major pentatonic


def _digest(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


def _input_text(inputs: dict, store: ArtifactStore) -> str:
    return store.text(inputs["input"].id)


def _melody_from_text(text: str, bars: int = 4) -> Score:
    seed = _digest(text)
    tpq = 480
    notes = []
    tick = 0
    for i in range(bars * 4):
        byte = seed[i % len(seed)]
        pitch = 60 + PENTATONIC[byte % 5] + 12 * ((byte >> 5) % 2)
        duration = tpq // 2 if byte % 3 else tpq
        notes.append(NoteEvent(pitch=pitch, start_tick=tick, duration_ticks=duration,
                               velocity=70 + byte % 50))
        tick += duration
    return Score(ticks_per_quarter=tpq, tracks=[notes])


def _tone_from_text(text: str, seconds: float = 4.0):
    """Small chord rendered from the text hash; always well under 30 s."""
    seed = _digest(text)
    pitches = [57 + seed[i] % 24 for i in range(3)]
    tpq = 480
    ticks = int(seconds * 2 * tpq)  # at default tempo, 2 quarters per second
    notes = [NoteEvent(pitch=p, start_tick=0, duration_ticks=ticks) for p in set(pitches)]
    return media.render_score_preview(Score(ticks_per_quarter=tpq, tracks=[notes]))


# --------------------------------------------------------------------------
# Builtin entries
# --------------------------------------------------------------------------

def score_generator(task, inputs, store, provenance):
    """text-to-symbolic-music / lyric-to-melody."""
    text = _input_text(inputs, store)
    return [store.add_score(_melody_from_text(text), provenance)]


def score_previewer(task, inputs, store, provenance):
    """Custom symbolic -> audio rendering via the sine preview."""
    score = store.score(inputs["input"].id)
    return [store.add_audio(media.render_score_preview(score, store.segment_limit),
                            provenance)]


def voice_synth(task, inputs, store, provenance):
    """singing-voice-synthesis: text in, audio out. An optional secondary
    `melody` slot (symbolic) steers the rendered pitches when present."""
    melody_ref = inputs.get("melody")
    if melody_ref is not None and melody_ref.modality == Modality.SYMBOLIC:
        score = store.score(melody_ref.id)
    else:
        score = _melody_from_text(_input_text(inputs, store))
    buf = media.render_score_preview(score, store.segment_limit)
    return [store.add_audio(buf, provenance)]


def audio_generator(task, inputs, store, provenance):
    """text-to-audio. Note-list text renders exactly; prose renders a
    deterministic hash-derived chord."""
    text = _input_text(inputs, store)
    if media.looks_like_note_text(text):
        buf = media.render_score_preview(media.text_to_score(text), store.segment_limit)
    else:
        buf = _tone_from_text(text)
    return [store.add_audio(buf, provenance)]


def timbre_shift(task, inputs, store, provenance):
    """timbre-transfer: deterministic spectral-ish mangling (sample-wise
    waveshaping), same duration and rate."""
    buf = store.audio(inputs["input"].id)
    shaped = [
        [media._clamp(int(v * 0.8) + (abs(v) >> 3)) for v in ch] for ch in buf.samples
    ]
    return [store.add_audio(media.AudioBuffer(buf.sample_rate, shaped), provenance)]


def accompanist(task, inputs, store, provenance):
    """accompaniment: adds a bass track one octave below the melody roots."""
    score = store.score(inputs["input"].id)
    melody = score.all_notes()
    bass = [
        NoteEvent(pitch=max(0, n.pitch - 12), start_tick=n.start_tick,
                  duration_ticks=n.duration_ticks, velocity=max(1, n.velocity - 20))
        for n in melody[::2]
    ]
    out = Score(ticks_per_quarter=score.ticks_per_quarter,
                tracks=list(score.tracks) + [bass], tempo=score.tempo)
    return [store.add_score(out, provenance)]


GENRES = ("ambient", "classical", "electronic", "folk", "jazz", "pop", "rock")


def audio_analyzer(task, inputs, store, provenance):
    """music-classification and music-separation; dispatches on task name."""
    buf = store.audio(inputs["input"].id)
    if task == "music-classification":
        freq = media.dominant_frequency(buf) if buf.num_frames > 1 else 0.0
        genre = GENRES[int(freq) % len(GENRES)]
        label = (
            f"genre: {genre}; duration: {buf.duration_seconds:.1f}s; "
            f"dominant frequency: {freq:.0f} Hz"
        )
        return [store.add_text(label, provenance)]
    if task == "music-separation":
        vocals = media.AudioBuffer(
            buf.sample_rate, [[v // 2 for v in ch] for ch in buf.samples])
        accomp = media.AudioBuffer(
            buf.sample_rate, [[v - v // 2 for v in ch] for ch in buf.samples])
        return [("vocals", store.add_audio(vocals, provenance)),
                ("accompaniment", store.add_audio(accomp, provenance))]
    raise UnsupportedTask(f"audio_analyzer cannot handle {task!r}")


def transcriber(task, inputs, store, provenance):
    """lyric-recognition / score-transcription: audio in, text out."""
    buf = store.audio(inputs["input"].id)
    if task == "lyric-recognition":
        syllables = max(1, int(buf.duration_seconds))
        return [store.add_text(" ".join(["la"] * syllables), provenance)]
    if task == "score-transcription":
        freq = media.dominant_frequency(buf) if buf.num_frames > 1 else 440.0
        pitch = 69
        if freq > 0:
            import math
            pitch = min(127, max(0, int(round(69 + 12 * math.log2(freq / 440.0)))))
        ticks = max(1, int(buf.duration_seconds * 2 * 480))
        score = Score(tracks=[[NoteEvent(pitch=pitch, start_tick=0, duration_ticks=ticks)]])
        return [store.add_text(media.score_to_text(score), provenance)]
    raise UnsupportedTask(f"transcriber cannot handle {task!r}")


LYRIC_LINES = (
    "Under {topic} skies we wander on",
    "Every echo hums of {topic} till dawn",
    "Hold the chorus close, let {topic} play",
    "And the melody of {topic} leads the way",
)


def lyricist(task, inputs, store, provenance):
    """lyric-generation: deterministic template lyrics about the topic."""
    topic = _input_text(inputs, store).strip() or "music"
    lyrics = "\n".join(line.format(topic=topic) for line in LYRIC_LINES)
    return [store.add_text(lyrics, provenance)]


BUILTINS = {
    "score_generator": score_generator,
    "score_previewer": score_previewer,
    "voice_synth": voice_synth,
    "audio_generator": audio_generator,
    "timbre_shift": timbre_shift,
    "accompanist": accompanist,
    "audio_analyzer": audio_analyzer,
    "transcriber": transcriber,
    "lyricist": lyricist,
}


# --------------------------------------------------------------------------
# Remote-API providers, shipped in stub mode only
# --------------------------------------------------------------------------

def _canned_clip(query: str):
    seed = _digest(query)
    tpq = 480
    notes = [
        NoteEvent(pitch=48 + seed[i] % 36, start_tick=i * tpq, duration_ticks=tpq)
        for i in range(4)
    ]
    return media.render_score_preview(Score(ticks_per_quarter=tpq, tracks=[notes]))


def remote_provider(provider: str, task, inputs, store, provenance):
    query = store.text(inputs["input"].id)
    if provider == "spotify":
        return [store.add_audio(_canned_clip(query), provenance)]
    if provider == "google":
        return [store.add_text(
            f"Top results for {query!r}: 1) overview article 2) discography "
            f"3) community discussion (stub results)", provenance)]
    raise UnsupportedTask(f"no stub for remote provider {provider!r}")
