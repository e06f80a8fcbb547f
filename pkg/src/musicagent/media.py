"""Unified media layer: PCM16 WAV audio, note-level MIDI scores, and the
basic operations (trim, mix, concat, conversions) that let tools on
different platforms interoperate.

All functions here are pure over immutable inputs; safe for concurrent use.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

from .errors import (
    EmptyScore,
    NoteTextParseError,
    NotMidi,
    NotWav,
    ResampleRequired,
    TruncatedChunk,
    Unsupported,
    UnsupportedEncoding,
)

SUPPORTED_RATES = (16000, 22050, 24000, 32000, 44100, 48000)
PREVIEW_RATE = 22050
DEFAULT_TEMPO_US = 500000
INT16_MIN, INT16_MAX = -32768, 32767


@dataclass(frozen=True)
class SegmentLimit:
    """Maximum audio duration enforced on every stored audio artifact."""

    max_seconds: float = 30.0


@dataclass
class AudioBuffer:
    """Per-channel signed 16-bit PCM samples at a fixed rate."""

    sample_rate: int
    samples: list[list[int]]  # one list per channel, equal lengths

    def __post_init__(self):
        if self.sample_rate not in SUPPORTED_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate}")
        if len(self.samples) not in (1, 2):
            raise ValueError("channels must be 1 or 2")
        lengths = {len(ch) for ch in self.samples}
        if len(lengths) > 1:
            raise ValueError("channels must be equal length")

    @property
    def channels(self) -> int:
        return len(self.samples)

    @property
    def num_frames(self) -> int:
        return len(self.samples[0])

    @property
    def duration_seconds(self) -> float:
        return self.num_frames / self.sample_rate

    def __eq__(self, other):
        return (
            isinstance(other, AudioBuffer)
            and self.sample_rate == other.sample_rate
            and self.samples == other.samples
        )


@dataclass(frozen=True)
class NoteEvent:
    pitch: int  # 0..127
    start_tick: int
    duration_ticks: int
    velocity: int = 90  # 1..127

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} out of range")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} out of range")
        if self.start_tick < 0:
            raise ValueError("start_tick must be >= 0")
        if self.duration_ticks < 1:
            raise ValueError("duration_ticks must be >= 1")


@dataclass
class Score:
    """Note-level symbolic music: tracks of NoteEvents plus a single tempo."""

    ticks_per_quarter: int = 480
    tracks: list[list[NoteEvent]] = field(default_factory=list)
    tempo: int = DEFAULT_TEMPO_US  # microseconds per quarter note

    def __post_init__(self):
        self.tracks = [
            sorted(track, key=lambda n: (n.start_tick, n.pitch)) for track in self.tracks
        ]

    def all_notes(self) -> list[NoteEvent]:
        notes = [n for track in self.tracks for n in track]
        return sorted(notes, key=lambda n: (n.start_tick, n.pitch))

    def total_ticks(self) -> int:
        notes = self.all_notes()
        if not notes:
            return 0
        return max(n.start_tick + n.duration_ticks for n in notes)


# --------------------------------------------------------------------------
# WAV codec (RIFF/WAVE, PCM16 little-endian only)
# --------------------------------------------------------------------------

def write_wav(buf: AudioBuffer) -> bytes:
    nch = buf.channels
    nframes = buf.num_frames
    block_align = nch * 2
    byte_rate = buf.sample_rate * block_align
    data_size = nframes * block_align

    interleaved = bytearray(data_size)
    for frame in range(nframes):
        for ch in range(nch):
            struct.pack_into(
                "<h", interleaved, (frame * nch + ch) * 2, buf.samples[ch][frame]
            )

    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + data_size,
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        nch,
        buf.sample_rate,
        byte_rate,
        block_align,
        16,  # bits per sample
        b"data",
        data_size,
    )
    return header + bytes(interleaved)


def read_wav(data: bytes) -> AudioBuffer:
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav("not a RIFF/WAVE stream")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise TruncatedChunk(f"chunk {chunk_id!r} truncated")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise TruncatedChunk("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            pcm = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or pcm is None:
        raise NotWav("missing fmt or data chunk")

    audio_format, nch, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1 or bits != 16:
        raise UnsupportedEncoding(
            f"only PCM16 supported (format={audio_format}, bits={bits})"
        )
    if nch not in (1, 2):
        raise UnsupportedEncoding(f"unsupported channel count {nch}")
    if rate not in SUPPORTED_RATES:
        raise UnsupportedEncoding(f"unsupported sample rate {rate}")

    nframes = len(pcm) // (nch * 2)
    flat = struct.unpack_from(f"<{nframes * nch}h", pcm, 0)
    samples = [list(flat[ch::nch]) for ch in range(nch)]
    return AudioBuffer(sample_rate=rate, samples=samples)


# --------------------------------------------------------------------------
# Audio operations
# --------------------------------------------------------------------------

def trim_to_segment(buf: AudioBuffer, limit: SegmentLimit) -> AudioBuffer:
    """Keep at most the head `limit.max_seconds` of audio, values untouched."""
    max_frames = int(limit.max_seconds * buf.sample_rate)
    if buf.num_frames <= max_frames:
        return buf
    return AudioBuffer(
        sample_rate=buf.sample_rate,
        samples=[ch[:max_frames] for ch in buf.samples],
    )


def _check_compatible(a: AudioBuffer, b: AudioBuffer):
    if a.sample_rate != b.sample_rate or a.channels != b.channels:
        raise ResampleRequired(
            f"incompatible buffers: {a.sample_rate}Hz/{a.channels}ch vs "
            f"{b.sample_rate}Hz/{b.channels}ch"
        )


def _clamp(v: int) -> int:
    return max(INT16_MIN, min(INT16_MAX, v))


def mix(a: AudioBuffer, b: AudioBuffer) -> AudioBuffer:
    """Per-sample integer average over the overlap; longer tail appended."""
    _check_compatible(a, b)
    out = []
    for ch_a, ch_b in zip(a.samples, b.samples):
        overlap = min(len(ch_a), len(ch_b))
        mixed = [_clamp((ch_a[i] + ch_b[i]) // 2) for i in range(overlap)]
        tail = ch_a[overlap:] if len(ch_a) > overlap else ch_b[overlap:]
        out.append(mixed + list(tail))
    return AudioBuffer(sample_rate=a.sample_rate, samples=out)


def concat(a: AudioBuffer, b: AudioBuffer) -> AudioBuffer:
    _check_compatible(a, b)
    return AudioBuffer(
        sample_rate=a.sample_rate,
        samples=[list(x) + list(y) for x, y in zip(a.samples, b.samples)],
    )


def silence(seconds: float, sample_rate: int = PREVIEW_RATE, channels: int = 1) -> AudioBuffer:
    n = int(seconds * sample_rate)
    return AudioBuffer(sample_rate=sample_rate, samples=[[0] * n for _ in range(channels)])


# --------------------------------------------------------------------------
# MIDI codec (SMF format 0/1, note and tempo events only)
# --------------------------------------------------------------------------

def _encode_varlen(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _decode_varlen(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise TruncatedChunk("varlen runs past end of track")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise NotMidi("varlen too long")


def write_midi(score: Score) -> bytes:
    tracks = score.tracks or [[]]
    fmt = 0 if len(tracks) == 1 else 1
    chunks = [struct.pack(">4sIHHH", b"MThd", 6, fmt, len(tracks), score.ticks_per_quarter)]

    for idx, track in enumerate(tracks):
        events = []  # (tick, order, payload)
        if idx == 0:
            events.append((0, 0, b"\xff\x51\x03" + score.tempo.to_bytes(3, "big")))
        for note in sorted(track, key=lambda n: (n.start_tick, n.pitch)):
            events.append((note.start_tick, 1, bytes([0x90, note.pitch, note.velocity])))
            events.append(
                (note.start_tick + note.duration_ticks, 2, bytes([0x80, note.pitch, 0]))
            )
        events.sort(key=lambda e: (e[0], e[1]))

        body = bytearray()
        prev_tick = 0
        for tick, _, payload in events:
            body += _encode_varlen(tick - prev_tick)
            body += payload
            prev_tick = tick
        body += _encode_varlen(0) + b"\xff\x2f\x00"  # end of track
        chunks.append(struct.pack(">4sI", b"MTrk", len(body)) + bytes(body))

    return b"".join(chunks)


_CHANNEL_EVENT_SIZES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


def read_midi(data: bytes) -> Score:
    if len(data) < 8 or data[0:4] != b"MThd":
        raise NotMidi("missing MThd header")
    (header_len,) = struct.unpack_from(">I", data, 4)
    if header_len < 6 or len(data) < 8 + header_len:
        raise TruncatedChunk("MThd truncated")
    fmt, ntrks, tpq = struct.unpack_from(">HHH", data, 8)
    if fmt not in (0, 1):
        raise NotMidi(f"unsupported SMF format {fmt}")
    if tpq & 0x8000:
        raise NotMidi("SMPTE time division not supported")

    pos = 8 + header_len
    tracks: list[list[NoteEvent]] = []
    tempo = DEFAULT_TEMPO_US

    for _ in range(ntrks):
        if pos + 8 > len(data):
            raise TruncatedChunk("expected MTrk chunk")
        if data[pos : pos + 4] != b"MTrk":
            raise NotMidi(f"unexpected chunk {data[pos:pos+4]!r}")
        (track_len,) = struct.unpack_from(">I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + track_len]
        if len(body) < track_len:
            raise TruncatedChunk("MTrk truncated")
        pos += 8 + track_len

        notes: list[NoteEvent] = []
        open_notes: dict[int, list[tuple[int, int]]] = {}  # pitch -> [(start, vel)]
        tick = 0
        p = 0
        running = None
        while p < len(body):
            delta, p = _decode_varlen(body, p)
            tick += delta
            if p >= len(body):
                raise TruncatedChunk("event runs past end of track")
            status = body[p]
            if status & 0x80:
                p += 1
                if status < 0xF0:
                    running = status
            else:
                if running is None:
                    raise NotMidi("data byte without running status")
                status = running

            if status == 0xFF:  # meta
                if p >= len(body):
                    raise TruncatedChunk("meta event truncated")
                meta_type = body[p]
                length, p2 = _decode_varlen(body, p + 1)
                payload = body[p2 : p2 + length]
                if len(payload) < length:
                    raise TruncatedChunk("meta payload truncated")
                if meta_type == 0x51 and length == 3:
                    tempo = int.from_bytes(payload, "big")
                p = p2 + length
            elif status in (0xF0, 0xF7):  # sysex
                length, p2 = _decode_varlen(body, p)
                p = p2 + length
                if p > len(body):
                    raise TruncatedChunk("sysex truncated")
            else:
                kind = status >> 4
                size = _CHANNEL_EVENT_SIZES.get(kind)
                if size is None:
                    raise NotMidi(f"unknown status byte {status:#x}")
                if p + size > len(body):
                    raise TruncatedChunk("channel event truncated")
                args = body[p : p + size]
                p += size
                if kind == 0x9 and args[1] > 0:
                    open_notes.setdefault(args[0], []).append((tick, args[1]))
                elif kind == 0x8 or (kind == 0x9 and args[1] == 0):
                    pending = open_notes.get(args[0])
                    if pending:
                        start, vel = pending.pop(0)
                        notes.append(
                            NoteEvent(
                                pitch=args[0],
                                start_tick=start,
                                duration_ticks=max(1, tick - start),
                                velocity=vel,
                            )
                        )
        tracks.append(notes)

    return Score(ticks_per_quarter=tpq, tracks=tracks, tempo=tempo)


# --------------------------------------------------------------------------
# Note-list text format
# --------------------------------------------------------------------------

NOTE_TEXT_HEADER = "tpq={tpq} tempo={tempo}"


def score_to_text(score: Score) -> str:
    """Render a Score as the line-oriented note-list text format.

    Header line `tpq=<n> tempo=<us>`, then one `pitch start dur velocity`
    line per note. Tracks are flattened; the text form is single-track.
    """
    lines = [NOTE_TEXT_HEADER.format(tpq=score.ticks_per_quarter, tempo=score.tempo)]
    for note in score.all_notes():
        lines.append(f"{note.pitch} {note.start_tick} {note.duration_ticks} {note.velocity}")
    return "\n".join(lines)


def looks_like_note_text(text: str) -> bool:
    return text.lstrip().startswith("tpq=")


def text_to_score(text: str) -> Score:
    lines = text.strip().splitlines()
    if not lines:
        raise NoteTextParseError("empty input", 1)
    header = lines[0].split()
    try:
        fields = dict(part.split("=", 1) for part in header)
        tpq = int(fields["tpq"])
        tempo = int(fields["tempo"])
    except (ValueError, KeyError) as exc:
        raise NoteTextParseError(f"bad header: {exc}", 1) from exc

    notes = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise NoteTextParseError(f"expected 4 fields, got {len(parts)}", lineno)
        try:
            pitch, start, dur, vel = (int(p) for p in parts)
            notes.append(
                NoteEvent(pitch=pitch, start_tick=start, duration_ticks=dur, velocity=vel)
            )
        except ValueError as exc:
            raise NoteTextParseError(str(exc), lineno) from exc
    return Score(ticks_per_quarter=tpq, tracks=[notes], tempo=tempo)


def import_abc(text: str) -> Score:
    raise Unsupported("ABC notation import is not implemented")


# --------------------------------------------------------------------------
# Deterministic sine preview
# --------------------------------------------------------------------------

def pitch_to_hz(pitch: int) -> float:
    return 440.0 * 2 ** ((pitch - 69) / 12)


def render_score_preview(
    score: Score, limit: SegmentLimit | None = None
) -> AudioBuffer:
    """Deterministic sine rendering of a Score at 22050 Hz mono."""
    notes = score.all_notes()
    if not notes:
        raise EmptyScore("cannot render an empty score")
    limit = limit or SegmentLimit()

    sec_per_tick = (score.tempo / 1e6) / score.ticks_per_quarter
    total_sec = score.total_ticks() * sec_per_tick
    nframes = int(math.ceil(total_sec * PREVIEW_RATE))
    acc = [0.0] * nframes

    for note in notes:
        freq = pitch_to_hz(note.pitch)
        amp = 0.5 * (note.velocity / 127) * INT16_MAX
        start = int(note.start_tick * sec_per_tick * PREVIEW_RATE)
        end = min(nframes, int((note.start_tick + note.duration_ticks) * sec_per_tick * PREVIEW_RATE))
        omega = 2 * math.pi * freq / PREVIEW_RATE
        for i in range(start, end):
            acc[i] += amp * math.sin(omega * (i - start))

    samples = [_clamp(int(round(v))) for v in acc]
    return trim_to_segment(
        AudioBuffer(sample_rate=PREVIEW_RATE, samples=[samples]), limit
    )


def dominant_frequency(buf: AudioBuffer) -> float:
    """Zero-crossing frequency estimate of channel 0; analysis helper."""
    ch = buf.samples[0]
    crossings = 0
    prev = ch[0]
    for v in ch[1:]:
        if (prev < 0 <= v) or (prev >= 0 > v):
            crossings += 1
        prev = v
    return crossings / 2 / buf.duration_seconds
