"""Standard MIDI File import/export on the 32nd-note grid.

Reads format 0/1 files, writes format 1. Onsets/durations are quantized to
the nearest 32nd-note tick, pitches are octave-folded into the 84-semitone
range, and tracks named "melody"/"accompaniment" carry their name into the
note voice tags so a write/read cycle preserves the note list exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .score import (
    ACCOMPANIMENT,
    LOWEST_MIDI_NOTE,
    MELODY,
    N_PITCHES,
    TICKS_PER_BEAT,
    NoteEvent,
    Score,
)

EXPORT_DIVISION = 480  # MIDI ticks per quarter note when writing
DEFAULT_TEMPO_US = 500000  # 120 bpm

META_TRACK_NAME = 0x03
META_END_OF_TRACK = 0x2F
META_TEMPO = 0x51
META_TIME_SIGNATURE = 0x58

PERCUSSION_CHANNEL = 9


class MidiParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class _RawNote:
    note: int
    start: int  # absolute MIDI ticks
    end: int
    track: int


@dataclass
class _Reader:
    data: bytes
    pos: int = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated file, wanted {n} bytes", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError("variable-length quantity longer than 4 bytes", self.pos)


def _fold_pitch(midi_note: int) -> int:
    """Map a MIDI note into pitch index 0..83, octave-folding out-of-range notes."""
    index = midi_note - LOWEST_MIDI_NOTE
    while index < 0:
        index += 12
    while index >= N_PITCHES:
        index -= 12
    return index


def _quantize_tick(midi_tick: int, division: int) -> int:
    # nearest 32nd-note tick; round half away from the piece start
    return (midi_tick * TICKS_PER_BEAT * 2 + division) // (2 * division)


def import_midi(data: bytes, melody_track: int | None = None) -> Score:
    """Parse a format 0/1 MIDI file into a quantized Score.

    Voice tags come from track names ("melody"/"accompaniment"); passing
    `melody_track` instead tags that track's notes as the melody and every
    other note-carrying track as accompaniment.
    """
    reader = _Reader(data)
    if reader.take(4) != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = struct.unpack(">I", reader.take(4))[0]
    if header_len < 6:
        raise MidiParseError(f"header length {header_len} too short", reader.pos - 4)
    fmt, n_tracks, division = struct.unpack(">HHH", reader.take(6))
    reader.take(header_len - 6)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported MIDI format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("zero time division", 12)

    warnings: list[str] = []
    raw_notes: list[_RawNote] = []
    track_names: dict[int, str] = {}
    time_signature: tuple[int, int] | None = None
    tempo: int | None = None

    for track_index in range(n_tracks):
        chunk_start = reader.pos
        if reader.take(4) != b"MTrk":
            raise MidiParseError("expected MTrk chunk", chunk_start)
        track_len = struct.unpack(">I", reader.take(4))[0]
        track_end = reader.pos + track_len
        if track_end > len(data):
            raise MidiParseError(f"track length {track_len} exceeds file", chunk_start + 4)

        abs_tick = 0
        running_status = 0
        # open note-ons per (channel, note), FIFO for stacked notes
        active: dict[tuple[int, int], list[int]] = {}

        while reader.pos < track_end:
            abs_tick += reader.varlen()
            status = reader.byte()
            if status < 0x80:
                if running_status < 0x80:
                    raise MidiParseError(f"data byte 0x{status:02x} with no running status", reader.pos - 1)
                reader.pos -= 1
                status = running_status

            if status == 0xFF:
                running_status = 0
                meta_type = reader.byte()
                meta_len = reader.varlen()
                payload = reader.take(meta_len)
                if meta_type == META_TRACK_NAME:
                    track_names[track_index] = payload.decode("latin-1")
                elif meta_type == META_TIME_SIGNATURE:
                    if meta_len < 2:
                        raise MidiParseError("short time-signature event", reader.pos - meta_len)
                    sig = (payload[0], 1 << payload[1])
                    if time_signature is not None and sig != time_signature:
                        raise MidiParseError(
                            f"meter change {time_signature} -> {sig} mid-piece", reader.pos - meta_len
                        )
                    time_signature = sig
                elif meta_type == META_TEMPO:
                    value = int.from_bytes(payload, "big")
                    if tempo is not None and value != tempo:
                        warnings.append(f"tempo change at tick {abs_tick} ignored (single tempo assumed)")
                    tempo = value
                elif meta_type == META_END_OF_TRACK:
                    break
                else:
                    warnings.append(f"meta event 0x{meta_type:02x} skipped")
                continue
            if status in (0xF0, 0xF7):
                running_status = 0
                reader.take(reader.varlen())
                warnings.append("sysex event skipped")
                continue
            if status < 0x80 or 0xF0 < status:
                raise MidiParseError(f"unexpected status byte 0x{status:02x}", reader.pos - 1)

            running_status = status
            kind = status & 0xF0
            channel = status & 0x0F
            if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                d1, d2 = reader.byte(), reader.byte()
            elif kind in (0xC0, 0xD0):
                d1, d2 = reader.byte(), 0
            else:
                raise MidiParseError(f"unhandled event 0x{status:02x}", reader.pos - 1)

            if kind == 0x90 and d2 > 0:
                active.setdefault((channel, d1), []).append(abs_tick)
            elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                stack = active.get((channel, d1))
                if stack:
                    start = stack.pop(0)
                    if channel == PERCUSSION_CHANNEL:
                        warnings.append(f"percussion note at tick {start} skipped")
                    else:
                        raw_notes.append(_RawNote(d1, start, abs_tick, track_index))
                else:
                    warnings.append(f"unmatched note-off (note {d1}) at tick {abs_tick}")
        else:
            warnings.append(f"track {track_index} has no end-of-track event")
        reader.pos = track_end

        for (channel, note), starts in active.items():
            for start in starts:
                warnings.append(f"note {note} never released; closed at track end")
                if channel != PERCUSSION_CHANNEL:
                    raw_notes.append(_RawNote(note, start, abs_tick, track_index))

    if time_signature is None:
        time_signature = (4, 4)
    numerator, denominator = time_signature
    quarter_beats = numerator * 4 / denominator
    if quarter_beats < 1 or quarter_beats != int(quarter_beats):
        raise MidiParseError(f"unsupported meter {numerator}/{denominator}", 0)
    beats_per_measure = int(quarter_beats)

    notes = []
    for raw in raw_notes:
        onset = _quantize_tick(raw.start, division)
        end = _quantize_tick(raw.end, division)
        if melody_track is not None:
            tag = MELODY if raw.track == melody_track else ACCOMPANIMENT
        else:
            tag = track_names.get(raw.track)
            if tag not in (MELODY, ACCOMPANIMENT):
                tag = None
        notes.append(NoteEvent(_fold_pitch(raw.note), onset, max(1, end - onset), tag))
    notes.sort(key=lambda n: (n.onset_tick, n.pitch_index, n.duration_ticks, n.voice_tag or ""))

    measure_ticks = beats_per_measure * TICKS_PER_BEAT
    last_end = max((n.end_tick for n in notes), default=0)
    length_ticks = max(1, -(-last_end // measure_ticks)) * measure_ticks
    return Score(notes, beats_per_measure, length_ticks, warnings)


# --- writing ----------------------------------------------------------------


def _write_varlen(value: int) -> bytes:
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.insert(0, 0x80 | (value & 0x7F))
        value >>= 7
    return bytes(out)


def _track_chunk(events: list[tuple[int, bytes]]) -> bytes:
    """events: (absolute MIDI tick, event bytes); terminated with end-of-track."""
    events = sorted(events, key=lambda e: e[0])
    body = bytearray()
    prev = 0
    for tick, payload in events:
        body += _write_varlen(tick - prev)
        body += payload
        prev = tick
    body += _write_varlen(0) + bytes([0xFF, META_END_OF_TRACK, 0])
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def export_midi(score: Score) -> bytes:
    """Write a type-1 MIDI file; one track per voice tag plus a conductor track."""
    ticks_per_grid = EXPORT_DIVISION // TICKS_PER_BEAT

    conductor = [
        (0, bytes([0xFF, META_TEMPO, 3]) + DEFAULT_TEMPO_US.to_bytes(3, "big")),
        (0, bytes([0xFF, META_TIME_SIGNATURE, 4, score.beats_per_measure, 2, 24, 8])),
    ]

    groups: dict[str | None, list[NoteEvent]] = {}
    for note in score.notes:
        tag = note.voice_tag if note.voice_tag in (MELODY, ACCOMPANIMENT) else None
        groups.setdefault(tag, []).append(note)

    tracks = [_track_chunk(conductor)]
    for tag in sorted(groups, key=lambda t: (t is None, t or "")):
        events: list[tuple[int, bytes]] = []
        if tag is not None:
            name = tag.encode("latin-1")
            events.append((0, bytes([0xFF, META_TRACK_NAME, len(name)]) + name))
        for note in groups[tag]:
            midi_note = note.pitch_index + LOWEST_MIDI_NOTE
            start = note.onset_tick * ticks_per_grid
            end = note.end_tick * ticks_per_grid
            events.append((start, bytes([0x90, midi_note, 80])))
            events.append((end, bytes([0x80, midi_note, 0])))
        tracks.append(_track_chunk(events))

    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(tracks), EXPORT_DIVISION)
    return header + b"".join(tracks)
