"""Piano-roll score representation: quantization, metadata planes, transposition.

The time grid is fixed at 8 ticks per beat (one tick = a 32nd note) and the
pitch axis covers 84 semitones, index 0 = A0 (MIDI 21) up to 83 = G#7
(MIDI 104).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

N_PITCHES = 84
TICKS_PER_BEAT = 8
LOWEST_MIDI_NOTE = 21  # A0

MELODY = "melody"
ACCOMPANIMENT = "accompaniment"


class ScoreError(ValueError):
    """Invalid score data (out-of-range pitch, bad dimensions, ...)."""


class NormalizationWarning(UserWarning):
    """A roll needed repair while being converted back to notes."""


@dataclass(frozen=True, order=True)
class NoteEvent:
    pitch_index: int
    onset_tick: int
    duration_ticks: int
    voice_tag: str | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.pitch_index < N_PITCHES:
            raise ScoreError(f"pitch_index {self.pitch_index} outside 0..{N_PITCHES - 1}")
        if self.onset_tick < 0:
            raise ScoreError(f"onset_tick {self.onset_tick} is negative")
        if self.duration_ticks < 1:
            raise ScoreError(f"duration_ticks {self.duration_ticks} must be >= 1")

    @property
    def end_tick(self) -> int:
        return self.onset_tick + self.duration_ticks


@dataclass
class PianoRoll:
    """Binary activation grid plus onset/offset planes, all 84 x J."""

    activations: np.ndarray
    onsets: np.ndarray
    offsets: np.ndarray
    ticks_per_beat: int = TICKS_PER_BEAT
    beats_per_measure: int = 4

    def __post_init__(self) -> None:
        for name in ("activations", "onsets", "offsets"):
            plane = np.asarray(getattr(self, name), dtype=np.uint8)
            if plane.ndim != 2 or plane.shape[0] != N_PITCHES:
                raise ScoreError(f"{name} must be {N_PITCHES} x J, got {plane.shape}")
            if not np.all((plane == 0) | (plane == 1)):
                raise ScoreError(f"{name} must be binary")
            setattr(self, name, plane)
        if self.onsets.shape != self.activations.shape or self.offsets.shape != self.activations.shape:
            raise ScoreError("onset/offset planes must match activation shape")
        if np.any(self.onsets > self.activations) or np.any(self.offsets > self.activations):
            raise ScoreError("onsets/offsets may only mark active cells")

    @property
    def length_ticks(self) -> int:
        return self.activations.shape[1]

    @property
    def ticks_per_measure(self) -> int:
        return self.ticks_per_beat * self.beats_per_measure

    def copy(self) -> "PianoRoll":
        return PianoRoll(
            self.activations.copy(),
            self.onsets.copy(),
            self.offsets.copy(),
            self.ticks_per_beat,
            self.beats_per_measure,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PianoRoll):
            return NotImplemented
        return (
            self.ticks_per_beat == other.ticks_per_beat
            and self.beats_per_measure == other.beats_per_measure
            and np.array_equal(self.activations, other.activations)
            and np.array_equal(self.onsets, other.onsets)
            and np.array_equal(self.offsets, other.offsets)
        )


@dataclass
class MetadataPlanes:
    """Start/end markers and the two periodic beat-position ramps (4 x J)."""

    start_symbol: np.ndarray
    end_symbol: np.ndarray
    measure_ramp: np.ndarray
    beat_ramp: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return np.stack(
            [self.start_symbol, self.end_symbol, self.measure_ramp, self.beat_ramp]
        ).astype(np.float64)

    @property
    def length_ticks(self) -> int:
        return self.start_symbol.shape[0]


def quantize(notes: list[NoteEvent], length_ticks: int, beats_per_measure: int = 4) -> PianoRoll:
    """Rasterize notes onto the grid, merging overlapping same-pitch notes."""
    if length_ticks < 0:
        raise ScoreError(f"length_ticks {length_ticks} is negative")
    for note in notes:
        if note.end_tick > length_ticks:
            raise ScoreError(
                f"note (pitch {note.pitch_index}, onset {note.onset_tick}, "
                f"dur {note.duration_ticks}) exceeds length {length_ticks}"
            )
    activations = np.zeros((N_PITCHES, length_ticks), dtype=np.uint8)
    onsets = np.zeros_like(activations)
    offsets = np.zeros_like(activations)

    by_pitch: dict[int, list[NoteEvent]] = {}
    for note in notes:
        by_pitch.setdefault(note.pitch_index, []).append(note)

    for pitch, group in by_pitch.items():
        group.sort(key=lambda n: (n.onset_tick, n.end_tick))
        # Merge notes that share at least one tick; adjacent notes stay
        # separate (they are repeated notes, disambiguated by the onset plane).
        merged: list[tuple[int, int]] = []
        for note in group:
            if merged and note.onset_tick < merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], note.end_tick))
            else:
                merged.append((note.onset_tick, note.end_tick))
        for start, end in merged:
            activations[pitch, start:end] = 1
            onsets[pitch, start] = 1
            offsets[pitch, end - 1] = 1

    return PianoRoll(activations, onsets, offsets, TICKS_PER_BEAT, beats_per_measure)


def to_notes(roll: PianoRoll, voice_tag: str | None = None) -> list[NoteEvent]:
    """Recover note events from a roll, splitting activation runs at onsets."""
    notes: list[NoteEvent] = []
    length = roll.length_ticks
    for pitch in range(N_PITCHES):
        active = roll.activations[pitch]
        onset = roll.onsets[pitch]
        t = 0
        while t < length:
            if not active[t]:
                t += 1
                continue
            run_end = t
            while run_end < length and active[run_end]:
                run_end += 1
            starts = [j for j in range(t, run_end) if onset[j]]
            if not starts or starts[0] != t:
                warnings.warn(
                    f"activation run at pitch {pitch}, tick {t} has no onset mark; "
                    "treating run start as onset",
                    NormalizationWarning,
                    stacklevel=2,
                )
                starts = [t] + [s for s in starts if s != t]
            for k, start in enumerate(starts):
                end = starts[k + 1] if k + 1 < len(starts) else run_end
                notes.append(NoteEvent(pitch, start, end - start, voice_tag))
            t = run_end
    notes.sort(key=lambda n: (n.onset_tick, n.pitch_index, n.duration_ticks))
    return notes


def render_metadata(length_ticks: int, beats_per_measure: int) -> MetadataPlanes:
    """Start/end symbols plus measure and beat position ramps in [0, 1)."""
    if length_ticks < 1:
        raise ScoreError(f"length_ticks must be >= 1, got {length_ticks}")
    if beats_per_measure < 1:
        raise ScoreError(f"beats_per_measure must be >= 1, got {beats_per_measure}")
    j = np.arange(length_ticks)
    measure_len = TICKS_PER_BEAT * beats_per_measure
    start = np.zeros(length_ticks, dtype=np.float64)
    end = np.zeros(length_ticks, dtype=np.float64)
    start[0] = 1.0
    end[length_ticks - 1] = 1.0
    return MetadataPlanes(
        start_symbol=start,
        end_symbol=end,
        measure_ramp=(j % measure_len) / measure_len,
        beat_ramp=(j % TICKS_PER_BEAT) / TICKS_PER_BEAT,
    )


def transpose(roll: PianoRoll, semitones: int) -> PianoRoll:
    """Shift all pitch rows; notes pushed outside the 84-pitch range are dropped."""
    if abs(semitones) > 12:
        raise ScoreError(f"|semitones| must be <= 12, got {semitones}")
    out = PianoRoll(
        np.zeros_like(roll.activations),
        np.zeros_like(roll.onsets),
        np.zeros_like(roll.offsets),
        roll.ticks_per_beat,
        roll.beats_per_measure,
    )
    lo = max(0, -semitones)
    hi = min(N_PITCHES, N_PITCHES - semitones)
    if lo < hi:
        out.activations[lo + semitones : hi + semitones] = roll.activations[lo:hi]
        out.onsets[lo + semitones : hi + semitones] = roll.onsets[lo:hi]
        out.offsets[lo + semitones : hi + semitones] = roll.offsets[lo:hi]
    return out


# --- text interchange -------------------------------------------------------
#
# Header lines `key=value` (ticks_per_beat, beats_per_measure, length_ticks)
# followed by one line per note: `pitch_index onset_tick duration_ticks tag`
# where tag is "-" for untagged notes.


@dataclass
class Score:
    """Note list plus meter; the unit moved between files and the model."""

    notes: list[NoteEvent]
    beats_per_measure: int
    length_ticks: int
    warnings: list[str] = field(default_factory=list)

    def to_roll(self) -> PianoRoll:
        return quantize(self.notes, self.length_ticks, self.beats_per_measure)

    def metadata(self) -> MetadataPlanes:
        return render_metadata(self.length_ticks, self.beats_per_measure)

    def melody_cells(self) -> set[tuple[int, int]]:
        cells: set[tuple[int, int]] = set()
        for note in self.notes:
            if note.voice_tag == MELODY:
                cells.update((note.pitch_index, t) for t in range(note.onset_tick, note.end_tick))
        return cells


def write_score_text(score: Score) -> str:
    lines = [
        f"ticks_per_beat={TICKS_PER_BEAT}",
        f"beats_per_measure={score.beats_per_measure}",
        f"length_ticks={score.length_ticks}",
    ]
    for n in sorted(score.notes, key=lambda n: (n.onset_tick, n.pitch_index, n.duration_ticks)):
        lines.append(f"{n.pitch_index} {n.onset_tick} {n.duration_ticks} {n.voice_tag or '-'}")
    return "\n".join(lines) + "\n"


def read_score_text(text: str) -> Score:
    header: dict[str, int] = {}
    notes: list[NoteEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line and not line[0].isdigit():
            key, _, value = line.partition("=")
            try:
                header[key.strip()] = int(value)
            except ValueError as exc:
                raise ScoreError(f"line {lineno}: bad header value {value!r}") from exc
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ScoreError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        pitch, onset, dur = (int(p) for p in parts[:3])
        tag = None if parts[3] == "-" else parts[3]
        notes.append(NoteEvent(pitch, onset, dur, tag))
    for key in ("ticks_per_beat", "beats_per_measure", "length_ticks"):
        if key not in header:
            raise ScoreError(f"missing header field {key}")
    if header["ticks_per_beat"] != TICKS_PER_BEAT:
        raise ScoreError(f"unsupported ticks_per_beat {header['ticks_per_beat']}")
    return Score(notes, header["beats_per_measure"], header["length_ticks"])
