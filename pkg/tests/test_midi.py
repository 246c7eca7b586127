import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmst.midi import MidiParseError, export_midi, import_midi
from bmst.score import N_PITCHES, NoteEvent, Score


def simple_score(notes, beats=4, length=32):
    return Score(list(notes), beats, length)


def test_round_trip_simple():
    score = simple_score(
        [
            NoteEvent(39, 0, 8, "melody"),
            NoteEvent(20, 0, 16, "accompaniment"),
            NoteEvent(45, 8, 4, "melody"),
            NoteEvent(12, 16, 8),
        ]
    )
    back = import_midi(export_midi(score))
    assert back.notes == sorted(
        score.notes, key=lambda n: (n.onset_tick, n.pitch_index, n.duration_ticks, n.voice_tag or "")
    )
    assert back.beats_per_measure == 4
    assert back.length_ticks == 32


def test_pitch_index_origin():
    # MIDI note 21 (A0) is pitch index 0
    score = simple_score([NoteEvent(0, 0, 4)])
    data = export_midi(score)
    assert bytes([0x90, 21, 80]) in data
    back = import_midi(data)
    assert back.notes[0].pitch_index == 0


def _midi_with_note(note, division=480, extra_track_events=b""):
    delta_on = b"\x00"
    on = bytes([0x90, note, 64])
    off_delta = b"\x83\x60"  # 480 ticks
    off = bytes([0x80, note, 0])
    eot = b"\x00\xff\x2f\x00"
    body = extra_track_events + delta_on + on + off_delta + off + eot
    track = b"MTrk" + struct.pack(">I", len(body)) + body
    return b"MThd" + struct.pack(">IHHH", 6, 0, 1, division) + track


def test_out_of_range_note_octave_folded():
    back = import_midi(_midi_with_note(105))  # A7, one above range
    assert back.notes[0].pitch_index == 105 - 21 - 12
    back = import_midi(_midi_with_note(10))  # below A0, folds up
    assert back.notes[0].pitch_index == (10 - 21) + 12


def test_quantization_to_nearest_grid():
    # division 480 -> one grid tick is 60 MIDI ticks; onset at 100 rounds to 2
    on = b"\x64" + bytes([0x90, 60, 64])  # delta 100
    off = b"\x81\x68" + bytes([0x80, 60, 0])  # delta 232 -> abs 332 -> grid 6
    eot = b"\x00\xff\x2f\x00"
    body = on + off + eot
    track = b"MTrk" + struct.pack(">I", len(body)) + body
    data = b"MThd" + struct.pack(">IHHH", 6, 0, 1, 480) + track
    back = import_midi(data)
    assert back.notes == [NoteEvent(60 - 21, 2, 4)]


def test_running_status():
    on1 = b"\x00" + bytes([0x90, 60, 64])
    on2 = b"\x00" + bytes([64, 64])  # running status note-on
    off1 = b"\x83\x60" + bytes([60, 0])  # running status, velocity 0 = off
    off2 = b"\x00" + bytes([64, 0])
    eot = b"\x00\xff\x2f\x00"
    body = on1 + on2 + off1 + off2 + eot
    track = b"MTrk" + struct.pack(">I", len(body)) + body
    data = b"MThd" + struct.pack(">IHHH", 6, 0, 1, 480) + track
    back = import_midi(data)
    assert {n.pitch_index for n in back.notes} == {39, 43}


def test_malformed_header_reports_offset():
    with pytest.raises(MidiParseError) as err:
        import_midi(b"XXXX")
    assert "offset" in str(err.value)


def test_truncated_track_reports_offset():
    data = _midi_with_note(60)[:-3]
    with pytest.raises(MidiParseError):
        import_midi(data)


def test_meter_change_rejected():
    sig1 = b"\x00\xff\x58\x04\x04\x02\x18\x08"
    sig2 = b"\x10\xff\x58\x04\x03\x02\x18\x08"
    with pytest.raises(MidiParseError):
        import_midi(_midi_with_note(60, extra_track_events=sig1 + sig2))


def test_three_four_meter():
    sig = b"\x00\xff\x58\x04\x03\x02\x18\x08"
    back = import_midi(_midi_with_note(60, extra_track_events=sig))
    assert back.beats_per_measure == 3


def test_unknown_meta_event_warns_not_fails():
    lyric = b"\x00\xff\x05\x03abc"
    back = import_midi(_midi_with_note(60, extra_track_events=lyric))
    assert back.notes and any("meta" in w for w in back.warnings)


midi_notes = st.lists(
    st.builds(
        NoteEvent,
        pitch_index=st.integers(0, N_PITCHES - 1),
        onset_tick=st.integers(0, 56),
        duration_ticks=st.integers(1, 8),
        voice_tag=st.sampled_from(["melody", "accompaniment", None]),
    ),
    max_size=24,
)


@settings(max_examples=50, deadline=None)
@given(midi_notes)
def test_export_import_round_trip(notes):
    # keep only notes that do not overlap an earlier note at the same pitch
    # and voice; overlapping note-on/off pairs are re-segmented by import
    kept: list[NoteEvent] = []
    for n in sorted(notes, key=lambda n: (n.onset_tick, n.end_tick)):
        if all(
            k.pitch_index != n.pitch_index
            or k.voice_tag != n.voice_tag
            or n.onset_tick >= k.end_tick
            for k in kept
        ):
            kept.append(n)
    kept.sort(key=lambda n: (n.onset_tick, n.pitch_index, n.duration_ticks, n.voice_tag or ""))
    score = simple_score(kept, length=64)
    back = import_midi(export_midi(score))
    assert back.notes == kept
    assert export_midi(back) == export_midi(score)


@settings(max_examples=50, deadline=None)
@given(midi_notes)
def test_export_import_idempotent_for_any_notes(notes):
    first = import_midi(export_midi(simple_score(list(notes), length=64)))
    second = import_midi(export_midi(first))
    assert second.notes == first.notes
    assert export_midi(second) == export_midi(first)
