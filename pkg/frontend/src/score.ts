// Interchange score format, mirrored from the backend: header lines
// `key=value` then one line per note `pitch_index onset_tick duration_ticks tag`.

export type Note = {
  pitch_index: number;
  onset_tick: number;
  duration_ticks: number;
  voice_tag: string | null;
};

export type ScoreDoc = {
  ticksPerBeat: number;
  beatsPerMeasure: number;
  lengthTicks: number;
  notes: Note[];
};

export const N_PITCHES = 84;
export const TICKS_PER_BEAT = 8;
export const LOWEST_MIDI_NOTE = 21;

export function parseScore(text: string): ScoreDoc {
  const header: Record<string, number> = {};
  const notes: Note[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line || line.startsWith("#")) continue;
    if (line.includes("=") && !/^\d/.test(line)) {
      const [key, value] = line.split("=", 2);
      header[key.trim()] = parseInt(value, 10);
      continue;
    }
    const parts = line.split(/\s+/);
    if (parts.length !== 4) throw new Error(`bad note line: ${line}`);
    notes.push({
      pitch_index: parseInt(parts[0], 10),
      onset_tick: parseInt(parts[1], 10),
      duration_ticks: parseInt(parts[2], 10),
      voice_tag: parts[3] === "-" ? null : parts[3],
    });
  }
  for (const key of ["ticks_per_beat", "beats_per_measure", "length_ticks"]) {
    if (!(key in header)) throw new Error(`missing header field ${key}`);
  }
  return {
    ticksPerBeat: header["ticks_per_beat"],
    beatsPerMeasure: header["beats_per_measure"],
    lengthTicks: header["length_ticks"],
    notes,
  };
}

export function serializeScore(doc: ScoreDoc): string {
  const lines = [
    `ticks_per_beat=${doc.ticksPerBeat}`,
    `beats_per_measure=${doc.beatsPerMeasure}`,
    `length_ticks=${doc.lengthTicks}`,
  ];
  for (const n of sortedNotes(doc.notes)) {
    lines.push(`${n.pitch_index} ${n.onset_tick} ${n.duration_ticks} ${n.voice_tag ?? "-"}`);
  }
  return lines.join("\n") + "\n";
}

export function sortedNotes(notes: Note[]): Note[] {
  return [...notes].sort(
    (a, b) =>
      a.onset_tick - b.onset_tick ||
      a.pitch_index - b.pitch_index ||
      a.duration_ticks - b.duration_ticks ||
      (a.voice_tag ?? "").localeCompare(b.voice_tag ?? ""),
  );
}

export function sameNote(a: Note, b: Note): boolean {
  return (
    a.pitch_index === b.pitch_index &&
    a.onset_tick === b.onset_tick &&
    a.duration_ticks === b.duration_ticks &&
    (a.voice_tag ?? null) === (b.voice_tag ?? null)
  );
}

export function noteInBounds(note: Note, lengthTicks: number): boolean {
  return (
    note.pitch_index >= 0 &&
    note.pitch_index < N_PITCHES &&
    note.onset_tick >= 0 &&
    note.duration_ticks >= 1 &&
    note.onset_tick + note.duration_ticks <= lengthTicks
  );
}

// edits stay on the 32nd-note grid: ticks are integers by construction,
// this clamps anything that came from pixel coordinates
export function snapTick(value: number): number {
  return Math.round(value);
}
