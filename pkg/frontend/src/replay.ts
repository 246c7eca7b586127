// Server-side replay contract: applying a session's note_op events in order
// over the original clip must reproduce the submitted score exactly.

import { NoteOp, applyOp } from "./editing.js";
import { Note, ScoreDoc, serializeScore, sortedNotes } from "./score.js";

export type EditEvent = {
  timestamp_ms: number;
  kind: "key_press" | "mouse_click" | "note_op";
  payload?: NoteOp | Record<string, never>;
};

export function replayOps(initial: Note[], ops: NoteOp[]): Note[] {
  let notes = [...initial];
  for (const op of ops) {
    notes = applyOp(notes, op);
  }
  return notes;
}

export function replayEvents(clip: ScoreDoc, events: EditEvent[]): ScoreDoc {
  const ops = events
    .filter((e) => e.kind === "note_op")
    .map((e) => e.payload as NoteOp);
  return { ...clip, notes: replayOps(clip.notes, ops) };
}

export function scoresEqual(a: ScoreDoc, b: ScoreDoc): boolean {
  return serializeScore({ ...a, notes: sortedNotes(a.notes) }) ===
    serializeScore({ ...b, notes: sortedNotes(b.notes) });
}
