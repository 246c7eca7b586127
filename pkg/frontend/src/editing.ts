// Note operations as pure functions. Every gesture yields one NoteOp whose
// before/after note lists make it replayable and invertible; undo/redo apply
// the inverse op and log it like any other edit.

import { Note, noteInBounds, sameNote } from "./score.js";

export type NoteOpKind = "move" | "split" | "resize" | "delete" | "insert";

export type NoteOp = {
  op: NoteOpKind;
  before: Note[];
  after: Note[];
};

export function applyOp(notes: Note[], op: NoteOp): Note[] {
  let result = [...notes];
  for (const target of op.before) {
    const index = result.findIndex((n) => sameNote(n, target));
    if (index < 0) throw new Error(`op ${op.op}: note to replace not found`);
    result.splice(index, 1);
  }
  for (const added of op.after) {
    if (result.some((n) => sameNote(n, added))) continue; // identical notes merge
    result = [...result, added];
  }
  return result;
}

export function invertOp(op: NoteOp): NoteOp {
  return { op: op.op, before: op.after, after: op.before };
}

// --- gesture constructors; null when the edit would leave the grid ---------

export function moveNote(
  note: Note,
  dPitch: number,
  dTick: number,
  lengthTicks: number,
): NoteOp | null {
  const moved: Note = {
    ...note,
    pitch_index: note.pitch_index + dPitch,
    onset_tick: note.onset_tick + dTick,
  };
  if (!noteInBounds(moved, lengthTicks)) return null;
  return { op: "move", before: [note], after: [moved] };
}

export function resizeNote(note: Note, dTicks: number, lengthTicks: number): NoteOp | null {
  const resized: Note = { ...note, duration_ticks: note.duration_ticks + dTicks };
  if (!noteInBounds(resized, lengthTicks)) return null;
  return { op: "resize", before: [note], after: [resized] };
}

export function splitNote(note: Note, atTick: number): NoteOp | null {
  if (atTick <= note.onset_tick || atTick >= note.onset_tick + note.duration_ticks) return null;
  const first: Note = { ...note, duration_ticks: atTick - note.onset_tick };
  const second: Note = {
    ...note,
    onset_tick: atTick,
    duration_ticks: note.onset_tick + note.duration_ticks - atTick,
  };
  return { op: "split", before: [note], after: [first, second] };
}

export function deleteNote(note: Note): NoteOp {
  return { op: "delete", before: [note], after: [] };
}

export function insertNote(note: Note, lengthTicks: number): NoteOp | null {
  if (!noteInBounds(note, lengthTicks)) return null;
  return { op: "insert", before: [], after: [note] };
}

// --- undo/redo --------------------------------------------------------------

export type EditHistory = {
  notes: Note[];
  undoStack: NoteOp[];
  redoStack: NoteOp[];
};

export function emptyHistory(notes: Note[]): EditHistory {
  return { notes: [...notes], undoStack: [], redoStack: [] };
}

export function performOp(history: EditHistory, op: NoteOp): EditHistory {
  return {
    notes: applyOp(history.notes, op),
    undoStack: [...history.undoStack, op],
    redoStack: [],
  };
}

/** Returns the new history and the inverse op that was applied (to log). */
export function undo(history: EditHistory): { history: EditHistory; applied: NoteOp } | null {
  const last = history.undoStack[history.undoStack.length - 1];
  if (!last) return null;
  const inverse = invertOp(last);
  return {
    history: {
      notes: applyOp(history.notes, inverse),
      undoStack: history.undoStack.slice(0, -1),
      redoStack: [...history.redoStack, last],
    },
    applied: inverse,
  };
}

export function redo(history: EditHistory): { history: EditHistory; applied: NoteOp } | null {
  const last = history.redoStack[history.redoStack.length - 1];
  if (!last) return null;
  return {
    history: {
      notes: applyOp(history.notes, last),
      undoStack: [...history.undoStack, last],
      redoStack: history.redoStack.slice(0, -1),
    },
    applied: last,
  };
}
