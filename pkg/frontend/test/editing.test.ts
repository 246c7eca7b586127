import { describe, expect, it } from "vitest";

import {
  applyOp,
  deleteNote,
  emptyHistory,
  insertNote,
  invertOp,
  moveNote,
  performOp,
  redo,
  resizeNote,
  splitNote,
  undo,
} from "../src/editing.js";
import { Note } from "../src/score.js";

const note = (p: number, t: number, d: number, tag: string | null = null): Note => ({
  pitch_index: p,
  onset_tick: t,
  duration_ticks: d,
  voice_tag: tag,
});

describe("gesture constructors", () => {
  it("moves within bounds only", () => {
    const n = note(40, 4, 4);
    const op = moveNote(n, 2, -2, 16)!;
    expect(op.after[0]).toEqual(note(42, 2, 4));
    expect(moveNote(n, 0, 13, 16)).toBeNull();
    expect(moveNote(note(83, 0, 2), 1, 0, 16)).toBeNull();
  });

  it("splits a 4-tick note at tick 2 into two 2-tick notes", () => {
    const op = splitNote(note(40, 0, 4), 2)!;
    expect(op.before).toEqual([note(40, 0, 4)]);
    expect(op.after).toEqual([note(40, 0, 2), note(40, 2, 2)]);
    expect(splitNote(note(40, 0, 4), 0)).toBeNull();
    expect(splitNote(note(40, 0, 4), 4)).toBeNull();
  });

  it("resizes with a lower bound of one tick", () => {
    expect(resizeNote(note(40, 0, 2), -1, 16)!.after[0].duration_ticks).toBe(1);
    expect(resizeNote(note(40, 0, 1), -1, 16)).toBeNull();
    expect(resizeNote(note(40, 14, 2), 1, 16)).toBeNull();
  });

  it("inserts and deletes", () => {
    expect(insertNote(note(10, 0, 2), 16)!.after).toHaveLength(1);
    expect(insertNote(note(10, 15, 2), 16)).toBeNull();
    expect(deleteNote(note(10, 0, 2)).before).toHaveLength(1);
  });
});

describe("applyOp", () => {
  it("replaces before with after", () => {
    const notes = [note(40, 0, 4), note(50, 0, 4)];
    const result = applyOp(notes, splitNote(note(40, 0, 4), 2)!);
    expect(result).toHaveLength(3);
    expect(result).toContainEqual(note(40, 0, 2));
    expect(result).toContainEqual(note(40, 2, 2));
    expect(result).toContainEqual(note(50, 0, 4));
  });

  it("throws when the target note is gone", () => {
    expect(() => applyOp([], deleteNote(note(1, 0, 1)))).toThrow(/not found/);
  });

  it("merges identical inserted notes", () => {
    const result = applyOp([note(10, 0, 2)], insertNote(note(10, 0, 2), 8)!);
    expect(result).toHaveLength(1);
  });
});

describe("undo/redo", () => {
  it("inverse round-trips and is logged as an op", () => {
    let history = emptyHistory([note(40, 0, 4)]);
    const op = moveNote(note(40, 0, 4), 1, 1, 16)!;
    history = performOp(history, op);
    expect(history.notes).toEqual([note(41, 1, 4)]);

    const undone = undo(history)!;
    expect(undone.applied).toEqual(invertOp(op));
    expect(undone.history.notes).toEqual([note(40, 0, 4)]);

    const redone = redo(undone.history)!;
    expect(redone.applied).toEqual(op);
    expect(redone.history.notes).toEqual([note(41, 1, 4)]);
  });

  it("undo of a split is a single op restoring the original", () => {
    let history = emptyHistory([note(40, 0, 4)]);
    history = performOp(history, splitNote(note(40, 0, 4), 1)!);
    const undone = undo(history)!;
    expect(undone.history.notes).toEqual([note(40, 0, 4)]);
    expect(undone.applied.op).toBe("split");
    expect(undone.applied.before).toHaveLength(2);
    expect(undone.applied.after).toHaveLength(1);
  });

  it("a new edit clears the redo stack", () => {
    let history = emptyHistory([note(40, 0, 4)]);
    history = performOp(history, moveNote(note(40, 0, 4), 1, 0, 16)!);
    history = undo(history)!.history;
    history = performOp(history, moveNote(note(40, 0, 4), -1, 0, 16)!);
    expect(redo(history)).toBeNull();
  });

  it("empty stacks return null", () => {
    const history = emptyHistory([]);
    expect(undo(history)).toBeNull();
    expect(redo(history)).toBeNull();
  });
});
