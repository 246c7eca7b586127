// The editor session core: selection, keyboard commands, mouse gestures,
// undo/redo, instrumentation, deadline lockout, questionnaire. Framework-free
// so the whole editing test can be driven by synthetic input in tests;
// ui.ts binds it to the canvas and real DOM events.

import { Countdown } from "./countdown.js";
import {
  EditHistory,
  NoteOp,
  deleteNote,
  emptyHistory,
  insertNote,
  moveNote,
  performOp,
  redo,
  resizeNote,
  splitNote,
  undo,
} from "./editing.js";
import { Note, ScoreDoc, sameNote, serializeScore, snapTick } from "./score.js";
import { EventBuffer } from "./telemetry.js";

export type Cell = { pitch: number; tick: number };

export type KeyCommand =
  | "move-up"
  | "move-down"
  | "move-left"
  | "move-right"
  | "grow"
  | "shrink"
  | "split"
  | "delete"
  | "insert"
  | "undo"
  | "redo"
  | "audition"
  | "select-next";

// documented in-app; Shift+arrow resizes, plain arrows move
export const KEYMAP: Record<string, KeyCommand> = {
  ArrowUp: "move-up",
  ArrowDown: "move-down",
  ArrowLeft: "move-left",
  ArrowRight: "move-right",
  "Shift+ArrowRight": "grow",
  "Shift+ArrowLeft": "shrink",
  s: "split",
  Delete: "delete",
  Backspace: "delete",
  d: "delete",
  i: "insert",
  z: "undo",
  y: "redo",
  " ": "audition",
  Tab: "select-next",
};

export const DEFAULT_INSERT_TICKS = 2;

export class EditorSession {
  readonly clip: ScoreDoc;
  history: EditHistory;
  selection: Note | null = null;
  cursor: Cell = { pitch: 48, tick: 0 };
  onAudition: (() => void) | null = null;
  private readonly buffer: EventBuffer;
  private readonly countdown: Countdown;
  private pressedCell: Cell | null = null;
  private answers: (number | null)[] = [null, null, null];

  constructor(clip: ScoreDoc, buffer: EventBuffer, countdown: Countdown) {
    this.clip = clip;
    this.history = emptyHistory(clip.notes);
    this.buffer = buffer;
    this.countdown = countdown;
  }

  locked(): boolean {
    return this.countdown.expired();
  }

  notes(): Note[] {
    return this.history.notes;
  }

  currentScore(): ScoreDoc {
    return { ...this.clip, notes: this.history.notes };
  }

  remainingMs(): number {
    return this.countdown.remainingMs();
  }

  // --- instrumented input ----------------------------------------------------

  /** Every key-down on the editor surface counts exactly once while active. */
  keyDown(key: string, shift = false): void {
    if (this.locked()) return;
    this.buffer.recordKeyPress();
    const command = KEYMAP[shift && key.startsWith("Arrow") ? `Shift+${key}` : key];
    if (command) this.dispatch(command);
  }

  mouseDown(cell: Cell): void {
    if (this.locked()) return;
    this.pressedCell = { pitch: Math.round(cell.pitch), tick: snapTick(cell.tick) };
  }

  /** Press+release is one click; a drag additionally moves the selection. */
  mouseUp(cell: Cell): void {
    if (this.locked() || this.pressedCell === null) return;
    const down = this.pressedCell;
    const up = { pitch: Math.round(cell.pitch), tick: snapTick(cell.tick) };
    this.pressedCell = null;
    this.buffer.recordMouseClick();
    if (down.pitch === up.pitch && down.tick === up.tick) {
      this.cursor = up;
      this.selection = this.noteAt(up);
      return;
    }
    const dragged = this.noteAt(down);
    if (dragged) {
      this.selection = dragged;
      this.applyGesture(
        moveNote(dragged, up.pitch - down.pitch, up.tick - down.tick, this.clip.lengthTicks),
      );
    }
    this.cursor = up;
  }

  noteAt(cell: Cell): Note | null {
    return (
      this.history.notes.find(
        (n) =>
          n.pitch_index === cell.pitch &&
          cell.tick >= n.onset_tick &&
          cell.tick < n.onset_tick + n.duration_ticks,
      ) ?? null
    );
  }

  // --- commands ---------------------------------------------------------------

  private dispatch(command: KeyCommand): void {
    const length = this.clip.lengthTicks;
    const selected = this.selection;
    switch (command) {
      case "move-up":
      case "move-down":
      case "move-left":
      case "move-right": {
        if (!selected) return;
        const dPitch = command === "move-up" ? 1 : command === "move-down" ? -1 : 0;
        const dTick = command === "move-right" ? 1 : command === "move-left" ? -1 : 0;
        this.applyGesture(moveNote(selected, dPitch, dTick, length));
        return;
      }
      case "grow":
        if (selected) this.applyGesture(resizeNote(selected, 1, length));
        return;
      case "shrink":
        if (selected) this.applyGesture(resizeNote(selected, -1, length));
        return;
      case "split":
        if (selected) this.applyGesture(splitNote(selected, this.cursor.tick));
        return;
      case "delete":
        if (selected) {
          this.applyGesture(deleteNote(selected));
          this.selection = null;
        }
        return;
      case "insert": {
        const note: Note = {
          pitch_index: this.cursor.pitch,
          onset_tick: this.cursor.tick,
          duration_ticks: DEFAULT_INSERT_TICKS,
          voice_tag: "accompaniment",
        };
        this.applyGesture(insertNote(note, length));
        return;
      }
      case "undo": {
        const result = undo(this.history);
        if (result) {
          this.history = result.history;
          this.buffer.recordNoteOp(result.applied);
          this.fixSelection();
        }
        return;
      }
      case "redo": {
        const result = redo(this.history);
        if (result) {
          this.history = result.history;
          this.buffer.recordNoteOp(result.applied);
          this.fixSelection();
        }
        return;
      }
      case "audition":
        this.onAudition?.();
        return;
      case "select-next": {
        const notes = this.history.notes;
        if (!notes.length) return;
        const index = selected ? notes.findIndex((n) => sameNote(n, selected)) : -1;
        this.selection = notes[(index + 1) % notes.length];
        return;
      }
    }
  }

  /** One user-visible gesture produces exactly one note_op event. */
  applyGesture(op: NoteOp | null): boolean {
    if (!op || this.locked()) return false;
    this.history = performOp(this.history, op);
    this.buffer.recordNoteOp(op);
    this.selection = op.after[0] ?? null;
    return true;
  }

  private fixSelection(): void {
    if (this.selection && !this.history.notes.some((n) => sameNote(n, this.selection!))) {
      this.selection = null;
    }
  }

  // --- questionnaire ------------------------------------------------------------

  setAnswer(question: 1 | 2 | 3, value: number): void {
    if (![1, 2, 3, 4, 5].includes(value)) throw new Error(`bad Likert value ${value}`);
    this.answers[question - 1] = value;
  }

  answered(): boolean {
    return this.answers.every((a) => a !== null);
  }

  /** The submit payload; throws unless EQ1..EQ3 are all answered. */
  submitPayload(): { edited_score: string; eq1: number; eq2: number; eq3: number } {
    if (!this.answered()) throw new Error("answer EQ1..EQ3 before submitting");
    const [eq1, eq2, eq3] = this.answers as number[];
    return { edited_score: serializeScore(this.currentScore()), eq1, eq2, eq3 };
  }
}
