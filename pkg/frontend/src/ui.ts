// Canvas rendering and DOM binding. All decisions live in EditorSession;
// this layer draws state and forwards raw input.

import { EditorSession, Cell } from "./editor.js";
import { N_PITCHES } from "./score.js";

export type Theme = {
  background: string;
  grid: string;
  beatLine: string;
  measureLine: string;
  note: string;
  melody: string;
  selected: string;
  cursor: string;
};

export const DEFAULT_THEME: Theme = {
  background: "#14161a",
  grid: "#23262c",
  beatLine: "#2e3340",
  measureLine: "#454c5e",
  note: "#5b9bd5",
  melody: "#d5a75b",
  selected: "#8fe08f",
  cursor: "#e0e0e0",
};

export class PianoRollView {
  cellWidth = 12;
  cellHeight = 8;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly session: EditorSession,
    private readonly theme: Theme = DEFAULT_THEME,
  ) {
    canvas.width = session.clip.lengthTicks * this.cellWidth;
    canvas.height = N_PITCHES * this.cellHeight;
    canvas.tabIndex = 0; // the editor surface is focusable: key events are scoped to it
    this.bind();
  }

  cellAt(px: number, py: number): Cell {
    return {
      pitch: N_PITCHES - 1 - Math.floor(py / this.cellHeight),
      tick: Math.floor(px / this.cellWidth),
    };
  }

  private bind(): void {
    this.canvas.addEventListener("mousedown", (e) => {
      this.canvas.focus();
      this.session.mouseDown(this.cellAt(e.offsetX, e.offsetY));
    });
    this.canvas.addEventListener("mouseup", (e) => {
      this.session.mouseUp(this.cellAt(e.offsetX, e.offsetY));
      this.draw();
    });
    this.canvas.addEventListener("keydown", (e) => {
      if (e.key === "Tab" || e.key === " ") e.preventDefault();
      this.session.keyDown(e.key, e.shiftKey);
      this.draw();
    });
  }

  draw(playheadTick: number | null = null): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { cellWidth: w, cellHeight: h } = this;
    ctx.fillStyle = this.theme.background;
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    const ticksPerMeasure = this.session.clip.ticksPerBeat * this.session.clip.beatsPerMeasure;
    for (let t = 0; t <= this.session.clip.lengthTicks; t++) {
      ctx.strokeStyle =
        t % ticksPerMeasure === 0
          ? this.theme.measureLine
          : t % this.session.clip.ticksPerBeat === 0
            ? this.theme.beatLine
            : this.theme.grid;
      ctx.beginPath();
      ctx.moveTo(t * w, 0);
      ctx.lineTo(t * w, this.canvas.height);
      ctx.stroke();
    }

    for (const note of this.session.notes()) {
      const selected = this.session.selection && sameCells(note, this.session.selection);
      ctx.fillStyle = selected
        ? this.theme.selected
        : note.voice_tag === "melody"
          ? this.theme.melody
          : this.theme.note;
      const y = (N_PITCHES - 1 - note.pitch_index) * h;
      ctx.fillRect(note.onset_tick * w + 1, y + 1, note.duration_ticks * w - 2, h - 2);
    }

    ctx.strokeStyle = this.theme.cursor;
    const cy = (N_PITCHES - 1 - this.session.cursor.pitch) * h;
    ctx.strokeRect(this.session.cursor.tick * w, cy, w, h);

    if (playheadTick !== null) {
      ctx.strokeStyle = this.theme.selected;
      ctx.beginPath();
      ctx.moveTo(playheadTick * w, 0);
      ctx.lineTo(playheadTick * w, this.canvas.height);
      ctx.stroke();
    }
  }
}

function sameCells(a: { pitch_index: number; onset_tick: number }, b: { pitch_index: number; onset_tick: number }): boolean {
  return a.pitch_index === b.pitch_index && a.onset_tick === b.onset_tick;
}
