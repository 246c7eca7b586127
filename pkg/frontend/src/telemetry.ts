// Event capture and delivery. Events buffer locally and flush to the session
// service at most every flushIntervalMs (2 s) and on submit; failed batches
// stay queued and retry under the same batch id (the service dedupes).

import { NoteOp } from "./editing.js";
import { EditEvent } from "./replay.js";

export type BatchTransport = (batch: { batch_id: string; events: EditEvent[] }) => Promise<void>;

export type Tallies = { keyPresses: number; mouseClicks: number; noteOps: number };

export class EventBuffer {
  readonly flushIntervalMs: number;
  private readonly transport: BatchTransport;
  private readonly now: () => number;
  private readonly startedAt: number;
  private queue: EditEvent[] = [];
  private inFlight: { batch_id: string; events: EditEvent[] } | null = null;
  private batchCounter = 0;
  private lastTimestamp = 0;
  tallies: Tallies = { keyPresses: 0, mouseClicks: 0, noteOps: 0 };

  constructor(transport: BatchTransport, now: () => number, flushIntervalMs = 2000) {
    this.transport = transport;
    this.now = now;
    this.startedAt = now();
    this.flushIntervalMs = flushIntervalMs;
  }

  private timestamp(): number {
    // monotonic relative to session start, even if the wall clock stalls
    const t = Math.max(0, Math.round(this.now() - this.startedAt));
    this.lastTimestamp = Math.max(this.lastTimestamp, t);
    return this.lastTimestamp;
  }

  recordKeyPress(): void {
    this.tallies.keyPresses += 1;
    this.queue.push({ timestamp_ms: this.timestamp(), kind: "key_press", payload: {} });
  }

  recordMouseClick(): void {
    this.tallies.mouseClicks += 1;
    this.queue.push({ timestamp_ms: this.timestamp(), kind: "mouse_click", payload: {} });
  }

  recordNoteOp(op: NoteOp): void {
    this.tallies.noteOps += 1;
    this.queue.push({ timestamp_ms: this.timestamp(), kind: "note_op", payload: op });
  }

  /** Events recorded but not yet acknowledged by the service. */
  unsyncedCount(): number {
    return this.queue.length + (this.inFlight?.events.length ?? 0);
  }

  allEvents(): EditEvent[] {
    return [...(this.inFlight?.events ?? []), ...this.queue];
  }

  /** Send everything pending; resolves true when the buffer drained. */
  async flush(): Promise<boolean> {
    if (this.inFlight === null) {
      if (this.queue.length === 0) return true;
      this.inFlight = { batch_id: `batch-${this.batchCounter++}`, events: this.queue };
      this.queue = [];
    }
    try {
      await this.transport(this.inFlight);
      this.inFlight = null;
    } catch {
      // batch stays in flight; the next flush retries the same batch id
      return false;
    }
    return this.queue.length === 0 ? true : this.flush();
  }

  /** Wire the periodic flush through an injectable timer (setInterval-like). */
  startAutoFlush(
    schedule: (fn: () => void, ms: number) => () => void = (fn, ms) => {
      const id = setInterval(fn, ms);
      return () => clearInterval(id);
    },
  ): () => void {
    return schedule(() => {
      void this.flush();
    }, this.flushIntervalMs);
  }
}
