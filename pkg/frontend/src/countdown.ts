// Session countdown. Runs off the local clock from the moment the clip
// arrived; the server enforces its own deadline, so the two must agree
// within a couple of seconds of transport skew.

export const SESSION_MS = 1800_000;

export class Countdown {
  private readonly now: () => number;
  private readonly localStart: number;
  readonly durationMs: number;

  constructor(now: () => number, durationMs = SESSION_MS) {
    this.now = now;
    this.localStart = now();
    this.durationMs = durationMs;
  }

  elapsedMs(): number {
    return Math.max(0, this.now() - this.localStart);
  }

  remainingMs(): number {
    return Math.max(0, this.durationMs - this.elapsedMs());
  }

  expired(): boolean {
    return this.elapsedMs() >= this.durationMs;
  }

  /** |local remaining - server remaining| must stay within the tolerance. */
  agreesWithServer(serverDeadlineMs: number, serverNowMs: number, toleranceMs = 2000): boolean {
    const serverRemaining = Math.max(0, serverDeadlineMs - serverNowMs);
    return Math.abs(serverRemaining - this.remainingMs()) <= toleranceMs;
  }

  display(): string {
    const seconds = Math.ceil(this.remainingMs() / 1000);
    const m = Math.floor(seconds / 60);
    const s = seconds % 60;
    return `${m}:${s.toString().padStart(2, "0")}`;
  }
}
