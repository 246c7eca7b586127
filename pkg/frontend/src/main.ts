// Bootstrap: join a session, run the editor under the countdown, flush
// telemetry, collect EQ answers, submit.

import { playTones, scheduleTones } from "./audio.js";
import { SessionClient } from "./client.js";
import { Countdown } from "./countdown.js";
import { EditorSession } from "./editor.js";
import { parseScore } from "./score.js";
import { EventBuffer } from "./telemetry.js";
import { PianoRollView } from "./ui.js";

function query(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function boot(): Promise<void> {
  const client = new SessionClient(query("service", "http://127.0.0.1:8000"));
  const editorId = query("editor", "editor-00");
  const doc = await client.createSession(editorId, query("clip", "") || undefined);
  const clip = parseScore(doc.score);

  const buffer = new EventBuffer(
    (batch) => client.sendEvents(doc.session_id, batch.batch_id, batch.events).then(() => {}),
    () => performance.now(),
  );
  const countdown = new Countdown(() => performance.now());
  const session = new EditorSession(clip, buffer, countdown);

  const canvas = document.getElementById("roll") as HTMLCanvasElement;
  const view = new PianoRollView(canvas, session);
  view.draw();

  session.onAudition = () => {
    const ctx = new AudioContext();
    playTones(ctx, scheduleTones(session.notes(), doc.preview.seconds_per_tick));
  };

  const stopFlush = buffer.startAutoFlush();

  const clock = document.getElementById("clock")!;
  const unsynced = document.getElementById("unsynced")!;
  const tick = setInterval(() => {
    clock.textContent = countdown.display();
    const pending = buffer.unsyncedCount();
    unsynced.textContent = pending ? `${pending} unsynced` : "";
    if (session.locked()) {
      clock.textContent = "0:00 — time is up, submit your answers";
      canvas.style.opacity = "0.4";
    }
    view.draw();
  }, 250);

  const form = document.getElementById("questionnaire") as HTMLFormElement;
  const submitButton = document.getElementById("submit") as HTMLButtonElement;
  form.addEventListener("change", () => {
    for (const q of [1, 2, 3] as const) {
      const checked = form.querySelector<HTMLInputElement>(`input[name=eq${q}]:checked`);
      if (checked) session.setAnswer(q, parseInt(checked.value, 10));
    }
    submitButton.disabled = !session.answered();
  });

  submitButton.addEventListener("click", async (e) => {
    e.preventDefault();
    await buffer.flush();
    const result = await client.submit(doc.session_id, session.submitPayload());
    clearInterval(tick);
    stopFlush();
    const m = result.metrics;
    document.getElementById("status")!.textContent =
      `submitted — ${m.editing_time_seconds.toFixed(0)} s, ` +
      `${m.key_presses} key presses, ${m.mouse_clicks} clicks`;
  });
}

boot().catch((err) => {
  document.getElementById("status")!.textContent = `failed to start: ${err}`;
});
