// Audition: simple tones on the quantized grid. Scheduling is pure;
// playTones binds it to WebAudio. Audition itself never counts as input.

import { LOWEST_MIDI_NOTE, Note } from "./score.js";

export type ToneEvent = {
  midiNote: number;
  startSeconds: number;
  durationSeconds: number;
};

export function midiToHz(midiNote: number): number {
  return 440 * Math.pow(2, (midiNote - 69) / 12);
}

export function scheduleTones(
  notes: Note[],
  secondsPerTick: number,
  region?: { startTick: number; endTick: number },
): ToneEvent[] {
  const tones: ToneEvent[] = [];
  const from = region?.startTick ?? 0;
  const to = region?.endTick ?? Number.MAX_SAFE_INTEGER;
  for (const n of notes) {
    if (n.onset_tick + n.duration_ticks <= from || n.onset_tick >= to) continue;
    const start = Math.max(n.onset_tick, from);
    const end = Math.min(n.onset_tick + n.duration_ticks, to);
    tones.push({
      midiNote: n.pitch_index + LOWEST_MIDI_NOTE,
      startSeconds: (start - from) * secondsPerTick,
      durationSeconds: (end - start) * secondsPerTick,
    });
  }
  return tones.sort((a, b) => a.startSeconds - b.startSeconds || a.midiNote - b.midiNote);
}

export function playTones(ctx: AudioContext, tones: ToneEvent[], gainLevel = 0.08): void {
  const t0 = ctx.currentTime + 0.05;
  for (const tone of tones) {
    const osc = ctx.createOscillator();
    const gain = ctx.createGain();
    osc.type = "triangle";
    osc.frequency.value = midiToHz(tone.midiNote);
    gain.gain.setValueAtTime(gainLevel, t0 + tone.startSeconds);
    gain.gain.setTargetAtTime(0, t0 + tone.startSeconds + tone.durationSeconds - 0.02, 0.01);
    osc.connect(gain).connect(ctx.destination);
    osc.start(t0 + tone.startSeconds);
    osc.stop(t0 + tone.startSeconds + tone.durationSeconds + 0.1);
  }
}
