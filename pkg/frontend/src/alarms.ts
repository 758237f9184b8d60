// Best-effort presentation of alarm events: sound, screen blink, vibration.
// The event log is authoritative; nothing here affects protocol state.

import type { EventRecord } from "./types.js";

let audioContext: AudioContext | null = null;

function beep(durationMs: number, frequency: number): void {
  try {
    audioContext = audioContext ?? new AudioContext();
    const osc = audioContext.createOscillator();
    const gain = audioContext.createGain();
    osc.frequency.value = frequency;
    gain.gain.value = 0.4;
    osc.connect(gain);
    gain.connect(audioContext.destination);
    osc.start();
    osc.stop(audioContext.currentTime + durationMs / 1000);
  } catch {
    // no audio device / not yet allowed by a user gesture
  }
}

function vibrate(pattern: number[]): void {
  if (typeof navigator !== "undefined" && "vibrate" in navigator) {
    navigator.vibrate(pattern);
  }
}

export function flashScreen(): void {
  document.body.classList.add("blinking");
  setTimeout(() => document.body.classList.remove("blinking"), 400);
}

export function renderAlarm(event: EventRecord): void {
  switch (event.kind) {
    case "CompressionWarning":
      beep(700, 880);
      break;
    case "CompressionBlink":
      flashScreen();
      beep(120, 660);
      break;
    case "CompressionFinished":
      vibrate([250, 100, 250, 100, 400]);
      beep(1000, 440);
      break;
  }
}
