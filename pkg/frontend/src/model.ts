// Pure screen-model derivation. The UI holds no protocol state of its own:
// everything below is a fold of (latest snapshot, event history, presentation
// defaults), so rebuilding after a crash from snapshot + resumed stream lands
// on an identical model.

import type { CommandKind, EventRecord, Snapshot } from "./types.js";

export type Screen =
  | "Start"
  | "Analysis"
  | "ChooseAnalysis"
  | "AsystolePea"
  | "VfVt"
  | "Summary"
  | "Documentation"
  | "Notes";

export type Tab = "Summary" | "Documentation" | "Notes";

export type ButtonId =
  | "start"
  | "startCompression"
  | "analyzeRhythm"
  | "selectAsystolePea"
  | "selectVfVt"
  | "defibrillate"
  | "adrenaline"
  | "amiodarone"
  | "toAnalysis"
  | "endSession"
  | "addNote";

export const COMMAND_FOR_BUTTON: Record<Exclude<ButtonId, "start">, CommandKind> = {
  startCompression: "StartCompression",
  analyzeRhythm: "AnalyzeRhythm",
  selectAsystolePea: "SelectAsystolePea",
  selectVfVt: "SelectVfVt",
  defibrillate: "Defibrillate",
  adrenaline: "AdministerAdrenaline",
  amiodarone: "AdministerAmiodarone",
  toAnalysis: "ReturnToAnalysis",
  endSession: "EndSession",
  addNote: "AddNote",
};

export interface UiState {
  sessionId: string | null;
  snapshot: Snapshot | null;
  events: EventRecord[];
  lastSeq: number;
  tab: Tab;
  noteDraft: string;
  noteOverlayOpen: boolean;
}

export interface ScreenModel {
  screen: Screen;
  enabledButtons: ButtonId[];
  countdownRemainingNs: number | null;
  elapsedNs: number;
  summary: {
    defibCount: number;
    adrenalineTotalMg: string;
    cordaroneTotalMg: string;
    ended: boolean;
  };
  noteDraft: string;
  noteOverlayOpen: boolean;
  blinkMark: number | null;
  banner: string | null;
  documentation: string[];
  notes: { at: string; text: string }[];
}

export function initialUiState(): UiState {
  return {
    sessionId: null,
    snapshot: null,
    events: [],
    lastSeq: 0,
    tab: "Summary",
    noteDraft: "",
    noteOverlayOpen: false,
  };
}

export function connectSession(state: UiState, sessionId: string): UiState {
  return { ...initialUiState(), sessionId };
}

export function applySnapshot(state: UiState, snapshot: Snapshot): UiState {
  return { ...state, snapshot, sessionId: snapshot.session_id };
}

export function applyEvent(state: UiState, event: EventRecord): UiState {
  if (event.seq <= state.lastSeq) {
    return state; // duplicate after a resume
  }
  return { ...state, events: [...state.events, event], lastSeq: event.seq };
}

export function showTab(state: UiState, tab: Tab): UiState {
  return { ...state, tab };
}

export function editNoteDraft(state: UiState, text: string): UiState {
  return { ...state, noteDraft: text };
}

export function openNoteOverlay(state: UiState): UiState {
  return { ...state, noteOverlayOpen: true };
}

export function cancelNote(state: UiState): UiState {
  return { ...state, noteOverlayOpen: false, noteDraft: "" };
}

function phaseScreen(state: UiState): Screen {
  const snap = state.snapshot;
  if (!state.sessionId || !snap) return "Start";
  switch (snap.phase) {
    case "analysis":
      return "Analysis";
    case "rhythm_selection":
      return "ChooseAnalysis";
    case "asystole_pea":
      return "AsystolePea";
    case "vf_vt":
      return "VfVt";
    case "ended":
      return state.tab;
    default:
      return "Start";
  }
}

function enabledButtons(state: UiState): ButtonId[] {
  if (!state.sessionId || !state.snapshot) return ["start"];
  const enabled = new Set(state.snapshot.enabled_commands);
  const buttons = (Object.keys(COMMAND_FOR_BUTTON) as Exclude<ButtonId, "start">[]).filter(
    (b) => enabled.has(COMMAND_FOR_BUTTON[b]),
  );
  return buttons.sort();
}

// the alarm presentation state is replayed from the event history so a
// reconnecting client shows the same blink/banner as one that never left
function alarmState(events: EventRecord[]): { blinkMark: number | null; banner: string | null } {
  let blinkMark: number | null = null;
  let banner: string | null = null;
  for (const e of events) {
    switch (e.kind) {
      case "CompressionStarted":
        blinkMark = null;
        banner = null;
        break;
      case "CompressionBlink":
        blinkMark = Number(e.payload["second_mark"]);
        break;
      case "CompressionFinished":
        blinkMark = null;
        banner = "Time to analyze the ECG";
        break;
      case "RhythmSelectionOpened":
        banner = null;
        break;
    }
  }
  return { blinkMark, banner };
}

function minuteStamp(wallUtc: string): string {
  const d = new Date(wallUtc);
  const pad = (n: number) => String(n).padStart(2, "0");
  return (
    `${d.getFullYear()}-${pad(d.getMonth() + 1)}-${pad(d.getDate())} ` +
    `${pad(d.getHours())}:${pad(d.getMinutes())}`
  );
}

function trimMg(value: unknown): string {
  const text = String(value);
  return text.includes(".") ? text.replace(/0+$/, "").replace(/\.$/, "") : text;
}

export function documentationLines(events: EventRecord[]): string[] {
  const lines: string[] = [];
  for (const e of events) {
    const at = minuteStamp(e.wall_utc);
    switch (e.kind) {
      case "SessionStarted":
        lines.push(`session started at ${at}`);
        break;
      case "SessionEnded":
        lines.push(`session ended at ${at}`);
        break;
      case "CompressionStarted":
        lines.push(`compression started at ${at}`);
        break;
      case "CompressionFinished":
        lines.push(`compression finished at ${at}`);
        break;
      case "RhythmSelected":
        lines.push(
          e.payload["rhythm"] === "asystole_pea"
            ? `rhythm asystole/PEA selected at ${at}`
            : `rhythm VF/VT selected at ${at}`,
        );
        break;
      case "DefibrillationDelivered":
        lines.push(`defibrillation #${e.payload["ordinal"]} at ${at}`);
        break;
      case "AdrenalineGiven":
        lines.push(`${trimMg(e.payload["mg"])}mg adrenaline at ${at}`);
        break;
      case "AmiodaroneGiven":
        lines.push(`${trimMg(e.payload["mg"])}mg cordarone at ${at}`);
        break;
      case "NoteAdded":
        lines.push(`note: ${e.payload["text"]} at ${at}`);
        break;
    }
  }
  return lines;
}

export function noteEntries(events: EventRecord[]): { at: string; text: string }[] {
  return events
    .filter((e) => e.kind === "NoteAdded")
    .map((e) => ({ at: minuteStamp(e.wall_utc), text: String(e.payload["text"]) }));
}

export function screenModel(state: UiState): ScreenModel {
  const snap = state.snapshot;
  const { blinkMark, banner } = alarmState(state.events);
  return {
    screen: phaseScreen(state),
    enabledButtons: enabledButtons(state),
    countdownRemainingNs: snap ? snap.countdown_remaining_ns : null,
    elapsedNs: snap ? snap.elapsed_ns : 0,
    summary: {
      defibCount: snap ? snap.defib_count : 0,
      adrenalineTotalMg: snap ? snap.adrenaline_total_mg : "0",
      cordaroneTotalMg: snap ? snap.cordarone_total_mg : "0",
      ended: snap ? snap.ended : false,
    },
    noteDraft: state.noteDraft,
    noteOverlayOpen: state.noteOverlayOpen,
    blinkMark,
    banner,
    documentation: documentationLines(state.events),
    notes: noteEntries(state.events),
  };
}

// Button dispatch used by the DOM layer and the instrumented tests alike: a
// button that is not in the current enabled set never submits anything.
export interface PressEffects {
  submit?: { kind: CommandKind; payload?: Record<string, unknown> };
  createSession?: boolean;
}

export function pressButton(state: UiState, button: ButtonId): { state: UiState; effects: PressEffects } {
  const model = screenModel(state);
  if (!model.enabledButtons.includes(button)) {
    return { state, effects: {} };
  }
  if (button === "start") {
    return { state, effects: { createSession: true } };
  }
  if (button === "addNote") {
    return { state: openNoteOverlay(state), effects: {} };
  }
  return { state, effects: { submit: { kind: COMMAND_FOR_BUTTON[button] } } };
}

export function confirmNote(state: UiState): { state: UiState; effects: PressEffects } {
  const text = state.noteDraft.trim();
  if (!state.noteOverlayOpen || text === "") {
    return { state, effects: {} }; // confirm is disabled on empty drafts
  }
  return {
    state: { ...state, noteOverlayOpen: false, noteDraft: "" },
    effects: { submit: { kind: "AddNote", payload: { text } } },
  };
}
