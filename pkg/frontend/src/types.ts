// Wire types shared with the session service. Field names match the server
// payloads exactly; milligram amounts travel as decimal strings.

export type CommandKind =
  | "StartSession"
  | "StartCompression"
  | "AnalyzeRhythm"
  | "SelectAsystolePea"
  | "SelectVfVt"
  | "Defibrillate"
  | "AdministerAdrenaline"
  | "AdministerAmiodarone"
  | "ReturnToAnalysis"
  | "AddNote"
  | "EndSession"
  | "Tick";

export interface EventRecord {
  seq: number;
  monotonic_ns: number;
  wall_utc: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface Snapshot {
  session_id: string;
  phase: "idle" | "analysis" | "rhythm_selection" | "asystole_pea" | "vf_vt" | "ended";
  defib_count: number;
  adrenaline_total_mg: string;
  cordarone_total_mg: string;
  enabled_commands: string[];
  countdown_remaining_ns: number | null;
  elapsed_ns: number;
  ended: boolean;
  last_seq: number;
}

export interface Ack {
  accepted: boolean;
  reason: string | null;
  enabled_commands: string[];
  events: EventRecord[];
}
