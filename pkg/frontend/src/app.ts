// DOM shell: renders the current ScreenModel, forwards button presses, keeps
// the snapshot fresh, and mirrors alarm events into sound/blink/vibration.

import { renderAlarm } from "./alarms.js";
import { ApiClient } from "./client.js";
import {
  ButtonId,
  ScreenModel,
  Tab,
  UiState,
  applyEvent,
  applySnapshot,
  cancelNote,
  confirmNote,
  connectSession,
  editNoteDraft,
  initialUiState,
  pressButton,
  screenModel,
  showTab,
} from "./model.js";
import type { StreamHandle } from "./sse.js";

const BUTTON_LABELS: Record<ButtonId, string> = {
  start: "Start CPR",
  startCompression: "Start heart compression",
  analyzeRhythm: "Analyze heart rhythm",
  selectAsystolePea: "Asystole / PEA",
  selectVfVt: "VF / VT",
  defibrillate: "Defibrillate",
  adrenaline: "Give adrenaline",
  amiodarone: "Give cordarone",
  toAnalysis: "Till Analysen",
  endSession: "Avsluta",
  addNote: "Lägg till",
};

const SCREEN_BUTTONS: Record<string, ButtonId[]> = {
  Start: ["start"],
  Analysis: ["startCompression", "analyzeRhythm", "addNote"],
  ChooseAnalysis: ["selectAsystolePea", "selectVfVt", "endSession", "addNote"],
  AsystolePea: ["adrenaline", "startCompression", "toAnalysis", "addNote"],
  VfVt: ["defibrillate", "adrenaline", "amiodarone", "startCompression", "toAnalysis", "addNote"],
};

function fmtSeconds(ns: number): string {
  const total = Math.max(0, Math.floor(ns / 1e9));
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

export class App {
  private state: UiState = initialUiState();
  private stream: StreamHandle | null = null;
  private snapshotAtMs = 0;

  constructor(
    private readonly client: ApiClient,
    private readonly root: HTMLElement,
  ) {
    this.root.addEventListener("click", (e) => this.onClick(e));
    this.root.addEventListener("input", (e) => this.onInput(e));
    setInterval(() => this.refreshSnapshot(), 1000);
    setInterval(() => this.renderClocks(), 200);
    this.render();
  }

  private async onClick(e: Event): Promise<void> {
    const target = (e.target as HTMLElement).closest("[data-action]") as HTMLElement | null;
    if (!target) return;
    const action = target.dataset.action!;
    if (action === "press") {
      await this.press(target.dataset.button as ButtonId);
    } else if (action === "tab") {
      this.state = showTab(this.state, target.dataset.tab as Tab);
      this.render();
    } else if (action === "note-confirm") {
      const { state, effects } = confirmNote(this.state);
      this.state = state;
      if (effects.submit && this.state.sessionId) {
        await this.client.submitCommand(this.state.sessionId, effects.submit.kind, effects.submit.payload);
        await this.refreshSnapshot();
      }
      this.render();
    } else if (action === "note-cancel") {
      this.state = cancelNote(this.state);
      this.render();
    } else if (action === "export" && this.state.sessionId) {
      window.open(this.client.exportUrl(this.state.sessionId), "_blank");
    }
  }

  private onInput(e: Event): void {
    const target = e.target as HTMLElement;
    if (target.dataset.field === "note-draft") {
      this.state = editNoteDraft(this.state, (target as HTMLTextAreaElement).value);
      this.renderNoteButtons();
    }
  }

  private async press(button: ButtonId): Promise<void> {
    const { state, effects } = pressButton(this.state, button);
    this.state = state;
    if (effects.createSession) {
      await this.startSession();
    } else if (effects.submit && this.state.sessionId) {
      const ack = await this.client.submitCommand(
        this.state.sessionId,
        effects.submit.kind,
        effects.submit.payload,
      );
      if (!ack.accepted) {
        this.flashRejected(button);
      }
      await this.refreshSnapshot();
    }
    this.render();
  }

  private async startSession(): Promise<void> {
    const sessionId = await this.client.createSession();
    this.state = connectSession(this.state, sessionId);
    await this.refreshSnapshot();
    this.stream?.close();
    this.stream = this.client.streamEvents(sessionId, 1, (event) => {
      this.state = applyEvent(this.state, event);
      renderAlarm(event);
      void this.refreshSnapshot();
      this.render();
    });
    this.render();
  }

  private async refreshSnapshot(): Promise<void> {
    if (!this.state.sessionId) return;
    const snap = await this.client.getSnapshot(this.state.sessionId);
    this.state = applySnapshot(this.state, snap);
    this.snapshotAtMs = performance.now();
    this.render();
  }

  private flashRejected(button: ButtonId): void {
    const el = this.root.querySelector(`[data-button="${button}"]`);
    if (el) {
      el.classList.add("rejected");
      setTimeout(() => el.classList.remove("rejected"), 400);
    }
  }

  // interpolate the countdown between snapshots for a smooth numeral
  private countdownText(model: ScreenModel): string {
    if (model.countdownRemainingNs === null) return "";
    const driftNs = (performance.now() - this.snapshotAtMs) * 1e6;
    return fmtSeconds(model.countdownRemainingNs - driftNs);
  }

  private renderClocks(): void {
    const model = screenModel(this.state);
    const countdown = this.root.querySelector("#countdown");
    if (countdown) countdown.textContent = this.countdownText(model);
    const elapsed = this.root.querySelector("#elapsed");
    if (elapsed && this.state.snapshot) {
      const driftNs = (performance.now() - this.snapshotAtMs) * 1e6;
      const total = this.state.snapshot.ended
        ? this.state.snapshot.elapsed_ns
        : this.state.snapshot.elapsed_ns + driftNs;
      elapsed.textContent = fmtSeconds(total);
    }
  }

  private renderNoteButtons(): void {
    const confirm = this.root.querySelector('[data-action="note-confirm"]') as HTMLButtonElement | null;
    if (confirm) confirm.disabled = this.state.noteDraft.trim() === "";
  }

  private button(model: ScreenModel, id: ButtonId): string {
    const enabled = model.enabledButtons.includes(id);
    const classes = ["button", `button-${id}`];
    if (!enabled) classes.push("disabled");
    return `<button class="${classes.join(" ")}" data-action="press" data-button="${id}" ${enabled ? "" : "disabled"}>${BUTTON_LABELS[id]}</button>`;
  }

  private render(): void {
    const model = screenModel(this.state);
    const parts: string[] = [];

    parts.push(`<header>
      <div class="screen-name">${model.screen}</div>
      <div class="clocks">elapsed <span id="elapsed">0:00</span>
        <span id="countdown" class="countdown"></span></div>
    </header>`);

    if (model.banner) {
      parts.push(`<div class="banner">${model.banner}</div>`);
    }
    if (model.blinkMark !== null) {
      parts.push(`<div class="blink-mark">${model.blinkMark}</div>`);
    }

    const summaryTabs = ["Summary", "Documentation", "Notes"] as const;
    if (model.screen === "Summary" || model.screen === "Documentation" || model.screen === "Notes") {
      parts.push(
        `<nav class="tabs">` +
          summaryTabs
            .map(
              (tab) =>
                `<button class="tab ${model.screen === tab ? "active" : ""}" data-action="tab" data-tab="${tab}">${tab}</button>`,
            )
            .join("") +
          `</nav>`,
      );
      if (model.screen === "Summary") {
        parts.push(`<section class="summary">
          <div class="stat"><span class="value">${model.summary.defibCount}</span> defibrillations</div>
          <div class="stat"><span class="value">${model.summary.adrenalineTotalMg} mg</span> adrenaline</div>
          <div class="stat"><span class="value">${model.summary.cordaroneTotalMg} mg</span> cordarone</div>
          <button class="button" data-action="export">Download session file</button>
        </section>`);
      } else if (model.screen === "Documentation") {
        parts.push(
          `<section class="documentation"><ul>` +
            model.documentation.map((line) => `<li>${line}</li>`).join("") +
            `</ul></section>`,
        );
      } else {
        parts.push(
          `<section class="notes"><ul>` +
            model.notes.map((n) => `<li><time>${n.at}</time> ${n.text}</li>`).join("") +
            `</ul></section>`,
        );
      }
    } else {
      const buttons = SCREEN_BUTTONS[model.screen] ?? [];
      parts.push(
        `<main class="screen screen-${model.screen}">` +
          buttons.map((b) => this.button(model, b)).join("") +
          `</main>`,
      );
    }

    if (model.noteOverlayOpen) {
      parts.push(`<div class="overlay">
        <div class="overlay-card">
          <textarea data-field="note-draft" placeholder="Write a note">${model.noteDraft}</textarea>
          <div class="overlay-actions">
            <button class="button" data-action="note-confirm" ${model.noteDraft.trim() === "" ? "disabled" : ""}>Lägg till</button>
            <button class="button button-secondary" data-action="note-cancel">Cancel</button>
          </div>
        </div>
      </div>`);
    }

    this.root.innerHTML = parts.join("");
    this.renderClocks();
  }
}
