// Session state machine: one item on screen, one submission in flight at
// most, no advancing without a server acknowledgment (204 or 409).

import { ApiClient, DoneSignal, Item, TaskKind, choiceCount, isDone } from "./api.js";

export type Phase =
  | "loading"
  | "answering"
  | "submitting"
  | "network-error"
  | "done";

export interface SessionState {
  coder: string;
  kind: TaskKind;
  phase: Phase;
  item: Item | null;
  selected: number | null;
  answered: number;
  total: number;
  errorMessage: string | null;
}

export type Listener = (state: SessionState) => void;

export class Session {
  private state: SessionState;
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    coder: string,
    kind: TaskKind,
  ) {
    this.state = {
      coder,
      kind,
      phase: "loading",
      item: null,
      selected: null,
      answered: 0,
      total: 0,
      errorMessage: null,
    };
  }

  snapshot(): SessionState {
    return { ...this.state };
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.snapshot());
  }

  /** Load progress and the first unanswered item; safe to call after a
   * refresh mid-task, the server hands back wherever the coder left off. */
  async start(): Promise<void> {
    this.update({ phase: "loading", errorMessage: null });
    try {
      const progress = await this.api.progress(this.state.coder);
      const task = progress.tasks[this.state.kind];
      if (task) this.update({ answered: task.answered, total: task.total });
      await this.loadNext();
    } catch (err) {
      this.update({ phase: "network-error", errorMessage: String(err) });
    }
  }

  private async loadNext(): Promise<void> {
    const payload = await this.api.nextItem(this.state.kind, this.state.coder);
    if (isDone(payload)) {
      const done = payload as DoneSignal;
      this.update({
        phase: "done",
        item: null,
        selected: null,
        answered: done.answered,
        total: done.total,
      });
      return;
    }
    this.update({ phase: "answering", item: payload, selected: null });
  }

  select(choice: number): void {
    if (this.state.phase !== "answering" || this.state.item === null) return;
    if (choice < 0 || choice >= choiceCount(this.state.kind)) return;
    this.update({ selected: choice });
  }

  /** Post the selected choice. Advances only on 204 or 409 (the latter
   * means the answer is already persisted, so no duplicate is recorded).
   * On a network failure the choice stays selected for retry. */
  async confirm(): Promise<void> {
    const { phase, item, selected } = this.state;
    if (phase !== "answering" || item === null || selected === null) return;
    this.update({ phase: "submitting" });
    try {
      await this.api.respond(this.state.kind, this.state.coder, item.item_id, selected);
      this.update({ answered: this.state.answered + 1, errorMessage: null });
      await this.loadNext();
    } catch (err) {
      this.update({ phase: "network-error", errorMessage: String(err) });
    }
  }

  /** Re-attempt after a network failure, preserving the pending choice. */
  async retry(): Promise<void> {
    if (this.state.phase !== "network-error") return;
    if (this.state.item !== null && this.state.selected !== null) {
      this.update({ phase: "answering", errorMessage: null });
      await this.confirm();
    } else {
      await this.start();
    }
  }
}
