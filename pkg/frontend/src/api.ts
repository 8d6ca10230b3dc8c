// Typed client for the validation service JSON API. Payloads never carry
// answer keys; the server keeps those to itself.

export type TaskKind = "image_intrusion" | "topic_matching";

export interface IntrusionItem {
  item_id: number;
  kind: "image_intrusion";
  images: string[]; // six frame paths in server-fixed order
}

export interface MatchingItem {
  item_id: number;
  kind: "topic_matching";
  images: string[]; // the probe frame
  rows: string[][]; // four rows of four frame paths
}

export type Item = IntrusionItem | MatchingItem;

export interface DoneSignal {
  done: true;
  answered: number;
  total: number;
}

export interface Progress {
  coder: string;
  tasks: Record<string, { answered: number; total: number }>;
}

export type RespondOutcome = "recorded" | "duplicate";

export function choiceCount(kind: TaskKind): number {
  return kind === "image_intrusion" ? 6 : 4;
}

export function isDone(payload: Item | DoneSignal): payload is DoneSignal {
  return (payload as DoneSignal).done === true;
}

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async nextItem(kind: TaskKind, coder: string): Promise<Item | DoneSignal> {
    const resp = await fetch(
      this.url(`/api/tasks/${kind}/next?coder=${encodeURIComponent(coder)}`),
    );
    if (!resp.ok) {
      throw new ApiError(`next item failed: HTTP ${resp.status}`, resp.status);
    }
    return (await resp.json()) as Item | DoneSignal;
  }

  async respond(
    kind: TaskKind,
    coder: string,
    itemId: number,
    choice: number,
  ): Promise<RespondOutcome> {
    const resp = await fetch(this.url(`/api/tasks/${kind}/respond`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ coder, item_id: itemId, choice }),
    });
    if (resp.status === 204) return "recorded";
    if (resp.status === 409) return "duplicate"; // already persisted server-side
    throw new ApiError(`respond failed: HTTP ${resp.status}`, resp.status);
  }

  async progress(coder: string): Promise<Progress> {
    const resp = await fetch(
      this.url(`/api/progress?coder=${encodeURIComponent(coder)}`),
    );
    if (!resp.ok) {
      throw new ApiError(`progress failed: HTTP ${resp.status}`, resp.status);
    }
    return (await resp.json()) as Progress;
  }

  frameUrl(framePath: string): string {
    // manifest paths look like frames/<video_id>/frame_<seq>.jpg
    return this.url(`/api/${framePath}`);
  }
}
