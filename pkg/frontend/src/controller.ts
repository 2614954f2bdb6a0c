// Session flow state machine. Holds only confirmed server state: every
// transition replaces the view with the service's response, never a local
// guess, so what the user sees is byte-identical to what the server said.

import { ApiClient, ApiError, SessionView } from "./api.js";

export type Phase = "idle" | "starting" | "asking" | "finalized" | "error";

export interface ControllerState {
  phase: Phase;
  view: SessionView | null;
  error: { code: string; message: string; retryable: boolean } | null;
}

export type Listener = (state: ControllerState) => void;

export class SessionController {
  private state: ControllerState = { phase: "idle", view: null, error: null };
  private listeners: Listener[] = [];
  private lastRequest: { question: string; dbId: string } | null = null;

  constructor(private readonly api: ApiClient) {}

  getState(): ControllerState {
    return this.state;
  }

  get view(): SessionView | null {
    return this.state.view;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(next: ControllerState) {
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }

  private applyView(view: SessionView) {
    if (view.current_question) {
      const count = view.current_question.options.length;
      if (count < 3 || count > 5) {
        throw new Error(`service sent ${count} options; expected 3..5`);
      }
    }
    this.emit({
      phase: view.phase === "finalized" ? "finalized" : "asking",
      view,
      error: null,
    });
  }

  private fail(err: unknown, retryable: boolean) {
    const apiErr = err instanceof ApiError ? err : null;
    this.emit({
      phase: "error",
      view: this.state.view,
      error: {
        code: apiErr?.code ?? "network",
        message: apiErr?.message ?? String(err),
        retryable,
      },
    });
  }

  async start(question: string, dbId: string): Promise<ControllerState> {
    this.lastRequest = { question, dbId };
    this.emit({ phase: "starting", view: null, error: null });
    try {
      this.applyView(await this.api.createSession(question, dbId));
    } catch (err) {
      // network failures and server hiccups are retryable; a validation
      // error (unknown db, empty question) is not
      this.fail(err, !(err instanceof ApiError && err.status === 400));
    }
    return this.state;
  }

  async retry(): Promise<ControllerState> {
    if (!this.lastRequest) return this.state;
    return this.start(this.lastRequest.question, this.lastRequest.dbId);
  }

  async answer(optionIndex: number): Promise<ControllerState> {
    const view = this.state.view;
    if (this.state.phase !== "asking" || !view?.current_question) {
      throw new Error("no question is awaiting an answer");
    }
    try {
      this.applyView(await this.api.answer(view.id, view.current_question.ref, optionIndex));
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        // session expired on the server: user must restart
        this.fail(err, true);
      } else {
        this.fail(err, false);
      }
    }
    return this.state;
  }

  reset() {
    this.emit({ phase: "idle", view: null, error: null });
  }
}

// Word-level diff between the original and modified question, for the final
// view. Pure presentation; the strings themselves come from the server.
export interface DiffSpan {
  text: string;
  kind: "same" | "removed" | "added";
}

export function diffWords(before: string, after: string): DiffSpan[] {
  const a = before.split(/\s+/).filter(Boolean);
  const b = after.split(/\s+/).filter(Boolean);
  const lcs: number[][] = Array.from({ length: a.length + 1 }, () =>
    new Array<number>(b.length + 1).fill(0),
  );
  for (let i = a.length - 1; i >= 0; i--) {
    for (let j = b.length - 1; j >= 0; j--) {
      lcs[i][j] = a[i] === b[j] ? lcs[i + 1][j + 1] + 1 : Math.max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  const spans: DiffSpan[] = [];
  let i = 0;
  let j = 0;
  const push = (text: string, kind: DiffSpan["kind"]) => {
    const last = spans[spans.length - 1];
    if (last && last.kind === kind) {
      last.text += ` ${text}`;
    } else {
      spans.push({ text, kind });
    }
  };
  while (i < a.length && j < b.length) {
    if (a[i] === b[j]) {
      push(a[i], "same");
      i++;
      j++;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      push(a[i], "removed");
      i++;
    } else {
      push(b[j], "added");
      j++;
    }
  }
  while (i < a.length) push(a[i++], "removed");
  while (j < b.length) push(b[j++], "added");
  return spans;
}
