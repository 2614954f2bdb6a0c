// Typed client for the clarification service. Every method returns the
// server's JSON verbatim; no SQL or question text is synthesized here.

export interface OptionView {
  surface: string;
  kind: "column" | "table" | "aggregation" | "value" | "none";
}

export interface QuestionView {
  ref: number;
  token: string;
  prompt: string;
  options: OptionView[];
}

export interface AnswerView {
  question_ref: number;
  token: string;
  option_index: number;
  surface: string;
  kind: OptionView["kind"];
}

export interface SessionView {
  id: string;
  db_id: string;
  phase: "asking" | "finalized";
  question: string;
  sql_before: string;
  progress: { answered: number; total: number };
  current_question: QuestionView | null;
  answers: AnswerView[];
  modified_question: string | null;
  sql_after: string | null;
}

export interface ColumnInfo {
  name: string;
  type: string;
}

export interface TableInfo {
  name: string;
  columns: ColumnInfo[];
}

export interface SchemaInfo {
  db_id: string;
  tables: TableInfo[];
}

export interface ServiceError {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const err = (body ?? {}) as Partial<ServiceError>;
      throw new ApiError(response.status, err.code ?? "unknown", err.message ?? response.statusText);
    }
    return body as T;
  }

  schemas(): Promise<{ schemas: SchemaInfo[] }> {
    return this.request("/schemas");
  }

  createSession(question: string, dbId: string): Promise<SessionView> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify({ question, db_id: dbId }),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request(`/sessions/${id}`);
  }

  answer(sessionId: string, questionRef: number, optionIndex: number): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}/answers`, {
      method: "POST",
      body: JSON.stringify({ question_ref: questionRef, option_index: optionIndex }),
    });
  }
}
