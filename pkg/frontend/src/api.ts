// Thin client for the session service JSON API.

export interface EventOption {
  id: string;
  label: string;
}

export interface TurnEvent {
  seq: number;
  kind: string;
  segment: string;
  speaker?: string;
  text?: string;
  options?: EventOption[];
  display_seconds?: number;
}

export interface SessionStart {
  session_id: string;
  status: string;
  events: TurnEvent[];
}

export interface TurnState {
  status: string;
  events: TurnEvent[];
  options: EventOption[];
}

export interface Progress {
  skills_total: number;
  skills_completed: number;
  current_skill: string | null;
  mistakes: number;
  elapsed_turns: number;
  status: string;
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = `HTTP_${response.status}`;
    try {
      const body = await response.json();
      if (body && body.code) code = body.code;
    } catch {
      // non-JSON error body
    }
    throw new ApiError(response.status, code);
  }
  return (await response.json()) as T;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
  ) {
    super(`${status} ${code}`);
  }
}

export class Api {
  constructor(private base: string) {}

  createSession(mode: string, firstName: string, userId: string): Promise<SessionStart> {
    const bindings = firstName ? { "user.first_name": firstName } : {};
    return fetch(`${this.base}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mode, bindings, user_id: userId }),
    }).then((r) => asJson<SessionStart>(r));
  }

  postChoice(sessionId: string, optionId: string, menuSeq: number): Promise<{ events: TurnEvent[] }> {
    return fetch(`${this.base}/api/sessions/${sessionId}/choice`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ option_id: optionId, seq: menuSeq }),
    }).then((r) => asJson<{ events: TurnEvent[] }>(r));
  }

  getTurn(sessionId: string, after = 0): Promise<TurnState> {
    return fetch(`${this.base}/api/sessions/${sessionId}/turn?after=${after}`).then((r) =>
      asJson<TurnState>(r),
    );
  }

  getProgress(sessionId: string): Promise<Progress> {
    return fetch(`${this.base}/api/sessions/${sessionId}/progress`).then((r) =>
      asJson<Progress>(r),
    );
  }
}
