import type { Command, PolicyValues, SessionInfo, TransitionEvent } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson(res: Response): Promise<any> {
  const body = await res.text();
  let doc: any = {};
  try {
    doc = body ? JSON.parse(body) : {};
  } catch {
    doc = { error: body };
  }
  if (!res.ok) {
    throw new ApiError(res.status, doc.error ?? `HTTP ${res.status}`);
  }
  return doc;
}

/** Thin client for the session service's HTTP control plane. */
export class ControlClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const res = await fetch(this.url(path), {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    return asJson(res);
  }

  createSession(body: {
    user: string;
    lesson_id: string;
    run_mode?: string;
    policy?: Partial<PolicyValues>;
    session_id?: string;
    resume?: boolean;
    source?: { type: "synthetic"; rate?: number; duration_s?: number; timeline?: unknown[]; seed?: number };
  }): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", body);
  }

  getSession(id: string): Promise<SessionInfo> {
    return this.request("GET", `/sessions/${id}`);
  }

  setPolicy(id: string, policy: Partial<PolicyValues>): Promise<{ policy: PolicyValues }> {
    return this.request("POST", `/sessions/${id}/policy`, policy);
  }

  sendCommand(id: string, command: Command): Promise<{ ok: boolean }> {
    return this.request("POST", `/sessions/${id}/command`, command);
  }

  getEvents(id: string): Promise<{ events: TransitionEvent[] }> {
    return this.request("GET", `/sessions/${id}/events`);
  }

  listLessons(): Promise<{ lessons: string[] }> {
    return this.request("GET", "/lessons");
  }

  putLesson(id: string, manifest: unknown): Promise<{ ok: boolean }> {
    return this.request("PUT", `/lessons/${id}`, manifest);
  }
}
