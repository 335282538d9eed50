// REST client for the recording service. Fetch is injectable for tests.

import type {
  ArousalPoint,
  ChainReport,
  ManifestView,
  SessionConfigForm,
  SessionSummary,
  TimelineRecord,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public code: string = "error",
    public violations: string[] = [],
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: any) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<any>;
}>;

export class Api {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = fetch as unknown as FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let error: any = {};
      try {
        error = (await response.json()).error ?? {};
      } catch {
        // non-JSON error body
      }
      throw new ApiError(
        error.message ?? `${method} ${path} -> ${response.status}`,
        response.status,
        error.code ?? "error",
        error.violations ?? [],
      );
    }
    return response.json();
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request("GET", "/sessions").then((r) => r.sessions);
  }

  createSession(config: Partial<SessionConfigForm>): Promise<ManifestView> {
    return this.request("POST", "/sessions", config);
  }

  stopSession(sessionId: string): Promise<ManifestView> {
    return this.request("POST", `/sessions/${sessionId}/stop`);
  }

  manifest(sessionId: string): Promise<ManifestView> {
    return this.request("GET", `/sessions/${sessionId}/manifest`);
  }

  records(sessionId: string, t0: number, t1: number, kinds?: string[]): Promise<TimelineRecord[]> {
    const params = new URLSearchParams({ t0: String(t0), t1: String(t1) });
    if (kinds?.length) params.set("kinds", kinds.join(","));
    return this.request("GET", `/sessions/${sessionId}/records?${params}`).then((r) => r.records);
  }

  arousalSeries(sessionId: string, t0: number, t1: number): Promise<ArousalPoint[]> {
    const params = new URLSearchParams({ t0: String(t0), t1: String(t1) });
    return this.request("GET", `/sessions/${sessionId}/arousal?${params}`).then((r) => r.series);
  }

  verify(sessionId: string): Promise<ChainReport> {
    return this.request("POST", "/verify", { session_id: sessionId });
  }

  mediaUrl(sessionId: string, mediaPath: string): string {
    // records store paths as "media/<name>"
    return `${this.baseUrl}/sessions/${sessionId}/${mediaPath}`;
  }

  liveUrl(sessionId: string): string {
    return this.baseUrl.replace(/^http/, "ws") + `/sessions/${sessionId}/live`;
  }
}
