/**
 * Thin typed client for the crowdlabel gateway.
 *
 * The fetch function is injected so tests can mock the backend wholesale.
 * All protocol decisions (grading, suspension, resolution) happen server
 * side; this module only moves JSON and maps error envelopes.
 */

import type {
  MeResponse,
  NextHitResponse,
  QualificationPayload,
  QualificationResult,
  SessionResponse,
  SubmitResponse,
  ProgressResponse,
  AgreementResponse,
  SuspensionsResponse,
  CostResponse,
  DifficultyResponse,
  PlanResponse,
  StateResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error envelope from the gateway: {"detail": {"code", "message"}}. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** Session tokens are memory-only server side; a 401 means log in again. */
  get sessionExpired(): boolean {
    return this.status === 401;
  }
}

async function raiseFor(response: Response): Promise<never> {
  let code = "error";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    const detail = body?.detail;
    if (detail && typeof detail === "object" && detail.code) {
      code = String(detail.code);
      message = String(detail.message ?? message);
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  private token: string | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  get hasSession(): boolean {
    return this.token !== null;
  }

  clearSession(): void {
    this.token = null;
  }

  private async request<T>(
    method: string,
    path: string,
    options: { body?: unknown; headers?: Record<string, string>; text?: boolean } = {},
  ): Promise<T> {
    const headers: Record<string, string> = { ...options.headers };
    let body: string | undefined;
    if (options.body !== undefined) {
      headers["Content-Type"] = "application/json";
      body = JSON.stringify(options.body);
    }
    const response = await this.fetchFn(this.baseUrl + path, { method, headers, body });
    if (!response.ok) {
      await raiseFor(response);
    }
    if (options.text) {
      return (await response.text()) as T;
    }
    return (await response.json()) as T;
  }

  private authHeaders(): Record<string, string> {
    if (this.token === null) {
      throw new ApiError(401, "unauthorized", "no session; log in first");
    }
    return { Authorization: `Bearer ${this.token}` };
  }

  // -- annotator --------------------------------------------------------

  async openSession(annotatorId: string): Promise<SessionResponse> {
    const session = await this.request<SessionResponse>("POST", "/sessions", {
      body: { annotator_id: annotatorId },
    });
    this.token = session.token;
    return session;
  }

  async me(): Promise<MeResponse> {
    return this.request("GET", "/me", { headers: this.authHeaders() });
  }

  async fetchQualification(cluster: string): Promise<QualificationPayload> {
    return this.request("GET", `/qualification/${encodeURIComponent(cluster)}`, {
      headers: this.authHeaders(),
    });
  }

  async submitQualification(
    cluster: string,
    answers: Record<string, string>,
  ): Promise<QualificationResult> {
    return this.request("POST", `/qualification/${encodeURIComponent(cluster)}`, {
      body: { answers },
      headers: this.authHeaders(),
    });
  }

  async nextHit(): Promise<NextHitResponse> {
    return this.request("GET", "/hits/next", { headers: this.authHeaders() });
  }

  /**
   * Submit all five answers atomically. Callers hold the idempotency key for
   * the lifetime of one HIT attempt so a retry after a network failure
   * replays instead of double grading.
   */
  async submitHit(
    hitId: string,
    answers: Record<string, string>,
    idempotencyKey: string,
  ): Promise<SubmitResponse> {
    return this.request("POST", `/hits/${encodeURIComponent(hitId)}/responses`, {
      body: { answers, idempotency_key: idempotencyKey },
      headers: this.authHeaders(),
    });
  }

  // -- admin --------------------------------------------------------------

  private adminHeaders(adminToken: string): Record<string, string> {
    return { "X-Admin-Token": adminToken };
  }

  async progress(adminToken: string): Promise<ProgressResponse> {
    return this.request("GET", "/admin/progress", { headers: this.adminHeaders(adminToken) });
  }

  async agreement(adminToken: string): Promise<AgreementResponse> {
    return this.request("GET", "/admin/agreement", { headers: this.adminHeaders(adminToken) });
  }

  async suspensions(adminToken: string): Promise<SuspensionsResponse> {
    return this.request("GET", "/admin/suspensions", { headers: this.adminHeaders(adminToken) });
  }

  async cost(adminToken: string): Promise<CostResponse> {
    return this.request("GET", "/admin/cost", { headers: this.adminHeaders(adminToken) });
  }

  async difficulty(adminToken: string): Promise<DifficultyResponse> {
    return this.request("GET", "/admin/difficulty", { headers: this.adminHeaders(adminToken) });
  }

  async plan(adminToken: string): Promise<PlanResponse> {
    return this.request("GET", "/admin/plan", { headers: this.adminHeaders(adminToken) });
  }

  async state(adminToken: string): Promise<StateResponse> {
    return this.request("GET", "/admin/state", { headers: this.adminHeaders(adminToken) });
  }

  /** Revision patch as JSONL text, byte-identical to the backend artifact. */
  async patch(adminToken: string): Promise<string> {
    return this.request("GET", "/admin/patch", {
      headers: this.adminHeaders(adminToken),
      text: true,
    });
  }
}

/** Fresh key for one HIT submission attempt chain. */
export function newIdempotencyKey(): string {
  if (typeof crypto !== "undefined" && typeof crypto.randomUUID === "function") {
    return crypto.randomUUID();
  }
  return `key-${Date.now()}-${Math.random().toString(36).slice(2, 10)}`;
}
