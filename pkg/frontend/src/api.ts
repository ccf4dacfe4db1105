import type {
  ApiError,
  BankView,
  PinUpdate,
  RunStatus,
  SessionView,
  Weights,
} from "./types.js";

export class StudioApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly retryable: boolean;

  constructor(status: number, body: ApiError["error"]) {
    super(body.message);
    this.name = "StudioApiError";
    this.code = body.code;
    this.status = status;
    this.retryable = body.retryable;
  }
}

export interface RunRequest {
  weights?: Weights;
  pins?: { cell: [number, number]; image_id: string }[];
  params?: Record<string, number | boolean>;
}

/**
 * Thin typed client over the studio service. The UI talks to the engine
 * exclusively through these endpoints; it never touches engine files.
 */
export class StudioClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await resp.json();
    if (!resp.ok) {
      const err = (payload as ApiError).error ?? {
        code: "unknown",
        message: `HTTP ${resp.status}`,
        retryable: resp.status >= 500,
      };
      throw new StudioApiError(resp.status, err);
    }
    return payload as T;
  }

  createBank(dir: string, theme: string): Promise<BankView> {
    return this.request("POST", "/banks", { dir, theme });
  }

  createSession(bankId: string, prompt: string, elements?: string[], n?: number): Promise<SessionView> {
    return this.request("POST", "/sessions", { bank_id: bankId, prompt, elements, n });
  }

  pinImage(sessionId: string, cell: [number, number], imageId: string): Promise<PinUpdate> {
    return this.request("POST", `/sessions/${sessionId}/pins`, { cell, image_id: imageId });
  }

  unpinImage(sessionId: string, cell: [number, number]): Promise<PinUpdate> {
    return this.request("DELETE", `/sessions/${sessionId}/pins`, { cell });
  }

  startRun(sessionId: string, req: RunRequest = {}): Promise<{ run_id: string; status: string }> {
    return this.request("POST", `/sessions/${sessionId}/runs`, req);
  }

  getRun(runId: string): Promise<RunStatus> {
    return this.request("GET", `/runs/${runId}`);
  }

  /** Stable, immutable thumbnail URL for a bank image. */
  imageUrl(bankId: string, imageId: string): string {
    return `${this.baseUrl}/v1/banks/${bankId}/images/${imageId}`;
  }

  /** Artifact paths in run reports are service-relative; make them absolute. */
  artifactUrl(path: string): string {
    return path.startsWith("http") ? path : `${this.baseUrl}${path}`;
  }
}
