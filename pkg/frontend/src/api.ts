/** Typed client for the review service API. */

import type {
  DocsPage,
  ModelsResponse,
  PreAnnotation,
  RecordStatus,
  RetrainJob,
  ReviewRecord,
  Schema,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
    public reviewer: string = "reviewer",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, {
      ...init,
      headers: {
        "Content-Type": "application/json",
        "X-Reviewer": this.reviewer,
        ...(init?.headers ?? {}),
      },
    });
    const text = await resp.text();
    if (!resp.ok) {
      let message = text;
      try {
        message = (JSON.parse(text) as { error?: string }).error ?? text;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, message);
    }
    return (text ? JSON.parse(text) : null) as T;
  }

  getSchema(): Promise<Schema> {
    return this.request<Schema>("/api/schema");
  }

  listDocs(status?: RecordStatus, offset = 0, limit = 100): Promise<DocsPage> {
    const q = new URLSearchParams({ offset: String(offset), limit: String(limit) });
    if (status) q.set("status", status);
    return this.request<DocsPage>(`/api/docs?${q.toString()}`);
  }

  getDoc(docId: string): Promise<ReviewRecord> {
    return this.request<ReviewRecord>(`/api/docs/${encodeURIComponent(docId)}`);
  }

  /** Claim, verify, or reject; the body is exactly what the buffer holds. */
  putAnnotations(
    docId: string,
    status: RecordStatus,
    corrected?: PreAnnotation,
  ): Promise<ReviewRecord> {
    const body: { status: RecordStatus; corrected?: PreAnnotation } = { status };
    if (corrected !== undefined) body.corrected = corrected;
    return this.request<ReviewRecord>(`/api/docs/${encodeURIComponent(docId)}/annotations`, {
      method: "PUT",
      body: JSON.stringify(body),
    });
  }

  postRetrain(overrides: Record<string, number> = {}): Promise<RetrainJob> {
    return this.request<RetrainJob>("/api/retrain", {
      method: "POST",
      body: JSON.stringify(overrides),
    });
  }

  getRetrainJob(jobId: number): Promise<RetrainJob> {
    return this.request<RetrainJob>(`/api/retrain/jobs/${jobId}`);
  }

  getModels(): Promise<ModelsResponse> {
    return this.request<ModelsResponse>("/api/models");
  }
}
