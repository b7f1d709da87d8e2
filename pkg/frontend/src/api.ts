// Thin JSON client for the local editor service.

import type { EditRequestBody, HealthResponse, JobRecord,
              SceneResponse } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(`HTTP ${status}: ${message}`);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(private baseUrl = "", private fetchImpl: FetchLike = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await res.json().catch(() => ({}));
    if (!res.ok) {
      throw new ApiError(res.status, (body as { error?: string }).error ?? res.statusText);
    }
    return body as T;
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/api/health");
  }

  createScene(seed: number, size = 32): Promise<SceneResponse> {
    return this.request<SceneResponse>("/api/scene", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ seed, size }),
    });
  }

  submitEdit(body: EditRequestBody): Promise<{ job_id: string }> {
    return this.request<{ job_id: string }>("/api/edit", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getJob(jobId: string): Promise<JobRecord> {
    return this.request<JobRecord>(`/api/job/${jobId}`);
  }

  cancel(jobId: string): Promise<{ status: string }> {
    return this.request<{ status: string }>(`/api/cancel/${jobId}`, { method: "POST" });
  }

  /** Poll until the job settles; interval in ms. */
  async waitForJob(jobId: string, intervalMs = 150,
                   timeoutMs = 120_000): Promise<JobRecord> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.getJob(jobId);
      if (job.status === "done" || job.status === "failed") return job;
      if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }
}
