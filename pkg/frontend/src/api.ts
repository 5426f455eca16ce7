/**
 * Typed client for the removal service. All server interaction in the studio
 * goes through this module and the documented /api endpoints only.
 */

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobInfo {
  id: string;
  state: JobState;
  progress: number;
  result_ref: string | null;
  error: string | null;
}

export interface SubmitParams {
  mode: "full" | "quick";
  dilation: number;
  steps: number;
  seed: number;
}

export class ApiError extends Error {
  readonly status: number;
  readonly reason: string;

  constructor(status: number, reason: string) {
    super(`server returned ${status}: ${reason}`);
    this.status = status;
    this.reason = reason;
  }
}

async function reasonOf(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (typeof body?.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return res.statusText || "unknown error";
  }
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(baseUrl = "", fetchFn: typeof fetch = globalThis.fetch.bind(globalThis)) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async health(): Promise<{ status: string; checkpoint_id: string }> {
    const res = await this.fetchFn(`${this.base}/api/health`);
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
    return res.json();
  }

  async submitRemoval(imagePng: Uint8Array, maskPng: Uint8Array, params: SubmitParams): Promise<string> {
    const form = new FormData();
    form.append("image", new Blob([imagePng.buffer as ArrayBuffer], { type: "image/png" }), "image.png");
    form.append("mask", new Blob([maskPng.buffer as ArrayBuffer], { type: "image/png" }), "mask.png");
    form.append("mode", params.mode);
    form.append("dilation", String(params.dilation));
    form.append("steps", String(params.steps));
    form.append("seed", String(params.seed));
    const res = await this.fetchFn(`${this.base}/api/remove`, { method: "POST", body: form });
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
    const body = await res.json();
    return body.job_id as string;
  }

  async job(id: string): Promise<JobInfo> {
    const res = await this.fetchFn(`${this.base}/api/jobs/${id}`);
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
    return res.json();
  }

  resultUrl(id: string): string {
    return `${this.base}/api/results/${id}.png`;
  }

  async fetchResult(id: string): Promise<Uint8Array> {
    const res = await this.fetchFn(this.resultUrl(id));
    if (!res.ok) throw new ApiError(res.status, await reasonOf(res));
    return new Uint8Array(await res.arrayBuffer());
  }

  /**
   * Poll a job until it settles. Polling never blocks the UI thread; the
   * caller can cancel through the AbortSignal.
   */
  async pollUntilDone(
    id: string,
    opts: { intervalMs?: number; onUpdate?: (job: JobInfo) => void; signal?: AbortSignal } = {},
  ): Promise<JobInfo> {
    const interval = opts.intervalMs ?? 750;
    for (;;) {
      if (opts.signal?.aborted) throw new DOMException("polling cancelled", "AbortError");
      const job = await this.job(id);
      opts.onUpdate?.(job);
      if (job.state === "done" || job.state === "failed") return job;
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }
}
