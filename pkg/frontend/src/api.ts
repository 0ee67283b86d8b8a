/** Typed client for every service endpoint the viewer touches.
 *
 * Pick and select calls are latest-wins: a new call on the same channel
 * aborts the in-flight one, so stale responses never reach the UI.
 */

import type {
  JobTicket,
  LayoutInfo,
  Preview,
  ProjectSummary,
  QueryResponse,
} from "./types.js";
import { decodeSpwp, type PointCloud } from "./spwp.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (body && typeof body.message === "string") message = body.message;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(message, resp.status);
}

export class ApiClient {
  private inflight = new Map<string, AbortController>();

  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(
    path: string,
    init: RequestInit = {},
    channel?: string,
  ): Promise<T> {
    const resp = await this.raw(path, init, channel);
    return (await resp.json()) as T;
  }

  private async raw(path: string, init: RequestInit = {}, channel?: string): Promise<Response> {
    if (channel !== undefined) {
      this.inflight.get(channel)?.abort();
      const controller = new AbortController();
      this.inflight.set(channel, controller);
      init = { ...init, signal: controller.signal };
    }
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      throw await parseError(resp);
    }
    return resp;
  }

  private post(path: string, body: unknown, channel?: string): Promise<Response> {
    return this.raw(
      path,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
      channel,
    );
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.raw("/healthz");
      return (await resp.json()).status === "ok";
    } catch {
      return false;
    }
  }

  listProjects(): Promise<ProjectSummary[]> {
    return this.request("/projects");
  }

  async createProject(name: string, dim: number, labelSchema: string[]): Promise<string> {
    const resp = await this.post("/projects", { name, dim, label_schema: labelSchema });
    return (await resp.json()).project_id as string;
  }

  async ingestNdjson(projectId: string, body: string): Promise<number> {
    const resp = await this.raw(`/projects/${projectId}/records`, {
      method: "POST",
      headers: { "content-type": "application/x-ndjson" },
      body,
    });
    return (await resp.json()).count as number;
  }

  async requestLayout(
    projectId: string,
    reducer: string,
    outDim: number,
    seed = 0,
  ): Promise<string> {
    const resp = await this.post(`/projects/${projectId}/layouts`, {
      reducer,
      out_dim: outDim,
      seed,
    });
    return (await resp.json()).job_id as string;
  }

  job(jobId: string): Promise<JobTicket> {
    return this.request(`/jobs/${jobId}`);
  }

  async waitForJob(jobId: string, timeoutMs = 120_000, pollMs = 150): Promise<JobTicket> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const ticket = await this.job(jobId);
      if (ticket.state === "done" || ticket.state === "failed") return ticket;
      if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  layoutInfo(layoutId: string): Promise<LayoutInfo> {
    return this.request(`/layouts/${layoutId}`);
  }

  async layoutPoints(layoutId: string): Promise<PointCloud> {
    const resp = await this.raw(`/layouts/${layoutId}/points`);
    return decodeSpwp(await resp.arrayBuffer());
  }

  async query(
    layoutId: string,
    payload: string,
    k: number,
    provider = "builtin",
  ): Promise<QueryResponse> {
    const resp = await this.post(`/layouts/${layoutId}/query`, {
      provider,
      modality: "text",
      payload,
      k,
    });
    return (await resp.json()) as QueryResponse;
  }

  async pick(
    layoutId: string,
    origin: number[],
    direction: number[],
    angularRadius: number,
  ): Promise<string | null> {
    const resp = await this.post(
      `/layouts/${layoutId}/pick`,
      { ray: { origin, direction }, angular_radius: angularRadius },
      "pick",
    );
    return (await resp.json()).record_id as string | null;
  }

  async pick2d(layoutId: string, point: number[], pickRadius: number): Promise<string | null> {
    const resp = await this.post(
      `/layouts/${layoutId}/pick2d`,
      { point, pick_radius: pickRadius },
      "pick",
    );
    return (await resp.json()).record_id as string | null;
  }

  async select(layoutId: string, center: number[], radius: number): Promise<string[]> {
    const resp = await this.post(
      `/layouts/${layoutId}/select`,
      { center, radius },
      "select",
    );
    return (await resp.json()).record_ids as string[];
  }

  async annotate(
    projectId: string,
    recordIds: string[],
    label: string | number,
  ): Promise<{ revision: number; changed: number }> {
    const resp = await this.post(`/projects/${projectId}/annotations`, {
      record_ids: recordIds,
      label,
    });
    return (await resp.json()) as { revision: number; changed: number };
  }

  async exportAnnotations(projectId: string, format: "csv" | "ndjson"): Promise<string> {
    const resp = await this.raw(`/projects/${projectId}/annotations/export?format=${format}`);
    return await resp.text();
  }

  preview(projectId: string, recordId: string): Promise<Preview> {
    return this.request(`/projects/${projectId}/records/${recordId}/preview`);
  }
}
