/** Typed fetch client for the subgroup service. All causal numbers shown in
 * the UI come from these responses; the client never computes them. */

import type {
  Distribution,
  JobStatus,
  MatchReport,
  ProjectionDoc,
  SearchParamsDoc,
  SessionSummary,
  SubgroupEntry,
  UnitRow,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? "http_error", body.message ?? resp.statusText);
  }
  return body as T;
}

export class CprismClient {
  constructor(public readonly base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parse<T>(resp);
  }

  private async get<T>(path: string): Promise<T> {
    return parse<T>(await fetch(this.url(path)));
  }

  async createSession(csv: Blob, config: object): Promise<SessionSummary> {
    const form = new FormData();
    form.append("file", csv, "data.csv");
    form.append("config", JSON.stringify(config));
    const resp = await fetch(this.url("/sessions"), { method: "POST", body: form });
    return parse<SessionSummary>(resp);
  }

  session(id: string): Promise<SessionSummary> {
    return this.get(`/sessions/${id}`);
  }

  startDiscovery(id: string, params: SearchParamsDoc): Promise<{ job_id: string }> {
    return this.post(`/sessions/${id}/discover`, params);
  }

  jobStatus(id: string, jobId: string): Promise<JobStatus> {
    return this.get(`/sessions/${id}/jobs/${jobId}`);
  }

  cancelJob(id: string, jobId: string): Promise<{ status: string }> {
    return fetch(this.url(`/sessions/${id}/jobs/${jobId}`), { method: "DELETE" }).then((r) =>
      parse(r),
    );
  }

  async waitForJob(
    id: string,
    jobId: string,
    onProgress?: (generation: number) => void,
    intervalMs = 150,
  ): Promise<JobStatus> {
    for (;;) {
      const status = await this.jobStatus(id, jobId);
      onProgress?.(status.generation);
      if (status.status !== "running") return status;
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  async subgroups(id: string, allFronts = false): Promise<SubgroupEntry[]> {
    const suffix = allFronts ? "?fronts=all" : "";
    const doc = await this.get<{ subgroups: SubgroupEntry[] }>(
      `/sessions/${id}/subgroups${suffix}`,
    );
    return doc.subgroups;
  }

  addSubgroup(id: string, doc: object): Promise<SubgroupEntry> {
    return this.post(`/sessions/${id}/subgroups`, doc);
  }

  merge(id: string, a: string, b: string): Promise<SubgroupEntry> {
    return this.post(`/sessions/${id}/subgroups/merge`, { a, b });
  }

  split(id: string, sid: string, covariate: string): Promise<{ subgroups: SubgroupEntry[] }> {
    return this.post(`/sessions/${id}/subgroups/${sid}/split`, { covariate });
  }

  match(id: string, sid: string, epsilon = 0.1): Promise<MatchReport> {
    return this.get(`/sessions/${id}/subgroups/${sid}/match?epsilon=${epsilon}`);
  }

  units(id: string, sid: string, limit = 100, offset = 0): Promise<{ total: number; units: UnitRow[] }> {
    return this.get(`/sessions/${id}/subgroups/${sid}/units?limit=${limit}&offset=${offset}`);
  }

  projection(id: string): Promise<ProjectionDoc> {
    return this.get(`/sessions/${id}/projection`);
  }

  distribution(id: string, covariate: string): Promise<Distribution> {
    return this.get(`/sessions/${id}/covariates/${encodeURIComponent(covariate)}/distribution`);
  }
}
