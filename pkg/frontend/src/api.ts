/**
 * Thin typed client for the scenario service endpoints.
 *
 * All methods surface HTTP failures as ApiError carrying the status code so
 * the form layer can map 404/409/422 to inline messages. Transient network
 * failures are retried with capped backoff; HTTP error statuses are not.
 */

import type {
  JobJson,
  ResultJson,
  RunAccepted,
  RunCached,
  SceneMeta,
  ScenarioRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
export type SleepFn = (ms: number) => Promise<void>;

const realSleep: SleepFn = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

export interface ApiOptions {
  baseUrl?: string;
  fetchFn?: FetchLike;
  sleepFn?: SleepFn;
  maxRetries?: number;
}

export class ApiClient {
  private baseUrl: string;
  private fetchFn: FetchLike;
  readonly sleep: SleepFn;
  private maxRetries: number;

  constructor(options: ApiOptions = {}) {
    this.baseUrl = options.baseUrl ?? "";
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.sleep = options.sleepFn ?? realSleep;
    this.maxRetries = options.maxRetries ?? 3;
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let lastError: unknown;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      if (attempt > 0) {
        await this.sleep(Math.min(500 * 2 ** (attempt - 1), 4000));
      }
      try {
        return await this.fetchFn(this.baseUrl + path, init);
      } catch (err) {
        lastError = err; // network-level failure: retry with backoff
      }
    }
    throw new ApiError(0, `network failure after retries: ${lastError}`);
  }

  private async json<T>(resp: Response): Promise<T> {
    const text = await resp.text();
    const doc = text ? JSON.parse(text) : {};
    if (!resp.ok) {
      throw new ApiError(resp.status, doc.error ?? `HTTP ${resp.status}`);
    }
    return doc as T;
  }

  async listScenes(): Promise<SceneMeta[]> {
    return this.json(await this.request("GET", "/api/scenes"));
  }

  sceneLstUrl(sceneId: string): string {
    return `${this.baseUrl}/api/scenes/${sceneId}/lst.png`;
  }

  async createScenario(body: ScenarioRequest): Promise<string> {
    const doc = await this.json<{ scenario_id: string }>(
      await this.request("POST", "/api/scenarios", body),
    );
    return doc.scenario_id;
  }

  async runScenario(scenarioId: string): Promise<RunAccepted | RunCached> {
    return this.json(await this.request("POST", `/api/scenarios/${scenarioId}/run`));
  }

  async getJob(jobId: string): Promise<JobJson> {
    return this.json(await this.request("GET", `/api/jobs/${jobId}`));
  }

  async getResult(scenarioId: string): Promise<ResultJson> {
    return this.json(await this.request("GET", `/api/results/${scenarioId}`));
  }

  async getProfileCsv(scenarioId: string): Promise<string> {
    const resp = await this.request("GET", `/api/results/${scenarioId}/profile.csv`);
    if (!resp.ok) throw new ApiError(resp.status, "profile not available");
    return resp.text();
  }

  diffPngUrl(scenarioId: string): string {
    return `${this.baseUrl}/api/results/${scenarioId}/diff.png`;
  }

  mapPngUrl(scenarioId: string): string {
    return `${this.baseUrl}/api/results/${scenarioId}/map.png`;
  }

  async deleteScenario(scenarioId: string): Promise<void> {
    const resp = await this.request("DELETE", `/api/scenarios/${scenarioId}`);
    if (!resp.ok && resp.status !== 404) {
      throw new ApiError(resp.status, `delete failed: HTTP ${resp.status}`);
    }
  }
}
