/**
 * Editor state machine: scene selection, draft bbox, modification form,
 * submit-and-poll lifecycle, and the run history feeding the next edit.
 *
 * Pure orchestration over the ApiClient; rendering hooks are injected so the
 * logic is testable without a DOM.
 */

import { ApiClient, ApiError } from "./api.js";
import type {
  BboxJson,
  DonorChoice,
  IndexKind,
  ProfilePoint,
  RcpSource,
  ResultJson,
  RunCached,
  RunEntry,
  ScenarioKind,
  ScenarioRequest,
} from "./types.js";
import { parseProfileCsv, validateProfile } from "./profile.js";

export interface ViewState {
  zoom: number;
  offsetX: number;
  offsetY: number;
}

export interface ModificationForm {
  kind: ScenarioKind;
  donor: DonorChoice | "";
  indexKind: IndexKind;
  targetValue: string;        // raw text field content
  adjustedBand: string;
  rcp: RcpSource;
  horizonYear: number;
}

export interface EditorState {
  activeSceneId: string | null;
  sceneDims: { height: number; width: number };
  view: ViewState;
  draftBbox: BboxJson | null;
  form: ModificationForm;
  runHistory: RunEntry[];
  busy: boolean;
  formError: string | null;
}

export function initialState(): EditorState {
  return {
    activeSceneId: null,
    sceneDims: { height: 64, width: 64 },
    view: { zoom: 1, offsetX: 0, offsetY: 0 },
    draftBbox: null,
    form: {
      kind: "pixel_swap",
      donor: "forest",
      indexKind: "NDVI",
      targetValue: "0.5",
      adjustedBand: "nir",
      rcp: "cordex_rcp85",
      horizonYear: 2050,
    },
    runHistory: [],
    busy: false,
    formError: null,
  };
}

/** Build the POST body, or return an error string without touching the network. */
export function buildRequest(state: EditorState): ScenarioRequest | string {
  if (!state.activeSceneId) return "select a scene first";
  const form = state.form;
  const request: ScenarioRequest = {
    base_sample_id: state.activeSceneId,
    kind: form.kind,
  };
  if (form.kind === "pixel_swap" || form.kind === "index_retarget") {
    if (!state.draftBbox) return "draw a bounding box on the map";
    request.bbox = state.draftBbox;
  }
  if (form.kind === "pixel_swap") {
    if (form.donor !== "forest" && form.donor !== "urban") {
      return "choose a donor land-cover type";
    }
    request.donor = form.donor;
  } else if (form.kind === "index_retarget") {
    const target = Number(form.targetValue);
    if (!Number.isFinite(target)) return "target must be a number";
    if (target <= -1 || target >= 1) return "target must lie strictly between -1 and 1";
    request.index_kind = form.indexKind;
    request.target_value = target;
    request.adjusted_band = form.adjustedBand;
  } else {
    request.forcing_source = form.rcp;
    request.horizon_year = form.horizonYear;
  }
  return request;
}

export interface RunOutcome {
  scenarioId: string;
  result: ResultJson;
  profile: ProfilePoint[];
  cached: boolean;
}

export interface PollOptions {
  intervalMs?: number;
  maxIntervalMs?: number;
  timeoutMs?: number;
}

/**
 * Submit the current form, poll the job to completion, and fetch artifacts.
 * Polling starts at 1 s and backs off multiplicatively to the cap.
 */
export async function submitAndPoll(
  state: EditorState,
  api: ApiClient,
  options: PollOptions = {},
): Promise<RunOutcome> {
  const built = buildRequest(state);
  if (typeof built === "string") {
    state.formError = built;
    throw new ApiError(0, built);
  }
  state.formError = null;
  state.busy = true;
  try {
    const scenarioId = await api.createScenario(built);
    const run = await api.runScenario(scenarioId);
    let result: ResultJson;
    let cached = false;
    if ("cached" in run && (run as RunCached).cached) {
      result = (run as RunCached).result;
      cached = true;
    } else {
      const jobId = (run as { job_id: string }).job_id;
      result = await pollJob(api, scenarioId, jobId, options);
    }
    const profile = parseProfileCsv(await api.getProfileCsv(scenarioId));
    validateProfile(profile);
    const entry: RunEntry = {
      scenario_id: scenarioId,
      kind: built.kind,
      stats: result.stats,
    };
    state.runHistory = [...state.runHistory, entry];
    return { scenarioId, result, profile, cached };
  } catch (err) {
    if (err instanceof ApiError && err.status > 0) {
      state.formError = `service rejected the request (${err.status}): ${err.message}`;
    }
    throw err;
  } finally {
    state.busy = false;
  }
}

async function pollJob(
  api: ApiClient,
  scenarioId: string,
  jobId: string,
  options: PollOptions,
): Promise<ResultJson> {
  const start = options.intervalMs ?? 1000;
  const cap = options.maxIntervalMs ?? 5000;
  const timeout = options.timeoutMs ?? 300_000;
  let waited = 0;
  let interval = start;
  for (;;) {
    const job = await api.getJob(jobId);
    if (job.status === "done") {
      return api.getResult(scenarioId);
    }
    if (job.status === "failed") {
      throw new ApiError(500, `run failed: ${job.error_message}`);
    }
    if (waited >= timeout) {
      throw new ApiError(0, "timed out waiting for the run to finish");
    }
    await api.sleep(interval);
    waited += interval;
    interval = Math.min(interval * 2, cap);
  }
}
