/**
 * Wire types mirroring the scenario service JSON. The editor performs no
 * science of its own: every temperature shown on screen comes from one of
 * these payloads verbatim.
 */

export interface SceneMeta {
  scene_id: string;
  date: string;
}

export interface BboxJson {
  row0: number;
  col0: number;
  row1: number;
  col1: number;
}

export type ScenarioKind = "pixel_swap" | "index_retarget" | "forcing";
export type IndexKind = "NDVI" | "NDBI" | "NDWI";
export type DonorChoice = "forest" | "urban";
export type RcpSource = "cordex_rcp26" | "cordex_rcp45" | "cordex_rcp85";

/** POST /api/scenarios body (the service mints scenario_id). */
export interface ScenarioRequest {
  base_sample_id: string;
  kind: ScenarioKind;
  bbox?: BboxJson;
  donor?: DonorChoice | Record<string, number>;
  index_kind?: IndexKind;
  target_value?: number;
  adjusted_band?: string;
  forcing_source?: RcpSource;
  horizon_year?: number;
}

export interface JobJson {
  job_id: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  created_at: string;
  result_ref: string;
  error_message: string;
}

export interface ProfilePoint {
  row: number;
  value_celsius: number | null;
  inside_bbox: boolean;
}

export interface ResultStats {
  mean_delta_inside: number;
  mean_delta_outside_ring: number;
  max_abs_delta: number;
}

export interface ResultJson {
  scenario_id: string;
  stats: ResultStats;
  profile: ProfilePoint[];
  clamped_fraction: number;
}

export interface RunAccepted {
  job_id: string;
}

export interface RunCached {
  scenario_id: string;
  cached: true;
  result: ResultJson;
}

export interface RunEntry {
  scenario_id: string;
  kind: ScenarioKind;
  stats: ResultStats;
}
