// Mirrors the JSON API served by the Python backend.

export type EditTask = "remove" | "insert" | "move";
export type GuidanceMode = "none" | "ctg-removal" | "ctg-insertion" | "sctg";

export interface GuidanceBody {
  mode: GuidanceMode;
  w?: number;
  spatial?: { w_r: number; w_i: number; t_s_frac: number };
}

export interface EditRequestBody {
  scene_id?: string;
  images?: { x_i_png_b64: string };
  mask_png_b64: string;
  task: EditTask;
  guidance?: GuidanceBody;
  steps?: number;
  seed?: number;
  offset?: [number, number];
}

export interface SceneResponse {
  scene_id: string;
  images: { with_object: string; background: string; mask: string };
}

export interface ShadowMetrics {
  area_ratio: number;
  iou: number;
  detected: boolean;
}

export interface JobResult {
  result_png_b64: string;
  evals: number;
  steps: number;
  mask_hash: string;
  shadow_metrics?: ShadowMetrics;
}

export interface JobRecord {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  request: Record<string, unknown>;
  timings: Record<string, number | null>;
  result?: JobResult;
  error?: string;
}

export interface HealthResponse {
  status: string;
  ckpt_hash?: string;
}
