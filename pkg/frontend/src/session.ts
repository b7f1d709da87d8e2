// Editor session state: scene, mask, move gizmo, guidance sliders, history.
// Fully serializable so a page reload restores everything exactly.

import { MaskLayer } from "./mask.js";
import type { EditRequestBody, EditTask, GuidanceBody } from "./types.js";

export interface SliderState {
  task: EditTask;
  useGuidance: boolean;
  w: number;        // scalar CTG scale, 0..3 step 0.1
  w_r: number;      // sctg removal weight, (0, 3]
  w_i: number;      // sctg insertion weight, [-4, -1.01]
  t_s_frac: number; // gray-area switch, 0..1
  steps: number;
  seed: number;
}

export interface HistoryEntry {
  request: EditRequestBody;
  jobId: string;
  resultPngB64?: string;
  shadowAreaRatio?: number;
  status: string;
}

export const SLIDER_DEFAULTS: SliderState = {
  task: "remove",
  useGuidance: true,
  w: 1.5,
  w_r: 1.5,
  w_i: -2.5,
  t_s_frac: 0.6,
  steps: 50,
  seed: 0,
};

export const SLIDER_RANGES = {
  w: { min: 0, max: 3, step: 0.1 },
  w_r: { min: 0.1, max: 3, step: 0.1 },
  w_i: { min: -4, max: -1.01, step: 0.01 },
  t_s_frac: { min: 0, max: 1, step: 0.05 },
};

export class EditorSession {
  sceneId: string | null = null;
  sceneImageB64: string | null = null;
  size: number;
  mask: MaskLayer;
  moveOffset: [number, number] = [0, 0];
  sliders: SliderState = { ...SLIDER_DEFAULTS };
  history: HistoryEntry[] = [];

  constructor(size = 32) {
    this.size = size;
    this.mask = new MaskLayer(size, size);
  }

  guidance(): GuidanceBody {
    const s = this.sliders;
    if (s.task === "move") {
      return { mode: "sctg", spatial: { w_r: s.w_r, w_i: s.w_i, t_s_frac: s.t_s_frac } };
    }
    if (!s.useGuidance || s.w === 0) return { mode: "none" };
    return { mode: s.task === "remove" ? "ctg-removal" : "ctg-insertion", w: s.w };
  }

  /** Why submission is blocked, or null when it can go. */
  submitBlocker(): string | null {
    if (!this.sceneId && !this.sceneImageB64) return "no scene loaded";
    if (this.mask.isEmpty()) return "mask is empty";
    if (this.sliders.task === "move") {
      const [dy, dx] = this.moveOffset;
      if (dy === 0 && dx === 0) return "move offset is (0,0)";
      const moved = this.mask.translated(dy, dx);
      if (moved.count() !== this.mask.count()) return "move pushes selection out of bounds";
    }
    return null;
  }

  buildRequest(): EditRequestBody {
    const blocker = this.submitBlocker();
    if (blocker) throw new Error(`cannot submit: ${blocker}`);
    const body: EditRequestBody = {
      mask_png_b64: this.mask.toPngBase64(),
      task: this.sliders.task,
      guidance: this.guidance(),
      steps: this.sliders.steps,
      seed: this.sliders.seed,
    };
    if (this.sceneId) {
      body.scene_id = this.sceneId;
    } else if (this.sceneImageB64) {
      body.images = { x_i_png_b64: this.sceneImageB64 };
    }
    if (this.sliders.task === "move") {
      body.offset = [this.moveOffset[0], this.moveOffset[1]];
    }
    return body;
  }

  serialize(): string {
    return JSON.stringify({
      version: 1,
      sceneId: this.sceneId,
      sceneImageB64: this.sceneImageB64,
      size: this.size,
      maskRle: this.mask.toRle(),
      moveOffset: this.moveOffset,
      sliders: this.sliders,
      history: this.history,
    });
  }

  static restore(blob: string): EditorSession {
    const d = JSON.parse(blob);
    if (d.version !== 1) throw new Error(`unknown session version ${d.version}`);
    const s = new EditorSession(d.size);
    s.sceneId = d.sceneId;
    s.sceneImageB64 = d.sceneImageB64;
    s.mask = MaskLayer.fromRle(d.maskRle);
    s.moveOffset = [d.moveOffset[0], d.moveOffset[1]];
    s.sliders = { ...SLIDER_DEFAULTS, ...d.sliders };
    s.history = d.history ?? [];
    return s;
  }
}
