// DOM wiring for the editor: canvas painting, move gizmo, guidance panel,
// job submission, and the side-by-side history strip.

import { ApiClient } from "./api.js";
import { MaskLayer } from "./mask.js";
import { EditorSession, SLIDER_RANGES } from "./session.js";
import type { EditTask, JobRecord } from "./types.js";

const SCALE = 10; // canvas magnification for 32px scenes
const SESSION_KEY = "crimkit-session";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class EditorApp {
  private api = new ApiClient("");
  private session = new EditorSession(32);
  private sceneCanvas = el<HTMLCanvasElement>("scene");
  private overlay = el<HTMLCanvasElement>("overlay");
  private status = el<HTMLDivElement>("status");
  private historyEl = el<HTMLDivElement>("history");
  private sceneImg: HTMLImageElement | null = null;
  private painting = false;
  private erasing = false;
  private last: [number, number] | null = null;
  private inFlight = false;
  private pending: (() => void)[] = [];

  async start(): Promise<void> {
    this.restoreSession();
    this.bindControls();
    this.resizeCanvases();
    this.redraw();
    try {
      const h = await this.api.health();
      this.say(h.status === "ok" ? `model ready (${h.ckpt_hash})` : "model loading...");
    } catch {
      this.say("service unreachable; is `crimkit serve` running?");
    }
    if (!this.session.sceneId) await this.newScene();
  }

  // -- scene -------------------------------------------------------------

  private async newScene(): Promise<void> {
    const seed = Number(el<HTMLInputElement>("scene-seed").value) || 0;
    try {
      const scene = await this.api.createScene(seed, this.session.size);
      this.session.sceneId = scene.scene_id;
      this.session.mask = new MaskLayer(this.session.size, this.session.size);
      this.session.moveOffset = [0, 0];
      await this.showScene(scene.images.with_object);
      this.say(`scene ${scene.scene_id} (seed ${seed})`);
      this.persist();
    } catch (e) {
      this.say(`scene failed: ${e}`);
    }
  }

  private showScene(pngB64: string): Promise<void> {
    return new Promise((resolve) => {
      const img = new Image();
      img.onload = () => {
        this.sceneImg = img;
        this.redraw();
        resolve();
      };
      img.src = `data:image/png;base64,${pngB64}`;
    });
  }

  // -- painting ----------------------------------------------------------

  private canvasCell(ev: MouseEvent): [number, number] {
    const rect = this.overlay.getBoundingClientRect();
    const x = Math.floor(((ev.clientX - rect.left) / rect.width) * this.session.size);
    const y = Math.floor(((ev.clientY - rect.top) / rect.height) * this.session.size);
    return [Math.max(0, Math.min(this.session.size - 1, x)),
            Math.max(0, Math.min(this.session.size - 1, y))];
  }

  private bindPainting(): void {
    this.overlay.addEventListener("mousedown", (ev) => {
      this.painting = true;
      this.erasing = ev.shiftKey || ev.button === 2;
      this.session.mask.beginStroke();
      const [x, y] = this.canvasCell(ev);
      this.session.mask.paintDot(x, y, this.brushRadius(), this.erasing);
      this.last = [x, y];
      this.redraw();
    });
    this.overlay.addEventListener("contextmenu", (ev) => ev.preventDefault());
    this.overlay.addEventListener("mousemove", (ev) => {
      if (!this.painting || !this.last) return;
      const [x, y] = this.canvasCell(ev);
      this.session.mask.paintLine(this.last[0], this.last[1], x, y,
                                  this.brushRadius(), this.erasing);
      this.last = [x, y];
      this.redraw();
    });
    window.addEventListener("mouseup", () => {
      if (this.painting) {
        this.painting = false;
        this.last = null;
        this.persist();
        this.updateSubmitState();
      }
    });
  }

  private brushRadius(): number {
    return Number(el<HTMLInputElement>("brush").value);
  }

  // -- controls ----------------------------------------------------------

  private bindControls(): void {
    this.bindPainting();
    el<HTMLButtonElement>("new-scene").onclick = () => void this.newScene();
    el<HTMLButtonElement>("clear-mask").onclick = () => {
      this.session.mask.clear();
      this.persist();
      this.redraw();
      this.updateSubmitState();
    };
    el<HTMLButtonElement>("undo").onclick = () => {
      this.session.mask.undo();
      this.persist();
      this.redraw();
      this.updateSubmitState();
    };
    const taskSel = el<HTMLSelectElement>("task");
    taskSel.value = this.session.sliders.task;
    taskSel.onchange = () => {
      this.session.sliders.task = taskSel.value as EditTask;
      this.syncPanels();
      this.persist();
      this.updateSubmitState();
    };
    for (const [id, key] of [["w", "w"], ["w-r", "w_r"], ["w-i", "w_i"],
                             ["t-s", "t_s_frac"]] as const) {
      const input = el<HTMLInputElement>(id);
      const range = SLIDER_RANGES[key];
      input.min = String(range.min);
      input.max = String(range.max);
      input.step = String(range.step);
      input.value = String(this.session.sliders[key]);
      input.oninput = () => {
        this.session.sliders[key] = Number(input.value);
        el<HTMLSpanElement>(`${id}-val`).textContent = input.value;
        this.persist();
      };
      el<HTMLSpanElement>(`${id}-val`).textContent = input.value;
    }
    for (const [id, key] of [["steps", "steps"], ["seed", "seed"]] as const) {
      const input = el<HTMLInputElement>(id);
      input.value = String(this.session.sliders[key]);
      input.onchange = () => {
        this.session.sliders[key] = Number(input.value);
        this.persist();
      };
    }
    const moveBtns: [string, number, number][] = [
      ["mv-up", -2, 0], ["mv-down", 2, 0], ["mv-left", 0, -2], ["mv-right", 0, 2]];
    for (const [id, dy, dx] of moveBtns) {
      el<HTMLButtonElement>(id).onclick = () => {
        this.session.moveOffset = [this.session.moveOffset[0] + dy,
                                   this.session.moveOffset[1] + dx];
        el<HTMLSpanElement>("offset-val").textContent =
          `(${this.session.moveOffset[0]}, ${this.session.moveOffset[1]})`;
        this.persist();
        this.redraw();
        this.updateSubmitState();
      };
    }
    el<HTMLButtonElement>("submit").onclick = () => void this.submit();
    el<HTMLButtonElement>("copy-request").onclick = () => {
      const last = this.session.history.at(-1);
      if (last) void navigator.clipboard.writeText(JSON.stringify(last.request, null, 1));
    };
    this.syncPanels();
    this.updateSubmitState();
  }

  private syncPanels(): void {
    const task = this.session.sliders.task;
    el<HTMLDivElement>("scalar-panel").style.display =
      task === "move" ? "none" : "block";
    el<HTMLDivElement>("spatial-panel").style.display =
      task === "move" ? "block" : "none";
    el<HTMLDivElement>("gizmo-panel").style.display =
      task === "move" ? "block" : "none";
  }

  private updateSubmitState(): void {
    const blocker = this.session.submitBlocker();
    const btn = el<HTMLButtonElement>("submit");
    btn.disabled = blocker !== null || this.inFlight;
    btn.title = blocker ?? "";
  }

  // -- submit ------------------------------------------------------------

  private async submit(): Promise<void> {
    if (this.inFlight) {
      this.pending.push(() => void this.submit());
      return;
    }
    let body;
    try {
      body = this.session.buildRequest();
    } catch (e) {
      this.say(String(e));
      return;
    }
    this.inFlight = true;
    this.updateSubmitState();
    try {
      const { job_id } = await this.api.submitEdit(body);
      this.say(`job ${job_id} running...`);
      const job = await this.api.waitForJob(job_id);
      const entry = {
        request: body, jobId: job_id, status: job.status,
        resultPngB64: job.result?.result_png_b64,
        shadowAreaRatio: job.result?.shadow_metrics?.area_ratio,
      };
      this.session.history.push(entry);
      this.renderHistory();
      this.persist();
      this.say(job.status === "done"
        ? `job ${job_id} done (${job.result?.evals} model evals)`
        : `job ${job_id} failed: ${job.error}`);
      const expectedHash = await this.session.mask.hash();
      if (job.result && job.result.mask_hash !== expectedHash) {
        this.say(`warning: mask hash mismatch (${job.result.mask_hash} != ${expectedHash})`);
      }
    } catch (e) {
      this.say(`submit failed: ${e}`);
    } finally {
      this.inFlight = false;
      this.updateSubmitState();
      const next = this.pending.shift();
      if (next) next();
    }
  }

  // -- rendering ---------------------------------------------------------

  private resizeCanvases(): void {
    const px = this.session.size * SCALE;
    for (const c of [this.sceneCanvas, this.overlay]) {
      c.width = px;
      c.height = px;
    }
  }

  private redraw(): void {
    const ctx = this.sceneCanvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, this.sceneCanvas.width, this.sceneCanvas.height);
    if (this.sceneImg) {
      ctx.drawImage(this.sceneImg, 0, 0, this.sceneCanvas.width, this.sceneCanvas.height);
    }
    const octx = this.overlay.getContext("2d")!;
    octx.clearRect(0, 0, this.overlay.width, this.overlay.height);
    octx.fillStyle = "rgba(255, 40, 40, 0.45)";
    const m = this.session.mask;
    for (let y = 0; y < m.height; y++) {
      for (let x = 0; x < m.width; x++) {
        if (m.get(x, y)) octx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
      }
    }
    if (this.session.sliders.task === "move") {
      const [dy, dx] = this.session.moveOffset;
      octx.fillStyle = "rgba(40, 120, 255, 0.45)";
      for (let y = 0; y < m.height; y++) {
        for (let x = 0; x < m.width; x++) {
          if (m.get(x, y)) {
            octx.fillRect((x + dx) * SCALE, (y + dy) * SCALE, SCALE, SCALE);
          }
        }
      }
    }
  }

  private renderHistory(): void {
    this.historyEl.innerHTML = "";
    for (const entry of [...this.session.history].reverse()) {
      const card = document.createElement("div");
      card.className = "card";
      if (entry.resultPngB64) {
        const img = document.createElement("img");
        img.src = `data:image/png;base64,${entry.resultPngB64}`;
        img.width = 96;
        img.height = 96;
        card.appendChild(img);
      }
      const label = document.createElement("div");
      const shadow = entry.shadowAreaRatio !== undefined
        ? ` shadow ${entry.shadowAreaRatio.toFixed(3)}%` : "";
      label.textContent = `${entry.request.task} seed ${entry.request.seed}` +
        ` ${entry.status}${shadow}`;
      card.appendChild(label);
      this.historyEl.appendChild(card);
    }
  }

  private persist(): void {
    try {
      localStorage.setItem(SESSION_KEY, this.session.serialize());
    } catch {
      // storage may be unavailable; the session just won't survive reloads
    }
  }

  private restoreSession(): void {
    try {
      const blob = localStorage.getItem(SESSION_KEY);
      if (blob) {
        this.session = EditorSession.restore(blob);
        this.renderHistory();
      }
    } catch {
      this.session = new EditorSession(32);
    }
  }

  private say(text: string): void {
    this.status.textContent = text;
  }
}

new EditorApp().start();
