// End-to-end flows against a live `crimkit serve --model oracle` process:
// draw-mask -> remove, drag -> move, determinism, and mask hash round trip.

import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { MaskLayer } from "../src/mask.js";
import { EditorSession } from "../src/session.js";

let server: ChildProcess;
let api: ApiClient;
let base: string;

async function waitForHealth(url: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const res = await fetch(`${url}/api/health`);
      if (res.status === 200) return;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) throw new Error("server never became healthy");
    await new Promise((r) => setTimeout(r, 100));
  }
}

beforeAll(async () => {
  server = spawn("python3", ["-m", "crimkit.cli", "serve", "--model", "oracle",
                             "--port", "0"],
                 { cwd: "..", stdio: ["ignore", "pipe", "pipe"] });
  const port: number = await new Promise((resolve, reject) => {
    let buf = "";
    const timer = setTimeout(() => reject(new Error(`no port in: ${buf}`)), 20_000);
    server.stdout!.on("data", (chunk: Buffer) => {
      buf += chunk.toString();
      const m = buf.match(/http:\/\/127\.0\.0\.1:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
  base = `http://127.0.0.1:${port}`;
  api = new ApiClient(base);
  await waitForHealth(base);
}, 60_000);

afterAll(() => {
  server?.kill();
});

function drawnSession(sceneId: string): EditorSession {
  const session = new EditorSession(32);
  session.sceneId = sceneId;
  session.mask.beginStroke();
  session.mask.paintLine(10, 10, 18, 14, 2);
  session.sliders.steps = 8;
  session.sliders.seed = 11;
  return session;
}

describe("editor flows against a live serve", () => {
  it("completes the draw-mask -> remove flow deterministically", async () => {
    const scene = await api.createScene(21, 32);
    expect(scene.scene_id).toMatch(/^scene-/);

    const session = drawnSession(scene.scene_id);
    expect(session.submitBlocker()).toBeNull();
    const body = session.buildRequest();

    const first = await api.waitForJob((await api.submitEdit(body)).job_id);
    expect(first.status).toBe("done");
    expect(first.result!.result_png_b64.length).toBeGreaterThan(0);

    // identical session state + seed -> byte-identical result image
    const second = await api.waitForJob((await api.submitEdit(body)).job_id);
    expect(second.status).toBe("done");
    expect(second.result!.result_png_b64).toBe(first.result!.result_png_b64);

    // the exported mask PNG round-trips: server echoes our hash
    expect(first.result!.mask_hash).toBe(await session.mask.hash());
  }, 120_000);

  it("completes the drag -> move flow", async () => {
    const scene = await api.createScene(22, 32);
    const session = drawnSession(scene.scene_id);
    session.sliders.task = "move";
    session.moveOffset = [0, 0];
    expect(session.submitBlocker()).toBe("move offset is (0,0)");
    session.moveOffset = [4, 8];
    expect(session.submitBlocker()).toBeNull();

    const body = session.buildRequest();
    expect(body.offset).toEqual([4, 8]);
    expect(body.guidance!.mode).toBe("sctg");

    const job = await api.waitForJob((await api.submitEdit(body)).job_id);
    expect(job.status).toBe("done");
    expect(job.result!.shadow_metrics).toBeDefined();
  }, 120_000);

  it("server rejects what the UI blocks: empty mask", async () => {
    const scene = await api.createScene(23, 32);
    const empty = new MaskLayer(32, 32);
    await expect(api.submitEdit({
      scene_id: scene.scene_id,
      mask_png_b64: empty.toPngBase64(),
      task: "move",
      offset: [0, 0],
      guidance: { mode: "sctg", spatial: { w_r: 1.5, w_i: -2.5, t_s_frac: 0.6 } },
      steps: 4,
    })).rejects.toThrow(/HTTP 400/);
  }, 120_000);
});
