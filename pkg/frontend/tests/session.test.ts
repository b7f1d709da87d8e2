import { describe, expect, it } from "vitest";

import { EditorSession, SLIDER_DEFAULTS } from "../src/session.js";

function paintedSession(): EditorSession {
  const s = new EditorSession(16);
  s.sceneId = "scene-abc";
  s.mask.beginStroke();
  s.mask.paintDot(4, 4, 1);
  return s;
}

describe("EditorSession", () => {
  it("defaults the CTG scale to 1.5", () => {
    expect(SLIDER_DEFAULTS.w).toBe(1.5);
    const s = new EditorSession(16);
    expect(s.sliders.w).toBe(1.5);
  });

  it("blocks submit without a scene or with an empty mask", () => {
    const s = new EditorSession(16);
    expect(s.submitBlocker()).toBe("no scene loaded");
    s.sceneId = "scene-x";
    expect(s.submitBlocker()).toBe("mask is empty");
    s.mask.paintDot(3, 3, 0);
    expect(s.submitBlocker()).toBeNull();
  });

  it("blocks move with a zero offset", () => {
    const s = paintedSession();
    s.sliders.task = "move";
    expect(s.submitBlocker()).toBe("move offset is (0,0)");
    s.moveOffset = [0, 3];
    expect(s.submitBlocker()).toBeNull();
  });

  it("blocks move that leaves the frame", () => {
    const s = paintedSession();
    s.sliders.task = "move";
    s.moveOffset = [0, 14];
    expect(s.submitBlocker()).toMatch(/out of bounds/);
  });

  it("builds guidance per task", () => {
    const s = paintedSession();
    expect(s.guidance()).toEqual({ mode: "ctg-removal", w: 1.5 });
    s.sliders.task = "insert";
    s.sliders.w = 2.0;
    expect(s.guidance()).toEqual({ mode: "ctg-insertion", w: 2.0 });
    s.sliders.useGuidance = false;
    expect(s.guidance()).toEqual({ mode: "none" });
    s.sliders.task = "move";
    expect(s.guidance()).toEqual({
      mode: "sctg", spatial: { w_r: 1.5, w_i: -2.5, t_s_frac: 0.6 } });
  });

  it("buildRequest carries the offset only for moves", () => {
    const s = paintedSession();
    const body = s.buildRequest();
    expect(body.offset).toBeUndefined();
    expect(body.scene_id).toBe("scene-abc");
    expect(body.task).toBe("remove");
    s.sliders.task = "move";
    s.moveOffset = [2, -1];
    expect(s.buildRequest().offset).toEqual([2, -1]);
  });

  it("serialize/restore round-trips every field exactly", () => {
    const s = paintedSession();
    s.sliders.w = 2.3;
    s.sliders.task = "move";
    s.moveOffset = [1, 2];
    s.history.push({ request: { mask_png_b64: "x", task: "remove" },
                     jobId: "job-1", status: "done", shadowAreaRatio: 0.42 });
    const restored = EditorSession.restore(s.serialize());
    expect(restored.sceneId).toBe(s.sceneId);
    expect(restored.sliders).toEqual(s.sliders);
    expect(restored.moveOffset).toEqual(s.moveOffset);
    expect(restored.mask.snapshot()).toEqual(s.mask.snapshot());
    expect(restored.history).toEqual(s.history);
    expect(restored.serialize()).toBe(s.serialize());
  });

  it("rejects unknown session versions", () => {
    expect(() => EditorSession.restore('{"version": 99}')).toThrow(/version/);
  });
});
