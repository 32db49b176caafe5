import { describe, expect, it } from "vitest";

import { canSubmit, initialState, reduce, replay, SessionEvent, SessionState } from "../src/state.js";

const REF = { id: "r1", name: "ref.png", dataUrl: "data:image/png;base64,AAAA", kind: "image" as const };
const ATTR = { id: "a1", name: "attr.png", dataUrl: "data:image/png;base64,BBBB", kind: "image" as const };

function entry(id: string, hash = "h" + id) {
  return { id, editedPngB64: "QUJD", maskPngB64: null, edgePngB64: null, latencyMs: 5, thumbnailHash: hash };
}

function sampleLog(): SessionEvent[] {
  return [
    { type: "reference_picked", image: REF, width: 64, height: 64 },
    { type: "attribute_picked", source: ATTR },
    { type: "region_adjusted", rect: { x0: 10, y0: 5, x1: 40, y1: 30 } },
    { type: "edit_submitted" },
    { type: "edit_succeeded", entry: entry("e1") },
    { type: "edit_submitted" },
    { type: "edit_failed", code: "REGION_BOUNDS", message: "outside" },
    { type: "banner_dismissed" },
    { type: "history_forked", index: 0, width: 64, height: 64 },
    { type: "compare_selected", indices: [0] },
  ];
}

describe("reducer replay determinism", () => {
  it("replaying the same event log reproduces an identical state", () => {
    const a = replay(sampleLog(), initialState("http://svc"));
    const b = replay(sampleLog(), initialState("http://svc"));
    expect(a).toEqual(b);
  });

  it("reduce never mutates its input state", () => {
    const start = initialState("http://svc");
    const frozenCopy = JSON.parse(JSON.stringify(start));
    for (const event of sampleLog()) reduce(start, event);
    expect(start).toEqual(frozenCopy);
  });

  it("incremental reduction equals whole-log replay", () => {
    let acc = initialState("http://svc");
    for (const event of sampleLog()) acc = reduce(acc, event);
    expect(acc).toEqual(replay(sampleLog(), initialState("http://svc")));
  });
});

describe("history discipline", () => {
  it("history is append-only: prior entries are untouched by later events", () => {
    let state = replay(sampleLog().slice(0, 5), initialState("http://svc"));
    const first = state.history[0];
    state = reduce(state, { type: "edit_submitted" });
    state = reduce(state, { type: "edit_succeeded", entry: entry("e2") });
    state = reduce(state, { type: "history_forked", index: 1, width: 64, height: 64 });
    expect(state.history[0]).toBe(first);
    expect(state.history.map((e) => e.id)).toEqual(["e1", "e2"]);
  });

  it("forking a history item makes it the next reference and clears the region", () => {
    const state = replay(sampleLog(), initialState("http://svc"));
    expect(state.reference?.id).toBe("fork-e1");
    expect(state.reference?.dataUrl).toContain("base64,QUJD");
    expect(state.region).toBeNull();
  });

  it("forking an out-of-range index is a no-op", () => {
    const state = replay(sampleLog(), initialState("http://svc"));
    expect(reduce(state, { type: "history_forked", index: 99, width: 1, height: 1 })).toEqual(state);
  });
});

describe("submission gating", () => {
  it("cannot submit without both reference and attribute source", () => {
    let state = initialState("http://svc");
    expect(canSubmit(state)).toBe(false);
    state = reduce(state, { type: "reference_picked", image: REF, width: 64, height: 64 });
    expect(canSubmit(state)).toBe(false);
    state = reduce(state, { type: "attribute_picked", source: ATTR });
    expect(canSubmit(state)).toBe(true);
  });

  it("at most one in-flight edit: submit while pending is ignored", () => {
    let state: SessionState = replay(sampleLog().slice(0, 4), initialState("http://svc"));
    expect(state.pending).toBe(true);
    const again = reduce(state, { type: "edit_submitted" });
    expect(again).toEqual(state);
  });

  it("success without a pending request is ignored", () => {
    const state = replay(sampleLog().slice(0, 3), initialState("http://svc"));
    expect(reduce(state, { type: "edit_succeeded", entry: entry("zz") })).toEqual(state);
  });
});

describe("failures and banners", () => {
  it("a failed edit surfaces the service error code and clears pending", () => {
    let state = replay(sampleLog().slice(0, 4), initialState("http://svc"));
    state = reduce(state, { type: "edit_failed", code: "IMAGE_DECODE", message: "bad png" });
    expect(state.pending).toBe(false);
    expect(state.banner).toEqual({ code: "IMAGE_DECODE", message: "bad png" });
    expect(state.history).toHaveLength(0);
  });

  it("banner dismissal keeps everything else", () => {
    let state = replay(sampleLog().slice(0, 4), initialState("http://svc"));
    state = reduce(state, { type: "edit_failed", code: "X", message: "y" });
    const dismissed = reduce(state, { type: "banner_dismissed" });
    expect(dismissed.banner).toBeNull();
    expect({ ...dismissed, banner: state.banner }).toEqual(state);
  });
});

describe("region handling", () => {
  it("region drags are clamped to the reference bounds", () => {
    let state = replay(sampleLog().slice(0, 2), initialState("http://svc"));
    state = reduce(state, { type: "region_adjusted", rect: { x0: -10, y0: -4, x1: 900, y1: 900 } });
    expect(state.region).toEqual({ x0: 0, y0: 0, x1: 64, y1: 64 });
  });

  it("an empty drag never produces an invalid region", () => {
    let state = replay(sampleLog().slice(0, 3), initialState("http://svc"));
    const before = state.region;
    state = reduce(state, { type: "region_adjusted", rect: { x0: 70, y0: 70, x1: 90, y1: 90 } });
    expect(state.region).toEqual(before);
  });

  it("picking a new reference clears the stale region", () => {
    let state = replay(sampleLog().slice(0, 3), initialState("http://svc"));
    expect(state.region).not.toBeNull();
    state = reduce(state, { type: "reference_picked", image: ATTR, width: 32, height: 32 });
    expect(state.region).toBeNull();
  });
});
