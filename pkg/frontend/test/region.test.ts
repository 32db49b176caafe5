import { describe, expect, it } from "vitest";

import { clampRect } from "../src/region.js";

describe("clampRect", () => {
  it("normalizes corner order", () => {
    expect(clampRect({ x0: 30, y0: 40, x1: 10, y1: 20 }, 64, 64)).toEqual({ x0: 10, y0: 20, x1: 30, y1: 40 });
  });

  it("clamps to image bounds", () => {
    expect(clampRect({ x0: -5, y0: -5, x1: 200, y1: 200 }, 64, 48)).toEqual({ x0: 0, y0: 0, x1: 64, y1: 48 });
  });

  it("rejects empty results", () => {
    expect(clampRect({ x0: 70, y0: 10, x1: 90, y1: 20 }, 64, 64)).toBeNull();
    expect(clampRect({ x0: 5, y0: 5, x1: 5, y1: 5 }, 64, 64)).toBeNull();
  });

  it("keeps fractional drags by flooring/ceiling outward", () => {
    expect(clampRect({ x0: 1.2, y0: 2.7, x1: 10.4, y1: 12.1 }, 64, 64)).toEqual({ x0: 1, y0: 2, x1: 11, y1: 13 });
  });
});
