import { describe, expect, it } from "vitest";

import { SessionState, PAGE_SIZE } from "../src/session.js";
import { VisualSearchRequestSchema, type ResultEntry } from "../src/schemas.js";

function entries(n: number): ResultEntry[] {
  return Array.from({ length: n }, (_v, i) => ({
    id: `img${i}`,
    score: 1 - i / 100,
    collection: "Test",
    price: 1.5,
    image_url: `/images/img${i}`,
  }));
}

describe("buildVisualRequest", () => {
  it("packs intersect, exclude, and change selections into the schema", () => {
    const s = new SessionState();
    s.openImage("img0001", 64, 64);
    s.addSelection([1, 2, 10, 12], "intersect");
    s.addSelection([20, 20, 30, 30], "exclude");
    s.addSelection([40, 40, 50, 50], "change");
    s.changeInstruction = "make the cap blue";
    s.extraText = "no hat";
    const request = s.buildVisualRequest(25);
    expect(VisualSearchRequestSchema.safeParse(request).success).toBe(true);
    expect(request).toEqual({
      base_image: "img0001",
      selections: [[1, 2, 10, 12]],
      relation: "intersection",
      negatives: [[20, 20, 30, 30]],
      change: { box: [40, 40, 50, 50], instruction: "make the cap blue" },
      extra_text: "no hat",
      k: 25,
    });
  });

  it("change box without instruction or target text is rejected", () => {
    const s = new SessionState();
    s.openImage("img0001", 64, 64);
    s.addSelection([1, 1, 9, 9], "change");
    expect(() => s.buildVisualRequest()).toThrow(/instruction or target/);
  });

  it("extra text alone is a valid refinement", () => {
    const s = new SessionState();
    s.openImage("img0001", 64, 64);
    s.extraText = "red background";
    const request = s.buildVisualRequest();
    expect(request.selections).toEqual([]);
    expect(request.extra_text).toBe("red background");
    expect(VisualSearchRequestSchema.safeParse(request).success).toBe(true);
  });

  it("nothing pending fails schema validation", () => {
    const s = new SessionState();
    s.openImage("img0001", 64, 64);
    expect(() => s.buildVisualRequest()).toThrow();
  });

  it("union relation carries through", () => {
    const s = new SessionState();
    s.openImage("img0001", 64, 64);
    s.relation = "union";
    s.addSelection([0, 0, 5, 5]);
    s.addSelection([10, 10, 15, 15]);
    expect(s.buildVisualRequest().relation).toBe("union");
  });
});

describe("selection modes", () => {
  it("cycles intersect -> exclude -> change -> intersect", () => {
    const s = new SessionState();
    s.openImage("x", 8, 8);
    s.addSelection([0, 0, 4, 4]);
    expect(s.selections[0]?.mode).toBe("intersect");
    s.cycleSelectionMode(0);
    expect(s.selections[0]?.mode).toBe("exclude");
    s.cycleSelectionMode(0);
    expect(s.selections[0]?.mode).toBe("change");
    s.cycleSelectionMode(0);
    expect(s.selections[0]?.mode).toBe("intersect");
  });

  it("last change-mode selection wins", () => {
    const s = new SessionState();
    s.openImage("x", 8, 8);
    s.addSelection([0, 0, 4, 4], "change");
    s.addSelection([4, 4, 8, 8], "change");
    expect(s.changeSelection()?.box).toEqual([4, 4, 8, 8]);
  });
});

describe("breadcrumbs and pagination", () => {
  it("records steps and restores an earlier one", () => {
    const s = new SessionState();
    s.recordStep("step 1", { raw_query: "a" }, entries(3));
    s.recordStep("step 2", { raw_query: "b" }, entries(50));
    expect(s.breadcrumbs.length).toBe(2);
    expect(s.results.length).toBe(50);
    expect(s.goBack(0)).toBe(true);
    expect(s.breadcrumbs.length).toBe(1);
    expect(s.results.length).toBe(3);
    expect(s.lastIntent?.raw_query).toBe("a");
  });

  it("paginates at twenty per page", () => {
    const s = new SessionState();
    s.recordStep("step", { raw_query: "q" }, entries(50));
    expect(s.pageCount).toBe(3);
    expect(s.pageResults().length).toBe(PAGE_SIZE);
    s.page = 2;
    expect(s.pageResults().length).toBe(10);
  });

  it("opening an image clears stale refinement state", () => {
    const s = new SessionState();
    s.openImage("a", 8, 8);
    s.addSelection([0, 0, 4, 4]);
    s.extraText = "text";
    s.openImage("b", 8, 8);
    expect(s.selections).toEqual([]);
    expect(s.extraText).toBe("");
  });
});
