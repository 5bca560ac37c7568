import { describe, expect, it } from "vitest";

import {
  BoxSchema,
  IntentPayloadSchema,
  SearchRequestSchema,
  SearchResponseSchema,
  VisualSearchRequestSchema,
} from "../src/schemas.js";

describe("box schema", () => {
  it("accepts ordered integer boxes", () => {
    expect(BoxSchema.safeParse([0, 0, 4, 4]).success).toBe(true);
  });
  it("rejects zero-area and inverted boxes", () => {
    expect(BoxSchema.safeParse([5, 5, 5, 9]).success).toBe(false);
    expect(BoxSchema.safeParse([9, 9, 5, 5]).success).toBe(false);
  });
  it("rejects fractional coordinates", () => {
    expect(BoxSchema.safeParse([0.5, 0, 4, 4]).success).toBe(false);
  });
});

describe("search request schema", () => {
  it("enforces the k range", () => {
    expect(SearchRequestSchema.safeParse({ query: "dog", k: 0 }).success).toBe(false);
    expect(SearchRequestSchema.safeParse({ query: "dog", k: 201 }).success).toBe(false);
    expect(SearchRequestSchema.safeParse({ query: "dog", k: 200 }).success).toBe(true);
  });
  it("rejects unknown fields", () => {
    expect(SearchRequestSchema.safeParse({ query: "dog", k: 5, bogus: 1 }).success).toBe(false);
  });
});

describe("visual search request schema", () => {
  it("requires at least one of selections, extra_text, change", () => {
    const base = { base_image: "x", selections: [], relation: "intersection", negatives: [], k: 5 };
    expect(VisualSearchRequestSchema.safeParse(base).success).toBe(false);
    expect(
      VisualSearchRequestSchema.safeParse({ ...base, extra_text: "hat" }).success,
    ).toBe(true);
    expect(
      VisualSearchRequestSchema.safeParse({
        ...base,
        change: { box: [0, 0, 2, 2], target_text: "blue cap" },
      }).success,
    ).toBe(true);
  });

  it("negatives may mix strings and boxes", () => {
    const request = {
      base_image: "x",
      selections: [[0, 0, 2, 2]],
      relation: "union",
      negatives: ["hat", [1, 1, 3, 3]],
      k: 10,
    };
    expect(VisualSearchRequestSchema.safeParse(request).success).toBe(true);
  });

  it("change without instruction or target is rejected", () => {
    const request = {
      base_image: "x",
      selections: [],
      relation: "intersection",
      negatives: [],
      change: { box: [0, 0, 2, 2] },
      k: 10,
    };
    expect(VisualSearchRequestSchema.safeParse(request).success).toBe(false);
  });
});

describe("response schemas", () => {
  it("accepts the documented search response shape", () => {
    const body = {
      results: [
        { id: "a", score: 1.2, collection: "X", price: 0.5, image_url: "/images/a" },
      ],
      intent: { raw_query: "q", options: [["dog"]] },
    };
    expect(SearchResponseSchema.safeParse(body).success).toBe(true);
  });

  it("accepts canonical intent with all fields and rejects unknown ones", () => {
    const intent = {
      raw_query: "q",
      options: [["woman", "pixel style"]],
      negatives: ["black hair"],
      changes: [{ source: "red hat", target: "blue hat" }],
      metadata: { collection: "Azuki", price_order: "desc", price_range: [0.1, 2.0] },
    };
    expect(IntentPayloadSchema.safeParse(intent).success).toBe(true);
    expect(IntentPayloadSchema.safeParse({ ...intent, extra: 1 }).success).toBe(false);
  });
});
