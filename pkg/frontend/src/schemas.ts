/**
 * Zod schemas mirroring the server's documented wire formats.
 * Every outbound request is validated against these before it is sent,
 * and every response is validated on arrival.
 */

import { z } from "zod";

export const BoxSchema = z
  .tuple([z.number().int(), z.number().int(), z.number().int(), z.number().int()])
  .refine(([x0, y0, x1, y1]) => x0 < x1 && y0 < y1, {
    message: "box must satisfy x0 < x1 and y0 < y1",
  });

export type Box = z.infer<typeof BoxSchema>;

export const IntentPayloadSchema = z
  .object({
    raw_query: z.string(),
    options: z.array(z.array(z.string())).optional(),
    negatives: z.array(z.string()).optional(),
    changes: z.array(z.object({ source: z.string(), target: z.string() })).optional(),
    metadata: z
      .object({
        collection: z.string().optional(),
        price_order: z.enum(["asc", "desc"]).optional(),
        price_range: z.tuple([z.number(), z.number()]).optional(),
      })
      .optional(),
  })
  .strict();

export type IntentPayload = z.infer<typeof IntentPayloadSchema>;

export const SearchRequestSchema = z
  .object({
    query: z.string().min(1),
    k: z.number().int().min(1).max(200),
    llm_mode: z.boolean().optional(),
  })
  .strict();

export type SearchRequest = z.infer<typeof SearchRequestSchema>;

export const ChangePartSchema = z
  .object({
    box: BoxSchema,
    instruction: z.string().optional(),
    target_text: z.string().optional(),
  })
  .strict()
  .refine((c) => Boolean(c.instruction) || Boolean(c.target_text), {
    message: "change needs an instruction or a target_text",
  });

export const VisualSearchRequestSchema = z
  .object({
    base_image: z.string().min(1),
    selections: z.array(BoxSchema),
    relation: z.enum(["intersection", "union"]),
    negatives: z.array(z.union([z.string().min(1), BoxSchema])),
    change: ChangePartSchema.optional(),
    extra_text: z.string().optional(),
    k: z.number().int().min(1).max(200),
  })
  .strict()
  .refine(
    (r) => r.selections.length > 0 || Boolean(r.extra_text) || r.change !== undefined,
    { message: "need at least one selection, extra_text, or change" },
  );

export type VisualSearchRequest = z.infer<typeof VisualSearchRequestSchema>;

export const PreviewRequestSchema = z
  .object({
    image: z.string().min(1),
    box: BoxSchema,
    instruction: z.string().min(1),
  })
  .strict();

export type PreviewRequest = z.infer<typeof PreviewRequestSchema>;

export const ResultEntrySchema = z.object({
  id: z.string(),
  score: z.number(),
  collection: z.string(),
  price: z.number(),
  image_url: z.string(),
});

export type ResultEntry = z.infer<typeof ResultEntrySchema>;

export const SearchResponseSchema = z.object({
  results: z.array(ResultEntrySchema),
  intent: IntentPayloadSchema,
});

export type SearchResponse = z.infer<typeof SearchResponseSchema>;

export const TagSuggestionSchema = z.object({
  tag: z.string(),
  collection: z.string(),
  similarity: z.number(),
});

export const ParseResponseSchema = z.object({
  intent: IntentPayloadSchema,
  suggestions: z.array(
    z.object({ element: z.string(), tags: z.array(TagSuggestionSchema) }),
  ),
});

export type ParseResponse = z.infer<typeof ParseResponseSchema>;

export const PreviewResponseSchema = z.object({ image: z.string() });

export type PreviewResponse = z.infer<typeof PreviewResponseSchema>;

export const ErrorResponseSchema = z.object({
  error: z.object({ code: z.string(), message: z.string() }),
});
