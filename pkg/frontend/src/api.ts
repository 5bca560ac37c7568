/**
 * Typed client for the search API. Requests are validated against the wire
 * schemas before they leave the browser; responses are validated on arrival.
 * Server errors surface as ApiError carrying the server's error code.
 */

import {
  ErrorResponseSchema,
  ParseResponseSchema,
  PreviewRequestSchema,
  PreviewResponseSchema,
  SearchRequestSchema,
  SearchResponseSchema,
  VisualSearchRequestSchema,
  type ParseResponse,
  type PreviewRequest,
  type PreviewResponse,
  type SearchRequest,
  type SearchResponse,
  type VisualSearchRequest,
} from "./schemas.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(private readonly base: string) {}

  imageUrl(imageUrlPath: string): string {
    return `${this.base}${imageUrlPath}`;
  }

  private async post<T>(
    path: string,
    body: unknown,
    parseResponse: (data: unknown) => T,
    signal?: AbortSignal,
  ): Promise<T> {
    const resp = await fetch(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    const data: unknown = await resp.json();
    if (!resp.ok) {
      const parsed = ErrorResponseSchema.safeParse(data);
      if (parsed.success) {
        throw new ApiError(resp.status, parsed.data.error.code, parsed.data.error.message);
      }
      throw new ApiError(resp.status, "unknown_error", `HTTP ${resp.status}`);
    }
    return parseResponse(data);
  }

  async parse(query: string, signal?: AbortSignal): Promise<ParseResponse> {
    return this.post("/parse", { query }, (d) => ParseResponseSchema.parse(d), signal);
  }

  async search(request: SearchRequest, signal?: AbortSignal): Promise<SearchResponse> {
    const body = SearchRequestSchema.parse(request);
    return this.post("/search", body, (d) => SearchResponseSchema.parse(d), signal);
  }

  async searchVisual(
    request: VisualSearchRequest,
    signal?: AbortSignal,
  ): Promise<SearchResponse> {
    const body = VisualSearchRequestSchema.parse(request);
    return this.post("/search/visual", body, (d) => SearchResponseSchema.parse(d), signal);
  }

  async preview(request: PreviewRequest, signal?: AbortSignal): Promise<PreviewResponse> {
    const body = PreviewRequestSchema.parse(request);
    return this.post("/preview", body, (d) => PreviewResponseSchema.parse(d), signal);
  }
}
