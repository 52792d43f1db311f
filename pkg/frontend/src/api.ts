/** Typed client for the annotation service HTTP/JSON API. */

import type { RleGrid } from "./rle.js";

export interface FrameInfo {
  id: string;
  image_url: string;
  lux: number;
  annotated: boolean;
}

/** [x, y] vertex of a boundary polyline in pixel coordinates. */
export type Vertex = [number, number];

export interface SuperpixelsResponse {
  n_segments: number;
  params: Record<string, unknown>;
  rle: RleGrid;
  boundaries: Record<string, Vertex[][]>;
}

export interface LabelsResponse {
  frame_id: string;
  selected: number[];
  timestamp: string | null;
  annotator: string | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type Fetch = typeof globalThis.fetch;

export class ApiClient {
  private readonly fetchImpl: Fetch;

  constructor(
    readonly base: string = "",
    fetchImpl?: Fetch,
  ) {
    // Bind explicitly: an unbound global fetch throws "illegal invocation".
    this.fetchImpl = fetchImpl ?? globalThis.fetch.bind(globalThis);
  }

  imageUrl(frameId: string): string {
    return `${this.base}/api/frames/${encodeURIComponent(frameId)}/image.png`;
  }

  maskUrl(frameId: string): string {
    return `${this.base}/api/frames/${encodeURIComponent(frameId)}/mask.png`;
  }

  async frames(): Promise<FrameInfo[]> {
    return this.json(`/api/frames`);
  }

  async superpixels(frameId: string): Promise<SuperpixelsResponse> {
    return this.json(`/api/frames/${encodeURIComponent(frameId)}/superpixels`);
  }

  async labels(frameId: string): Promise<LabelsResponse> {
    return this.json(`/api/frames/${encodeURIComponent(frameId)}/labels`);
  }

  async saveLabels(
    frameId: string,
    selected: number[],
    annotator?: string,
  ): Promise<LabelsResponse> {
    const body: { selected: number[]; annotator?: string } = { selected };
    if (annotator !== undefined) body.annotator = annotator;
    return this.json(`/api/frames/${encodeURIComponent(frameId)}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: unknown };
        if (payload && payload.detail !== undefined) detail = String(payload.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}
