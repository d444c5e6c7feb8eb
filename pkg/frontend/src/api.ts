/** Thin service client: configurable base URL, latest-wins what-if calls. */

import type {
  CompensationMapJson,
  ModelListEntry,
  ModelStatus,
  VerdictJson,
  WhatIfResponse,
} from "./types";

export class ApiError extends Error {
  constructor(message: string, readonly status: number | null) {
    super(message);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = `${response.status}`;
    try {
      const body = await response.json();
      detail = typeof body.detail === "string"
        ? body.detail
        : JSON.stringify(body.detail ?? body);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(`API error ${response.status}: ${detail}`,
                       response.status);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  private whatIfSequence = 0;
  private abort: AbortController | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch
  ) {}

  async health(): Promise<{ status: string; version: string }> {
    return parseOrThrow(await this.fetchImpl(`${this.baseUrl}/health`));
  }

  async listModels(): Promise<ModelListEntry[]> {
    return parseOrThrow(await this.fetchImpl(`${this.baseUrl}/models`));
  }

  async modelStatus(modelId: string): Promise<ModelStatus> {
    return parseOrThrow(
      await this.fetchImpl(`${this.baseUrl}/models/${modelId}/status`)
    );
  }

  /**
   * At most one in-flight what-if request; superseded requests are aborted
   * and resolve to null so only the latest response reaches the chart.
   */
  async whatIf(
    modelId: string,
    body: unknown
  ): Promise<WhatIfResponse | null> {
    const ticket = ++this.whatIfSequence;
    this.abort?.abort();
    this.abort = new AbortController();
    let response: Response;
    try {
      response = await this.fetchImpl(
        `${this.baseUrl}/models/${modelId}/whatif`,
        {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(body),
          signal: this.abort.signal,
        }
      );
    } catch (err) {
      if ((err as Error).name === "AbortError") return null;
      throw err;
    }
    if (ticket !== this.whatIfSequence) return null;
    return parseOrThrow<WhatIfResponse>(response);
  }

  async decide(modelId: string, body: unknown): Promise<VerdictJson> {
    return parseOrThrow(
      await this.fetchImpl(`${this.baseUrl}/models/${modelId}/decide`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      })
    );
  }

  /** Returns null when no compensation model exists yet (HTTP 409). */
  async compensationMap(
    modelId: string,
    resolution: number
  ): Promise<CompensationMapJson | null> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/models/${modelId}/compensation-map` +
        `?resolution=${resolution}`
    );
    if (response.status === 409) return null;
    return parseOrThrow<CompensationMapJson>(response);
  }
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
  setTimer = setTimeout,
  clearTimer = clearTimeout
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (handle !== null) clearTimer(handle);
    handle = setTimer(() => {
      handle = null;
      fn(...args);
    }, waitMs);
  };
}
