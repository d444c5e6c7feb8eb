/** Client behavior: latest-wins what-if calls, debounce, error surfaces. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, debounce } from "../src/api";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("latest-wins what-if", () => {
  it("aborts the in-flight request when a newer one starts", async () => {
    const seen: AbortSignal[] = [];
    let release: (() => void) | null = null;
    const fetchImpl = vi.fn(
      (_url: RequestInfo | URL, init?: RequestInit) =>
        new Promise<Response>((resolve, reject) => {
          const signal = init?.signal as AbortSignal;
          seen.push(signal);
          const finish = () => resolve(jsonResponse({ doses_gy: [seen.length] }));
          signal.addEventListener("abort", () =>
            reject(Object.assign(new Error("aborted"), { name: "AbortError" }))
          );
          if (seen.length === 1) release = finish;
          else finish();
        })
    );
    const client = new ApiClient("http://x", fetchImpl as typeof fetch);
    const first = client.whatIf("m", { doses: [1] });
    const second = client.whatIf("m", { doses: [2] });
    const [a, b] = await Promise.all([first, second]);
    expect(a).toBeNull(); // superseded
    expect(b).not.toBeNull();
    expect(seen[0].aborted).toBe(true);
    expect(release).not.toBeNull();
  });

  it("stale ticket resolves to null even if it wins the race", async () => {
    const responses: Array<() => void> = [];
    const fetchImpl = vi.fn(
      () =>
        new Promise<Response>((resolve) => {
          responses.push(() => resolve(jsonResponse({ ok: 1 })));
        })
    );
    const client = new ApiClient("http://x", fetchImpl as typeof fetch);
    const first = client.whatIf("m", {});
    const second = client.whatIf("m", {});
    responses[0]();
    responses[1]();
    expect(await first).toBeNull();
    expect(await second).not.toBeNull();
  });
});

describe("error handling", () => {
  it("non-2xx responses raise ApiError with the detail text", async () => {
    const fetchImpl = vi.fn(async () =>
      jsonResponse({ detail: "dose 9.0 Gy/frac outside model bounds" }, 422)
    );
    const client = new ApiClient("http://x", fetchImpl as typeof fetch);
    await expect(client.decide("m", {})).rejects.toThrowError(ApiError);
    await expect(client.decide("m", {})).rejects.toThrowError(/outside model/);
  });

  it("compensation 409 maps to null (empty state)", async () => {
    const fetchImpl = vi.fn(async () =>
      jsonResponse({ detail: "insufficient AI-superior cases" }, 409)
    );
    const client = new ApiClient("http://x", fetchImpl as typeof fetch);
    expect(await client.compensationMap("m", 10)).toBeNull();
  });
});

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("collapses a burst into the final trailing call", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 250);
    fn(1);
    vi.advanceTimersByTime(100);
    fn(2);
    vi.advanceTimersByTime(100);
    fn(3);
    vi.advanceTimersByTime(249);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([3]);
  });

  it("separate bursts each fire once", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 250);
    fn(1);
    vi.advanceTimersByTime(250);
    fn(2);
    vi.advanceTimersByTime(250);
    expect(calls).toEqual([1, 2]);
  });
});
