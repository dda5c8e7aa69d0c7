import type {
  Bounds,
  FeatureCollection,
  Health,
  LonLat,
  Metadata,
  Neighbor,
} from "./types.js";

/** status 0 means the service was unreachable; -1 means we cancelled. */
export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export function isCancelled(e: unknown): boolean {
  return e instanceof ServiceError && e.status === -1;
}

function detailOf(body: unknown): string {
  if (body !== null && typeof body === "object" && "detail" in body) {
    const d = (body as { detail: unknown }).detail;
    return typeof d === "string" ? d : JSON.stringify(d);
  }
  return JSON.stringify(body);
}

export class ServiceClient {
  private inFlight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(
    path: string,
    init: RequestInit = {},
    signal?: AbortSignal,
  ): Promise<unknown> {
    let resp: Response;
    try {
      resp = await this.fetchFn(`${this.baseUrl}${path}`, {
        ...init,
        signal: signal ?? null,
      });
    } catch (e) {
      if (e instanceof Error && e.name === "AbortError") {
        throw new ServiceError(-1, "cancelled");
      }
      throw new ServiceError(0, "service unreachable");
    }
    const text = await resp.text();
    const body: unknown = text === "" ? null : JSON.parse(text);
    if (!resp.ok) {
      throw new ServiceError(resp.status, detailOf(body));
    }
    return body;
  }

  async health(): Promise<Health> {
    return (await this.request("/health")) as Health;
  }

  async metadata(): Promise<Metadata> {
    return (await this.request("/metadata")) as Metadata;
  }

  async embed(point: LonLat, scaleMPerPx: number): Promise<number[]> {
    const body = await this.request("/embed", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        lon: point.lon,
        lat: point.lat,
        scale_m_per_px: scaleMPerPx,
      }),
    });
    return (body as { embedding: number[] }).embedding;
  }

  /** At most one retrieval in flight: starting a new one aborts the old. */
  async retrieve(points: LonLat[], k: number): Promise<Neighbor[]> {
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    try {
      const body = await this.request(
        "/retrieve",
        {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify({ points, k }),
        },
        controller.signal,
      );
      return (body as { neighbors: Neighbor[] }).neighbors;
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
  }

  async gridClassify(
    bbox: Bounds,
    scale: number,
    cls: string,
  ): Promise<FeatureCollection> {
    const params = new URLSearchParams({
      bbox: `${bbox.min_lon},${bbox.min_lat},${bbox.max_lon},${bbox.max_lat}`,
      scale: String(scale),
      class: cls,
    });
    return (await this.request(
      `/grid-classify?${params.toString()}`,
    )) as FeatureCollection;
  }
}
