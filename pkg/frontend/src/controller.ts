import { isCancelled, ServiceClient, ServiceError } from "./client.js";
import { overlayKey, Store } from "./state.js";
import type { Bounds } from "./types.js";

function errOf(e: unknown): ServiceError {
  return e instanceof ServiceError
    ? e
    : new ServiceError(0, e instanceof Error ? e.message : String(e));
}

/**
 * Async side of the app. Every service response is folded into the store as
 * an action, so the store's log alone reconstructs the view.
 */
export class Controller {
  private seq = 0;

  constructor(
    private readonly client: ServiceClient,
    readonly store: Store,
  ) {}

  async init(): Promise<void> {
    try {
      const metadata = await this.client.metadata();
      this.store.dispatch({ type: "metadata-loaded", metadata });
    } catch (e) {
      this.store.dispatch({
        type: "service-unreachable",
        message: errOf(e).message,
      });
    }
  }

  async retry(): Promise<void> {
    this.store.dispatch({ type: "banner-retry" });
    await this.init();
  }

  mapClick(lon: number, lat: number): void {
    this.store.dispatch({ type: "map-click", lon, lat });
  }

  resultClick(lon: number, lat: number): void {
    this.store.dispatch({ type: "result-click", lon, lat });
  }

  removeLastPoint(): void {
    this.store.dispatch({ type: "remove-last-point" });
  }

  clearPoints(): void {
    this.store.dispatch({ type: "clear-points" });
  }

  setK(k: number): void {
    this.store.dispatch({ type: "set-k", k });
  }

  setScale(scaleMPerPx: number): void {
    this.store.dispatch({ type: "set-scale", scaleMPerPx });
  }

  setViewport(bounds: Bounds): void {
    this.store.dispatch({ type: "set-viewport", bounds });
  }

  dismissNotice(): void {
    this.store.dispatch({ type: "dismiss-notice" });
  }

  dismissZoomPrompt(): void {
    this.store.dispatch({ type: "dismiss-zoom-prompt" });
  }

  async runRetrieval(): Promise<void> {
    const { points, k } = this.store.state;
    if (points.length === 0) return;
    const seq = ++this.seq;
    this.store.dispatch({ type: "retrieval-started", seq });
    try {
      const neighbors = await this.client.retrieve(points, k);
      this.store.dispatch({ type: "retrieval-ok", seq, neighbors });
    } catch (e) {
      if (isCancelled(e)) return; // replaced by a newer request
      const err = errOf(e);
      this.store.dispatch({
        type: "retrieval-error",
        seq,
        status: err.status,
        message: err.message,
      });
    }
  }

  async toggleOverlay(cls: string, scale: number): Promise<void> {
    this.store.dispatch({ type: "overlay-toggled", cls, scale });
    const key = overlayKey(cls, scale);
    if (!(key in this.store.state.overlays)) return; // toggled off
    const bbox =
      this.store.state.viewport ?? this.store.state.metadata?.bounds;
    if (bbox === undefined || bbox === null) return;
    try {
      const collection = await this.client.gridClassify(bbox, scale, cls);
      this.store.dispatch({ type: "overlay-data", cls, scale, collection });
    } catch (e) {
      const err = errOf(e);
      this.store.dispatch({
        type: "overlay-error",
        cls,
        scale,
        status: err.status,
        message: err.message,
      });
    }
  }
}
