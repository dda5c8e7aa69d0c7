import { describe, expect, it } from "vitest";
import { initialState, overlayKey, reducer, replay, Store } from "../src/state.js";
import type { Action, AppState, FeatureCollection, Metadata } from "../src/types.js";

const META: Metadata = {
  bounds: { min_lon: 10.0, min_lat: 45.0, max_lon: 10.2, max_lat: 45.2 },
  classes: ["peak", "pit"],
  index_scale_m_per_px: 30.0,
  max_batch: 3,
};

function loaded(): AppState {
  return reducer(initialState, { type: "metadata-loaded", metadata: META });
}

function fold(start: AppState, ...actions: Action[]): AppState {
  return actions.reduce(reducer, start);
}

const COLLECTION: FeatureCollection = {
  type: "FeatureCollection",
  features: [
    {
      type: "Feature",
      geometry: { type: "Point", coordinates: [10.05, 45.05] },
      properties: { class: "peak", scale: 30, score: 0.9 },
    },
  ],
};

describe("query selection", () => {
  it("first click appends one point", () => {
    const s = fold(loaded(), { type: "map-click", lon: 10.1, lat: 45.1 });
    expect(s.points).toEqual([{ lon: 10.1, lat: 45.1 }]);
    expect(s.notice).toBeNull();
  });

  it("out-of-bounds click adds nothing and shows a notice", () => {
    const s = fold(loaded(), { type: "map-click", lon: 11.0, lat: 45.1 });
    expect(s.points).toEqual([]);
    expect(s.notice).toMatch(/outside/);
  });

  it("remove-last undoes the append", () => {
    const s = fold(
      loaded(),
      { type: "map-click", lon: 10.1, lat: 45.1 },
      { type: "map-click", lon: 10.12, lat: 45.1 },
      { type: "remove-last-point" },
    );
    expect(s.points).toEqual([{ lon: 10.1, lat: 45.1 }]);
  });

  it("caps points at the service max_batch", () => {
    let s = loaded();
    for (let i = 0; i < 5; i++) {
      s = reducer(s, { type: "map-click", lon: 10.01 + i * 0.01, lat: 45.1 });
    }
    expect(s.points.length).toBe(META.max_batch);
    expect(s.notice).toMatch(/at most 3/);
  });

  it("clicks before metadata arrives do not add points", () => {
    const s = fold(initialState, { type: "map-click", lon: 10.1, lat: 45.1 });
    expect(s.points).toEqual([]);
    expect(s.notice).not.toBeNull();
  });

  it("a clicked result seeds the next query", () => {
    const s = fold(
      loaded(),
      { type: "map-click", lon: 10.1, lat: 45.1 },
      { type: "result-click", lon: 10.15, lat: 45.15 },
    );
    expect(s.points).toContainEqual({ lon: 10.15, lat: 45.15 });
  });

  it("k stays an integer at least 1", () => {
    expect(reducer(loaded(), { type: "set-k", k: 0 }).k).toBe(1);
    expect(reducer(loaded(), { type: "set-k", k: 7.9 }).k).toBe(7);
  });

  it("non-positive scales are ignored", () => {
    expect(reducer(loaded(), { type: "set-scale", scaleMPerPx: -5 }).scaleMPerPx).toBe(30);
    expect(reducer(loaded(), { type: "set-scale", scaleMPerPx: 60 }).scaleMPerPx).toBe(60);
  });
});

describe("metadata", () => {
  it("seeds the viewport and scale from the service", () => {
    const s = loaded();
    expect(s.viewport).toEqual(META.bounds);
    expect(s.scaleMPerPx).toBe(30.0);
  });

  it("unreachable service raises the banner; retry clears it", () => {
    let s = fold(initialState, {
      type: "service-unreachable",
      message: "service unreachable",
    });
    expect(s.banner).toBe("service unreachable");
    s = reducer(s, { type: "banner-retry" });
    expect(s.banner).toBeNull();
  });
});

describe("retrieval", () => {
  const base = fold(loaded(), { type: "map-click", lon: 10.1, lat: 45.1 });

  it("a completed run replaces previous results, sorted by distance", () => {
    const s = fold(
      base,
      { type: "retrieval-started", seq: 1 },
      {
        type: "retrieval-ok",
        seq: 1,
        neighbors: [{ lon: 10.11, lat: 45.1, distance: 0.4 }],
      },
      { type: "retrieval-started", seq: 2 },
      {
        type: "retrieval-ok",
        seq: 2,
        neighbors: [
          { lon: 10.13, lat: 45.1, distance: 0.9 },
          { lon: 10.1, lat: 45.1, distance: 0.0 },
        ],
      },
    );
    expect(s.results.map((n) => n.distance)).toEqual([0.0, 0.9]);
    expect(s.pendingSeq).toBeNull();
  });

  it("a superseded response is ignored (cancel-and-replace)", () => {
    const s = fold(
      base,
      { type: "retrieval-started", seq: 1 },
      { type: "retrieval-started", seq: 2 },
      {
        type: "retrieval-ok",
        seq: 1,
        neighbors: [{ lon: 10.11, lat: 45.1, distance: 0.4 }],
      },
    );
    expect(s.results).toEqual([]);
    expect(s.pendingSeq).toBe(2);
  });

  it("a 422 shows inline and preserves the selection and old results", () => {
    const withResults = fold(
      base,
      { type: "retrieval-started", seq: 1 },
      {
        type: "retrieval-ok",
        seq: 1,
        neighbors: [{ lon: 10.11, lat: 45.1, distance: 0.4 }],
      },
    );
    const s = fold(
      withResults,
      { type: "retrieval-started", seq: 2 },
      { type: "retrieval-error", seq: 2, status: 422, message: "k too large" },
    );
    expect(s.inlineError).toBe("k too large");
    expect(s.points).toEqual(base.points);
    expect(s.results).toEqual(withResults.results);
    expect(s.banner).toBeNull();
  });

  it("a network failure mid-run raises the banner instead", () => {
    const s = fold(
      base,
      { type: "retrieval-started", seq: 1 },
      { type: "retrieval-error", seq: 1, status: 0, message: "service unreachable" },
    );
    expect(s.banner).toBe("service unreachable");
    expect(s.inlineError).toBeNull();
  });
});

describe("class overlays", () => {
  it("toggle on registers a pending layer, data fills it", () => {
    let s = fold(loaded(), { type: "overlay-toggled", cls: "peak", scale: 30 });
    const key = overlayKey("peak", 30);
    expect(s.overlays[key]?.features).toBeNull();
    expect(s.overlays[key]?.color).toBe("blue");
    s = reducer(s, { type: "overlay-data", cls: "peak", scale: 30, collection: COLLECTION });
    expect(s.overlays[key]?.features?.length).toBe(1);
  });

  it("toggle off removes the layer", () => {
    const s = fold(
      loaded(),
      { type: "overlay-toggled", cls: "peak", scale: 30 },
      { type: "overlay-toggled", cls: "peak", scale: 30 },
    );
    expect(Object.keys(s.overlays)).toEqual([]);
  });

  it("two scales of the same class are independent layers", () => {
    const s = fold(
      loaded(),
      { type: "overlay-toggled", cls: "peak", scale: 30 },
      { type: "overlay-toggled", cls: "peak", scale: 60 },
      { type: "overlay-toggled", cls: "peak", scale: 30 },
    );
    expect(Object.keys(s.overlays)).toEqual([overlayKey("peak", 60)]);
  });

  it("data arriving after toggle-off is dropped", () => {
    const s = fold(
      loaded(),
      { type: "overlay-toggled", cls: "peak", scale: 30 },
      { type: "overlay-toggled", cls: "peak", scale: 30 },
      { type: "overlay-data", cls: "peak", scale: 30, collection: COLLECTION },
    );
    expect(Object.keys(s.overlays)).toEqual([]);
  });

  it("a 413 drops the layer and prompts to zoom in", () => {
    let s = fold(
      loaded(),
      { type: "overlay-toggled", cls: "peak", scale: 30 },
      { type: "overlay-error", cls: "peak", scale: 30, status: 413, message: "area too large" },
    );
    expect(Object.keys(s.overlays)).toEqual([]);
    expect(s.zoomPrompt).toBe(true);
    s = reducer(s, {
      type: "set-viewport",
      bounds: { min_lon: 10.0, min_lat: 45.0, max_lon: 10.05, max_lat: 45.05 },
    });
    expect(s.zoomPrompt).toBe(false);
  });
});

describe("action-log replay", () => {
  it("replaying a session's log lands on the identical state", () => {
    const store = new Store();
    const script: Action[] = [
      { type: "metadata-loaded", metadata: META },
      { type: "map-click", lon: 10.1, lat: 45.1 },
      { type: "map-click", lon: 99.0, lat: 45.1 },
      { type: "set-k", k: 5 },
      { type: "retrieval-started", seq: 1 },
      {
        type: "retrieval-ok",
        seq: 1,
        neighbors: [
          { lon: 10.1, lat: 45.1, distance: 0.0 },
          { lon: 10.11, lat: 45.12, distance: 0.7 },
        ],
      },
      { type: "result-click", lon: 10.11, lat: 45.12 },
      { type: "overlay-toggled", cls: "peak", scale: 30 },
      { type: "overlay-data", cls: "peak", scale: 30, collection: COLLECTION },
      { type: "overlay-toggled", cls: "pit", scale: 60 },
      { type: "overlay-error", cls: "pit", scale: 60, status: 413, message: "too big" },
      { type: "dismiss-zoom-prompt" },
      { type: "remove-last-point" },
    ];
    for (const a of script) store.dispatch(a);
    expect(JSON.stringify(replay(store.log))).toBe(JSON.stringify(store.state));
    expect(store.state.results.length).toBe(2);
    expect(store.state.points).toEqual([{ lon: 10.1, lat: 45.1 }]);
  });

  it("replay is insensitive to when stale responses arrive", () => {
    const log: Action[] = [
      { type: "metadata-loaded", metadata: META },
      { type: "map-click", lon: 10.1, lat: 45.1 },
      { type: "retrieval-started", seq: 1 },
      { type: "retrieval-started", seq: 2 },
      { type: "retrieval-error", seq: 1, status: 422, message: "stale" },
      {
        type: "retrieval-ok",
        seq: 2,
        neighbors: [{ lon: 10.1, lat: 45.1, distance: 0.0 }],
      },
    ];
    const s = replay(log);
    expect(s.inlineError).toBeNull();
    expect(s.results.length).toBe(1);
    expect(JSON.stringify(replay(log))).toBe(JSON.stringify(s));
  });
});
