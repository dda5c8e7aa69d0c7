import { classColor } from "./colors.js";
import type { Action, AppState, Bounds, LonLat } from "./types.js";

export const initialState: AppState = {
  metadata: null,
  viewport: null,
  points: [],
  k: 10,
  scaleMPerPx: 30,
  results: [],
  pendingSeq: null,
  overlays: {},
  notice: null,
  banner: null,
  inlineError: null,
  zoomPrompt: false,
};

export function overlayKey(cls: string, scale: number): string {
  return `${cls}@${scale}`;
}

function inBounds(b: Bounds, p: LonLat): boolean {
  return (
    p.lon >= b.min_lon &&
    p.lon <= b.max_lon &&
    p.lat >= b.min_lat &&
    p.lat <= b.max_lat
  );
}

function addPoint(state: AppState, p: LonLat, source: string): AppState {
  if (state.metadata === null) {
    return { ...state, notice: "still connecting to the service" };
  }
  if (!inBounds(state.metadata.bounds, p)) {
    return { ...state, notice: `${source} outside the served raster` };
  }
  if (state.points.length >= state.metadata.max_batch) {
    return {
      ...state,
      notice: `at most ${state.metadata.max_batch} query points`,
    };
  }
  return { ...state, points: [...state.points, p], notice: null };
}

export function reducer(state: AppState, action: Action): AppState {
  switch (action.type) {
    case "metadata-loaded":
      return {
        ...state,
        metadata: action.metadata,
        viewport: state.viewport ?? action.metadata.bounds,
        scaleMPerPx: action.metadata.index_scale_m_per_px,
        banner: null,
      };
    case "service-unreachable":
      return { ...state, banner: action.message, pendingSeq: null };
    case "banner-retry":
      return { ...state, banner: null };
    case "map-click":
      return addPoint(state, { lon: action.lon, lat: action.lat }, "click");
    case "result-click":
      // the iterate loop: a retrieved site seeds the next query
      return addPoint(state, { lon: action.lon, lat: action.lat }, "result");
    case "remove-last-point":
      return { ...state, points: state.points.slice(0, -1), notice: null };
    case "clear-points":
      return { ...state, points: [], notice: null };
    case "set-k":
      return { ...state, k: Math.max(1, Math.floor(action.k)) };
    case "set-scale":
      return action.scaleMPerPx > 0
        ? { ...state, scaleMPerPx: action.scaleMPerPx }
        : state;
    case "set-viewport":
      return { ...state, viewport: action.bounds, zoomPrompt: false };
    case "retrieval-started":
      return { ...state, pendingSeq: action.seq, inlineError: null };
    case "retrieval-ok": {
      if (action.seq !== state.pendingSeq) return state; // superseded
      const results = [...action.neighbors].sort(
        (a, b) => a.distance - b.distance,
      );
      return { ...state, results, pendingSeq: null, banner: null };
    }
    case "retrieval-error": {
      if (action.seq !== state.pendingSeq) return state;
      if (action.status === 0) {
        return { ...state, pendingSeq: null, banner: action.message };
      }
      // selection and previous results stay; the error shows inline
      return { ...state, pendingSeq: null, inlineError: action.message };
    }
    case "overlay-toggled": {
      const key = overlayKey(action.cls, action.scale);
      const overlays = { ...state.overlays };
      if (key in overlays) {
        delete overlays[key];
      } else {
        overlays[key] = {
          cls: action.cls,
          scale: action.scale,
          color: classColor(action.cls),
          features: null,
        };
      }
      return { ...state, overlays };
    }
    case "overlay-data": {
      const key = overlayKey(action.cls, action.scale);
      const current = state.overlays[key];
      if (current === undefined) return state; // toggled off meanwhile
      return {
        ...state,
        overlays: {
          ...state.overlays,
          [key]: { ...current, features: action.collection.features },
        },
      };
    }
    case "overlay-error": {
      const key = overlayKey(action.cls, action.scale);
      const overlays = { ...state.overlays };
      delete overlays[key];
      if (action.status === 413) {
        return { ...state, overlays, zoomPrompt: true };
      }
      if (action.status === 0) {
        return { ...state, overlays, banner: action.message };
      }
      return { ...state, overlays, inlineError: action.message };
    }
    case "dismiss-notice":
      return { ...state, notice: null };
    case "dismiss-zoom-prompt":
      return { ...state, zoomPrompt: false };
  }
}

/** Fold an action log from scratch; replaying a session's log must land on
 * the identical state the session ended in. */
export function replay(
  actions: readonly Action[],
  start: AppState = initialState,
): AppState {
  return actions.reduce(reducer, start);
}

export type Listener = (state: AppState) => void;

/** Minimal store: dispatch folds the reducer and appends to the log. */
export class Store {
  state: AppState = initialState;
  readonly log: Action[] = [];
  private listeners: Listener[] = [];

  dispatch(action: Action): void {
    this.state = reducer(this.state, action);
    this.log.push(action);
    for (const l of this.listeners) l(this.state);
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }
}
