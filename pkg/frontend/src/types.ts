export interface LonLat {
  lon: number;
  lat: number;
}

export interface Bounds {
  min_lon: number;
  min_lat: number;
  max_lon: number;
  max_lat: number;
}

export interface Neighbor extends LonLat {
  distance: number;
}

export interface Metadata {
  bounds: Bounds;
  classes: string[];
  index_scale_m_per_px: number;
  max_batch: number;
}

export interface Health {
  status: string;
  checkpoint_hash: string;
  index_size: number;
}

export interface PointFeature {
  type: "Feature";
  geometry: { type: "Point"; coordinates: [number, number] };
  properties: { class: string; scale: number; score: number };
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: PointFeature[];
}

/** One toggled class map; features stay null while the fetch is in flight. */
export interface Overlay {
  cls: string;
  scale: number;
  color: string;
  features: PointFeature[] | null;
}

export interface AppState {
  metadata: Metadata | null;
  /** Visible map window; class maps are fetched for this bbox. */
  viewport: Bounds | null;
  points: LonLat[];
  k: number;
  scaleMPerPx: number;
  results: Neighbor[];
  /** Sequence number of the retrieval we are waiting on, if any. */
  pendingSeq: number | null;
  overlays: Record<string, Overlay>;
  notice: string | null;
  banner: string | null;
  inlineError: string | null;
  zoomPrompt: boolean;
}

/**
 * Everything that can change the view. Service responses ride inside
 * actions, so the state is a pure fold over the action log and replaying
 * the log rebuilds the identical view.
 */
export type Action =
  | { type: "metadata-loaded"; metadata: Metadata }
  | { type: "service-unreachable"; message: string }
  | { type: "banner-retry" }
  | { type: "map-click"; lon: number; lat: number }
  | { type: "result-click"; lon: number; lat: number }
  | { type: "remove-last-point" }
  | { type: "clear-points" }
  | { type: "set-k"; k: number }
  | { type: "set-scale"; scaleMPerPx: number }
  | { type: "set-viewport"; bounds: Bounds }
  | { type: "retrieval-started"; seq: number }
  | { type: "retrieval-ok"; seq: number; neighbors: Neighbor[] }
  | { type: "retrieval-error"; seq: number; status: number; message: string }
  | { type: "overlay-toggled"; cls: string; scale: number }
  | {
      type: "overlay-data";
      cls: string;
      scale: number;
      collection: FeatureCollection;
    }
  | {
      type: "overlay-error";
      cls: string;
      scale: number;
      status: number;
      message: string;
    }
  | { type: "dismiss-notice" }
  | { type: "dismiss-zoom-prompt" };
