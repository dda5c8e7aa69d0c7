import type { AppState, Bounds, LonLat } from "./types.js";
import { classColor } from "./colors.js";

export interface Marker extends LonLat {
  kind: "query" | "result";
  label: string;
}

export interface LayerView {
  key: string;
  cls: string;
  scale: number;
  color: string;
  loading: boolean;
  points: LonLat[];
}

export interface ClassToggle {
  cls: string;
  color: string;
}

export interface ViewModel {
  bounds: Bounds | null;
  markers: Marker[];
  layers: LayerView[];
  toggles: ClassToggle[];
  activeOverlayKeys: string[];
  k: number;
  scaleMPerPx: number;
  busy: boolean;
  canRun: boolean;
  notice: string | null;
  banner: string | null;
  inlineError: string | null;
  zoomPrompt: boolean;
}

export function formatDistance(d: number): string {
  return d === 0 ? "0" : d.toPrecision(3);
}

/** Pure projection of AppState into what the DOM layer draws. */
export function viewModel(state: AppState): ViewModel {
  const markers: Marker[] = [];
  state.points.forEach((p, i) => {
    markers.push({ ...p, kind: "query", label: `Q${i + 1}` });
  });
  state.results.forEach((n, i) => {
    markers.push({
      lon: n.lon,
      lat: n.lat,
      kind: "result",
      label: `#${i + 1} d=${formatDistance(n.distance)}`,
    });
  });
  const layers: LayerView[] = Object.entries(state.overlays).map(
    ([key, ov]) => ({
      key,
      cls: ov.cls,
      scale: ov.scale,
      color: ov.color,
      loading: ov.features === null,
      points: (ov.features ?? []).map((f) => ({
        lon: f.geometry.coordinates[0],
        lat: f.geometry.coordinates[1],
      })),
    }),
  );
  return {
    bounds: state.viewport ?? state.metadata?.bounds ?? null,
    markers,
    layers,
    toggles: (state.metadata?.classes ?? []).map((cls) => ({
      cls,
      color: classColor(cls),
    })),
    activeOverlayKeys: Object.keys(state.overlays),
    k: state.k,
    scaleMPerPx: state.scaleMPerPx,
    busy: state.pendingSeq !== null,
    canRun: state.points.length > 0 && state.pendingSeq === null,
    notice: state.notice,
    banner: state.banner,
    inlineError: state.inlineError,
    zoomPrompt: state.zoomPrompt,
  };
}
