import { ServiceClient } from "./client.js";
import { Controller } from "./controller.js";
import { replay, Store } from "./state.js";
import type { Bounds } from "./types.js";
import { formatDistance, viewModel } from "./view.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

function pct(v: number, lo: number, hi: number): number {
  return ((v - lo) / (hi - lo)) * 100;
}

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8765";

const store = new Store();
const controller = new Controller(new ServiceClient(baseUrl), store);

const map = el<HTMLDivElement>("map");
const markersDiv = el<HTMLDivElement>("markers");
const layersDiv = el<HTMLDivElement>("layers");
const resultsList = el<HTMLUListElement>("results");
const togglesDiv = el<HTMLDivElement>("toggles");
const kInput = el<HTMLInputElement>("k");
const scaleInput = el<HTMLInputElement>("scale");
const runBtn = el<HTMLButtonElement>("run");
const undoBtn = el<HTMLButtonElement>("undo");
const clearBtn = el<HTMLButtonElement>("clear");
const banner = el<HTMLDivElement>("banner");
const notice = el<HTMLDivElement>("notice");
const inlineErr = el<HTMLDivElement>("inline-error");
const zoomPrompt = el<HTMLDivElement>("zoom-prompt");

function dot(
  lon: number,
  lat: number,
  b: Bounds,
  color: string,
  title: string,
): HTMLDivElement {
  const d = document.createElement("div");
  d.className = "dot";
  d.style.left = `${pct(lon, b.min_lon, b.max_lon)}%`;
  d.style.top = `${pct(lat, b.max_lat, b.min_lat)}%`;
  d.style.background = color;
  d.title = title;
  return d;
}

function render(): void {
  const vm = viewModel(store.state);
  banner.hidden = vm.banner === null;
  if (vm.banner !== null) {
    banner.replaceChildren(
      document.createTextNode(`${vm.banner} `),
      Object.assign(document.createElement("button"), {
        textContent: "retry",
        onclick: () => void controller.retry(),
      }),
    );
  }
  notice.hidden = vm.notice === null;
  notice.textContent = vm.notice ?? "";
  inlineErr.hidden = vm.inlineError === null;
  inlineErr.textContent = vm.inlineError ?? "";
  zoomPrompt.hidden = !vm.zoomPrompt;
  zoomPrompt.textContent = vm.zoomPrompt
    ? "too large an area at this scale — zoom in and toggle again"
    : "";
  runBtn.disabled = !vm.canRun;
  runBtn.textContent = vm.busy ? "retrieving…" : "run retrieval";
  if (document.activeElement !== kInput) kInput.value = String(vm.k);
  if (document.activeElement !== scaleInput)
    scaleInput.value = String(vm.scaleMPerPx);

  const b = vm.bounds;
  layersDiv.replaceChildren();
  markersDiv.replaceChildren();
  if (b !== null) {
    for (const layer of vm.layers) {
      for (const p of layer.points) {
        layersDiv.append(
          dot(p.lon, p.lat, b, layer.color, `${layer.cls}@${layer.scale}`),
        );
      }
    }
    for (const m of vm.markers) {
      const d = dot(
        m.lon,
        m.lat,
        b,
        m.kind === "query" ? "black" : "white",
        m.label,
      );
      d.classList.add(m.kind);
      markersDiv.append(d);
    }
  }

  resultsList.replaceChildren(
    ...store.state.results.map((n, i) => {
      const li = document.createElement("li");
      li.textContent = `#${i + 1}  (${n.lon.toFixed(5)}, ${n.lat.toFixed(
        5,
      )})  distance ${formatDistance(n.distance)}`;
      li.onclick = () => controller.resultClick(n.lon, n.lat);
      return li;
    }),
  );

  togglesDiv.replaceChildren(
    ...vm.toggles.map((t) => {
      const btn = document.createElement("button");
      const key = `${t.cls}@${store.state.scaleMPerPx}`;
      const active = vm.activeOverlayKeys.includes(key);
      btn.textContent = `${active ? "✓ " : ""}${t.cls} @ ${
        store.state.scaleMPerPx
      } m/px`;
      btn.style.borderColor = t.color;
      btn.onclick = () =>
        void controller.toggleOverlay(t.cls, store.state.scaleMPerPx);
      return btn;
    }),
  );
}

store.subscribe(render);

map.addEventListener("click", (ev) => {
  const b = viewModel(store.state).bounds;
  if (b === null) return;
  const rect = map.getBoundingClientRect();
  const fx = (ev.clientX - rect.left) / rect.width;
  const fy = (ev.clientY - rect.top) / rect.height;
  const lon = b.min_lon + fx * (b.max_lon - b.min_lon);
  const lat = b.max_lat - fy * (b.max_lat - b.min_lat);
  controller.mapClick(lon, lat);
});

kInput.addEventListener("change", () => controller.setK(Number(kInput.value)));
scaleInput.addEventListener("change", () =>
  controller.setScale(Number(scaleInput.value)),
);
runBtn.addEventListener("click", () => void controller.runRetrieval());
undoBtn.addEventListener("click", () => controller.removeLastPoint());
clearBtn.addEventListener("click", () => controller.clearPoints());
notice.addEventListener("click", () => controller.dismissNotice());
zoomPrompt.addEventListener("click", () => controller.dismissZoomPrompt());

// dev affordance: rebuild the view from the log and compare
declare global {
  interface Window {
    explorer: { store: Store; replayCheck: () => boolean };
  }
}
window.explorer = {
  store,
  replayCheck: () =>
    JSON.stringify(replay(store.log)) === JSON.stringify(store.state),
};

void controller.init();
render();
