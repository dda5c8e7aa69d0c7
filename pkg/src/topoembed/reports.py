"""Tables and figures for experiment results."""

from __future__ import annotations

import csv
import zlib
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LightSource

from .evaluation import ProbeResult, ScaleScanResult
from .raster import ElevationRaster
from .training import TrainReport

CLASS_COLORS = {
    "peak": "blue",
    "saddle": "green",
    "cliff": "red",
    "river": "yellow",
}
FALLBACK_COLORS = ("purple", "orange", "brown", "cyan", "magenta")


def class_color(name: str) -> str:
    if name in CLASS_COLORS:
        return CLASS_COLORS[name]
    return FALLBACK_COLORS[zlib.crc32(name.encode()) % len(FALLBACK_COLORS)]


def probe_results_csv(results: list[ProbeResult], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "model", "mean_accuracy", "std_accuracy",
                         "n_train", "n_test", "seeds"])
        for r in results:
            writer.writerow([r.class_name, r.model_kind,
                             repr(r.mean_accuracy), repr(r.std_accuracy),
                             r.n_train, r.n_test, r.n_seeds])


def probe_results_markdown(results: list[ProbeResult]) -> str:
    """Accuracy table, classes down the side and one column per model."""
    classes = sorted({r.class_name for r in results})
    models = sorted({r.model_kind for r in results})
    cell = {(r.class_name, r.model_kind):
            f"{100 * r.mean_accuracy:.1f} ± {100 * r.std_accuracy:.1f}"
            for r in results}
    lines = ["| class | " + " | ".join(models) + " |",
             "|---" * (len(models) + 1) + "|"]
    for cls in classes:
        row = [cell.get((cls, m), "—") for m in models]
        lines.append("| " + cls + " | " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def save_scale_scan_plot(result: ScaleScanResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(result.resolutions, result.mean_accuracy,
                yerr=result.std_accuracy, marker="o", capsize=3)
    ax.axvline(result.best_resolution, color="gray", linestyle="--",
               label=f"best: {result.best_resolution:g} m/px")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("resolution (m/pixel)")
    ax.set_ylabel("classifier accuracy")
    ax.set_title("accuracy vs patch resolution")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_curves(report: TrainReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    steps = [r.step for r in report.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.l_p for r in report.records], label="reconstruction")
    if any(r.l_g_adv is not None for r in report.records):
        ax.plot(steps, [r.l_g_adv for r in report.records],
                label="generator adv")
        ax.plot(steps, [r.l_d_adv for r in report.records],
                label="discriminator adv")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title("training losses")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def hillshade(raster: ElevationRaster, azdeg: float = 315.0,
              altdeg: float = 45.0) -> np.ndarray:
    """Illumination image in [0, 1] from the elevation grid."""
    ls = LightSource(azdeg=azdeg, altdeg=altdeg)
    return ls.hillshade(raster.values, vert_exag=1.0)


def save_hillshade_png(raster: ElevationRaster, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    shade = hillshade(raster)
    h, w = shade.shape
    fig = plt.figure(figsize=(w / 100, h / 100), dpi=100)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.set_axis_off()
    ax.imshow(shade, cmap="gray", vmin=0.0, vmax=1.0)
    fig.savefig(path, dpi=100)
    plt.close(fig)


def save_grid_map(collection: dict, path,
                  raster: ElevationRaster | None = None) -> None:
    """Scatter the positive grid points over an optional hillshade."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 6))
    if raster is not None:
        min_lon, min_lat, max_lon, max_lat = raster.bounds
        ax.imshow(hillshade(raster), cmap="gray", vmin=0.0, vmax=1.0,
                  extent=(min_lon, max_lon, min_lat, max_lat), aspect="auto")
    by_class: dict[str, list[tuple[float, float]]] = {}
    for feature in collection.get("features", []):
        name = feature["properties"]["class"]
        lon, lat = feature["geometry"]["coordinates"]
        by_class.setdefault(name, []).append((lon, lat))
    for name, points in sorted(by_class.items()):
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.scatter(xs, ys, s=9, color=class_color(name), label=name,
                   edgecolors="none", alpha=0.8)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title("grid classification")
    if by_class:
        ax.legend(markerscale=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
