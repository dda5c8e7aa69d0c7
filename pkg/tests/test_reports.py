import csv

import numpy as np
import pytest

from topoembed.evaluation import ProbeResult, ScaleScanResult
from topoembed.reports import (
    class_color,
    hillshade,
    probe_results_csv,
    probe_results_markdown,
    save_grid_map,
    save_hillshade_png,
    save_loss_curves,
    save_scale_scan_plot,
)
from topoembed.synth import synth_fractal_raster
from topoembed.training import StepRecord, TrainReport

PNG_MAGIC = b"\x89PNG"


def _results():
    return [
        ProbeResult("peak", "enc-k4", 0.931, 0.009, 1000, 200, 10),
        ProbeResult("peak", "enc-k1", 0.905, 0.012, 1000, 200, 10),
        ProbeResult("river", "enc-k4", 0.801, 0.020, 1000, 200, 10),
    ]


class TestColors:
    def test_known_classes(self):
        assert class_color("peak") == "blue"
        assert class_color("saddle") == "green"
        assert class_color("cliff") == "red"
        assert class_color("river") == "yellow"

    def test_unknown_class_stable(self):
        a = class_color("smallpeak")
        assert a == class_color("smallpeak")
        assert a not in ("blue", "green", "red", "yellow")


class TestTables:
    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "probes.csv"
        probe_results_csv(_results(), path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert rows[0]["class"] == "peak"
        assert float(rows[0]["mean_accuracy"]) == 0.931
        assert rows[2]["model"] == "enc-k4"

    def test_markdown_layout(self):
        table = probe_results_markdown(_results())
        lines = table.strip().splitlines()
        assert lines[0] == "| class | enc-k1 | enc-k4 |"
        assert lines[2].startswith("| peak | 90.5 ± 1.2 | 93.1 ± 0.9 |")
        assert "| river | — | 80.1 ± 2.0 |" in table


class TestFigures:
    def test_scale_scan_plot(self, tmp_path):
        res = ScaleScanResult(radii_m=[120.0, 240.0], resolutions=[15.0, 30.0],
                              mean_accuracy=[0.8, 0.9],
                              std_accuracy=[0.02, 0.01],
                              seed_accuracies=np.array([[0.8], [0.9]]),
                              seeds=[0], best_resolution=30.0)
        path = tmp_path / "scan.png"
        save_scale_scan_plot(res, path)
        assert path.read_bytes()[:4] == PNG_MAGIC

    def test_loss_curves_plain_and_adversarial(self, tmp_path):
        plain = TrainReport(records=[StepRecord(i, 30.0, 1.0 / (i + 1), None,
                                                None) for i in range(5)],
                            wall_clock_s=1.0, converged=False,
                            checkpoint_path=None)
        adv = TrainReport(records=[StepRecord(i, 30.0, 1.0 / (i + 1), 0.7, 1.4)
                                   for i in range(5)],
                          wall_clock_s=1.0, converged=False,
                          checkpoint_path=None)
        a, b = tmp_path / "plain.png", tmp_path / "adv.png"
        save_loss_curves(plain, a)
        save_loss_curves(adv, b)
        assert a.read_bytes()[:4] == PNG_MAGIC
        assert b.read_bytes()[:4] == PNG_MAGIC

    def test_hillshade_range_and_shape(self):
        raster = synth_fractal_raster(seed=3, side_px=65, roughness=0.5,
                                      base_resolution=30.0)
        shade = hillshade(raster)
        assert shade.shape == raster.values.shape
        assert shade.min() >= 0.0
        assert shade.max() <= 1.0

    def test_hillshade_png(self, tmp_path):
        raster = synth_fractal_raster(seed=3, side_px=65, roughness=0.5,
                                      base_resolution=30.0)
        path = tmp_path / "shade.png"
        save_hillshade_png(raster, path)
        assert path.read_bytes()[:4] == PNG_MAGIC

    def test_grid_map_with_and_without_raster(self, tmp_path):
        raster = synth_fractal_raster(seed=3, side_px=65, roughness=0.5,
                                      base_resolution=30.0)
        min_lon, min_lat, max_lon, max_lat = raster.bounds
        lon = (min_lon + max_lon) / 2
        lat = (min_lat + max_lat) / 2
        fc = {"type": "FeatureCollection", "features": [
            {"type": "Feature",
             "geometry": {"type": "Point", "coordinates": [lon, lat]},
             "properties": {"class": "peak", "scale": 30.0, "score": 0.9}},
            {"type": "Feature",
             "geometry": {"type": "Point", "coordinates": [lon, lat]},
             "properties": {"class": "river", "scale": 30.0, "score": 0.7}},
        ]}
        a, b = tmp_path / "map.png", tmp_path / "map_plain.png"
        save_grid_map(fc, a, raster=raster)
        save_grid_map({"type": "FeatureCollection", "features": []}, b)
        assert a.read_bytes()[:4] == PNG_MAGIC
        assert b.read_bytes()[:4] == PNG_MAGIC
