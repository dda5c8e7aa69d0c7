import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from topoembed.cli import main
from topoembed.geotiff import write_geotiff
from topoembed.labels import save_coords_csv
from topoembed.synth import make_planted_terrain, planted_class_dataset


@pytest.fixture(scope="module")
def art(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    planted = make_planted_terrain(seed=5, side_px=513, n_per_class=8,
                                   classes=("peak", "pit"))
    dtm = root / "terrain.tif"
    write_geotiff(dtm, planted.raster)
    ds = planted_class_dataset(planted, "peak", 120, seed=3)
    class_csv = root / "peak.csv"
    save_coords_csv(class_csv, ds.coords(), ds.labels())
    coords_csv = root / "coords.csv"
    save_coords_csv(coords_csv,
                    planted.coords["peak"] + planted.coords["pit"])
    return {"root": root, "planted": planted, "dtm": str(dtm),
            "class_csv": str(class_csv), "coords_csv": str(coords_csv)}


def _run(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


class TestSynth:
    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.tif", tmp_path / "b.tif"
        r1 = _run("synth", "--seed", "1", "--side", "129", "--out", str(a))
        r2 = _run("synth", "--seed", "1", "--side", "129", "--out", str(b))
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert hashlib.sha256(a.read_bytes()).hexdigest() == \
            hashlib.sha256(b.read_bytes()).hexdigest()
        manifest = json.loads((tmp_path / "a.tif.run.json").read_text())
        assert manifest["subcommand"] == "synth"
        assert manifest["config"]["seed"] == 1

    def test_bad_side_exits_2(self, tmp_path):
        r = _run("synth", "--side", "100", "--out", str(tmp_path / "t.tif"))
        assert r.exit_code == 2


class TestTrain:
    def test_small_run_writes_artifacts(self, art):
        out = art["root"] / "m1.pt"
        r = _run("train", "--dtm", art["dtm"], "--scales", "30", "--k", "1",
                 "--steps", "4", "--n-locations", "16", "--batch", "8",
                 "--out", str(out))
        assert r.exit_code == 0, r.output
        assert out.exists()
        assert (art["root"] / "m1.pt.json").exists()
        assert (art["root"] / "m1.train.csv").exists()
        assert (art["root"] / "m1.loss.png").exists()
        run = json.loads((art["root"] / "m1.pt.run.json").read_text())
        assert run["config"]["lambda_rec"] == 1.0
        assert run["config"]["lambda_adv"] == 0.0
        assert art["dtm"] in run["input_hashes"]

    def test_adv_flag_defaults(self, art):
        out = art["root"] / "madv.pt"
        r = _run("train", "--dtm", art["dtm"], "--scales", "30", "--k", "4",
                 "--adv", "--steps", "2", "--n-locations", "16",
                 "--batch", "8", "--out", str(out))
        assert r.exit_code == 0, r.output
        run = json.loads((art["root"] / "madv.pt.run.json").read_text())
        assert run["config"]["lambda_rec"] == 100.0
        assert run["config"]["lambda_adv"] == 1.0

    def test_adv_with_k1_exits_2(self, art, tmp_path):
        r = _run("train", "--dtm", art["dtm"], "--k", "1", "--adv",
                 "--steps", "2", "--out", str(tmp_path / "x.pt"))
        assert r.exit_code == 2


class TestScaleScan:
    def test_single_radius_echo(self, art, tmp_path):
        out = tmp_path / "scan.csv"
        r = _run("scale-scan", "--class-csv", art["class_csv"], "--dtm",
                 art["dtm"], "--radii", "240", "--n", "40", "--seeds", "1",
                 "--out", str(out))
        assert r.exit_code == 0, r.output
        assert "best_resolution=30" in r.output
        assert out.exists()
        assert out.with_suffix(".png").exists()

    def test_missing_csv_exits_2(self, art, tmp_path):
        r = _run("scale-scan", "--class-csv", str(tmp_path / "nope.csv"),
                 "--dtm", art["dtm"], "--out", str(tmp_path / "s.csv"))
        assert r.exit_code == 2


class TestEval:
    def test_id_baseline(self, art, tmp_path):
        out = tmp_path / "probe.csv"
        r = _run("eval", "--model", "id", "--class-csv", art["class_csv"],
                 "--dtm", art["dtm"], "--scale", "30", "--n-train", "60",
                 "--n-test", "20", "--seeds", "2", "--out", str(out))
        assert r.exit_code == 0, r.output
        assert "accuracy=" in r.output
        assert "| class |" in r.output
        assert out.exists()
        assert out.with_suffix(".md").exists()

    def test_capacity_shortfall_exits_3(self, art, tmp_path):
        r = _run("eval", "--model", "id", "--class-csv", art["class_csv"],
                 "--dtm", art["dtm"], "--n-train", "1000", "--n-test", "200",
                 "--out", str(tmp_path / "p.csv"))
        assert r.exit_code == 3
        assert "short by" in r.output


class TestProbesAndGrid:
    def test_fit_probe_then_grid_classify(self, art, tmp_path):
        probe_path = tmp_path / "probes" / "peak.joblib"
        r = _run("fit-probe", "--model", "id", "--class-csv",
                 art["class_csv"], "--dtm", art["dtm"], "--scale", "30",
                 "--out", str(probe_path))
        assert r.exit_code == 0, r.output
        assert probe_path.exists()

        region = art["planted"].raster.region(3000.0)
        a, b, c, d = region.bounds
        out = tmp_path / "map.geojson"
        r = _run("grid-classify", "--model", "id", "--probes",
                 str(tmp_path / "probes"), "--dtm", art["dtm"], "--bbox",
                 f"{a},{b},{c},{d}", "--scales", "30", "--out", str(out))
        assert r.exit_code == 0, r.output
        fc = json.loads(out.read_text())
        assert fc["type"] == "FeatureCollection"
        assert out.with_suffix(".png").exists()

    def test_bbox_outside_raster_exits_3(self, art, tmp_path):
        probe_path = tmp_path / "probes" / "peak.joblib"
        _run("fit-probe", "--model", "id", "--class-csv", art["class_csv"],
             "--dtm", art["dtm"], "--out", str(probe_path))
        r = _run("grid-classify", "--model", "id", "--probes",
                 str(tmp_path / "probes"), "--dtm", art["dtm"], "--bbox",
                 "1,1,1.01,1.01", "--scales", "30",
                 "--out", str(tmp_path / "m.geojson"))
        assert r.exit_code == 3


class TestIndexRetrieve:
    def test_roundtrip(self, art, tmp_path):
        idx_dir = tmp_path / "idx"
        r = _run("index", "--model", "id", "--coords-csv", art["coords_csv"],
                 "--dtm", art["dtm"], "--scale", "30", "--out", str(idx_dir))
        assert r.exit_code == 0, r.output
        assert (idx_dir / "vectors.f64").exists()
        assert (idx_dir / "coords.csv").exists()
        assert (idx_dir / "manifest.json").exists()

        c = art["planted"].coords["peak"][0]
        r = _run("retrieve", "--index", str(idx_dir), "--model", "id",
                 "--dtm", art["dtm"], "--points", f"{c.lon},{c.lat}",
                 "--k", "3")
        assert r.exit_code == 0, r.output
        lines = r.output.strip().splitlines()
        assert lines[0] == "lon,lat,distance"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert float(first[0]) == c.lon
        assert float(first[1]) == c.lat
        assert float(first[2]) == 0.0

    def test_k_zero_empty(self, art, tmp_path):
        idx_dir = tmp_path / "idx"
        _run("index", "--model", "id", "--coords-csv", art["coords_csv"],
             "--dtm", art["dtm"], "--out", str(idx_dir))
        c = art["planted"].coords["peak"][0]
        r = _run("retrieve", "--index", str(idx_dir), "--model", "id",
                 "--dtm", art["dtm"], "--points", f"{c.lon},{c.lat}",
                 "--k", "0")
        assert r.exit_code == 0
        assert r.output.strip() == "lon,lat,distance"

    def test_k_too_large_exits_2(self, art, tmp_path):
        idx_dir = tmp_path / "idx"
        _run("index", "--model", "id", "--coords-csv", art["coords_csv"],
             "--dtm", art["dtm"], "--out", str(idx_dir))
        c = art["planted"].coords["peak"][0]
        r = _run("retrieve", "--index", str(idx_dir), "--model", "id",
                 "--dtm", art["dtm"], "--points", f"{c.lon},{c.lat}",
                 "--k", "999")
        assert r.exit_code == 2

    def test_bad_points_exits_2(self, art, tmp_path):
        idx_dir = tmp_path / "idx"
        _run("index", "--model", "id", "--coords-csv", art["coords_csv"],
             "--dtm", art["dtm"], "--out", str(idx_dir))
        r = _run("retrieve", "--index", str(idx_dir), "--model", "id",
                 "--dtm", art["dtm"], "--points", "10.0", "--k", "1")
        assert r.exit_code == 2


class TestHillshade:
    def test_writes_basemap_png(self, art, tmp_path):
        out = tmp_path / "shade.png"
        r = _run("hillshade", "--dtm", art["dtm"], "--out", str(out))
        assert r.exit_code == 0, r.output
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert (tmp_path / "shade.png.run.json").exists()
        a, b, c, d = art["planted"].raster.bounds
        assert f"{a:.6f},{b:.6f},{c:.6f},{d:.6f}" in r.output


class TestReproDesk:
    def test_quick_end_to_end(self, tmp_path):
        out = tmp_path / "rd"
        r = _run("repro-desk", "--out-dir", str(out), "--seed", "0",
                 "--steps", "4", "--n", "100", "--seeds", "1")
        assert r.exit_code == 0, r.output
        assert (out / "summary.md").exists()
        assert (out / "terrain.tif").exists()
        assert (out / "model-k1.pt").exists()
        assert (out / "model-k4.pt").exists()
        assert (out / "scale_scan.csv").exists()
        assert (out / "scale_scan.png").exists()
        assert (out / "probe_accuracy.csv").exists()
        assert (out / "index" / "vectors.f64").exists()
        retrieve = (out / "retrieve.csv").read_text().strip().splitlines()
        assert retrieve[0] == "lon,lat,distance"
        assert float(retrieve[1].split(",")[2]) == 0.0
        summary = (out / "summary.md").read_text()
        assert "| class |" in summary
        assert "best_resolution" in summary
