#!/usr/bin/env python3
"""Build the fixture the explorer end-to-end test serves.

Writes into the given directory: a small planted terrain, a briefly trained
checkpoint, an exactly-100-point index whose first entry is a planted peak,
a fitted peak probe, the service config, a hillshade basemap, and
points.json describing what the test should click.

Usage: python3 prepare.py OUT_DIR [PORT]
"""

import json
import shutil
import sys
from pathlib import Path

from topoembed.baselines import encoder_handle
from topoembed.evaluation import build_embedding_index, save_index, train_probe
from topoembed.geometry import ScaleSpec, sample_coords_in_polygon
from topoembed.geotiff import write_geotiff
from topoembed.models import save_checkpoint
from topoembed.reports import save_hillshade_png
from topoembed.synth import make_planted_terrain, planted_class_dataset
from topoembed.training import TrainConfig, train_model


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "e2e/fixture")
    port = int(sys.argv[2]) if len(sys.argv) > 2 else 8765
    out.mkdir(parents=True, exist_ok=True)

    planted = make_planted_terrain(seed=5, side_px=513, n_per_class=8,
                                   classes=("peak", "pit"))
    raster = planted.raster
    write_geotiff(out / "terrain.tif", raster)
    save_hillshade_png(raster, out / "basemap.png")
    shutil.copy(out / "basemap.png", Path(__file__).parent.parent / "basemap.png")

    region = raster.region(900.0)
    config = TrainConfig(locations=sample_coords_in_polygon(region, 48, seed=0),
                         scales=(30.0,), k=4, lambda_adv=0.0, max_steps=40,
                         seed=0)
    bundle, _ = train_model(config, raster)
    manifest = save_checkpoint(out / "model.pt", bundle)
    handle = encoder_handle(bundle.f)

    # exactly 100 indexed points; the planted structures come first so
    # points.json can direct the test at a peak that is certainly indexed
    coords = (planted.coords["peak"] + planted.coords["pit"]
              + sample_coords_in_polygon(region, 84, seed=9))
    assert len(coords) == 100
    index = build_embedding_index(coords, handle, raster,
                                  ScaleSpec.from_resolution(30.0),
                                  checkpoint_hash=str(manifest["checkpoint_hash"]))
    assert len(index) == 100
    save_index(index, out / "index")

    probe = train_probe(handle, planted_class_dataset(planted, "peak", 60, seed=3),
                        raster, ScaleSpec.from_resolution(30.0), seed=0)
    probes_dir = out / "probes"
    probes_dir.mkdir(exist_ok=True)
    probe.save(probes_dir / "peak.joblib")

    (out / "service.conf").write_text(
        f"checkpoint = {out.resolve() / 'model.pt'}\n"
        f"index = {out.resolve() / 'index'}\n"
        f"raster = {out.resolve() / 'terrain.tif'}\n"
        f"probes_dir = {probes_dir.resolve()}\n"
        f"host = 127.0.0.1\n"
        f"port = {port}\n"
        f"max_batch = 8\n"
        # below the full raster extent so the test can demo the 413 path
        f"area_cap_deg2 = 0.01\n",
        encoding="utf-8")

    bounds = raster.bounds
    (out / "points.json").write_text(json.dumps({
        "indexed_peak": {"lon": coords[0].lon, "lat": coords[0].lat},
        "n_index": len(index),
        "bounds": {"min_lon": bounds[0], "min_lat": bounds[1],
                   "max_lon": bounds[2], "max_lat": bounds[3]},
    }, indent=2), encoding="utf-8")
    print(f"fixture ready in {out} (service port {port})")


if __name__ == "__main__":
    main()
