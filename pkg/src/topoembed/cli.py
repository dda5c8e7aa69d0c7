"""Command-line entry point: every pipeline stage as a subcommand."""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click

from . import evaluation, reports
from .baselines import encoder_handle, id_handle, load_cnn_checkpoint
from .config import RunManifest, load_config, manifest_for
from .errors import (
    BoundaryError,
    CapacityError,
    ContractError,
    DataQualityError,
    DomainError,
    EmptyClassError,
)
from .evaluation import (
    FittedProbe,
    build_embedding_index,
    geojson_dumps,
    grid_classify,
    load_index,
    probe_classification,
    save_index,
    scale_scan,
    train_probe,
)
from .geometry import AOIPolygon, GeoCoordinate, ScaleSpec, sample_coords_in_polygon
from .geotiff import read_geotiff, write_geotiff
from .labels import ClassTag, LabeledCoordSet, load_coords_csv, save_coords_csv
from .models import load_checkpoint, save_checkpoint
from .synth import make_planted_terrain, planted_class_dataset, synth_fractal_raster
from .training import TrainConfig, train_model

logger = logging.getLogger(__name__)

EXIT_CONTRACT = 2
EXIT_CAPACITY = 3


def _mapped_errors(fn):
    """Uniform exit codes: 2 contract/usage, 3 capacity/boundary, 1 the rest."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DomainError, ContractError, DataQualityError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_CONTRACT)
        except (CapacityError, EmptyClassError, BoundaryError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_CAPACITY)

    return wrapper


def _floats(_ctx, _param, value):
    if value is None:
        return None
    try:
        return [float(p) for p in str(value).split(",") if p.strip()]
    except ValueError:
        raise click.UsageError(f"expected comma-separated numbers, got {value!r}")


def _points(_ctx, _param, value):
    if not value:
        return []
    out = []
    for part in str(value).split(";"):
        bits = part.split(",")
        if len(bits) != 2:
            raise click.UsageError(
                f"points must be lon,lat;lon,lat..., got {value!r}")
        try:
            out.append(GeoCoordinate(float(bits[0]), float(bits[1])))
        except ValueError:
            raise click.UsageError(f"non-numeric point in {value!r}")
    return out


def _labeled_set_from_csv(path, raster, name="csv") -> LabeledCoordSet:
    rows = load_coords_csv(path)
    if any(lbl is None for _, lbl in rows):
        raise DomainError(f"{path}: every row needs a 0/1 label column")
    return LabeledCoordSet(rows, ClassTag(name), raster.region(0.0), seed=0)


def _load_handle(spec_text: str):
    """'id', or a checkpoint path (terrain-embedding or supervised CNN)."""
    if spec_text == "id":
        return id_handle()
    path = Path(spec_text)
    if not path.exists():
        raise DomainError(f"model {spec_text!r} is neither 'id' nor a file")
    from .models import load_manifest

    kind = load_manifest(path).get("kind")
    if kind == "supervised-cnn":
        return load_cnn_checkpoint(path)
    return encoder_handle(load_checkpoint(path).f)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose: bool):
    """Terrain-embedding toolkit: train, evaluate and serve patch embeddings."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--side", type=int, default=257, show_default=True,
              help="grid side in pixels, must be 2^m + 1")
@click.option("--roughness", type=float, default=0.55, show_default=True)
@click.option("--resolution", type=float, default=30.0, show_default=True,
              help="nominal meters/pixel")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_mapped_errors
def synth(seed, side, roughness, resolution, out):
    """Generate a fractal synthetic terrain GeoTIFF."""
    raster = synth_fractal_raster(seed=seed, side_px=side, roughness=roughness,
                                  base_resolution=resolution)
    write_geotiff(out, raster)
    manifest = RunManifest("synth", {"seed": seed, "side": side,
                                     "roughness": roughness,
                                     "resolution": resolution,
                                     "out": str(out)}, seed=seed)
    manifest.outputs.append(str(out))
    manifest.write(manifest_for(out))
    click.echo(f"wrote {out} ({side}x{side})")


@main.command()
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True, help="elevation GeoTIFF")
@click.option("--train-polygon", type=str, default=None,
              help="WKT polygon to sample training locations from "
                   "(default: raster footprint with 1 km inset)")
@click.option("--scales", default="30", callback=_floats, show_default=True,
              help="comma-separated patch resolutions (m/px)")
@click.option("--k", type=int, default=4, show_default=True,
              help="target grid is 16k x 16k")
@click.option("--adv", is_flag=True,
              help="adversarial loss on (lambda_rec=100, lambda_adv=1)")
@click.option("--lambda-rec", type=float, default=None,
              help="override reconstruction weight")
@click.option("--lambda-adv", type=float, default=None,
              help="override adversarial weight")
@click.option("--lr-g", type=float, default=0.0002, show_default=True)
@click.option("--lr-d", type=float, default=0.0016, show_default=True)
@click.option("--steps", type=int, default=1000, show_default=True)
@click.option("--batch", type=int, default=16, show_default=True)
@click.option("--n-locations", type=int, default=256, show_default=True)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]),
              default="adam", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="checkpoint path")
@_mapped_errors
def train(dtm, train_polygon, scales, k, adv, lambda_rec, lambda_adv, lr_g,
          lr_d, steps, batch, n_locations, optimizer, seed, out):
    """Train the encoder/decoder (optionally adversarial) on a DTM."""
    raster = read_geotiff(dtm)
    polygon = (AOIPolygon.from_wkt(train_polygon) if train_polygon
               else raster.region(1000.0))
    locations = sample_coords_in_polygon(polygon, n_locations, seed=seed)
    l_rec = lambda_rec if lambda_rec is not None else (100.0 if adv else 1.0)
    l_adv = lambda_adv if lambda_adv is not None else (1.0 if adv else 0.0)
    config = TrainConfig(locations=locations, scales=tuple(scales), k=k,
                         lr_generator=lr_g, lr_discriminator=lr_d,
                         lambda_rec=l_rec, lambda_adv=l_adv,
                         batch_size=batch, max_steps=steps, seed=seed,
                         optimizer=optimizer)
    bundle, report = train_model(config, raster)
    manifest = save_checkpoint(out, bundle)
    report_csv = Path(out).with_suffix(".train.csv")
    report.to_csv(report_csv)
    loss_png = Path(out).with_suffix(".loss.png")
    reports.save_loss_curves(report, loss_png)

    run = RunManifest("train", {
        "dtm": str(dtm), "train_polygon": polygon.to_wkt(),
        "scales": scales, "k": k, "lambda_rec": l_rec, "lambda_adv": l_adv,
        "lr_g": lr_g, "lr_d": lr_d, "steps": steps, "batch": batch,
        "n_locations": n_locations, "optimizer": optimizer,
        "out": str(out)}, seed=seed)
    run.add_input(dtm)
    run.outputs += [str(out), str(report_csv), str(loss_png)]
    run.write(manifest_for(out))
    click.echo(f"trained {len(report.records)} steps "
               f"(converged={report.converged}), "
               f"final l_p={report.records[-1].l_p:.4f}, "
               f"checkpoint {out} [{manifest['checkpoint_hash'][:12]}]")


@main.command("scale-scan")
@click.option("--class-csv", type=click.Path(exists=True, dir_okay=False),
              required=True, help="lon,lat,label CSV")
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--radii", default="60,120,240,480,960", callback=_floats,
              show_default=True, help="patch radii in meters")
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="results CSV")
@_mapped_errors
def scale_scan_cmd(class_csv, dtm, radii, n, seeds, jobs, seed, out):
    """Find the patch radius at which a class is most recognizable."""
    raster = read_geotiff(dtm)
    dataset = _labeled_set_from_csv(class_csv, raster)
    result = scale_scan(dataset, radii, raster, n=n, seeds=seeds,
                        base_seed=seed, jobs=jobs)
    result.to_csv(out)
    png = Path(out).with_suffix(".png")
    reports.save_scale_scan_plot(result, png)
    run = RunManifest("scale-scan", {
        "class_csv": str(class_csv), "dtm": str(dtm), "radii": radii,
        "n": n, "seeds": seeds, "out": str(out)}, seed=seed)
    run.add_input(class_csv)
    run.add_input(dtm)
    run.outputs += [str(out), str(png)]
    run.write(manifest_for(out))
    click.echo(f"best_resolution={result.best_resolution:g}")


@main.command("eval")
@click.option("--model", "model_spec", type=str, required=True,
              help="checkpoint path, or 'id' for the raw-pixel baseline")
@click.option("--class-csv", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--scale", type=float, default=30.0, show_default=True,
              help="patch resolution (m/px)")
@click.option("--n-train", type=int, default=1000, show_default=True)
@click.option("--n-test", type=int, default=200, show_default=True)
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--shuffle-labels", is_flag=True, help="chance-level control")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_mapped_errors
def eval_cmd(model_spec, class_csv, dtm, scale, n_train, n_test, seeds,
             shuffle_labels, seed, out):
    """Linear-probe accuracy of an embedding model on a labeled class."""
    raster = read_geotiff(dtm)
    handle = _load_handle(model_spec)
    dataset = _labeled_set_from_csv(class_csv, raster,
                                    name=Path(class_csv).stem)
    result = probe_classification(
        handle, dataset, raster, ScaleSpec.from_resolution(scale),
        n_train=n_train, n_test=n_test, seeds=seeds, base_seed=seed,
        shuffle_labels=shuffle_labels)
    reports.probe_results_csv([result], out)
    md = reports.probe_results_markdown([result])
    Path(out).with_suffix(".md").write_text(md)
    run = RunManifest("eval", {
        "model": model_spec, "class_csv": str(class_csv), "dtm": str(dtm),
        "scale": scale, "n_train": n_train, "n_test": n_test,
        "seeds": seeds, "shuffle_labels": shuffle_labels,
        "out": str(out)}, seed=seed)
    run.add_input(class_csv)
    run.add_input(dtm)
    run.outputs += [str(out), str(Path(out).with_suffix(".md"))]
    run.write(manifest_for(out))
    click.echo(md)
    click.echo(f"accuracy={result.mean_accuracy:.4f} "
               f"std={result.std_accuracy:.4f}")


@main.command("fit-probe")
@click.option("--model", "model_spec", type=str, required=True)
@click.option("--class-csv", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--scale", type=float, default=30.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help=".joblib probe path, named after the class")
@_mapped_errors
def fit_probe_cmd(model_spec, class_csv, dtm, scale, seed, out):
    """Fit a one-class probe on the whole CSV for serving and grid maps."""
    raster = read_geotiff(dtm)
    handle = _load_handle(model_spec)
    dataset = _labeled_set_from_csv(class_csv, raster,
                                    name=Path(class_csv).stem)
    probe = train_probe(handle, dataset, raster,
                        ScaleSpec.from_resolution(scale), seed=seed)
    probe.save(out)
    run = RunManifest("fit-probe", {
        "model": model_spec, "class_csv": str(class_csv), "dtm": str(dtm),
        "scale": scale, "out": str(out)}, seed=seed)
    run.add_input(class_csv)
    run.add_input(dtm)
    run.outputs.append(str(out))
    run.write(manifest_for(out))
    click.echo(f"probe for class {probe.class_name!r} at {scale:g} m/px -> {out}")


@main.command("index")
@click.option("--model", "model_spec", type=str, required=True)
@click.option("--coords-csv", type=click.Path(exists=True, dir_okay=False),
              required=True, help="lon,lat CSV of locations to index")
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--scale", type=float, default=30.0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="index directory")
@_mapped_errors
def index_cmd(model_spec, coords_csv, dtm, scale, out):
    """Embed coordinates and persist an exact nearest-neighbor index."""
    raster = read_geotiff(dtm)
    handle = _load_handle(model_spec)
    coords = [c for c, _ in load_coords_csv(coords_csv)]
    chash = ""
    if model_spec != "id":
        from .models import load_manifest

        chash = str(load_manifest(Path(model_spec)).get("checkpoint_hash", ""))
    index = build_embedding_index(coords, handle, raster,
                                  ScaleSpec.from_resolution(scale),
                                  checkpoint_hash=chash)
    save_index(index, out)
    run = RunManifest("index", {
        "model": model_spec, "coords_csv": str(coords_csv), "dtm": str(dtm),
        "scale": scale, "out": str(out)})
    run.add_input(coords_csv)
    run.add_input(dtm)
    run.outputs.append(str(out))
    run.write(Path(out) / "run.json")
    click.echo(f"indexed {len(index)} locations at {scale:g} m/px")


@main.command("retrieve")
@click.option("--index", "index_dir", type=click.Path(exists=True,
              file_okay=False), required=True)
@click.option("--model", "model_spec", type=str, required=True)
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--points", callback=_points, required=True,
              help="query coordinates lon,lat;lon,lat;...")
@click.option("--k", type=int, default=10, show_default=True)
@_mapped_errors
def retrieve_cmd(index_dir, model_spec, dtm, points, k):
    """Print the k nearest indexed locations to the query points."""
    index = load_index(index_dir)
    if k > len(index):
        raise click.UsageError(f"k={k} exceeds index size {len(index)}")
    raster = read_geotiff(dtm)
    handle = _load_handle(model_spec)
    ranked = evaluation.knn_retrieve(index, points, k, handle, raster)
    click.echo("lon,lat,distance")
    for coord, dist in ranked:
        click.echo(f"{coord.lon!r},{coord.lat!r},{dist!r}")


@main.command("grid-classify")
@click.option("--model", "model_spec", type=str, required=True)
@click.option("--probes", "probes_dir", type=click.Path(exists=True,
              file_okay=False), required=True,
              help="directory of fitted .joblib probes")
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--bbox", type=str, required=True,
              help="min_lon,min_lat,max_lon,max_lat")
@click.option("--scales", default="30", callback=_floats, show_default=True)
@click.option("--stride", type=float, default=None,
              help="lattice stride in meters (default: one patch radius)")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="GeoJSON path")
@_mapped_errors
def grid_classify_cmd(model_spec, probes_dir, dtm, bbox, scales, stride, out):
    """Classify a lattice over a bbox at multiple scales; write GeoJSON."""
    from .service import _bbox_polygon, _parse_bbox

    raster = read_geotiff(dtm)
    handle = _load_handle(model_spec)
    probes = [FittedProbe.load(p)
              for p in sorted(Path(probes_dir).glob("*.joblib"))]
    if not probes:
        raise DomainError(f"no .joblib probes in {probes_dir}")
    region = _bbox_polygon(_parse_bbox(bbox))
    collection = grid_classify(region, scales, handle, probes, raster,
                               stride_m=stride)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(geojson_dumps(collection))
    png = Path(out).with_suffix(".png")
    reports.save_grid_map(collection, png, raster=raster)
    run = RunManifest("grid-classify", {
        "model": model_spec, "probes": str(probes_dir), "dtm": str(dtm),
        "bbox": bbox, "scales": scales, "stride": stride, "out": str(out)})
    run.add_input(dtm)
    run.outputs += [str(out), str(png)]
    run.write(manifest_for(out))
    click.echo(f"{len(collection['features'])} positive points "
               f"across {len(scales)} scale(s)")


@main.command("hillshade")
@click.option("--dtm", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="PNG basemap path")
@_mapped_errors
def hillshade_cmd(dtm, out):
    """Render a static hillshade basemap PNG from a DTM (for the map UI)."""
    raster = read_geotiff(dtm)
    reports.save_hillshade_png(raster, out)
    run = RunManifest("hillshade", {"dtm": str(dtm), "out": str(out)})
    run.add_input(dtm)
    run.outputs.append(str(out))
    run.write(manifest_for(out))
    min_lon, min_lat, max_lon, max_lat = raster.bounds
    click.echo(f"wrote {out} covering "
               f"{min_lon:.6f},{min_lat:.6f},{max_lon:.6f},{max_lat:.6f}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True,
              dir_okay=False), required=True,
              help="key=value file with ServiceConfig fields")
@_mapped_errors
def serve_cmd(config_path):
    """Run the HTTP retrieval service."""
    from .service import ServiceConfig, run_service

    raw = load_config(config_path)
    known = {f for f in ServiceConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise DomainError(f"unknown config keys: {sorted(unknown)}")
    if "cors_origins" in raw and not isinstance(raw["cors_origins"], list):
        raw["cors_origins"] = [raw["cors_origins"]]
    config = ServiceConfig(**raw)
    run_service(config)


@main.command("repro-desk")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--steps", type=int, default=300, show_default=True,
              help="training steps per model")
@click.option("--n", type=int, default=400, show_default=True,
              help="probe dataset size")
@click.option("--seeds", type=int, default=5, show_default=True,
              help="experiment repetitions")
@_mapped_errors
def repro_desk(out_dir, seed, steps, n, seeds):
    """One-shot desk-scale reproduction: synthesize terrain with planted
    structures, train both fractal factors, then run every experiment."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: list[str] = []

    planted = make_planted_terrain(seed=seed, side_px=1025)
    dtm = out / "terrain.tif"
    write_geotiff(dtm, planted.raster)
    region = planted.raster.region(1100.0)
    summary.append(f"- terrain: {dtm} (1025x1025, planted classes: "
                   f"{', '.join(sorted(planted.coords))})")

    class_csvs = {}
    for name in sorted(planted.coords):
        ds = planted_class_dataset(planted, name, max(n, 100), seed=seed + 3)
        path = out / f"class_{name}.csv"
        save_coords_csv(path, ds.coords(), ds.labels())
        class_csvs[name] = path

    handles = {}
    for k in (1, 4):
        cfg = TrainConfig(
            locations=sample_coords_in_polygon(region, 256, seed=seed + 42),
            scales=(30.0,), k=k, lambda_adv=0.0, max_steps=steps,
            seed=seed)
        bundle, report = train_model(cfg, planted.raster)
        ckpt = out / f"model-k{k}.pt"
        save_checkpoint(ckpt, bundle)
        report.to_csv(out / f"model-k{k}.train.csv")
        reports.save_loss_curves(report, out / f"model-k{k}.loss.png")
        handles[f"terrain-embedding-k{k}"] = encoder_handle(bundle.f)
        summary.append(f"- model k={k}: final l_p="
                       f"{report.records[-1].l_p:.4f} ({ckpt})")

    scan_ds = planted_class_dataset(planted, "peak", max(n, 100),
                                    seed=seed + 3)
    scan = scale_scan(scan_ds, [60.0, 120.0, 240.0, 480.0, 960.0],
                      planted.raster, n=n, seeds=seeds, base_seed=seed)
    scan.to_csv(out / "scale_scan.csv")
    reports.save_scale_scan_plot(scan, out / "scale_scan.png")
    summary.append(f"- scale scan on peaks: best_resolution="
                   f"{scan.best_resolution:g} m/px")

    handles["id"] = id_handle()
    probe_rows = []
    for name, handle in sorted(handles.items()):
        for cls, csv_path in class_csvs.items():
            ds = _labeled_set_from_csv(csv_path, planted.raster, name=cls)
            res = probe_classification(
                handle, ds, planted.raster, ScaleSpec(240.0),
                n_train=min(1000, (len(ds) * 2) // 3 // 2 * 2),
                n_test=min(200, len(ds) // 6 // 2 * 2), seeds=seeds,
                base_seed=seed)
            res.model_kind = name
            probe_rows.append(res)
    reports.probe_results_csv(probe_rows, out / "probe_accuracy.csv")
    table = reports.probe_results_markdown(probe_rows)
    summary.append("\n## Probe accuracy (mean ± std, %)\n\n" + table)

    k4 = handles["terrain-embedding-k4"]
    index_coords = [c for cs in planted.coords.values() for c in cs]
    index_coords += sample_coords_in_polygon(region, 200, seed=seed + 9)
    index = build_embedding_index(index_coords, k4, planted.raster,
                                  ScaleSpec(240.0))
    save_index(index, out / "index")
    query = planted.coords["ridge"][0]
    ranked = evaluation.knn_retrieve(index, [query], 10, k4, planted.raster)
    with open(out / "retrieve.csv", "w") as fh:
        fh.write("lon,lat,distance\n")
        for coord, dist in ranked:
            fh.write(f"{coord.lon!r},{coord.lat!r},{dist!r}\n")
    summary.append(f"- index: {len(index)} locations; "
                   f"self-retrieval distance={ranked[0][1]:g}")

    (out / "summary.md").write_text(
        "# Desk-scale reproduction\n\n" + "\n".join(summary) + "\n")
    run = RunManifest("repro-desk", {"out_dir": str(out), "steps": steps,
                                     "n": n, "seeds": seeds}, seed=seed)
    run.outputs.append(str(out / "summary.md"))
    run.write(out / "summary.md.run.json")
    click.echo((out / "summary.md").read_text())


if __name__ == "__main__":
    main()
