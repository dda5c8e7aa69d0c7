"""Read-only HTTP service over a trained checkpoint and embedding index."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .baselines import EmbeddingModelHandle, encoder_handle
from .errors import BoundaryError, DataQualityError, DomainError
from .evaluation import (
    EmbeddingIndex,
    FittedProbe,
    geojson_dumps,
    grid_classify,
    knn_retrieve,
    load_index,
)
from .geometry import AOIPolygon, GeoCoordinate, ScaleSpec
from .geotiff import read_geotiff
from .models import load_checkpoint, load_manifest
from .raster import ElevationRaster, extract_patch, normalize_patch

logger = logging.getLogger(__name__)

DEFAULT_AREA_CAP_DEG2 = 0.25


@dataclass
class ServiceConfig:
    checkpoint: str
    index: str
    raster: str
    host: str = "127.0.0.1"
    port: int = 8000
    max_batch: int = 64
    cors_origins: list[str] = field(default_factory=list)
    probes_dir: str | None = None
    area_cap_deg2: float = DEFAULT_AREA_CAP_DEG2

    def __post_init__(self):
        if not (0 < self.port < 65536):
            raise DomainError(f"invalid port {self.port}")
        if self.max_batch < 1:
            raise DomainError("max_batch must be >= 1")
        if self.area_cap_deg2 <= 0:
            raise DomainError("area_cap_deg2 must be positive")


@dataclass
class ServiceState:
    """Immutable artifacts the endpoints read; loaded once."""

    handle: EmbeddingModelHandle
    index: EmbeddingIndex
    raster: ElevationRaster
    probes: dict[str, FittedProbe]
    checkpoint_hash: str


def load_state(config: ServiceConfig) -> ServiceState:
    for label, path in (("checkpoint", config.checkpoint),
                        ("index", config.index), ("raster", config.raster)):
        if not Path(path).exists():
            raise DomainError(f"{label} path {path} does not exist")
    bundle = load_checkpoint(config.checkpoint)
    manifest = load_manifest(Path(config.checkpoint))
    index = load_index(config.index)
    raster = read_geotiff(config.raster)
    probes: dict[str, FittedProbe] = {}
    if config.probes_dir:
        for path in sorted(Path(config.probes_dir).glob("*.joblib")):
            probe = FittedProbe.load(path)
            probes[probe.class_name] = probe
    logger.info("loaded checkpoint %s, index of %d, %d probes",
                config.checkpoint, len(index), len(probes))
    return ServiceState(handle=encoder_handle(bundle.f), index=index,
                        raster=raster, probes=probes,
                        checkpoint_hash=str(manifest["checkpoint_hash"]))


class EmbedRequest(BaseModel):
    lon: float = Field(ge=-180.0, le=180.0)
    lat: float = Field(ge=-90.0, le=90.0)
    scale_m_per_px: float = Field(gt=0.0)


class PointBody(BaseModel):
    lon: float = Field(ge=-180.0, le=180.0)
    lat: float = Field(ge=-90.0, le=90.0)


class RetrieveRequest(BaseModel):
    points: list[PointBody] = Field(min_length=1)
    k: int = Field(ge=0)


def _parse_bbox(bbox: str) -> tuple[float, float, float, float]:
    parts = bbox.split(",")
    if len(parts) != 4:
        raise DomainError(f"bbox must be min_lon,min_lat,max_lon,max_lat, "
                          f"got {bbox!r}")
    try:
        a, b, c, d = (float(p) for p in parts)
    except ValueError:
        raise DomainError(f"bbox has non-numeric parts: {bbox!r}")
    if a >= c or b >= d:
        raise DomainError(f"bbox is empty: {bbox!r}")
    return a, b, c, d


def _bbox_polygon(bounds: tuple[float, float, float, float]) -> AOIPolygon:
    a, b, c, d = bounds
    return AOIPolygon.from_wkt(
        f"POLYGON (({a} {b}, {a} {d}, {c} {d}, {c} {b}, {a} {b}))")


def create_app(config: ServiceConfig, eager: bool = True) -> FastAPI:
    """Build the service; with eager=False artifacts load when
    `load_into_app` is called, and every endpoint answers 503 until then."""
    app = FastAPI(title="terrain-embedding service")
    app.state.config = config
    app.state.service = load_state(config) if eager else None

    if config.cors_origins:
        app.add_middleware(CORSMiddleware, allow_origins=config.cors_origins,
                           allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"detail": exc.errors()})

    def _state() -> ServiceState | None:
        return app.state.service

    def _unavailable() -> JSONResponse:
        return JSONResponse(status_code=503,
                            content={"status": "loading"})

    @app.get("/health")
    async def health():
        state = _state()
        if state is None:
            return _unavailable()
        return {"status": "ok", "checkpoint_hash": state.checkpoint_hash,
                "index_size": len(state.index)}

    @app.get("/metadata")
    async def metadata():
        state = _state()
        if state is None:
            return _unavailable()
        min_lon, min_lat, max_lon, max_lat = state.raster.bounds
        return {"bounds": {"min_lon": min_lon, "min_lat": min_lat,
                           "max_lon": max_lon, "max_lat": max_lat},
                "classes": sorted(state.probes),
                "index_scale_m_per_px": state.index.scale_resolution,
                "max_batch": config.max_batch}

    @app.post("/embed")
    async def embed(body: EmbedRequest):
        state = _state()
        if state is None:
            return _unavailable()
        scale = ScaleSpec.from_resolution(body.scale_m_per_px)
        try:
            patch = normalize_patch(
                extract_patch(state.raster, GeoCoordinate(body.lon, body.lat),
                              scale))
        except (BoundaryError, DataQualityError) as e:
            return JSONResponse(status_code=422, content={"detail": str(e)})
        vector = state.handle.embed(patch)
        return {"embedding": [float(v) for v in vector]}

    @app.post("/retrieve")
    async def retrieve(body: RetrieveRequest):
        state = _state()
        if state is None:
            return _unavailable()
        if len(body.points) > config.max_batch:
            return JSONResponse(
                status_code=400,
                content={"detail": f"at most {config.max_batch} points per "
                                   f"request, got {len(body.points)}"})
        if body.k > len(state.index):
            return JSONResponse(
                status_code=422,
                content={"detail": f"k={body.k} exceeds index size "
                                   f"{len(state.index)}"})
        coords = [GeoCoordinate(p.lon, p.lat) for p in body.points]
        try:
            ranked = knn_retrieve(state.index, coords, body.k, state.handle,
                                  state.raster)
        except BoundaryError as e:
            return JSONResponse(status_code=422, content={"detail": str(e)})
        return {"neighbors": [{"lon": c.lon, "lat": c.lat,
                               "distance": float(d)} for c, d in ranked]}

    @app.get("/grid-classify")
    async def grid_classify_endpoint(
            bbox: str = Query(...),
            scale: float = Query(..., gt=0.0),
            class_name: str = Query(..., alias="class"),
            stride_m: float | None = Query(None, gt=0.0)):
        state = _state()
        if state is None:
            return _unavailable()
        try:
            bounds = _parse_bbox(bbox)
        except DomainError as e:
            return JSONResponse(status_code=400, content={"detail": str(e)})
        if class_name not in state.probes:
            return JSONResponse(
                status_code=422,
                content={"detail": f"no probe for class {class_name!r}; "
                                   f"loaded: {sorted(state.probes)}"})
        area = (bounds[2] - bounds[0]) * (bounds[3] - bounds[1])
        if area > config.area_cap_deg2:
            return JSONResponse(
                status_code=413,
                content={"detail": f"bbox area {area:.4f} deg^2 exceeds cap "
                                   f"{config.area_cap_deg2} deg^2"})
        try:
            collection = grid_classify(_bbox_polygon(bounds), [scale],
                                       state.handle,
                                       [state.probes[class_name]],
                                       state.raster, stride_m=stride_m)
        except BoundaryError as e:
            return JSONResponse(status_code=422, content={"detail": str(e)})
        return Response(content=geojson_dumps(collection),
                        media_type="application/geo+json")

    return app


def load_into_app(app: FastAPI) -> None:
    app.state.service = load_state(app.state.config)


def run_service(config: ServiceConfig) -> None:  # pragma: no cover - wraps uvicorn
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)
