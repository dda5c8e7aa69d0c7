"""Minimal single-band GeoTIFF reader/writer (EPSG:4326, north-up).

Backed by tifffile plus the three standard GeoTIFF tags (ModelPixelScale,
ModelTiepoint, GeoKeyDirectory) and GDAL's nodata tag, which is the profile
both the synthetic export and real DTM tiles share. No compression, so
identical rasters produce identical files.
"""

from __future__ import annotations

import numpy as np
import tifffile

from .errors import DomainError
from .geometry import M_PER_DEG
from .raster import ElevationRaster, GeoTransform

_TAG_MODEL_PIXEL_SCALE = 33550
_TAG_MODEL_TIEPOINT = 33922
_TAG_GEO_KEY_DIRECTORY = 34735
_TAG_GDAL_NODATA = 42113

# GTModelType=Geographic, GTRasterType=PixelIsArea, GeographicType=EPSG:4326
_GEO_KEYS = (1, 1, 0, 3,
             1024, 0, 1, 2,
             1025, 0, 1, 1,
             2048, 0, 1, 4326)


def write_geotiff(path, raster: ElevationRaster, dtype=np.float64) -> None:
    t = raster.transform
    extratags = [
        (_TAG_MODEL_PIXEL_SCALE, "d", 3, (t.px_deg_lon, t.px_deg_lat, 0.0)),
        (_TAG_MODEL_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, t.ul_lon, t.ul_lat, 0.0)),
        (_TAG_GEO_KEY_DIRECTORY, "H", len(_GEO_KEYS), _GEO_KEYS),
    ]
    if raster.nodata is not None:
        nd = repr(float(raster.nodata))
        extratags.append((_TAG_GDAL_NODATA, "s", len(nd), nd))
    tifffile.imwrite(
        str(path),
        raster.values.astype(dtype),
        photometric="minisblack",
        extratags=extratags,
    )


def read_geotiff(path) -> ElevationRaster:
    with tifffile.TiffFile(str(path)) as tif:
        page = tif.pages[0]
        values = page.asarray()
        if values.ndim != 2:
            raise DomainError(f"expected single-band raster, got shape {values.shape}")
        tags = page.tags
        try:
            scale = tags[_TAG_MODEL_PIXEL_SCALE].value
            tie = tags[_TAG_MODEL_TIEPOINT].value
        except KeyError as e:
            raise DomainError(f"{path}: missing GeoTIFF georeferencing tags") from e
        if tie[0] != 0 or tie[1] != 0:
            raise DomainError("only (0,0)-anchored tiepoints are supported")
        transform = GeoTransform(
            ul_lon=float(tie[3]),
            ul_lat=float(tie[4]),
            px_deg_lon=float(scale[0]),
            px_deg_lat=float(scale[1]),
        )
        nodata = None
        if _TAG_GDAL_NODATA in tags:
            nodata = float(str(tags[_TAG_GDAL_NODATA].value).strip("\x00 "))
    # Nominal meters/pixel from the latitude pixel size.
    source_resolution = transform.px_deg_lat * M_PER_DEG
    return ElevationRaster(values, transform, nodata=nodata,
                           source_resolution=source_resolution)
