import numpy as np
import pytest

from topoembed.geometry import GeoCoordinate
from topoembed.synth import synth_fractal_raster


@pytest.fixture(scope="session")
def fractal_raster():
    """Small deterministic terrain shared by read-only tests."""
    return synth_fractal_raster(seed=7, side_px=257, roughness=0.55,
                                base_resolution=30.0)


@pytest.fixture(scope="session")
def raster_center(fractal_raster):
    return fractal_raster.center
