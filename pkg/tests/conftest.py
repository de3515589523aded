import numpy as np
import pytest

from oilspill.cubeio import ScalarField
from oilspill.scenegen import SceneSpec, SlickBlob, default_scene_spec


def field(values) -> ScalarField:
    return ScalarField(np.asarray(values, dtype=np.float64))


@pytest.fixture
def small_scene_spec() -> SceneSpec:
    """Desk-sized scene for fast pipeline-level tests."""
    return default_scene_spec(
        width=48,
        height=48,
        band_count=16,
        severe_band_count=3,
        oil_fraction=0.12,
        blob_count=2,
    )


def half_plane_blob(width: int, height: int) -> SlickBlob:
    """Huge-radius blob whose boundary approximates the line x = width / 2."""
    big = 1.0e9
    return SlickBlob(center_x=width / 2.0 - big, center_y=height / 2.0,
                     radius=big, softness=1.0)
