"""Synthetic ocean scenes with planted oil slicks and per-band Gaussian noise.

These scenes make the pipeline testable at desk scale: the slick mask is known
exactly, the per-band noise levels are known exactly, and a chosen subset of
bands can be given severe noise so the band screen has something to find.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cubeio import HyperspectralCube
from .errors import InvalidSpec


@dataclass(frozen=True)
class SlickBlob:
    """Soft-edged disc: logistic falloff of width ``softness`` around ``radius``."""

    center_x: float
    center_y: float
    radius: float
    softness: float


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    band_count: int
    slick_blobs: tuple[SlickBlob, ...]
    sea_signature: np.ndarray      # per-band mean spectrum
    oil_offset: np.ndarray         # per-band additive offset inside the slick
    noise_sigma: np.ndarray        # per-band noise standard deviation
    severe_band_indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise InvalidSpec("scene must be at least 3x3 pixels")
        if self.band_count < 1:
            raise InvalidSpec("scene needs at least one band")
        for name in ("sea_signature", "oil_offset", "noise_sigma"):
            vec = getattr(self, name)
            if vec.shape != (self.band_count,):
                raise InvalidSpec(f"{name} must have length {self.band_count}")
        if np.any(self.noise_sigma < 0):
            raise InvalidSpec("noise_sigma entries must be non-negative")
        for idx in self.severe_band_indices:
            if not 0 <= idx < self.band_count:
                raise InvalidSpec(f"severe band index {idx} out of range")
        for blob in self.slick_blobs:
            if blob.radius <= 0 or blob.softness <= 0:
                raise InvalidSpec("blob radius and softness must be positive")


@dataclass(frozen=True)
class GroundTruth:
    """Reference slick mask: 1 = oil, 0 = seawater."""

    mask: np.ndarray

    @property
    def oil_fraction(self) -> float:
        return float(self.mask.mean())


def generate_scene(spec: SceneSpec, seed: int) -> tuple[HyperspectralCube, GroundTruth]:
    """Render the scene: sea spectrum, slick offset where masked, Gaussian noise.

    Deterministic for a fixed (spec, seed).  The mask is the union of the soft
    blob fields thresholded strictly above 0.5, so a pixel exactly on a blob
    boundary counts as seawater.
    """
    cols = np.arange(spec.width, dtype=np.float64)
    rows = np.arange(spec.height, dtype=np.float64)[:, None]

    soft = np.zeros((spec.height, spec.width))
    for blob in spec.slick_blobs:
        dist = np.hypot(cols - blob.center_x, rows - blob.center_y)
        soft = np.maximum(soft, _sigmoid((blob.radius - dist) / blob.softness))
    mask = soft > 0.5

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    noise = rng.standard_normal((spec.band_count, spec.height, spec.width))
    noise *= spec.noise_sigma[:, None, None]

    values = (
        spec.sea_signature[:, None, None]
        + mask[None, :, :] * spec.oil_offset[:, None, None]
        + noise
    )
    cube = HyperspectralCube(values=values)
    return cube, GroundTruth(mask=mask.astype(np.uint8))


def default_scene_spec(
    width: int = 256,
    height: int = 256,
    band_count: int = 100,
    severe_band_count: int = 20,
    oil_fraction: float = 0.10,
    noise_sigma: float = 0.02,
    oil_strength: float = 0.030,
    severe_noise_factor: float = 50.0,
    blob_count: int = 3,
) -> SceneSpec:
    """Reference synthetic scene used by the batch CLI and the test suite.

    The sea spectrum is a smooth curve, the slick offset varies smoothly
    across bands at roughly ``oil_strength`` amplitude, and
    ``severe_band_count`` bands spread across the range get their noise
    inflated by ``severe_noise_factor``.
    """
    if not 0 < oil_fraction < 1:
        raise InvalidSpec("oil_fraction must lie in (0, 1)")
    if severe_band_count >= band_count:
        raise InvalidSpec("severe_band_count must be smaller than band_count")
    if not 1 <= blob_count <= 4:
        raise InvalidSpec("blob_count must be between 1 and 4")

    x = np.linspace(0.0, 1.0, band_count)
    sea = 0.25 + 0.12 * np.sin(3.0 * np.pi * x) + 0.05 * x
    offset = oil_strength * (0.6 + 0.4 * np.cos(2.0 * np.pi * x))

    sigma = np.full(band_count, noise_sigma)
    if severe_band_count > 0:
        severe = np.unique(
            np.round(np.linspace(0, band_count - 1, severe_band_count)).astype(int)
        )
        sigma[severe] = noise_sigma * severe_noise_factor
        severe_indices = tuple(int(i) for i in severe)
    else:
        severe_indices = ()

    blobs = _blob_layout(width, height, oil_fraction, blob_count)
    return SceneSpec(
        width=width,
        height=height,
        band_count=band_count,
        slick_blobs=blobs,
        sea_signature=sea,
        oil_offset=offset,
        noise_sigma=sigma,
        severe_band_indices=severe_indices,
    )


def _blob_layout(width: int, height: int, oil_fraction: float, count: int) -> tuple[SlickBlob, ...]:
    # Fixed relative centers and radius ratios; radii scaled so the union of
    # discs covers oil_fraction of the scene (centers are spread far enough
    # apart that the discs stay disjoint for fractions up to ~0.25).
    centers = ((0.30, 0.34), (0.68, 0.62), (0.40, 0.80), (0.78, 0.22))[:count]
    ratios = np.array((1.0, 0.72, 0.45, 0.35)[:count])
    base = np.sqrt(oil_fraction * width * height / (np.pi * np.sum(ratios**2)))
    return tuple(
        SlickBlob(
            center_x=cx * width,
            center_y=cy * height,
            radius=float(base * r),
            softness=1.2,
        )
        for (cx, cy), r in zip(centers, ratios)
    )


def _sigmoid(t: np.ndarray) -> np.ndarray:
    # Stable logistic: exp is only ever taken of a non-positive argument.
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out
