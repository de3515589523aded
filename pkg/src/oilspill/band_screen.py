"""Per-band noise estimation and screening of severely noisy bands.

The estimator convolves each band with the 3x3 Laplacian-difference mask

    [[ 1, -2,  1],
     [-2,  4, -2],
     [ 1, -2,  1]]

and averages absolute responses over interior pixels only (valid convolution,
no padding).  Under an additive white Gaussian noise model the mask response
has standard deviation 6*sigma, and E|response| = 6*sigma*sqrt(2/pi), so

    sigma_hat = sqrt(pi/2) * mean|response| / 6

is an unbiased estimate of the per-band noise level.  Bands whose estimate
reaches half the mean estimate across all bands are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cubeio import HyperspectralCube, ScalarField
from .errors import AllBandsDropped, TooSmall


@dataclass(frozen=True)
class NoiseReport:
    sigma: np.ndarray          # per-band noise level, original band order
    threshold: float           # half the mean sigma
    kept: tuple[int, ...]      # retained band indices, original order

    def to_dict(self) -> dict:
        return {
            "sigma": [float(s) for s in self.sigma],
            "threshold": float(self.threshold),
            "kept": list(self.kept),
        }


def estimate_band_noise(band: ScalarField) -> float:
    """Noise level of one band via the Laplacian-difference mask."""
    v = band.values
    h, w = v.shape
    if h < 3 or w < 3:
        raise TooSmall(f"band is {w}x{h}; the 3x3 mask needs at least 3x3")

    response = (
        4.0 * v[1:-1, 1:-1]
        - 2.0 * (v[:-2, 1:-1] + v[2:, 1:-1] + v[1:-1, :-2] + v[1:-1, 2:])
        + (v[:-2, :-2] + v[:-2, 2:] + v[2:, :-2] + v[2:, 2:])
    )
    total = np.abs(response).sum()
    return float(np.sqrt(np.pi / 2.0) * total / (6.0 * (w - 2) * (h - 2)))


def screen_bands(cube: HyperspectralCube) -> tuple[HyperspectralCube, NoiseReport]:
    """Drop bands whose noise level reaches half the mean over all bands.

    The inequality is strict: a band with sigma exactly at the threshold is
    dropped, so a cube whose bands all share one positive sigma keeps nothing
    and raises AllBandsDropped.
    """
    sigma = np.array([estimate_band_noise(cube.band(n)) for n in range(cube.band_count)])
    threshold = float(sigma.sum() / (2.0 * cube.band_count))
    kept = tuple(int(n) for n in np.flatnonzero(sigma < threshold))

    if not kept:
        raise AllBandsDropped(
            f"no band has noise below the threshold {threshold:.6g}; "
            "the cube looks pathological"
        )

    wavelengths = None
    if cube.wavelengths is not None:
        wavelengths = cube.wavelengths[list(kept)]
    screened = HyperspectralCube(
        values=cube.values[list(kept)],
        wavelengths=wavelengths,
    )
    return screened, NoiseReport(sigma=sigma, threshold=threshold, kept=kept)
