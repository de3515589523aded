"""Spectral dimensionality reduction via RBF kernel PCA on a pixel subsample.

Fitting eigendecomposes the double-centered Gram matrix of a subsample of
pixel spectra.  The full scene is then projected through the same centered
kernel (a Nystrom-style out-of-sample extension), which agrees exactly with
the training projections on the subsample itself.

Conventions:
  * kernel k(a, b) = exp(-||a - b||^2 / (2 * bandwidth^2))
  * eigenvectors are scaled so that eigenvalue * (alpha . alpha) = 1, the
    standard unit-norm feature-space normalization
  * each component's sign is flipped so its largest-magnitude training
    coordinate is positive, making results seed-stable
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cubeio import HyperspectralCube
from .errors import DegenerateSample, DimensionMismatch

log = logging.getLogger(__name__)

_EIGENVALUE_FLOOR = 1e-12   # relative to the largest eigenvalue
_PROJECT_CHUNK = 8192


@dataclass(frozen=True)
class KpcaModel:
    subsample: np.ndarray       # (M, bands) spectra the kernel is anchored on
    bandwidth: float
    alphas: np.ndarray          # (D, M) scaled eigenvectors of the centered Gram
    eigenvalues: np.ndarray     # (D,) strictly positive, non-increasing
    row_means: np.ndarray       # (M,) row means of the uncentered Gram
    grand_mean: float

    @property
    def n_components(self) -> int:
        return self.alphas.shape[0]

    @property
    def n_features(self) -> int:
        return self.subsample.shape[1]

    def training_projections(self) -> np.ndarray:
        """Projections of the subsample itself, shape (M, D)."""
        return (self.eigenvalues[:, None] * self.alphas).T


@dataclass(frozen=True)
class ReducedStack:
    """D component planes over the scene: values[component, row, col]."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("reduced stack must be (components, height, width)")
        if not np.isfinite(self.values).all():
            raise ValueError("reduced stack contains non-finite values")

    @property
    def n_components(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def component(self, d: int) -> np.ndarray:
        return self.values[d]

    def as_matrix(self) -> np.ndarray:
        """Pixels as rows: shape (height * width, components)."""
        d, h, w = self.values.shape
        return self.values.reshape(d, h * w).T


def median_bandwidth(subsample: np.ndarray, seed: int = 0, max_exact: int = 1000) -> float:
    """Median pairwise Euclidean distance over the subsample.

    All pairs are used up to ``max_exact`` points; beyond that, one million
    seeded random pairs.  The lower median of the sorted distances is taken,
    so e.g. distances {1, 1, 2} give 1.
    """
    m = subsample.shape[0]
    if m < 2:
        raise ValueError("median_bandwidth needs at least two spectra")

    if m <= max_exact:
        sq = _pairwise_sq_dists(subsample, subsample)
        d2 = sq[np.triu_indices(m, k=1)]
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        n_pairs = 10**6
        i = rng.integers(0, m, size=n_pairs)
        j = rng.integers(0, m - 1, size=n_pairs)
        j = np.where(j >= i, j + 1, j)  # j != i without rejection
        diff = subsample[i] - subsample[j]
        d2 = np.einsum("ij,ij->i", diff, diff)

    d2 = np.sort(d2)
    median_sq = d2[(len(d2) - 1) // 2]
    if median_sq <= 0.0:
        raise DegenerateSample("median pairwise distance is zero")
    return float(np.sqrt(median_sq))


def fit_kpca(subsample: np.ndarray, n_components: int, bandwidth: float) -> KpcaModel:
    """Fit kernel PCA on the subsample spectra.

    If fewer than ``n_components`` eigenvalues survive the relative floor the
    model carries the achievable count and the reduction is logged.
    """
    m = subsample.shape[0]
    if not 1 <= n_components <= m:
        raise ValueError(f"need subsample size >= n_components >= 1, got M={m}, D={n_components}")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")

    subsample = np.array(subsample, dtype=np.float64)
    gram = _kernel(subsample, subsample, bandwidth)
    row_means = gram.mean(axis=1)
    grand_mean = float(gram.mean())
    centered = gram - row_means[None, :] - row_means[:, None] + grand_mean

    eigvals, eigvecs = np.linalg.eigh(centered)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    floor = _EIGENVALUE_FLOOR * max(eigvals[0], 0.0)
    usable = int(np.sum(eigvals > floor))
    if usable < n_components:
        log.warning(
            "rank deficient Gram matrix: %d of %d requested components usable",
            usable, n_components,
        )
        n_components = usable
    if n_components == 0:
        raise DegenerateSample("centered Gram matrix has no positive eigenvalues")

    eigvals = eigvals[:n_components]
    alphas = (eigvecs[:, :n_components] / np.sqrt(eigvals)[None, :]).T

    # Sign convention: largest-magnitude training coordinate positive.
    for d in range(n_components):
        j = int(np.argmax(np.abs(alphas[d])))
        if alphas[d, j] < 0:
            alphas[d] = -alphas[d]

    return KpcaModel(
        subsample=subsample,
        bandwidth=float(bandwidth),
        alphas=np.ascontiguousarray(alphas),
        eigenvalues=eigvals,
        row_means=row_means,
        grand_mean=grand_mean,
    )


def project_samples(model: KpcaModel, spectra: np.ndarray) -> np.ndarray:
    """Project arbitrary spectra, shape (n, bands) -> (n, D)."""
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2 or spectra.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"spectra have {spectra.shape[-1]} bands; model expects {model.n_features}"
        )
    out = np.empty((spectra.shape[0], model.n_components))
    for start in range(0, spectra.shape[0], _PROJECT_CHUNK):
        chunk = spectra[start:start + _PROJECT_CHUNK]
        k = _kernel(chunk, model.subsample, model.bandwidth)
        k -= k.mean(axis=1, keepdims=True)
        k -= model.row_means[None, :]
        k += model.grand_mean
        out[start:start + _PROJECT_CHUNK] = k @ model.alphas.T
    return out


def project(model: KpcaModel, cube: HyperspectralCube) -> ReducedStack:
    """Project a whole cube into its component planes."""
    if cube.band_count != model.n_features:
        raise DimensionMismatch(
            f"cube has {cube.band_count} bands; model expects {model.n_features}"
        )
    flat = project_samples(model, cube.pixel_matrix())
    planes = flat.T.reshape(model.n_components, cube.height, cube.width)
    return ReducedStack(values=np.ascontiguousarray(planes))


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.einsum("ij,ij->i", a, a)
    nb = np.einsum("ij,ij->i", b, b)
    sq = na[:, None] + nb[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def _kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    sq = _pairwise_sq_dists(a, b)
    sq /= -2.0 * bandwidth * bandwidth
    return np.exp(sq, out=sq)
