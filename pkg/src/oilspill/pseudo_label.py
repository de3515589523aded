"""Pseudo labels from the isolation probability map.

A two-cluster 1-D k-means splits the probability map; the cluster with the
higher mean probability is called oil (easier to isolate means more likely
slick).  A small stratified sample of the resulting labels becomes the
classifier's training set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cubeio import ScalarField
from .errors import DegenerateScores, EmptyCluster, MissingClass

_MAX_ITER = 100


@dataclass(frozen=True)
class PseudoLabelSet:
    full_labels: np.ndarray    # (height, width) uint8, 1 = oil
    train_indices: np.ndarray  # flat pixel indices, distinct
    train_labels: np.ndarray   # matching 0/1 labels


def kmeans_two(scores: ScalarField, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two-cluster k-means on the 1-D score values, globally optimal.

    Lloyd's iterations run from deterministic centroids at the 10th and
    90th percentiles (``seed`` is accepted only for interface stability;
    assignment ties go to the lower-centroid cluster).  Because the 1-D
    two-means optimum is an interval split, the fixed point is then checked
    against an exact
    sorted-cut scan and replaced whenever Lloyd's stalled in a worse local
    minimum, so the returned clustering always attains the global SSE optimum.
    Returns (cluster ids shaped like the field, centroids ordered low to high).
    """
    del seed
    vals = scores.values
    flat = vals.ravel().astype(np.float64)
    lo, hi = flat.min(), flat.max()
    if lo == hi:
        raise DegenerateScores("all scores identical; cannot form two clusters")

    c0 = float(np.percentile(flat, 10))
    c1 = float(np.percentile(flat, 90))
    if c0 == c1:
        c0, c1 = float(lo), float(hi)

    assign = None
    for _ in range(_MAX_ITER):
        mid = 0.5 * (c0 + c1)
        new_assign = flat > mid  # x == mid is a tie and stays with the lower cluster
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        c0 = float(flat[~assign].mean())
        c1 = float(flat[assign].mean())

    best_assign, best_c = _optimal_interval_split(flat)
    if _sse(flat, best_assign) < _sse(flat, assign):
        assign, (c0, c1) = best_assign, best_c

    ids = assign.astype(np.uint8).reshape(vals.shape)
    return ids, np.array([c0, c1])


def _optimal_interval_split(flat: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    """Exact 1-D two-means via prefix sums over every sorted cut."""
    order = np.argsort(flat, kind="stable")
    v = flat[order]
    n = len(v)
    csum = np.cumsum(v)
    csq = np.cumsum(v * v)
    k = np.arange(1, n)
    left = csq[:-1] - csum[:-1] ** 2 / k
    right = (csq[-1] - csq[:-1]) - (csum[-1] - csum[:-1]) ** 2 / (n - k)
    cut = int(np.argmin(left + right)) + 1

    assign = np.zeros(n, dtype=bool)
    assign[order[cut:]] = True
    c0 = float(csum[cut - 1] / cut)
    c1 = float((csum[-1] - csum[cut - 1]) / (n - cut))
    return assign, (c0, c1)


def _sse(flat: np.ndarray, assign: np.ndarray) -> float:
    total = 0.0
    for group in (flat[~assign], flat[assign]):
        if len(group):
            total += float(((group - group.mean()) ** 2).sum())
    return total


def assign_classes(cluster_ids: np.ndarray, scores: ScalarField) -> np.ndarray:
    """Name the cluster with the larger mean score oil (1), the other sea (0).

    Depends only on the per-cluster score means, so swapping cluster ids
    leaves the output unchanged.
    """
    flat_ids = cluster_ids.ravel()
    flat_scores = scores.values.ravel()
    present = np.unique(flat_ids)
    if len(present) != 2:
        raise EmptyCluster(f"expected two non-empty clusters, found ids {present}")

    means = [flat_scores[flat_ids == cid].mean() for cid in present]
    oil_id = present[int(np.argmax(means))]
    return (cluster_ids == oil_id).astype(np.uint8)


def sample_training(full_labels: np.ndarray, fraction: float, seed: int) -> PseudoLabelSet:
    """Stratified uniform sample without replacement.

    Each class contributes round(fraction * class size) indices, at least one.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    flat = full_labels.ravel()
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    indices = []
    labels = []
    for cls in (0, 1):
        members = np.flatnonzero(flat == cls)
        if len(members) == 0:
            raise MissingClass(f"class {cls} has no pixels")
        count = max(1, int(np.floor(fraction * len(members) + 0.5)))
        chosen = np.sort(rng.choice(members, size=count, replace=False))
        indices.append(chosen)
        labels.append(np.full(count, cls, dtype=np.uint8))

    return PseudoLabelSet(
        full_labels=np.asarray(full_labels, dtype=np.uint8),
        train_indices=np.concatenate(indices),
        train_labels=np.concatenate(labels),
    )
