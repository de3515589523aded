"""Isolation forest over reduced pixel vectors.

Each tree is grown on an independent subsample of K pixels.  A node picks a
uniformly random dimension among those that still vary inside the node, then a
split value uniform between that dimension's node-local min and max; values
below the split go left.  Growth stops when a node holds one pixel, all its
pixels are identical, or the depth cap floor(log2 K) is reached.

A query's path length is the edge count to its terminating node, plus the
expected further search depth c(size) when the node still holds several
points.  The per-pixel probability is 2**(-avg_path / c(K)), in (0, 1]:
shorter paths mean easier isolation and score closer to 1.

Trees are stored as flat arrays so whole scenes can be scored with vectorized
level-by-level descent.  Leaves carry child = own index and split = +inf,
which makes them fixed points of the descent rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cubeio import ScalarField
from .errors import DimensionMismatch, InsufficientPixels
from .kpca import ReducedStack

_EULER_GAMMA = 0.5772156649  # truncation used by the harmonic-number estimate


def c_factor(m: int) -> float:
    """Expected unsuccessful-search depth over m points; 0 for m < 2."""
    if m < 1:
        raise ValueError("c_factor needs m >= 1")
    if m < 2:
        return 0.0
    return 2.0 * (np.log(m - 1.0) + _EULER_GAMMA) - 2.0 * (m - 1.0) / m


@dataclass(frozen=True)
class IsolationTree:
    dim: np.ndarray       # (nodes,) split dimension; -1 at leaves
    split: np.ndarray     # (nodes,) split value; +inf at leaves
    child: np.ndarray     # (nodes,) left-child index (right = left + 1); self at leaves
    size: np.ndarray      # (nodes,) training points that reached the node
    depth: np.ndarray     # (nodes,) edges from the root
    pathlen: np.ndarray   # (nodes,) depth + c(size) adjustment; leaves only

    @property
    def n_nodes(self) -> int:
        return len(self.dim)

    def is_leaf(self, node: int) -> bool:
        return self.child[node] == node


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple[IsolationTree, ...]
    subsample_size: int
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def c_k(self) -> float:
        return c_factor(self.subsample_size)


def build_forest(data, n_trees: int, subsample_size: int, seed: int) -> IsolationForestModel:
    """Grow ``n_trees`` trees, each on an independent seeded subsample."""
    matrix = _as_matrix(data)
    n_pixels, n_features = matrix.shape
    if subsample_size < 2:
        raise ValueError("subsample_size must be at least 2")
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    if n_pixels < subsample_size:
        raise InsufficientPixels(
            f"{n_pixels} pixels cannot supply subsamples of {subsample_size}"
        )

    height_cap = int(np.floor(np.log2(subsample_size)))
    streams = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for stream in streams:
        rng = np.random.default_rng(stream)
        idx = rng.choice(n_pixels, size=subsample_size, replace=False)
        trees.append(_grow_tree(matrix[idx], height_cap, rng))
    return IsolationForestModel(
        trees=tuple(trees),
        subsample_size=subsample_size,
        n_features=n_features,
    )


def _grow_tree(points: np.ndarray, height_cap: int, rng: np.random.Generator) -> IsolationTree:
    max_nodes = 2 * len(points) - 1
    dim = np.full(max_nodes, -1, dtype=np.int32)
    split = np.full(max_nodes, np.inf)
    child = np.zeros(max_nodes, dtype=np.int32)
    size = np.zeros(max_nodes, dtype=np.int32)
    depth = np.zeros(max_nodes, dtype=np.int32)
    pathlen = np.zeros(max_nodes)

    next_free = 1
    stack = [(np.arange(len(points)), 0, 0)]  # (row indices, node slot, depth)
    while stack:
        rows, node, d = stack.pop()
        size[node] = len(rows)
        depth[node] = d

        local = points[rows]
        splittable = None
        if len(rows) > 1 and d < height_cap:
            mins = local.min(axis=0)
            maxs = local.max(axis=0)
            splittable = np.flatnonzero(maxs > mins)

        if splittable is None or len(splittable) == 0:
            # leaf: single point, identical points, or depth cap
            child[node] = node
            pathlen[node] = d + (c_factor(len(rows)) if len(rows) > 1 else 0.0)
            continue

        q = int(splittable[rng.integers(len(splittable))])
        lo, hi = mins[q], maxs[q]
        p = rng.uniform(lo, hi)
        if p <= lo:  # guard against a draw landing exactly on the minimum
            p = np.nextafter(lo, hi)

        left_mask = local[:, q] < p
        dim[node] = q
        split[node] = p
        left_slot, right_slot = next_free, next_free + 1
        child[node] = left_slot
        next_free += 2
        # push right first so the left child is processed (and draws RNG) first
        stack.append((rows[~left_mask], right_slot, d + 1))
        stack.append((rows[left_mask], left_slot, d + 1))

    return IsolationTree(
        dim=dim[:next_free],
        split=split[:next_free],
        child=child[:next_free],
        size=size[:next_free],
        depth=depth[:next_free],
        pathlen=pathlen[:next_free],
    )


def average_path(forest: IsolationForestModel, x: np.ndarray) -> float:
    """Mean adjusted path length of one vector across all trees."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.n_features,):
        raise DimensionMismatch(
            f"query has shape {x.shape}; forest expects ({forest.n_features},)"
        )
    total = 0.0
    for tree in forest.trees:
        node = 0
        while not tree.is_leaf(node):
            node = tree.child[node] + (x[tree.dim[node]] >= tree.split[node])
        total += tree.pathlen[node]
    return total / forest.n_trees


def score(forest: IsolationForestModel, x: np.ndarray) -> float:
    """Isolation probability of one vector: 2**(-avg_path / c(K))."""
    return float(score_matrix(forest, np.asarray(x, dtype=np.float64)[None, :])[0])


def score_matrix(forest: IsolationForestModel, matrix: np.ndarray) -> np.ndarray:
    """Isolation probabilities for many vectors at once, shape (n,)."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != forest.n_features:
        raise DimensionMismatch(
            f"matrix has shape {matrix.shape}; forest expects (n, {forest.n_features})"
        )
    n = matrix.shape[0]
    rows = np.arange(n)
    total = np.zeros(n)
    for tree in forest.trees:
        node = np.zeros(n, dtype=np.int32)
        levels = int(tree.depth.max())
        for _ in range(levels):
            vals = matrix[rows, tree.dim[node]]
            node = tree.child[node] + (vals >= tree.split[node])
        total += tree.pathlen[node]
    total /= forest.n_trees
    return 2.0 ** (-total / forest.c_k)


def score_field(forest: IsolationForestModel, stack: ReducedStack) -> ScalarField:
    """Per-pixel isolation probability map for a reduced scene."""
    flat = score_matrix(forest, stack.as_matrix())
    return ScalarField(flat.reshape(stack.height, stack.width))


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, ReducedStack):
        return np.ascontiguousarray(data.as_matrix())
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("expected a ReducedStack or an (n, d) matrix")
    return matrix
