"""Random-walker refinement of the initial probability map.

The pixel lattice becomes a 4-connected weighted graph whose edge weights
exp(-beta * (v_i - v_j)^2) are driven by a guidance image normalized to
[0, 1].  For each class t with prior diagonal D_t the refined map solves

    (L + gamma * I) P_t = gamma * D_t 1,

the stationarity condition of a spatial Dirichlet energy plus a prior-anchor
term (D_oil + D_sea = I collapses the anchor sum to gamma * I).  Both systems
are symmetric positive definite and solved by Jacobi-preconditioned conjugate
gradient; sharing one absolute residual threshold between the two solves keeps
P_oil + P_sea = 1 to far better than the solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .cubeio import ScalarField
from .errors import SolverDiverged


@dataclass(frozen=True)
class PixelGraph:
    width: int
    height: int
    beta: float
    laplacian: sparse.csr_matrix        # over included pixels, compact order
    node_index: np.ndarray | None       # flat pixel -> compact row, -1 excluded

    @property
    def n_nodes(self) -> int:
        return self.laplacian.shape[0]


@dataclass(frozen=True)
class RefinedProbabilities:
    p_oil: ScalarField
    p_sea: ScalarField


def build_graph(guidance: ScalarField, beta: float, mask: np.ndarray | None = None) -> PixelGraph:
    """Assemble the 4-connected graph Laplacian from a guidance image.

    The guidance is min-max normalized here, so ``beta`` always acts on values
    in [0, 1].  A constant guidance yields all weights exactly 1 (the plain
    lattice Laplacian), which is valid, not an error.  With ``mask`` given,
    only pixels where mask is true become graph nodes and only edges between
    two included pixels are kept.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    v = guidance.values
    h, w = v.shape

    if mask is None:
        included = np.ones(h * w, dtype=bool)
        node_index = None
        lookup = np.arange(h * w)
    else:
        included = np.asarray(mask, dtype=bool).ravel()
        if included.shape != (h * w,):
            raise ValueError("mask shape must match the guidance field")
        if not included.any():
            raise ValueError("mask excludes every pixel")
        lookup = np.full(h * w, -1, dtype=np.int64)
        lookup[included] = np.arange(int(included.sum()))
        node_index = lookup

    flat = v.ravel().astype(np.float64)
    vmin = flat[included].min()
    vmax = flat[included].max()
    norm = np.zeros_like(flat) if vmax == vmin else (flat - vmin) / (vmax - vmin)

    rows_a, rows_b = [], []
    weights = []
    grid = np.arange(h * w).reshape(h, w)
    for a, b in ((grid[:, :-1].ravel(), grid[:, 1:].ravel()),
                 (grid[:-1, :].ravel(), grid[1:, :].ravel())):
        keep = included[a] & included[b]
        a, b = a[keep], b[keep]
        diff = norm[a] - norm[b]
        rows_a.append(a)
        rows_b.append(b)
        weights.append(np.exp(-beta * diff * diff))

    a = lookup[np.concatenate(rows_a)]
    b = lookup[np.concatenate(rows_b)]
    wgt = np.concatenate(weights)
    n = int(included.sum())

    off = sparse.coo_matrix(
        (np.concatenate([-wgt, -wgt]), (np.concatenate([a, b]), np.concatenate([b, a]))),
        shape=(n, n),
    ).tocsr()
    degree = -np.asarray(off.sum(axis=1)).ravel()
    laplacian = off + sparse.diags(degree, format="csr")
    return PixelGraph(width=w, height=h, beta=float(beta), laplacian=laplacian,
                      node_index=node_index)


def refine(
    initial_oil: ScalarField,
    graph: PixelGraph,
    gamma: float,
    tol: float = 1e-6,
) -> RefinedProbabilities:
    """Solve both class systems and return full-size probability fields.

    ``tol`` bounds each system's relative residual.  Excluded pixels (when the
    graph was built with a mask) come back as P_oil = 0, P_sea = 1.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if initial_oil.values.shape != (graph.height, graph.width):
        raise ValueError("initial map shape must match the graph")

    prior = initial_oil.values.ravel().astype(np.float64)
    if graph.node_index is not None:
        prior = prior[graph.node_index >= 0]
    if np.any(prior <= 0.0) or np.any(prior >= 1.0):
        raise ValueError("initial probabilities must lie strictly inside (0, 1)")

    system = (graph.laplacian + gamma * sparse.identity(graph.n_nodes, format="csr")).tocsr()
    inv_diag = 1.0 / system.diagonal()

    b_oil = gamma * prior
    b_sea = gamma * (1.0 - prior)
    # One shared absolute threshold and one shared iteration loop: both solves
    # satisfy their relative tolerance and stop at the same iterate, so the
    # two solutions sum to one up to accumulation noise rather than up to tol.
    atol = tol * min(np.linalg.norm(b_oil), np.linalg.norm(b_sea))
    cap = 10 * graph.n_nodes

    rhs = np.stack([b_oil, b_sea], axis=1)
    start = np.stack([prior, 1.0 - prior], axis=1)
    solution = _pcg_pair(system, rhs, start, inv_diag, atol, cap)
    sol_oil, sol_sea = solution[:, 0], solution[:, 1]

    shape = (graph.height, graph.width)
    if graph.node_index is None:
        p_oil = sol_oil.reshape(shape)
        p_sea = sol_sea.reshape(shape)
    else:
        keep = graph.node_index >= 0
        p_oil = np.zeros(graph.height * graph.width)
        p_sea = np.ones(graph.height * graph.width)
        p_oil[keep] = sol_oil
        p_sea[keep] = sol_sea
        p_oil = p_oil.reshape(shape)
        p_sea = p_sea.reshape(shape)
    return RefinedProbabilities(p_oil=ScalarField(p_oil), p_sea=ScalarField(p_sea))


def argmax_map(refined: RefinedProbabilities) -> ScalarField:
    """Binary detection map: oil where P_oil > P_sea, sea on exact ties."""
    detection = (refined.p_oil.values > refined.p_sea.values).astype(np.float64)
    return ScalarField(detection)


def _pcg_pair(
    system: sparse.csr_matrix,
    rhs: np.ndarray,
    x: np.ndarray,
    inv_diag: np.ndarray,
    atol: float,
    max_iter: int,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradient over column systems.

    Columns of ``rhs``/``x`` are independent CG instances sharing the matrix
    and the iteration loop; a column whose residual hits exact zero freezes.
    """
    r = rhs - system @ x
    if np.all(np.linalg.norm(r, axis=0) <= atol):
        return x
    z = inv_diag[:, None] * r
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    for _ in range(max_iter):
        ap = system @ p
        pap = np.einsum("ij,ij->j", p, ap)
        step = np.where(pap > 0.0, rz / np.where(pap > 0.0, pap, 1.0), 0.0)
        x += step * p
        r -= step * ap
        if np.all(np.linalg.norm(r, axis=0) <= atol):
            return x
        z = inv_diag[:, None] * r
        rz_new = np.einsum("ij,ij->j", r, z)
        shrink = np.where(rz > 0.0, rz_new / np.where(rz > 0.0, rz, 1.0), 0.0)
        p = z + shrink * p
        rz = rz_new
    raise SolverDiverged(
        f"conjugate gradient residual stayed above {atol:.3g} after {max_iter} iterations"
    )
