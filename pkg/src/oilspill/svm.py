"""Two-class soft-margin RBF SVM trained by sequential minimal optimization.

The dual problem

    min 0.5 * a' Q a - sum(a)   s.t.  0 <= a_i <= C,  sum(a_i y_i) = 0,
    Q_ij = y_i y_j k(x_i, x_j),     k(u, v) = exp(-gamma ||u - v||^2)

is solved with maximal-violating-pair working-set selection, stopping when the
KKT gap m(a) - M(a) drops below tolerance.  Decision values are calibrated to
probabilities with a Platt sigmoid fitted on out-of-fold decision values so
downstream refinement receives probabilities rather than margins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cubeio import ScalarField
from .errors import DimensionMismatch, NoConvergence, SingleClass, TooFewSamples
from .kpca import ReducedStack

_KKT_TOL = 1e-3
_MAX_UPDATES = 10**6
_PROBA_EPS = 1e-12


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray   # (n_sv, D)
    dual_coef: np.ndarray         # (n_sv,) alpha_i * y_i, |coef| <= C
    bias: float
    gamma: float
    cost: float
    platt_a: float
    platt_b: float

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


@dataclass(frozen=True)
class CvGrid:
    c_values: tuple[float, ...]
    gamma_values: tuple[float, ...]
    folds: int = 5

    def __post_init__(self):
        if not self.c_values or not self.gamma_values:
            raise ValueError("grid needs at least one C and one gamma candidate")


def default_grid() -> CvGrid:
    return CvGrid(
        c_values=(2.0**-3, 2.0**-1, 2.0, 2.0**3, 2.0**5, 2.0**7),
        gamma_values=(2.0**-7, 2.0**-5, 2.0**-3, 2.0**-1, 2.0),
    )


def train_svm(
    features: np.ndarray,
    labels: np.ndarray,
    cost: float,
    gamma: float,
    seed: int,
) -> SvmModel:
    """Train on 0/1 labels (1 = oil) and calibrate probability outputs.

    Platt calibration uses decision values from a 5-fold internal split when
    each class has at least 5 members, falling back to in-sample decision
    values on smaller sets.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if cost <= 0 or gamma <= 0:
        raise ValueError("cost and gamma must be positive")
    y = _signed_labels(labels)

    kernel = _rbf(features, features, gamma)
    alpha, bias = _solve_dual(kernel, y, cost)

    decision, is_pos = _calibration_decisions(y, kernel, alpha, bias, cost, seed)
    platt_a, platt_b = _fit_sigmoid(decision, is_pos)

    sv = alpha > 0
    return SvmModel(
        support_vectors=np.ascontiguousarray(features[sv]),
        dual_coef=alpha[sv] * y[sv],
        bias=float(bias),
        gamma=float(gamma),
        cost=float(cost),
        platt_a=float(platt_a),
        platt_b=float(platt_b),
    )


def cross_validate(
    features: np.ndarray,
    labels: np.ndarray,
    grid: CvGrid,
    seed: int,
) -> tuple[float, float]:
    """Pick (C, gamma) by stratified k-fold accuracy.

    Ties break toward smaller C, then smaller gamma.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if len(features) < 10:
        raise TooFewSamples(f"cross validation needs >= 10 samples, got {len(features)}")
    y = _signed_labels(labels)
    counts = np.bincount((y > 0).astype(int), minlength=2)
    if counts.min() < 2:
        raise TooFewSamples("each class needs at least 2 samples for folding")

    folds = _stratified_folds(y, grid.folds, seed)
    sq_dists = [_sq_dist(features[train], features[train]) for train, _ in folds]
    sq_cross = [_sq_dist(features[val], features[train]) for train, val in folds]

    best = None
    best_acc = -1.0
    for cost in sorted(grid.c_values):
        for gamma in sorted(grid.gamma_values):
            correct = 0
            for f, (train, val) in enumerate(folds):
                kernel = np.exp(-gamma * sq_dists[f])
                alpha, bias = _solve_dual(kernel, y[train], cost)
                cross = np.exp(-gamma * sq_cross[f])
                decision = cross @ (alpha * y[train]) + bias
                correct += int(np.sum((decision > 0) == (y[val] > 0)))
            acc = correct / len(features)
            if acc > best_acc:
                best_acc = acc
                best = (cost, gamma)
    return best


def decision_values(model: SvmModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"features have shape {features.shape}; model expects (n, {model.n_features})"
        )
    return _rbf(features, model.support_vectors, model.gamma) @ model.dual_coef + model.bias


def predict_proba(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """Platt probability of the oil class, strictly inside (0, 1)."""
    f = decision_values(model, features)
    p = _sigmoid(-(model.platt_a * f + model.platt_b))
    return np.clip(p, _PROBA_EPS, 1.0 - _PROBA_EPS)


def predict_field(model: SvmModel, stack: ReducedStack) -> ScalarField:
    """Per-pixel oil probability map over a reduced scene."""
    p = predict_proba(model, stack.as_matrix())
    return ScalarField(p.reshape(stack.height, stack.width))


# --- internals ---


def _signed_labels(labels: np.ndarray) -> np.ndarray:
    flat = np.asarray(labels).ravel()
    classes = np.unique(flat)
    if len(classes) < 2:
        raise SingleClass("training labels contain a single class")
    if len(classes) > 2 or not set(classes.tolist()) <= {0, 1}:
        raise ValueError("labels must be binary 0/1")
    return np.where(flat == 1, 1.0, -1.0)


def _solve_dual(
    kernel: np.ndarray,
    y: np.ndarray,
    cost: float,
    tol: float = _KKT_TOL,
    max_updates: int = _MAX_UPDATES,
) -> tuple[np.ndarray, float]:
    """Maximal-violating-pair SMO.  Returns (alpha, bias)."""
    n = len(y)
    q = kernel * np.outer(y, y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    # Variables within float dust of a bound count as bound in the selection,
    # otherwise a pair stuck a few ulps inside its box is re-picked forever.
    bound_eps = 1e-12 * cost

    for _ in range(max_updates):
        viol = -y * grad
        at_upper = alpha >= cost - bound_eps
        at_lower = alpha <= bound_eps
        up = np.where(y > 0, ~at_upper, ~at_lower)
        low = np.where(y > 0, ~at_lower, ~at_upper)

        up_viol = np.where(up, viol, -np.inf)
        low_viol = np.where(low, viol, np.inf)
        i = int(np.argmax(up_viol))
        j = int(np.argmin(low_viol))
        gap = up_viol[i] - low_viol[j]
        if gap <= tol:
            bias = 0.5 * (up_viol[i] + low_viol[j])
            return alpha, float(bias)

        # two-variable subproblem on (i, j)
        if y[i] == y[j]:
            lo = max(0.0, alpha[i] + alpha[j] - cost)
            hi = min(cost, alpha[i] + alpha[j])
        else:
            lo = max(0.0, alpha[j] - alpha[i])
            hi = min(cost, cost + alpha[j] - alpha[i])
        eta = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        eta = max(eta, 1e-12)
        err_i = y[i] * grad[i]   # f(x_i) - y_i without the bias term
        err_j = y[j] * grad[j]
        new_j = min(max(alpha[j] + y[j] * (err_i - err_j) / eta, lo), hi)
        delta_j = new_j - alpha[j]
        new_i = min(max(alpha[i] - y[i] * y[j] * delta_j, 0.0), cost)
        delta_i = new_i - alpha[i]
        alpha[j] = new_j
        alpha[i] = new_i
        grad += q[:, i] * delta_i + q[:, j] * delta_j

    raise NoConvergence(f"SMO did not reach tolerance within {max_updates} updates")


def _calibration_decisions(y, kernel, alpha, bias, cost, seed):
    """Out-of-fold decision values for Platt fitting (in-sample fallback)."""
    counts = np.bincount((y > 0).astype(int), minlength=2)
    if counts.min() >= 5:
        decision = np.empty(len(y))
        for train, val in _stratified_folds(y, 5, seed):
            sub_alpha, sub_bias = _solve_dual(kernel[np.ix_(train, train)], y[train], cost)
            decision[val] = kernel[np.ix_(val, train)] @ (sub_alpha * y[train]) + sub_bias
    else:
        decision = kernel @ (alpha * y) + bias
    return decision, y > 0


def _stratified_folds(y: np.ndarray, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Round-robin class-stratified folds as (train, validation) index pairs."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    assignment = np.empty(len(y), dtype=np.int64)
    for sign in (-1.0, 1.0):
        members = np.flatnonzero(y == sign)
        members = rng.permutation(members)
        assignment[members] = np.arange(len(members)) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(assignment == f)
        if len(val) == 0:
            continue
        train = np.flatnonzero(assignment != f)
        folds.append((train, val))
    return folds


def _fit_sigmoid(decision: np.ndarray, is_pos: np.ndarray) -> tuple[float, float]:
    """Platt sigmoid parameters (A, B) by Newton descent on the regularized NLL.

    P(oil | f) = 1 / (1 + exp(A f + B)); targets are smoothed class
    frequencies so the fit stays proper for separable data.
    """
    n_pos = int(np.sum(is_pos))
    n_neg = len(decision) - n_pos
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    target = np.where(is_pos, hi, lo)

    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    min_step, ridge = 1e-10, 1e-12

    def objective(av, bv):
        z = decision * av + bv
        # stable log(1 + exp(z)) pieces
        return float(np.sum(np.where(z >= 0, target * z + np.log1p(np.exp(-z)),
                                     (target - 1.0) * z + np.log1p(np.exp(z)))))

    value = objective(a, b)
    for _ in range(100):
        z = decision * a + b
        p = _sigmoid(-z)            # current probability estimates
        d1 = target - p
        d2 = p * (1.0 - p)
        g_a = float(np.dot(decision, d1))
        g_b = float(np.sum(d1))
        if max(abs(g_a), abs(g_b)) < 1e-5:
            break
        h_aa = float(np.dot(decision * decision, d2)) + ridge
        h_bb = float(np.sum(d2)) + ridge
        h_ab = float(np.dot(decision, d2))
        det = h_aa * h_bb - h_ab * h_ab
        step_a = -(h_bb * g_a - h_ab * g_b) / det
        step_b = -(h_aa * g_b - h_ab * g_a) / det

        size = 1.0
        while size >= min_step:
            na, nb = a + size * step_a, b + size * step_b
            nv = objective(na, nb)
            if nv < value + 1e-4 * size * (g_a * step_a + g_b * step_b):
                a, b, value = na, nb, nv
                break
            size *= 0.5
        else:
            break
    return a, b


def _sigmoid(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.einsum("ij,ij->i", a, a)
    nb = np.einsum("ij,ij->i", b, b)
    sq = na[:, None] + nb[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def _rbf(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = _sq_dist(a, b)
    sq *= -gamma
    return np.exp(sq, out=sq)
