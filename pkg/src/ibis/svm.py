"""Kernel SVM post-classifier: SMO training, one-vs-one voting, PCA.

The binary solver works on the dual

    maximize  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.      sum(a_i y_i) = 0,  0 <= a_i <= C * w(y_i)

where ``w`` is the (optionally balanced) class weight.  Working pairs are
chosen Platt-style: the outer loop takes the first sample that violates
its KKT condition by more than ``tolerance``, the inner choice is the
partner with the largest |E_i - E_j| in the violating direction.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ibis.container import read_container, write_container
from ibis.errors import ConfigurationError, DegenerateProblemError, FormatError, InputError

log = logging.getLogger(__name__)

SVM_MAGIC = b"IBSV"
SVM_VERSION = 1
KERNELS = ("rbf", "linear")


@dataclass
class SvmConfig:
    C: float = 1.0
    gamma: str | float = "scale"
    class_weighting: str = "balanced"
    tolerance: float = 1e-3
    max_passes: int = 10_000
    kernel: str = "rbf"

    def validate(self) -> None:
        if not self.C > 0:
            raise ConfigurationError(f"C must be positive, got {self.C}")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise ConfigurationError(f"gamma must be 'scale' or a positive number, got {self.gamma!r}")
        elif not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.class_weighting not in ("balanced", "none"):
            raise ConfigurationError("class_weighting must be 'balanced' or 'none'")
        if self.tolerance <= 0 or self.max_passes < 1:
            raise ConfigurationError("tolerance must be positive and max_passes at least 1")
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"kernel must be one of {KERNELS}")


# ---------------------------------------------------------------------------
# kernels and weights


def rbf_kernel(x, y, gamma: float) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InputError(f"vectors of different lengths: {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ConfigurationError("gamma must be positive")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def gram_matrix(X, Y, gamma: float, kernel: str = "rbf") -> np.ndarray:
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    if kernel == "linear":
        return X @ Y.T
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * (X @ Y.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def scale_gamma(X) -> float:
    """1 / (n_features * Var(X)); falls back to 1 when X has no spread."""
    X = np.asarray(X, dtype=np.float64)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def compute_class_weights(labels) -> dict:
    """Inverse-frequency weights n / (K * count(c)) over the classes present."""
    counts = Counter(np.asarray(labels).tolist())
    if not counts:
        raise InputError("cannot weight an empty label set")
    n, k = sum(counts.values()), len(counts)
    return {c: n / (k * cnt) for c, cnt in sorted(counts.items())}


# ---------------------------------------------------------------------------
# binary SMO


@dataclass
class BinarySvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i of the support vectors
    bias: float
    gamma: float
    kernel: str = "rbf"
    positive: int = 1
    negative: int = -1
    # training diagnostics, not persisted
    alpha: np.ndarray | None = field(default=None, repr=False)
    upper: np.ndarray | None = field(default=None, repr=False)
    support: np.ndarray | None = field(default=None, repr=False)
    objective: list[float] = field(default_factory=list, repr=False)
    updates: int = 0
    converged: bool = True

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return gram_matrix(X, self.support_vectors, self.gamma, self.kernel) @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)


def smo_train_binary(features, labels, config: SvmConfig | None = None, gamma: float | None = None) -> BinarySvm:
    """Train a binary SVM on labels in {-1, +1} with sequential minimal optimization."""
    config = config or SvmConfig()
    config.validate()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or len(X) != len(y):
        raise InputError("features must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InputError("binary labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise DegenerateProblemError("both classes must be present to train a binary SVM")
    if gamma is None:
        gamma = scale_gamma(X) if config.gamma == "scale" else float(config.gamma)

    n = len(y)
    K = gram_matrix(X, X, gamma, config.kernel)
    if config.class_weighting == "balanced":
        w = compute_class_weights(y)
        upper = config.C * np.array([w[v] for v in y.tolist()])
    else:
        upper = np.full(n, config.C)
    tol = config.tolerance

    alpha = np.zeros(n)
    u = np.zeros(n)  # sum_s alpha_s y_s K(x_s, x_t), without bias
    objective = [0.0]
    updates = 0
    start = 0
    converged = False
    while True:
        F = y - u  # = -(error without bias)
        up = ((y > 0) & (alpha < upper)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < upper))
        m_up = F[up].max() if up.any() else -np.inf
        m_low = F[low].min() if low.any() else np.inf
        if m_up - m_low <= tol:
            converged = True
            break
        if updates >= config.max_passes:
            break
        viol = (up & (F > m_low + tol)) | (low & (F < m_up - tol))
        order = np.r_[start:n, 0:start]
        i = int(order[np.argmax(viol[order])])
        start = (i + 1) % n
        if up[i] and F[i] > m_low + tol:
            cand = np.flatnonzero(low)
            j = int(cand[np.argmin(F[cand])])
        else:
            cand = np.flatnonzero(up)
            j = int(cand[np.argmax(F[cand])])
        if not _take_step(i, j, alpha, y, u, K, upper):
            # numerically stalled pair; treat as converged at this precision
            log.debug("SMO stalled on pair (%d, %d)", i, j)
            break
        updates += 1
        objective.append(float(alpha.sum() - 0.5 * np.dot(alpha * y, u)))

    if not converged:
        log.warning("SMO stopped after %d updates without meeting tolerance %g", updates, tol)
    F = y - u
    free = (alpha > 0) & (alpha < upper)
    if free.any():
        bias = float(F[free].mean())
    else:
        up = ((y > 0) & (alpha < upper)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < upper))
        hi = F[up].max() if up.any() else F[low].min()
        lo = F[low].min() if low.any() else hi
        bias = float((hi + lo) / 2)
    support = np.flatnonzero(alpha > 0)
    return BinarySvm(
        support_vectors=X[support].copy(),
        dual_coef=(alpha * y)[support],
        bias=bias,
        gamma=float(gamma),
        kernel=config.kernel,
        alpha=alpha,
        upper=upper,
        support=support,
        objective=objective,
        updates=updates,
        converged=converged,
    )


def _take_step(i, j, alpha, y, u, K, upper) -> bool:
    """Jointly optimise alpha_i, alpha_j (Platt's analytic two-variable step)."""
    ai, aj = alpha[i], alpha[j]
    ci, cj = upper[i], upper[j]
    s = y[i] * y[j]
    if s < 0:
        lo, hi = max(0.0, aj - ai), min(cj, ci + aj - ai)
    else:
        lo, hi = max(0.0, ai + aj - ci), min(cj, ai + aj)
    if hi <= lo:
        return False
    eta = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
    Ei, Ej = u[i] - y[i], u[j] - y[j]
    aj_new = _snap(min(max(aj + y[j] * (Ei - Ej) / eta, lo), hi), cj)
    ai_new = _snap(ai + s * (aj - aj_new), ci)
    if aj_new == aj and ai_new == ai:
        return False
    alpha[i], alpha[j] = ai_new, aj_new
    u += (ai_new - ai) * y[i] * K[:, i] + (aj_new - aj) * y[j] * K[:, j]
    return True


def _snap(a: float, c: float) -> float:
    # pin values within rounding distance of a box edge onto the edge
    if a <= 1e-12 * c:
        return 0.0
    if a >= c * (1.0 - 1e-12):
        return c
    return a


def kkt_violation(svm: BinarySvm, features, labels) -> np.ndarray:
    """Per-sample KKT violation in margin units (0 where satisfied)."""
    y = np.asarray(labels, dtype=np.float64)
    margin = y * svm.decision_function(features)
    a, c = svm.alpha, svm.upper
    at_zero = a <= 0
    at_upper = a >= c
    free = ~at_zero & ~at_upper
    v = np.zeros_like(margin)
    v[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    v[at_upper] = np.maximum(0.0, margin[at_upper] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return v


# ---------------------------------------------------------------------------
# multiclass


@dataclass
class SvmModel:
    classes: np.ndarray
    machines: list[BinarySvm]
    gamma: float
    n_features: int
    kernel: str = "rbf"

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(m.positive, m.negative) for m in self.machines]


def train_multiclass(features, labels, config: SvmConfig | None = None) -> SvmModel:
    """One-vs-one: one balanced binary machine per class pair."""
    config = config or SvmConfig()
    config.validate()
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DegenerateProblemError("at least two classes are needed")
    gamma = scale_gamma(X) if config.gamma == "scale" else float(config.gamma)
    machines = []
    for a, b in combinations(classes.tolist(), 2):
        mask = (labels == a) | (labels == b)
        y = np.where(labels[mask] == a, 1, -1)
        m = smo_train_binary(X[mask], y, config, gamma=gamma)
        m.positive, m.negative = a, b
        machines.append(m)
    return SvmModel(classes, machines, gamma, X.shape[1], config.kernel)


def svm_predict(model: SvmModel, features) -> tuple[np.ndarray, np.ndarray]:
    """Vote over all pairwise machines.

    Returns ``(labels, votes)`` with ``votes[:, k]`` the count for
    ``model.classes[k]``.  Ties go to the class with the largest summed
    |decision value| over the machines it won, then to the lowest class.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise InputError(f"expected {model.n_features} features, got {X.shape[1]}")
    index = {c: k for k, c in enumerate(model.classes.tolist())}
    n, k = len(X), len(model.classes)
    votes = np.zeros((n, k), dtype=np.int64)
    strength = np.zeros((n, k))
    rows = np.arange(n)
    for m in model.machines:
        f = m.decision_function(X)
        winner = np.where(f >= 0, index[m.positive], index[m.negative])
        votes[rows, winner] += 1
        strength[rows, winner] += np.abs(f)
    top = votes.max(axis=1, keepdims=True)
    tied_strength = np.where(votes == top, strength, -np.inf)
    # argmax returns the first (lowest) index among equal strengths
    best = tied_strength.argmax(axis=1)
    return model.classes[best], votes


def svm_class_scores(model: SvmModel, features) -> np.ndarray:
    """Continuous one-vs-rest score per class for ROC analysis.

    Mean signed decision value, oriented toward class k, over the K-1
    machines that involve k.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    index = {c: k for k, c in enumerate(model.classes.tolist())}
    scores = np.zeros((len(X), len(model.classes)))
    for m in model.machines:
        f = m.decision_function(X)
        scores[:, index[m.positive]] += f
        scores[:, index[m.negative]] -= f
    return scores / max(len(model.classes) - 1, 1)


def save_svm(model: SvmModel, path) -> None:
    arrays = {}
    machines = []
    for k, m in enumerate(model.machines):
        arrays[f"m{k}/support_vectors"] = m.support_vectors.reshape(-1, model.n_features)
        arrays[f"m{k}/dual_coef"] = m.dual_coef
        machines.append({"positive": int(m.positive), "negative": int(m.negative), "bias": m.bias})
    meta = {
        "classes": model.classes.tolist(),
        "gamma": model.gamma,
        "kernel": model.kernel,
        "n_features": model.n_features,
        "machines": machines,
    }
    write_container(path, SVM_MAGIC, SVM_VERSION, meta, arrays)


def load_svm(path) -> SvmModel:
    meta, arrays = read_container(path, SVM_MAGIC, SVM_VERSION)
    machines = []
    for k, info in enumerate(meta["machines"]):
        try:
            sv, coef = arrays[f"m{k}/support_vectors"], arrays[f"m{k}/dual_coef"]
        except KeyError:
            raise FormatError(f"machine {k} arrays missing from SVM file") from None
        machines.append(BinarySvm(sv, coef, info["bias"], meta["gamma"], meta["kernel"],
                                  info["positive"], info["negative"]))
    return SvmModel(np.asarray(meta["classes"], dtype=np.int64), machines, meta["gamma"], meta["n_features"],
                    meta["kernel"])


# ---------------------------------------------------------------------------
# PCA and decision regions


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n_components, d), orthonormal rows
    explained_variance: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) @ self.components + self.mean


def pca_fit(features, n_components: int) -> PcaModel:
    """Top eigenvectors of the sample covariance, first nonzero entry positive."""
    X = np.asarray(features, dtype=np.float64)
    n, d = X.shape
    if not 1 <= n_components <= min(n, d):
        raise ConfigurationError(f"n_components must lie in [1, {min(n, d)}], got {n_components}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:n_components]
    comps = vecs[:, order].T.copy()
    for row in comps:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return PcaModel(mean, comps, np.maximum(vals[order], 0.0))


def fit_region_classifier(features, labels, pca: PcaModel, config: SvmConfig | None = None) -> SvmModel:
    """Retrain the SVM on the 2-D projection used for decision-region plots."""
    if pca.components.shape[0] != 2:
        raise ConfigurationError("decision regions need a 2-component PCA")
    return train_multiclass(pca.transform(features), labels, config)


@dataclass
class RegionGrid:
    xs: np.ndarray
    ys: np.ndarray
    labels: np.ndarray  # (resolution, resolution), row = y index
    points: np.ndarray  # projected samples (n, 2)
    point_labels: np.ndarray
    point_predictions: np.ndarray

    def write_csv(self, grid_path, points_path) -> None:
        with open(grid_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "label"])
            for r, yv in enumerate(self.ys):
                for c, xv in enumerate(self.xs):
                    w.writerow([repr(float(xv)), repr(float(yv)), int(self.labels[r, c])])
        with open(points_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "label", "predicted"])
            for (xv, yv), lab, pred in zip(self.points, self.point_labels, self.point_predictions):
                w.writerow([repr(float(xv)), repr(float(yv)), int(lab), int(pred)])


def decision_region_grid(svm: SvmModel, pca: PcaModel, features, labels, bounds=None, resolution: int = 100) -> RegionGrid:
    """Label a resolution x resolution lattice of the PCA plane with a 2-D SVM."""
    if resolution < 1:
        raise ConfigurationError("resolution must be positive")
    if svm.n_features != 2 or pca.components.shape[0] != 2:
        raise ConfigurationError("decision regions need a 2-D SVM and a 2-component PCA")
    pts = pca.transform(features)
    if bounds is None:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.1 * np.maximum(hi - lo, 1e-9)
        bounds = (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])
    x0, x1, y0, y1 = bounds
    xs, ys = np.linspace(x0, x1, resolution), np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    grid_labels, _ = svm_predict(svm, np.column_stack([gx.ravel(), gy.ravel()]))
    preds, _ = svm_predict(svm, pts)
    return RegionGrid(xs, ys, grid_labels.reshape(resolution, resolution), pts,
                      np.asarray(labels).astype(np.int64), preds)
