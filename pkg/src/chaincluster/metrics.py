"""Silhouette, modularity and recovery rate."""
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .graph import validate_weights


@dataclass
class MetricReport:
    silhouette: float
    modularity: float
    recovery: Optional[float] = None
    silhouette_space: str = "embedding"

    def to_json(self):
        return asdict(self)


def _labels(x):
    labels = getattr(x, "labels", x)
    return np.asarray(labels).astype(np.int64).ravel()


def silhouette(points, labels) -> float:
    """Mean silhouette with Euclidean distances.

    Singleton clusters score 0, as does a point with a = b = 0.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lab = _labels(labels)
    if len(lab) != X.shape[0]:
        raise ValidationError("labels and points differ in length")
    uniq, lab = np.unique(lab, return_inverse=True)
    k = len(uniq)
    if k < 2:
        raise ValidationError("silhouette needs at least two clusters")
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
    onehot = np.eye(k)[lab]
    sums = D @ onehot                       # n x k: total distance to each cluster
    counts = onehot.sum(axis=0)
    own = counts[lab]
    idx = np.arange(len(lab))
    a = np.where(own > 1, sums[idx, lab] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[idx, lab] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own == 1] = 0.0
    return float(s.mean())


def modularity(W, labels, unweighted: bool = False) -> float:
    """Weighted Newman-Girvan modularity."""
    W = validate_weights(W)
    if unweighted:
        W = (W > 0).astype(float)
    lab = _labels(labels)
    if len(lab) != W.shape[0]:
        raise ValidationError("labels and weight matrix differ in size")
    two_m = W.sum()
    if two_m <= 0:
        raise ValidationError("graph has zero total weight")
    _, lab = np.unique(lab, return_inverse=True)
    onehot = np.eye(lab.max() + 1)[lab]
    inside = np.einsum("ic,ij,jc->c", onehot, W, onehot)
    tot = onehot.T @ W.sum(axis=1)
    return float(np.sum(inside / two_m - (tot / two_m) ** 2))


def confusion(pred, truth):
    p, t = _labels(pred), _labels(truth)
    if len(p) != len(t):
        raise ValidationError(f"node sets differ: {len(p)} predicted vs {len(t)} true labels")
    _, p = np.unique(p, return_inverse=True)
    _, t = np.unique(t, return_inverse=True)
    M = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(M, (p, t), 1)
    return M


def recovery_rate(pred, truth) -> float:
    """Fraction of nodes matched under the best label correspondence."""
    M = confusion(pred, truth)
    rows, cols = linear_sum_assignment(M, maximize=True)
    return float(M[rows, cols].sum()) / float(M.sum())
