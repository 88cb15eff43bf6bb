"""K-means and the two community detection algorithms.

``spectral_cluster`` clusters a weighted user graph through the
eigenvectors of its normalized Laplacian. ``lowrank_cluster`` clusters
nodes from the top eigenvectors of the raw covariance of observed graph
signals, and ``token_cluster`` runs it with users and tokens swapped.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .graph import laplacians
from .numlin import sample_covariance, sym_eig

log = logging.getLogger(__name__)

PAPER_LITERAL = "paper-literal"
SMALLEST_EIG = "smallest-eig"
MODES = (PAPER_LITERAL, SMALLEST_EIG)

N_RESTARTS = 10
MAX_ITER = 300


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int
    distortion: float
    seed: int
    mode: str = "kmeans"
    flags: List[str] = field(default_factory=list)

    def members(self, community: int) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.labels == community)]

    def sizes(self) -> List[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()


def _sq_dists(X, C):
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = _sq_dists(X, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        d2 = np.minimum(d2, _sq_dists(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def _sse(X, labels, k):
    C = np.array([X[labels == j].mean(axis=0) for j in range(k)])
    return float(((X - C[labels]) ** 2).sum()), C


def _fill_empty(X, labels, k):
    """Move far-from-centroid points into empty clusters until none remain."""
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if not empty.size:
            return labels
        C = np.zeros((k, X.shape[1]))
        for j in np.flatnonzero(counts):
            C[j] = X[labels == j].mean(axis=0)
        d2 = ((X - C[labels]) ** 2).sum(axis=1)
        d2[counts[labels] < 2] = -1.0
        labels[int(np.argmax(d2))] = empty[0]


def _lloyd(X, k, rng, callback=None):
    C = _plusplus(X, k, rng)
    labels = None
    for it in range(MAX_ITER):
        d2 = _sq_dists(X, C)
        new = np.argmin(d2, axis=1)
        dist = float(d2[np.arange(len(X)), new].sum())
        if callback is not None:
            callback(it, dist)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        point_d2 = d2[np.arange(len(X)), labels]
        taken = set()
        for j in range(k):
            mask = labels == j
            if mask.any():
                C[j] = X[mask].mean(axis=0)
            else:
                # reseed at the point farthest from its centroid
                order = np.argsort(-point_d2, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                C[j] = X[pick]
    labels = _fill_empty(X, labels, k)
    return labels


def relabel_by_appearance(labels):
    """Renumber communities in order of first appearance (node 0 -> 0)."""
    mapping = {}
    for lab in labels:
        mapping.setdefault(int(lab), len(mapping))
    return np.array([mapping[int(lab)] for lab in labels], dtype=np.int64)


def kmeans(points, k: int, seed: int = 0, n_init: int = N_RESTARTS,
           callback: Optional[Callable[[int, float], None]] = None) -> ClusterAssignment:
    """Lloyd's algorithm from k-means++ seeds, best of ``n_init`` restarts.

    Restart r uses ``numpy.random.default_rng(seed + r)``; the lowest
    distortion wins, ties going to the earliest restart. ``callback`` is
    called with (iteration, distortion) after every assignment step.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k <= 0:
        raise ValidationError("k must be >= 1")
    if k > n:
        raise ValidationError(f"k={k} exceeds the number of points n={n}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("points must be finite")
    best = None
    for r in range(n_init):
        labels = _lloyd(X, k, np.random.default_rng(seed + r), callback)
        dist, _ = _sse(X, labels, k)
        if best is None or dist < best[0]:
            best = (dist, labels)
    return ClusterAssignment(relabel_by_appearance(best[1]), k, best[0], seed)


@dataclass
class Embedding:
    points: np.ndarray
    eigenvalues: np.ndarray


def spectral_embedding(W, k: int, mode: str = SMALLEST_EIG, pseudo_degree: bool = False):
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if k < 2:
        raise ValidationError("spectral clustering needs k >= 2")
    if k > n:
        raise ValidationError(f"k={k} exceeds the number of nodes n={n}")
    bundle = laplacians(W, pseudo_degree=pseudo_degree)
    eig = sym_eig(bundle.Lnorm)
    if mode == PAPER_LITERAL:
        cols = np.arange(k)
    else:
        cols = np.arange(n - 1, n - 1 - k, -1)
    X = eig.vectors[:, cols]
    norms = np.linalg.norm(X, axis=1)
    flags = []
    if bundle.has_isolated:
        flags.append("isolated-nodes")
    zero = norms <= 1e-12
    if zero.any():
        flags.append("zero-embedding-rows")
        log.warning("%d node(s) orthogonal to the chosen eigenspace", int(zero.sum()))
    Y = np.zeros_like(X)
    Y[~zero] = X[~zero] / norms[~zero, None]
    return Embedding(Y, eig.values[cols]), flags


def spectral_cluster(W, k: int, seed: int = 0, mode: str = SMALLEST_EIG,
                     pseudo_degree: bool = False) -> Tuple[ClusterAssignment, Embedding]:
    """Cluster a weighted graph on row-normalized Laplacian eigenvectors.

    ``smallest-eig`` uses the eigenvectors of the k smallest eigenvalues
    of D^-1/2 L D^-1/2; ``paper-literal`` uses the k largest.
    """
    emb, flags = spectral_embedding(W, k, mode, pseudo_degree)
    result = kmeans(emb.points, k, seed)
    result.mode = mode
    result.flags = flags
    return result, emb


def lowrank_embedding(signals, K: int, center: bool = False) -> Embedding:
    Y = np.asarray(signals, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    N = Y.shape[0]
    if K < 1 or K > N:
        raise ValidationError(f"K must be in [1, {N}], got {K}")
    eig = sym_eig(sample_covariance(Y, center=center))
    return Embedding(eig.vectors[:, :K], eig.values[:K])


def lowrank_cluster(signals, K: int, seed: int = 0,
                    center: bool = False) -> Tuple[ClusterAssignment, Embedding]:
    """Cluster the N rows of the top-K covariance eigenvectors.

    ``signals`` is N x T, one column per observed instance. Rows of the
    eigenvector matrix go to k-means as they are, with no renormalization.
    """
    emb = lowrank_embedding(signals, K, center)
    result = kmeans(emb.points, K, seed)
    result.mode = "lowrank"
    return result, emb


def token_cluster(att, K: int, seed: int = 0,
                  center: bool = False) -> Tuple[ClusterAssignment, Embedding]:
    """Cluster tokens: each user's holdings row becomes one signal over tokens."""
    A = getattr(att, "A", att)
    result, emb = lowrank_cluster(np.asarray(A, dtype=float).T, K, seed, center)
    result.mode = "lowrank-tokens"
    return result, emb


ALG1 = "alg1"
ALG2 = "alg2"


@dataclass
class ElbowResult:
    k_star: int
    curve: List[Tuple[int, float]]
    degenerate: bool = False


def elbow_point(ks: Sequence[int], distortions: Sequence[float]) -> Tuple[int, bool]:
    """Interior k with the largest discrete second difference.

    Returns (k, degenerate); a curve with no second difference above 1e-12
    is degenerate and yields the first interior k.
    """
    ks = list(ks)
    d = np.asarray(distortions, dtype=float)
    if len(ks) < 3 or len(ks) != len(d):
        raise ValidationError("elbow needs at least three (k, distortion) points")
    second = d[:-2] - 2 * d[1:-1] + d[2:]
    if np.all(second <= 1e-12):
        return ks[1], True
    return ks[1 + int(np.argmax(second))], False


def elbow_select(data, k_range: Sequence[int], seed: int = 0, method: str = ALG1,
                 mode: str = SMALLEST_EIG, center: bool = False) -> ElbowResult:
    """Run the chosen algorithm for every k and pick the knee.

    ``data`` is a weight matrix for ``alg1`` or an N x T signal array for
    ``alg2``.
    """
    ks = list(k_range)
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if len(ks) < 3:
        raise ValidationError("k range must contain at least three values")
    if min(ks) < 2 or max(ks) > n - 1:
        raise ValidationError(f"k range must lie within [2, {n - 1}]")
    curve = []
    if method == ALG1:
        for k in ks:
            res, _ = spectral_cluster(data, k, seed, mode)
            curve.append((k, res.distortion))
    elif method == ALG2:
        # one eigendecomposition serves every k
        emb = lowrank_embedding(data, max(ks), center)
        for k in ks:
            curve.append((k, kmeans(emb.points[:, :k], k, seed).distortion))
    else:
        raise ValidationError(f"unknown elbow method {method!r}")
    k_star, degenerate = elbow_point(ks, [c for _, c in curve])
    return ElbowResult(k_star, curve, degenerate)
