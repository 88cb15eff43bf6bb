"""Planted-partition benchmark with low-rank filtered excitation.

Random streams: every draw comes from ``numpy.random.PCG64`` seeded by
``SeedSequence(seed, spawn_key=(purpose, instance))``. Purposes are
fixed integers (graph 0, lead nodes 1, selection matrix 2, excitation 3,
noise 4), so changing T, sigma or any other knob never shifts the draws
used by the others; instance t of a run with T=1000 draws the same
excitation and noise as instance t of the same run with T=10.
"""
import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .cluster import ClusterAssignment
from .errors import ValidationError
from .graph import combinatorial_laplacian
from .numlin import sym_eig

GRAPH, LEADS, SELECTION, EXCITATION, NOISE = range(5)


def stream(seed, purpose, instance=0):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(purpose, instance))))


@dataclass(frozen=True)
class SynthSpec:
    N: int = 150
    K: int = 5
    Pa: float = 0.89
    Pb: float = 0.11
    R: int = 15
    L: int = 3
    alpha: Optional[float] = None   # None -> 0.9 / lambda_max(S)
    sigma: float = 0.0
    T: int = 1000
    seed: int = 0

    def validate(self):
        if self.N < 1 or self.K < 1 or self.K > self.N:
            raise ValidationError("need 1 <= K <= N")
        if not (0 <= self.Pb < self.Pa <= 1) and not (self.Pa == self.Pb == 0):
            raise ValidationError("need 0 <= Pb < Pa <= 1")
        if not 1 <= self.R <= self.N:
            raise ValidationError("need 1 <= R <= N")
        if self.L < 1:
            raise ValidationError("filter order L must be >= 1")
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")
        if self.T < 1:
            raise ValidationError("T must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")
        return self

    def with_(self, **changes):
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, values):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ValidationError(f"unknown synth parameter {key!r}")
            if raw is None:
                continue
            cast = {"N": int, "K": int, "R": int, "L": int, "T": int, "seed": int}.get(key, float)
            kwargs[key] = cast(raw)
        return cls(**kwargs).validate()


def community_sizes(N, K):
    return [N // K + (1 if c < N % K else 0) for c in range(K)]


def planted_labels(N, K):
    return np.repeat(np.arange(K), community_sizes(N, K))


def gen_planted_partition(spec: SynthSpec):
    """Adjacency matrix and ground-truth labels of G(N, K, Pa, Pb)."""
    spec.validate()
    labels = planted_labels(spec.N, spec.K)
    rng = stream(spec.seed, GRAPH)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.Pa, spec.Pb)
    draws = rng.random((spec.N, spec.N))
    upper = np.triu(draws < prob, 1)
    A = (upper | upper.T).astype(float)
    flags = [] if A.any() else ["empty-graph"]
    return A, ClusterAssignment(labels, spec.K, 0.0, spec.seed, "truth", flags)


def apply_graph_filter(S, alpha, L_order, z):
    """(I - alpha S)^(L_order - 1) z by repeated multiplication.

    ``z`` may be a vector or an N x T block of column signals.
    """
    S = np.asarray(S, dtype=float)
    z = np.asarray(z, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError("S must be square")
    if z.shape[0] != S.shape[0]:
        raise ValidationError(f"dimension mismatch: S is {S.shape}, z has {z.shape[0]} rows")
    if L_order < 1:
        raise ValidationError("L_order must be >= 1")
    x = z.copy()
    for _ in range(L_order - 1):
        x = x - alpha * (S @ x)
    return x


def default_alpha(S):
    lam = sym_eig(S).values[0]
    return 0.9 / lam if lam > 0 else 0.0


def ones_per_row(R, mean_degree, N):
    """max(1, round(R d / N)), rounding halves up, capped at R."""
    return int(min(R, max(1, math.floor(R * mean_degree / N + 0.5))))


def choose_leads(labels, R, K, rng):
    """R distinct lead nodes; one per community first when R >= K."""
    N = len(labels)
    chosen = []
    if R >= K:
        for c in range(K):
            members = np.flatnonzero(labels == c)
            chosen.append(int(rng.choice(members)))
    rest = np.setdiff1d(np.arange(N), chosen)
    chosen.extend(int(i) for i in rng.choice(rest, size=R - len(chosen), replace=False))
    return np.sort(np.array(chosen, dtype=np.int64))


def selection_matrix(N, leads, R, per_row, rng):
    B = np.zeros((N, R))
    for node in leads:
        B[node, rng.choice(R, size=per_row, replace=False)] = 1.0
    return B


def signals_from(S, B, alpha, L_order, T, sigma, seed):
    """Y = H(S) B alpha_t + w_t for t = 0..T-1, as an N x T array."""
    N, R = B.shape
    Z = np.empty((N, T))
    for t in range(T):
        Z[:, t] = B @ stream(seed, EXCITATION, t).standard_normal(R)
    X = apply_graph_filter(S, alpha, L_order, Z)
    if sigma > 0:
        W = np.empty((N, T))
        for t in range(T):
            W[:, t] = stream(seed, NOISE, t).standard_normal(N)
        X = X + sigma * W
    return X


@dataclass
class SynthData:
    Y: np.ndarray
    truth: ClusterAssignment
    B: np.ndarray
    adjacency: np.ndarray
    S: np.ndarray
    alpha: float
    leads: np.ndarray


def gen_signals(spec: SynthSpec) -> SynthData:
    spec.validate()
    A, truth = gen_planted_partition(spec)
    S = combinatorial_laplacian(A)
    alpha = default_alpha(S) if spec.alpha is None else spec.alpha
    mean_degree = A.sum() / spec.N
    leads = choose_leads(truth.labels, spec.R, spec.K, stream(spec.seed, LEADS))
    B = selection_matrix(spec.N, leads, spec.R,
                         ones_per_row(spec.R, mean_degree, spec.N), stream(spec.seed, SELECTION))
    Y = signals_from(S, B, alpha, spec.L, spec.T, spec.sigma, spec.seed)
    return SynthData(Y, truth, B, A, S, alpha, leads)
