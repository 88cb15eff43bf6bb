"""Weighted user graph and Laplacian constructions."""
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, List, Set

import numpy as np

from .errors import ValidationError
from .ingest_btc import AddressPartition, TxRecord

SYM_RTOL = 1e-10


@dataclass
class UserGraph:
    nodes: List[int]
    amounts: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return len(self.nodes)

    def edges(self):
        """(i, j, a_ij, w_ij) for i < j with a nonzero amount."""
        iu, ju = np.nonzero(np.triu(self.amounts, 1))
        return [(int(i), int(j), float(self.amounts[i, j]), float(self.weights[i, j]))
                for i, j in zip(iu, ju)]

    def to_json(self):
        return {
            "nodes": list(self.nodes),
            "edges": [{"i": i, "j": j, "source": self.nodes[i], "target": self.nodes[j],
                       "amount": a, "weight": w} for i, j, a, w in self.edges()],
        }


def normalize_weights(amounts):
    """w_ij = a_ij / max a_ij (all zeros stay zero)."""
    amounts = np.asarray(amounts, dtype=float)
    top = amounts.max() if amounts.size else 0.0
    if top <= 0:
        return np.zeros_like(amounts)
    return amounts / top


def _flows(tx: TxRecord, partition: AddressPartition):
    """Yield (sender, receiver, amount) between distinct super-addresses.

    Each output is split over the input super-addresses in proportion to
    their input sums (equal split when all inputs are zero).
    """
    if not tx.inputs:
        return
    in_sums = defaultdict(int)
    for a, v in tx.inputs:
        in_sums[partition.label(a)] += v
    total = sum(in_sums.values())
    senders = sorted(in_sums)
    if total > 0:
        shares = {u: in_sums[u] / total for u in senders}
    else:
        shares = {u: 1.0 / len(senders) for u in senders}
    for a, v in tx.outputs:
        receiver = partition.label(a)
        for u in senders:
            if u != receiver and shares[u] > 0:
                yield u, receiver, v * shares[u]


def build_user_graph(txs: Iterable[TxRecord], partition: AddressPartition,
                     surviving: Set[int]) -> UserGraph:
    """Accumulate the historical amount between surviving super-addresses.

    Amounts flowing in both directions are summed into one symmetric
    entry. Surviving users without any edge are dropped from the node list.
    """
    if not surviving:
        raise ValidationError("filter removed all nodes")
    totals = defaultdict(float)
    for tx in txs:
        for u, v, amount in _flows(tx, partition):
            if u in surviving and v in surviving and amount > 0:
                key = (u, v) if u < v else (v, u)
                totals[key] += amount
    if not totals:
        raise ValidationError("empty graph")
    nodes = sorted({u for key in totals for u in key})
    index = {u: i for i, u in enumerate(nodes)}
    A = np.zeros((len(nodes), len(nodes)))
    for (u, v), amount in totals.items():
        A[index[u], index[v]] = A[index[v], index[u]] = amount
    return UserGraph(nodes, A, normalize_weights(A))


@dataclass
class LaplacianBundle:
    D: np.ndarray
    L: np.ndarray
    Lnorm: np.ndarray
    isolated: np.ndarray  # indices of zero-degree nodes

    @property
    def has_isolated(self):
        return self.isolated.size > 0


def validate_weights(W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"weight matrix must be square, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValidationError("weight matrix has non-finite entries")
    if (W < 0).any():
        raise ValidationError("weight matrix has negative entries")
    scale = max(np.abs(W).max(), np.finfo(float).tiny) if W.size else 1.0
    if W.size and np.abs(W - W.T).max() > SYM_RTOL * scale:
        raise ValidationError("weight matrix is not symmetric")
    return W


def laplacians(W, pseudo_degree: bool = False) -> LaplacianBundle:
    """D, L = D - W and D^-1/2 L D^-1/2.

    Zero-degree nodes are rejected unless ``pseudo_degree`` is set, in
    which case their D^-1/2 entry is taken as 0 and they are reported in
    ``isolated``.
    """
    W = validate_weights(W)
    if np.any(np.diag(W) != 0):
        raise ValidationError("weight matrix must have a zero diagonal")
    deg = W.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size and not pseudo_degree:
        raise ValidationError(f"{isolated.size} isolated node(s); enable pseudo_degree")
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    D = np.diag(deg)
    L = D - W
    Lnorm = inv_sqrt[:, None] * L * inv_sqrt[None, :]
    return LaplacianBundle(D, L, 0.5 * (Lnorm + Lnorm.T), isolated)


def combinatorial_laplacian(adjacency):
    A = np.asarray(adjacency, dtype=float)
    return np.diag(A.sum(axis=1)) - A
