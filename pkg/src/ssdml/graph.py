"""Exact kNN graph over embedded points, seed affinities and the Laplacian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import UNLABELED
from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class NeighborGraph:
    """Directed kNN graph: per node, k neighbor indices by ascending distance.

    Ties are broken toward the smaller index; a node never lists itself.
    """

    n: int
    k: int
    neighbors: np.ndarray  # (n, k) int64

    def __post_init__(self):
        object.__setattr__(self, "neighbors", np.asarray(self.neighbors, dtype=np.int64))
        if self.neighbors.shape != (self.n, self.k):
            raise ValueError("neighbors must be an (n, k) index matrix")


def build_knn(Z: np.ndarray, k: int) -> NeighborGraph:
    """Exact k nearest neighbors under squared Euclidean distance.

    Distances are computed from explicit row differences (no inner-product
    expansion) so duplicated points tie exactly; ties resolve to the
    smaller index via a stable sort.  Rows of Z are assumed to be the
    current embeddings; callers l2-normalize beforehand when required.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"k must satisfy 1 <= k < n (got k={k}, n={n})")
    neighbors = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        diff = Z - Z[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        d2[i] = np.inf  # exclude self
        order = np.argsort(d2, kind="stable")  # stable => ties to smaller index
        neighbors[i] = order[:k]
    return NeighborGraph(n=n, k=k, neighbors=neighbors)


def neighbor_matrix(graph: NeighborGraph) -> np.ndarray:
    """Row-stochastic neighborhood matrix: 1/k on each neighbor edge."""
    Q = np.zeros((graph.n, graph.n))
    rows = np.repeat(np.arange(graph.n), graph.k)
    Q[rows, graph.neighbors.ravel()] = 1.0 / graph.k
    return Q


def knn_adjacency(graph: NeighborGraph) -> np.ndarray:
    """Symmetric 0/1 adjacency: an edge wherever either direction links."""
    A = np.zeros((graph.n, graph.n))
    rows = np.repeat(np.arange(graph.n), graph.k)
    A[rows, graph.neighbors.ravel()] = 1.0
    return np.maximum(A, A.T)


def seed_affinity(node_labels: np.ndarray) -> np.ndarray:
    """Initial signed affinity matrix from the partition's labels.

    Entries: +1 on the diagonal, +1 for distinct same-class labeled pairs,
    -1 for labeled pairs of different classes, 0 whenever either node is
    unlabeled.  Node order must be labeled rows first, then unlabeled.
    """
    y = np.asarray(node_labels, dtype=np.int64)
    n = y.size
    labeled = y != UNLABELED
    W0 = np.zeros((n, n))
    both = np.outer(labeled, labeled)
    same = np.equal.outer(y, y)
    W0[both & same] = 1.0
    W0[both & ~same] = -1.0
    np.fill_diagonal(W0, 1.0)
    return W0


def laplacian(W: np.ndarray, sym_tol: float = 1e-12) -> np.ndarray:
    """Unnormalized graph Laplacian D - W (rows of the result sum to 0)."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    asym = np.abs(W - W.T).max() if W.size else 0.0
    if asym > sym_tol:
        raise NumericalError(f"W is asymmetric (max |W - W^T| = {asym:.3e})")
    return np.diag(W.sum(axis=1)) - W
