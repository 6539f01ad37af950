"""Triplet mining from sorted neighborhoods of the propagated affinities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import NeighborGraph


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int


def sorted_neighborhood(W: np.ndarray, graph: NeighborGraph, anchor: int) -> np.ndarray:
    """The anchor's k graph neighbors, by descending propagated affinity.

    Affinity ties break toward the smaller node index.
    """
    nbrs = graph.neighbors[anchor]
    affinities = W[anchor, nbrs]
    # lexsort keys are least significant first: index ascending, then
    # affinity descending.
    order = np.lexsort((nbrs, -affinities))
    return nbrs[order]


def mine_triplets(W: np.ndarray, graph: NeighborGraph, anchors=None) -> list[Triplet]:
    """Pair the top half of each sorted neighborhood against the bottom half.

    The rank-i entry becomes the positive and the rank-(k/2+i) entry the
    negative of one triplet, giving k/2 triplets per anchor.
    """
    if graph.k % 2 != 0:
        raise ConfigError(f"triplet mining needs an even k (got {graph.k})")
    if anchors is None:
        anchors = range(graph.n)
    half = graph.k // 2
    triplets = []
    for a in anchors:
        ranked = sorted_neighborhood(W, graph, a)
        for i in range(half):
            triplets.append(Triplet(int(a), int(ranked[i]), int(ranked[half + i])))
    return triplets


def batch_triplets(triplets, batch_size: int, seed=0, epoch: int = 0):
    """Shuffle triplets and chunk them into batches of `batch_size`.

    The shuffle seed is derived from (seed, epoch) so every epoch gets a
    fresh deterministic order; only the final batch may come up short.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if not triplets:
        raise ConfigError("no triplets mined; cannot form batches")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), epoch]))
    order = rng.permutation(len(triplets))
    shuffled = [triplets[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


def triplet_index_array(batch) -> np.ndarray:
    """(T, 3) int array of (anchor, positive, negative) node indices."""
    return np.array([[t.anchor, t.positive, t.negative] for t in batch], dtype=np.int64)
