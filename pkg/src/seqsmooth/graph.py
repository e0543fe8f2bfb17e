"""Latent graph construction: synthetic node interpolation, kNN edges, adjacency.

Synthetic nodes are drawn by interpolating an existing node with Gaussian
noise, ``z = beta * xbar + (1 - beta) * eps``, until the graph holds the
target node count. Edges are the union of every node's k nearest neighbors
by Euclidean distance (brute force, squared-distance comparisons, ties broken
by lower node index), symmetrized into undirected pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .vae import LatentVector

_KNN_BLOCK = 256


@dataclass(frozen=True)
class GraphNode:
    """One latent node; originals carry their training label."""

    coords: np.ndarray
    is_synthetic: bool
    known_label: float | None = None

    def __post_init__(self):
        if self.is_synthetic != (self.known_label is None):
            raise ValueError("known_label must be present exactly for original nodes")


@dataclass
class SmoothingParams:
    """Knobs for graph construction and label propagation.

    Defaults follow the reference setting: 20000 nodes, alpha 0.2, gamma 1.0,
    one propagation layer, 8 neighbors, interpolation beta 0.5.
    """

    n_nodes: int = 20000
    beta: float = 0.5
    k: int = 8
    gamma: float = 1.0
    alpha: float = 0.2
    m: int = 1
    eps_dist: float = 1e-8
    seed: int = 0
    sample_from: str = "all"  # "all" draws parents from the growing node set
    clamp_known: bool = False  # re-pin original labels between propagation steps

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.m < 0:
            raise ValueError("m must be non-negative")
        if self.eps_dist <= 0:
            raise ValueError("eps_dist must be positive")
        if self.sample_from not in ("all", "originals"):
            raise ValueError(f"sample_from must be 'all' or 'originals', got {self.sample_from!r}")


@dataclass
class LatentGraph:
    """N latent nodes (originals first) with undirected weighted kNN edges."""

    coords: np.ndarray  # (N, d)
    is_synthetic: np.ndarray  # (N,) bool
    labels: np.ndarray  # (N,) float, NaN on synthetic nodes
    edges_i: np.ndarray  # (E,) int, i < j
    edges_j: np.ndarray
    edge_dist: np.ndarray  # (E,) Euclidean distances

    def __post_init__(self):
        n = self.coords.shape[0]
        if np.any(self.edges_i >= self.edges_j):
            raise ValueError("edges must be canonical pairs with i < j")
        degree = np.bincount(self.edges_i, minlength=n) + np.bincount(self.edges_j, minlength=n)
        if n > 1 and degree.min() < 1:
            raise ValueError("every node must have degree >= 1")

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_original(self) -> int:
        return int((~self.is_synthetic).sum())

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def node(self, index: int) -> GraphNode:
        synthetic = bool(self.is_synthetic[index])
        return GraphNode(
            coords=self.coords[index].copy(),
            is_synthetic=synthetic,
            known_label=None if synthetic else float(self.labels[index]),
        )


def _coords_of(nodes) -> np.ndarray:
    if isinstance(nodes, np.ndarray):
        return np.asarray(nodes, dtype=float)
    first = nodes[0]
    if isinstance(first, GraphNode):
        return np.array([n.coords for n in nodes], dtype=float)
    if isinstance(first, LatentVector):
        return np.array([n.values for n in nodes], dtype=float)
    return np.asarray(nodes, dtype=float)


def _nearest_k(d2: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries ordered by (value, index).

    Ties at the k-th value are resolved toward lower indices. Entries set to
    +inf (e.g. the query itself) are never selected.
    """
    kth = np.partition(d2, k - 1)[k - 1]
    less = np.nonzero(d2 < kth)[0]
    eq = np.nonzero(d2 == kth)[0]
    sel = np.concatenate([less, eq[: k - less.size]])
    return sel[np.lexsort((sel, d2[sel]))]


def knn(index: int, nodes, k: int) -> list[tuple[int, int]]:
    """Edges from ``index`` to its k nearest nodes by Euclidean distance.

    Returns (index, neighbor) pairs ordered by increasing distance, with
    distance ties broken by lower neighbor index. Deterministic.
    """
    coords = _coords_of(nodes)
    n = coords.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the node count {n}")
    diff = coords - coords[index]
    d2 = np.einsum("nd,nd->n", diff, diff)
    d2[index] = np.inf
    return [(index, int(j)) for j in _nearest_k(d2, k)]


def _knn_neighbors_all(coords: np.ndarray, k: int) -> np.ndarray:
    """Neighbor index matrix (n, k) for every node, blockwise brute force."""
    n = coords.shape[0]
    sq = np.einsum("nd,nd->n", coords, coords)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _KNN_BLOCK):
        stop = min(start + _KNN_BLOCK, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (coords[start:stop] @ coords.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        rows = np.arange(stop - start)
        kth = d2[rows[:, None], part].max(axis=1)
        # Rows where an unselected entry ties the k-th value need the exact rule.
        total_eq = (d2 == kth[:, None]).sum(axis=1)
        sel_eq = (d2[rows[:, None], part] == kth[:, None]).sum(axis=1)
        for r in np.nonzero(total_eq != sel_eq)[0]:
            part[r] = _nearest_k(d2[r], k)
        out[start:stop] = part
    return out


def create_graph(train_embeddings, labels, params: SmoothingParams) -> LatentGraph:
    """Originals plus interpolated synthetic nodes, joined by symmetrized kNN.

    Parents for synthetic nodes are drawn uniformly from the current node set
    (so synthetics can seed later synthetics); ``params.sample_from ==
    'originals'`` restricts parents to training nodes.
    """
    x = _coords_of(train_embeddings)
    labels = np.asarray(labels, dtype=float)
    n_train, dim = x.shape
    if n_train < 1:
        raise ValueError("need at least one training embedding")
    if labels.shape != (n_train,):
        raise ValueError(f"labels shape {labels.shape} != ({n_train},)")
    if params.n_nodes < n_train:
        raise ValueError(f"n_nodes={params.n_nodes} is below the training count {n_train}")
    if params.k >= params.n_nodes:
        raise ValueError(f"k={params.k} must be smaller than n_nodes={params.n_nodes}")

    n = params.n_nodes
    coords = np.empty((n, dim))
    coords[:n_train] = x
    rng = np.random.default_rng(params.seed)
    for t in range(n_train, n):
        pool = t if params.sample_from == "all" else n_train
        parent = int(rng.integers(0, pool))
        eps = rng.standard_normal(dim)
        coords[t] = params.beta * coords[parent] + (1.0 - params.beta) * eps

    neighbors = _knn_neighbors_all(coords, params.k)
    src = np.repeat(np.arange(n, dtype=np.int64), params.k)
    dst = neighbors.ravel()
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    key = np.unique(lo * np.int64(n) + hi)
    edges_i = key // n
    edges_j = key % n
    edge_dist = np.sqrt(np.einsum("ed,ed->e", coords[edges_i] - coords[edges_j], coords[edges_i] - coords[edges_j]))

    is_synthetic = np.arange(n) >= n_train
    full_labels = np.full(n, np.nan)
    full_labels[:n_train] = labels
    return LatentGraph(coords, is_synthetic, full_labels, edges_i, edges_j, edge_dist)


def weighted_adjacency(graph: LatentGraph, gamma: float, eps_dist: float) -> sp.csr_matrix:
    """Sparse symmetric adjacency with weights gamma / max(distance, eps_dist)."""
    if gamma <= 0 or eps_dist <= 0:
        raise ValueError("gamma and eps_dist must be positive")
    w = gamma / np.maximum(graph.edge_dist, eps_dist)
    rows = np.concatenate([graph.edges_i, graph.edges_j])
    cols = np.concatenate([graph.edges_j, graph.edges_i])
    data = np.concatenate([w, w])
    n = graph.n_nodes
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def degree_matrix(adjacency: sp.csr_matrix) -> np.ndarray:
    """Diagonal of the degree matrix (row sums); errors on zero-degree rows."""
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    if np.any(degrees <= 0):
        bad = int(np.nonzero(degrees <= 0)[0][0])
        raise ValueError(f"node {bad} has zero degree; cannot normalize")
    return degrees


def write_graph_dump(graph: LatentGraph, path) -> None:
    """Line-oriented debug dump: node and edge records."""
    with open(path, "w") as fh:
        for idx in range(graph.n_nodes):
            label = "-" if graph.is_synthetic[idx] else format(graph.labels[idx], ".17g")
            coords = " ".join(format(v, ".17g") for v in graph.coords[idx])
            fh.write(f"node {idx} {int(graph.is_synthetic[idx])} {label} {coords}\n")
        for i, j, dist in zip(graph.edges_i, graph.edges_j, graph.edge_dist):
            fh.write(f"edge {i} {j} {format(dist, '.17g')}\n")
