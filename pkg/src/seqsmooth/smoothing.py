"""Label initialization and symmetric-normalized label propagation.

Known labels seed the original nodes, synthetic nodes start at 0, and each
propagation step applies ``Y' = alpha * D^(-1/2) A D^(-1/2) Y + (1-alpha) * Y``
via sparse matrix-vector products. Known labels are not re-pinned between
steps unless ``clamp_known`` is set, so original labels drift with m >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import LatentGraph, SmoothingParams, degree_matrix, weighted_adjacency


@dataclass
class LabelVector:
    """Labels for all N graph nodes plus the mask of originally-known entries."""

    values: np.ndarray
    known_mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.known_mask = np.asarray(self.known_mask, dtype=bool)
        if self.values.shape != self.known_mask.shape:
            raise ValueError("values and known_mask must have the same length")


def init_labels(graph: LatentGraph) -> LabelVector:
    """Original nodes get their training label; synthetic nodes get 0."""
    values = np.where(graph.is_synthetic, 0.0, graph.labels)
    return LabelVector(values, ~graph.is_synthetic)


def propagate_step(adjacency: sp.csr_matrix, degrees: np.ndarray, labels: np.ndarray, alpha: float) -> np.ndarray:
    """One normalized propagation step, computed sparsely (no dense N x N)."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    inv_sqrt = 1.0 / np.sqrt(degrees)
    spread = inv_sqrt * (adjacency @ (inv_sqrt * labels))
    return alpha * spread + (1.0 - alpha) * labels


def smooth(graph: LatentGraph, params: SmoothingParams) -> LabelVector:
    """m propagation rounds over the initialized labels; returns all N labels."""
    init = init_labels(graph)
    values = init.values.copy()
    if params.m > 0:
        adjacency = weighted_adjacency(graph, params.gamma, params.eps_dist)
        degrees = degree_matrix(adjacency)
        for _ in range(params.m):
            values = propagate_step(adjacency, degrees, values, params.alpha)
            if params.clamp_known:
                values[init.known_mask] = init.values[init.known_mask]
    return LabelVector(values, init.known_mask)


def write_labels_csv(labels: LabelVector, graph: LatentGraph, path) -> None:
    """Dump ``node_index,is_synthetic,label`` rows for every node."""
    with open(path, "w") as fh:
        fh.write("node_index,is_synthetic,label\n")
        for idx, (value, synthetic) in enumerate(zip(labels.values, graph.is_synthetic)):
            fh.write(f"{idx},{int(synthetic)},{format(value, '.17g')}\n")
