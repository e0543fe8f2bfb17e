"""Design-set evaluation: normalized fitness, diversity, and novelty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FitnessRange, LabeledDataset, levenshtein_one_to_many, normalize_fitness
from .mbo import DesignSet
from .oracle import ExactOracle


@dataclass
class MetricsReport:
    """Median normalized fitness, median pairwise and min-to-train distances."""

    fitness: float
    diversity: float
    novelty: float
    k_effective: int


def evaluate_designs(
    designs: DesignSet,
    oracle: ExactOracle,
    train: LabeledDataset,
    fitness_range: FitnessRange,
) -> MetricsReport:
    """Score a design set against the oracle and the training sequences.

    Fitness is the median min-max-normalized oracle score. Diversity is the
    median edit distance over all unordered design pairs (0 for a singleton
    set, the collapsed-population convention). Novelty is the median over
    designs of the minimum edit distance to any training sequence.
    """
    if len(designs) == 0:
        raise ValueError("design set must be non-empty")
    seqs = designs.sequences()
    matrix = np.array([s.indices for s in seqs], dtype=np.int64)
    raw = oracle.fitness_many(matrix)
    fitness = float(np.median([normalize_fitness(float(y), fitness_range) for y in raw]))

    if len(seqs) == 1:
        diversity = 0.0
    else:
        pair_dists = []
        for i in range(len(seqs) - 1):
            pair_dists.append(levenshtein_one_to_many(seqs[i], matrix[i + 1 :]))
        diversity = float(np.median(np.concatenate(pair_dists)))

    novelty = float(
        np.median([levenshtein_one_to_many(s, train.matrix).min() for s in seqs])
    )
    return MetricsReport(fitness, diversity, novelty, len(designs))


def mean_absolute_error(predictions: np.ndarray, truth: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predictions.shape != truth.shape:
        raise ValueError("prediction/truth shape mismatch")
    return float(np.abs(predictions - truth).mean())
