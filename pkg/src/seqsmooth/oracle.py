"""Exact fitness oracles for benchmarking: NK landscapes and lookup tables.

These oracles are evaluation-only: nothing in the graph, smoothing, or MBO
modules imports this one, so optimization can never query ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .data import Alphabet, LabeledDataset, Sequence


@dataclass
class NkLandscape:
    """Tunable-ruggedness landscape with circular-adjacent epistasis.

    Fitness of a sequence is the mean over sites i of a per-site table lookup
    keyed by the symbols at positions i..i+K (mod L); table entries are
    uniform [0, 1], so fitness lies in [0, 1].
    """

    length: int
    alphabet_size: int
    k: int
    seed: int
    tables: np.ndarray  # (L, alphabet_size ** (k + 1))

    def fitness_many(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.int64)
        if matrix.ndim != 2 or matrix.shape[1] != self.length:
            raise ValueError(f"expected (n, {self.length}) index matrix, got {matrix.shape}")
        total = np.zeros(matrix.shape[0])
        for site in range(self.length):
            key = np.zeros(matrix.shape[0], dtype=np.int64)
            for offset in range(self.k + 1):
                key = key * self.alphabet_size + matrix[:, (site + offset) % self.length]
            total += self.tables[site, key]
        return total / self.length

    def fitness_of(self, seq: Sequence) -> float:
        return float(self.fitness_many(np.array([seq.indices]))[0])


@dataclass
class TableOracle:
    """Exact lookup over a fully enumerated design space."""

    length: int
    mapping: dict

    def fitness_of(self, seq: Sequence) -> float:
        try:
            return self.mapping[seq.indices]
        except KeyError:
            raise ValueError(f"sequence {seq.indices} not covered by the table oracle") from None

    def fitness_many(self, matrix: np.ndarray) -> np.ndarray:
        return np.array([self.fitness_of(Sequence.from_array(row)) for row in matrix])


ExactOracle = Union[NkLandscape, TableOracle]


def nk_landscape(length: int, alphabet_size: int, k: int, seed: int) -> NkLandscape:
    """Draw per-site contribution tables from ``seed``; deterministic."""
    if length < 1 or alphabet_size < 2:
        raise ValueError("need length >= 1 and alphabet_size >= 2")
    if not 0 <= k < length:
        raise ValueError(f"need 0 <= K < L, got K={k}, L={length}")
    rng = np.random.default_rng(seed)
    tables = rng.random((length, alphabet_size ** (k + 1)))
    return NkLandscape(length, alphabet_size, k, seed, tables)


def table_oracle(data: LabeledDataset) -> TableOracle:
    """Build an exact lookup; requires unique sequences covering the full space."""
    mapping: dict = {}
    for seq, y in zip(data.sequences, data.labels):
        if seq.indices in mapping:
            raise ValueError(f"duplicate sequence {data.alphabet.decode(seq)!r} in oracle table")
        mapping[seq.indices] = float(y)
    size = data.alphabet.size ** data.length
    if len(mapping) != size:
        raise ValueError(
            f"table must enumerate the full space: got {len(mapping)} of {size} sequences"
        )
    return TableOracle(data.length, mapping)


def enumerate_space(alphabet_size: int, length: int) -> np.ndarray:
    """All sequences of the space as an (alphabet_size ** length, L) matrix.

    Rows are in lexicographic order with the first position most significant.
    """
    grids = np.meshgrid(*([np.arange(alphabet_size)] * length), indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, length).astype(np.int64)


def full_landscape_dataset(oracle: ExactOracle, alphabet: Alphabet, name: str) -> LabeledDataset:
    """Label the whole enumerable space with the oracle."""
    if isinstance(oracle, NkLandscape):
        length = oracle.length
    else:
        length = oracle.length
    matrix = enumerate_space(alphabet.size, length)
    labels = oracle.fitness_many(matrix)
    sequences = [Sequence(tuple(int(v) for v in row)) for row in matrix]
    return LabeledDataset(alphabet, sequences, labels, name=name)
