"""Sequence alphabets, labeled datasets, edit distances, and benchmark splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Alphabet",
    "Sequence",
    "LabeledDataset",
    "FitnessRange",
    "DNA",
    "PROTEIN",
    "parse_labeled_csv",
    "write_labeled_csv",
    "parse_fasta",
    "write_fasta",
    "levenshtein",
    "levenshtein_one_to_many",
    "normalize_fitness",
    "percentile_gap_split",
    "subsample",
]


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct single-character symbols.

    The symbol/index mapping is a bijection: ``index_of(symbols[i]) == i``.
    """

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise ValueError("alphabet needs at least 2 symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be distinct")
        if any(len(s) != 1 for s in self.symbols):
            raise ValueError("alphabet symbols must be single characters")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @classmethod
    def from_string(cls, symbols: str) -> "Alphabet":
        return cls(tuple(symbols))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise ValueError(f"symbol {symbol!r} is not in the alphabet") from None

    def encode(self, text: str) -> "Sequence":
        return Sequence(tuple(self.index_of(ch) for ch in text))

    def decode(self, seq: "Sequence") -> str:
        return "".join(self.symbols[i] for i in seq.indices)


DNA = Alphabet.from_string("ACGT")
PROTEIN = Alphabet.from_string("ACDEFGHIKLMNPQRSTVWY")


@dataclass(frozen=True)
class Sequence:
    """Immutable run of alphabet indices.

    Index validity against a concrete alphabet is enforced where sequences
    meet an alphabet (``Alphabet.encode``, ``LabeledDataset``).
    """

    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def from_array(cls, row) -> "Sequence":
        return cls(tuple(int(v) for v in row))


@dataclass(eq=False)
class LabeledDataset:
    """Sequences of one common length paired with finite scalar fitness labels."""

    alphabet: Alphabet
    sequences: list[Sequence]
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        if self.labels.ndim != 1 or len(self.sequences) != self.labels.size:
            raise ValueError(
                f"{self.name}: got {len(self.sequences)} sequences "
                f"but {self.labels.size} labels"
            )
        if not self.sequences:
            raise ValueError(f"{self.name}: empty dataset")
        if not np.all(np.isfinite(self.labels)):
            raise ValueError(f"{self.name}: labels must be finite")
        lengths = {len(s) for s in self.sequences}
        if len(lengths) != 1:
            raise ValueError(f"{self.name}: inconsistent sequence lengths {sorted(lengths)}")
        mat = np.array([s.indices for s in self.sequences], dtype=np.int64)
        if mat.min() < 0 or mat.max() >= self.alphabet.size:
            raise ValueError(f"{self.name}: sequence index outside alphabet")
        self._matrix = mat

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def length(self) -> int:
        """Common sequence length L."""
        return len(self.sequences[0])

    @property
    def matrix(self) -> np.ndarray:
        """Sequences as an (n, L) integer index matrix."""
        return self._matrix


@dataclass(frozen=True)
class FitnessRange:
    """Reference min/max for min-max normalization of fitness values."""

    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise ValueError(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")

    @classmethod
    def from_labels(cls, labels) -> "FitnessRange":
        labels = np.asarray(labels, dtype=float)
        return cls(float(labels.min()), float(labels.max()))


def normalize_fitness(y: float, fitness_range: FitnessRange) -> float:
    """Min-max normalize ``y``; values outside the range map outside [0, 1]."""
    return (y - fitness_range.y_min) / (fitness_range.y_max - fitness_range.y_min)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit-cost insertions, deletions, and substitutions."""
    xa, xb = a.indices, b.indices
    if len(xa) < len(xb):
        xa, xb = xb, xa
    if not xb:
        return len(xa)
    prev = list(range(len(xb) + 1))
    for i, ca in enumerate(xa, start=1):
        cur = [i] + [0] * len(xb)
        for j, cb in enumerate(xb, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def levenshtein_one_to_many(target: Sequence, batch: np.ndarray) -> np.ndarray:
    """Edit distance from ``target`` to each row of an (n, L) index matrix.

    Same recurrence as :func:`levenshtein`, vectorized across the batch axis.
    """
    batch = np.asarray(batch)
    if batch.ndim != 2:
        raise ValueError("batch must be a 2-D index matrix")
    nb, lb = batch.shape
    t = np.asarray(target.indices, dtype=batch.dtype)
    prev = np.broadcast_to(np.arange(lb + 1, dtype=np.int64), (nb, lb + 1)).copy()
    cur = np.empty_like(prev)
    for i in range(1, len(t) + 1):
        cur[:, 0] = i
        mismatch = batch != t[i - 1]
        for j in range(1, lb + 1):
            cur[:, j] = np.minimum(
                np.minimum(prev[:, j] + 1, prev[:, j - 1] + mismatch[:, j - 1]),
                cur[:, j - 1] + 1,
            )
        prev, cur = cur, prev
    return prev[:, -1].copy()


def percentile_gap_split(
    data: LabeledDataset,
    percentile: float,
    gap: int,
    top_percentile: float = 1.0,
) -> LabeledDataset:
    """Difficulty split: low-fitness sequences far from the elite set.

    Keeps every sequence whose fitness is strictly below the ``percentile``-th
    percentile of ``data`` and whose edit distance to every member of the top
    ``top_percentile`` percent (by fitness) is at least ``gap``. Input order is
    preserved, so the split is deterministic.
    """
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    if gap < 0:
        raise ValueError(f"gap must be non-negative, got {gap}")
    labels = data.labels
    cut = float(np.percentile(labels, percentile))
    keep = labels < cut
    if gap > 0:
        top_cut = float(np.percentile(labels, 100.0 - top_percentile))
        top_rows = data.matrix[labels >= top_cut]
        for row in top_rows:
            alive = np.nonzero(keep)[0]
            if alive.size == 0:
                break
            dist = levenshtein_one_to_many(Sequence.from_array(row), data.matrix[alive])
            keep[alive[dist < gap]] = False
    picked = np.nonzero(keep)[0]
    if picked.size == 0:
        raise ValueError("difficulty filter selected zero sequences")
    return LabeledDataset(
        data.alphabet,
        [data.sequences[i] for i in picked],
        labels[picked],
        name=f"{data.name}-p{percentile:g}-gap{gap}",
    )


def subsample(data: LabeledDataset, ratio: float, mode: str, seed: int) -> LabeledDataset:
    """Keep ``ceil(ratio * n)`` items, drawn uniformly or by lowest fitness.

    ``random`` draws without replacement under ``seed``; ``lowest`` keeps the
    smallest-fitness items with ties broken by original index. Output preserves
    the original ordering either way.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n = len(data)
    m = math.ceil(ratio * n)
    if mode == "random":
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=m, replace=False))
    elif mode == "lowest":
        idx = np.sort(np.argsort(data.labels, kind="stable")[:m])
    else:
        raise ValueError(f"unknown subsample mode {mode!r}")
    return LabeledDataset(
        data.alphabet,
        [data.sequences[i] for i in idx],
        data.labels[idx],
        name=f"{data.name}-{mode}{ratio:g}",
    )


def parse_labeled_csv(path, alphabet: Alphabet) -> LabeledDataset:
    """Read ``sequence,fitness`` rows; row numbers in errors are 1-based data rows."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["sequence", "fitness"]:
            raise ValueError(f"{path}: expected header 'sequence,fitness'")
        sequences: list[Sequence] = []
        labels: list[float] = []
        length = None
        for row_no, row in enumerate(reader, start=1):
            if not any(f.strip() for f in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: malformed row {row_no}: expected 2 fields, got {len(row)}")
            text, label_text = row[0].strip(), row[1].strip()
            try:
                seq = alphabet.encode(text)
            except ValueError as exc:
                raise ValueError(f"{path}: row {row_no}: {exc}") from None
            if length is None:
                length = len(seq)
            elif len(seq) != length:
                raise ValueError(
                    f"{path}: row {row_no}: sequence length {len(seq)} != {length}"
                )
            try:
                y = float(label_text)
            except ValueError:
                raise ValueError(f"{path}: malformed row {row_no}: bad fitness {label_text!r}") from None
            if not math.isfinite(y):
                raise ValueError(f"{path}: row {row_no}: non-finite fitness")
            sequences.append(seq)
            labels.append(y)
    if not sequences:
        raise ValueError(f"{path}: empty dataset")
    return LabeledDataset(alphabet, sequences, np.array(labels), name=path.stem)


def write_labeled_csv(data: LabeledDataset, path) -> None:
    """Write ``sequence,fitness`` rows; floats use repr so parse round-trips exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "fitness"])
        for seq, y in zip(data.sequences, data.labels):
            writer.writerow([data.alphabet.decode(seq), repr(float(y))])


def parse_fasta(path, alphabet: Alphabet) -> list[Sequence]:
    """Read FASTA records as sequences; headers are discarded, bodies uppercased."""
    path = Path(path)
    sequences: list[Sequence] = []
    header = None
    chunks: list[str] = []

    def flush():
        if header is None:
            return
        body = "".join(chunks).upper()
        if not body:
            raise ValueError(f"{path}: empty record {header!r}")
        try:
            sequences.append(alphabet.encode(body))
        except ValueError as exc:
            raise ValueError(f"{path}: record {header!r}: {exc}") from None

    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                flush()
                header = line[1:] or "unnamed"
                chunks = []
            else:
                if header is None:
                    raise ValueError(f"{path}: sequence data before first '>' header")
                chunks.append(line)
    flush()
    if not sequences:
        raise ValueError(f"{path}: no FASTA records")
    return sequences


def write_fasta(sequences: list[Sequence], alphabet: Alphabet, path, prefix: str = "seq") -> None:
    with open(path, "w") as fh:
        for i, seq in enumerate(sequences):
            fh.write(f">{prefix}{i}\n{alphabet.decode(seq)}\n")
