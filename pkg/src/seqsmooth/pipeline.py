"""End-to-end harness: task setup, pipeline runs, hyperparameter sweep, limits study.

A run encodes the training split, builds the latent graph, smooths labels,
trains the surrogate, optimizes, decodes, and (when the task has an exact
oracle) evaluates designs and surrogate extrapolation error. The unsmoothed
ablation trains the same surrogate on the original latents with raw labels
and runs the same optimizer from those latents.

Exact oracles stay evaluation-only: they are consulted for dataset
construction, design scoring, and holdout error, never inside the
graph/surrogate/optimization stages.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import (
    Alphabet,
    FitnessRange,
    LabeledDataset,
    Sequence,
    normalize_fitness,
    parse_labeled_csv,
    percentile_gap_split,
    subsample,
)
from .graph import SmoothingParams, create_graph
from .mbo import MboConfig, SurrogateConfig, predict_batch, propose_designs, train_surrogate
from .metrics import MetricsReport, evaluate_designs, mean_absolute_error
from .oracle import ExactOracle, full_landscape_dataset, nk_landscape, table_oracle
from .smoothing import smooth
from .vae import VaeModel, VaeTrainConfig, encode_batch, train_vae

logger = logging.getLogger(__name__)

_STAGE_KEYS = {"corpus": 1, "vae": 2, "graph": 3, "surrogate": 4, "holdout": 5}


def stage_seed(master: int, stage: str) -> int:
    """Deterministic per-stage child seed derived from the master seed."""
    return int(np.random.SeedSequence([master, _STAGE_KEYS[stage]]).generate_state(1)[0])


@dataclass
class TaskConfig:
    """Benchmark task: an exact oracle plus the difficulty split."""

    kind: str = "nk"  # "nk" or "table"
    alphabet: str = "ACGT"
    length: int = 8
    epistasis: int = 2
    oracle_seed: int = 7
    csv_path: str | None = None  # table oracle source
    percentile: float = 30.0
    gap: int = 3
    top_percentile: float = 1.0
    holdout_size: int = 2000

    def __post_init__(self):
        if self.kind not in ("nk", "table"):
            raise ValueError(f"task kind must be 'nk' or 'table', got {self.kind!r}")
        if self.kind == "table" and not self.csv_path:
            raise ValueError("table tasks need csv_path")


@dataclass
class VaeSettings:
    """VAE architecture/training knobs for in-pipeline training.

    Pipeline runs default to softmax pooling: the literal attention weighting
    is kept as a config choice, but its denominator can cross zero mid-training
    and destabilize long runs.
    """

    latent_dim: int = 16
    hidden_dim: int = 32
    decoder_hidden: int = 128
    kl_weight: float = 1e-2
    pooling: str = "softmax"
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 1e-3
    corpus_size: int = 3000


@dataclass
class RunConfig:
    """Everything one pipeline run needs, including the master seed."""

    task: TaskConfig = field(default_factory=TaskConfig)
    vae: VaeSettings = field(default_factory=VaeSettings)
    graph: SmoothingParams = field(default_factory=SmoothingParams)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    mbo: MboConfig = field(default_factory=MboConfig)
    ablation: bool = True
    seed: int = 0
    name: str = "run"

    def echo(self) -> dict:
        d = asdict(self)
        return d


def nk_desk_config(seed: int = 0) -> RunConfig:
    """Desk-scale canonical task: NK(L=8, |A|=4, K=2), split p=30, gap=3."""
    return RunConfig(
        task=TaskConfig(),
        vae=VaeSettings(),
        graph=SmoothingParams(n_nodes=3000, beta=0.5, k=8, gamma=1.0, alpha=0.5, m=2),
        surrogate=SurrogateConfig(),
        mbo=MboConfig(),
        ablation=True,
        seed=seed,
        name="nk-desk",
    )


@dataclass
class PreparedTask:
    """Materialized task: oracle, full labeled space, split, and holdout."""

    oracle: ExactOracle
    alphabet: Alphabet
    full: LabeledDataset
    fitness_range: FitnessRange
    split: LabeledDataset
    holdout: LabeledDataset


def prepare_task(cfg: RunConfig) -> PreparedTask:
    """Build the oracle, label the space, cut the split, and draw the holdout."""
    task = cfg.task
    alphabet = Alphabet.from_string(task.alphabet)
    if task.kind == "nk":
        oracle = nk_landscape(task.length, alphabet.size, task.epistasis, task.oracle_seed)
        full = full_landscape_dataset(oracle, alphabet, name="nk-full")
    else:
        full = parse_labeled_csv(task.csv_path, alphabet)
        oracle = table_oracle(full)
    fitness_range = FitnessRange.from_labels(full.labels)
    split = percentile_gap_split(full, task.percentile, task.gap, task.top_percentile)

    split_keys = {s.indices for s in split.sequences}
    complement = [i for i, s in enumerate(full.sequences) if s.indices not in split_keys]
    rng = np.random.default_rng(stage_seed(cfg.seed, "holdout"))
    take = min(task.holdout_size, len(complement))
    picked = np.sort(rng.choice(len(complement), size=take, replace=False))
    idx = [complement[i] for i in picked]
    holdout = LabeledDataset(
        alphabet, [full.sequences[i] for i in idx], full.labels[idx], name="holdout"
    )
    logger.info(
        "task ready: %d total, %d in split (best %.4f), %d holdout",
        len(full),
        len(split),
        float(split.labels.max()),
        len(holdout),
    )
    return PreparedTask(oracle, alphabet, full, fitness_range, split, holdout)


def build_corpus(cfg: RunConfig, prepared: PreparedTask) -> list[Sequence]:
    """Unlabeled VAE corpus: a seeded sample of the space plus the split."""
    rng = np.random.default_rng(stage_seed(cfg.seed, "corpus"))
    n_full = len(prepared.full)
    take = min(cfg.vae.corpus_size, n_full)
    idx = np.sort(rng.choice(n_full, size=take, replace=False))
    corpus = [prepared.full.sequences[i] for i in idx]
    seen = {s.indices for s in corpus}
    corpus.extend(s for s in prepared.split.sequences if s.indices not in seen)
    return corpus


def train_task_vae(cfg: RunConfig, prepared: PreparedTask) -> VaeModel:
    corpus = build_corpus(cfg, prepared)
    vcfg = VaeTrainConfig(
        alphabet=prepared.alphabet,
        latent_dim=cfg.vae.latent_dim,
        hidden_dim=cfg.vae.hidden_dim,
        decoder_hidden=cfg.vae.decoder_hidden,
        kl_weight=cfg.vae.kl_weight,
        pooling=cfg.vae.pooling,
        epochs=cfg.vae.epochs,
        batch_size=cfg.vae.batch_size,
        learning_rate=cfg.vae.learning_rate,
        seed=stage_seed(cfg.seed, "vae"),
    )
    return train_vae(corpus, vcfg)


@dataclass
class DesignRecord:
    sequence: str
    predicted_score: float
    oracle_score: float | None


@dataclass
class VariantReport:
    """Metrics and surrogate extrapolation error for one pipeline variant."""

    metrics: MetricsReport | None
    train_mae: float | None
    holdout_mae: float | None
    designs: list[DesignRecord]


@dataclass
class RunReport:
    """Full record of one pipeline run (timings live in a sidecar file)."""

    name: str
    seed: int
    config: dict
    best_training_fitness_raw: float
    best_training_fitness: float | None
    smoothed: VariantReport
    unsmoothed: VariantReport | None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Deterministic report payload; excludes wall-clock timings."""

        def variant(v: VariantReport | None):
            if v is None:
                return None
            return {
                "metrics": None if v.metrics is None else asdict(v.metrics),
                "train_mae": v.train_mae,
                "holdout_mae": v.holdout_mae,
                "designs": [asdict(d) for d in v.designs],
            }

        return {
            "name": self.name,
            "seed": self.seed,
            "config": self.config,
            "best_training_fitness_raw": self.best_training_fitness_raw,
            "best_training_fitness": self.best_training_fitness,
            "smoothed": variant(self.smoothed),
            "unsmoothed": variant(self.unsmoothed),
        }


def _variant_report(
    designs,
    model,
    vae_model: VaeModel,
    split: LabeledDataset,
    prepared: PreparedTask | None,
) -> VariantReport:
    alphabet = vae_model.alphabet
    records = []
    metrics = train_mae = holdout_mae = None
    if prepared is not None:
        metrics = evaluate_designs(designs, prepared.oracle, split, prepared.fitness_range)
        design_matrix = np.array([d.sequence.indices for d in designs.designs], dtype=np.int64)
        oracle_scores = prepared.oracle.fitness_many(design_matrix)
        for d, raw in zip(designs.designs, oracle_scores):
            records.append(DesignRecord(alphabet.decode(d.sequence), float(d.score), float(raw)))
        train_pred = predict_batch(model, encode_batch(vae_model, split.matrix))
        train_mae = mean_absolute_error(train_pred, split.labels)
        holdout_pred = predict_batch(model, encode_batch(vae_model, prepared.holdout.matrix))
        holdout_mae = mean_absolute_error(holdout_pred, prepared.holdout.labels)
    else:
        for d in designs.designs:
            records.append(DesignRecord(alphabet.decode(d.sequence), float(d.score), None))
    return VariantReport(metrics, train_mae, holdout_mae, records)


def execute_run(
    cfg: RunConfig,
    vae_model: VaeModel,
    split: LabeledDataset,
    prepared: PreparedTask | None,
    timings: dict | None = None,
) -> RunReport:
    """Graph -> smooth -> surrogate -> MBO (+ oracle evaluation when available)."""
    timings = {} if timings is None else timings

    def timed(stage, fn):
        start = time.perf_counter()
        result = fn()
        timings[stage] = time.perf_counter() - start
        logger.info("stage %s: %.2fs", stage, timings[stage])
        return result

    embeddings = timed("encode", lambda: encode_batch(vae_model, split.matrix))
    gparams = replace(cfg.graph, seed=stage_seed(cfg.seed, "graph"))
    graph = timed("create_graph", lambda: create_graph(embeddings, split.labels, gparams))
    labels_hat = timed("smooth", lambda: smooth(graph, gparams))
    surrogate_seed = stage_seed(cfg.seed, "surrogate")
    model = timed(
        "train_surrogate",
        lambda: train_surrogate(graph.coords, labels_hat.values, cfg.surrogate, surrogate_seed),
    )
    designs = timed("propose_designs", lambda: propose_designs(model, graph, vae_model, cfg.mbo))
    smoothed = timed("evaluate", lambda: _variant_report(designs, model, vae_model, split, prepared))

    unsmoothed = None
    if cfg.ablation:
        model_u = timed(
            "train_surrogate_unsmoothed",
            lambda: train_surrogate(embeddings, split.labels, cfg.surrogate, surrogate_seed),
        )
        designs_u = timed(
            "propose_designs_unsmoothed",
            lambda: propose_designs(model_u, graph, vae_model, cfg.mbo, candidates=embeddings),
        )
        unsmoothed = timed(
            "evaluate_unsmoothed",
            lambda: _variant_report(designs_u, model_u, vae_model, split, prepared),
        )

    best_raw = float(split.labels.max())
    best_norm = (
        normalize_fitness(best_raw, prepared.fitness_range) if prepared is not None else None
    )
    return RunReport(
        name=cfg.name,
        seed=cfg.seed,
        config=cfg.echo(),
        best_training_fitness_raw=best_raw,
        best_training_fitness=best_norm,
        smoothed=smoothed,
        unsmoothed=unsmoothed,
        timings=timings,
    )


def run_pipeline(cfg: RunConfig) -> RunReport:
    """Prepare the task, train the VAE, and execute the full run."""
    timings: dict = {}
    start = time.perf_counter()
    prepared = prepare_task(cfg)
    timings["prepare_task"] = time.perf_counter() - start
    start = time.perf_counter()
    vae_model = train_task_vae(cfg, prepared)
    timings["train_vae"] = time.perf_counter() - start
    return execute_run(cfg, vae_model, prepared.split, prepared, timings)


_OVERRIDE_SECTIONS = ("task", "vae", "graph", "surrogate", "mbo")


def apply_override(cfg: RunConfig, dotted: str, value) -> RunConfig:
    """Return a config with one ``section.field`` (or top-level field) replaced."""
    if "." in dotted:
        section, fname = dotted.split(".", 1)
        if section not in _OVERRIDE_SECTIONS:
            raise ValueError(f"unknown config section {section!r}")
        sub = getattr(cfg, section)
        if not hasattr(sub, fname):
            raise ValueError(f"unknown config field {dotted!r}")
        return replace(cfg, **{section: replace(sub, **{fname: value})})
    if not hasattr(cfg, dotted):
        raise ValueError(f"unknown config field {dotted!r}")
    return replace(cfg, **{dotted: value})


@dataclass
class SweepRow:
    index: int
    overrides: dict
    metrics: MetricsReport
    best_training_fitness: float


@dataclass
class SweepReport:
    grid: dict
    budget: int
    seed: int
    rows: list  # sorted by fitness, descending


def _grid_cells(grid: dict) -> list[dict]:
    keys = sorted(grid)
    cells = [{}]
    for key in keys:
        cells = [dict(cell, **{key: value}) for cell in cells for value in grid[key]]
    return cells


def _sweep_cell(args):
    cfg, overrides = args
    for key, value in overrides.items():
        cfg = apply_override(cfg, key, value)
    report = run_pipeline(cfg)
    return report


def sweep(cfg: RunConfig, grid: dict, budget: int, seed: int, threads: int = 1) -> SweepReport:
    """Evaluate up to ``budget`` grid configurations, ranked by design fitness.

    The grid maps dotted config fields to value lists; the full cartesian
    product is subsampled uniformly (seeded) when it exceeds the budget.
    Every cell runs with the same master seed so configurations compare
    like-for-like. Ablation is disabled inside sweep cells.
    """
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    if budget < 1:
        raise ValueError("budget must be positive")
    cells = _grid_cells(grid)
    if len(cells) > budget:
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(cells), size=budget, replace=False))
        cells = [cells[i] for i in picked]
    base = replace(cfg, ablation=False, seed=seed)
    jobs = [(base, overrides) for overrides in cells]
    reports = _map_jobs(_sweep_cell, jobs, threads)
    rows = [
        SweepRow(i, overrides, rep.smoothed.metrics, rep.best_training_fitness)
        for i, (overrides, rep) in enumerate(zip(cells, reports))
    ]
    rows.sort(key=lambda r: (-r.metrics.fitness, r.index))
    return SweepReport(grid=grid, budget=budget, seed=seed, rows=rows)


@dataclass
class StudyCell:
    ratio: float
    mode: str
    fitnesses: list
    mean: float
    std: float


@dataclass
class StudyReport:
    ratios: list
    modes: list
    repeats: int
    seed: int
    cells: list


def _limits_cell(args):
    cfg, prepared, vae_model, ratio, mode, cell_seed = args
    sub = subsample(prepared.split, ratio, mode, cell_seed)
    report = execute_run(cfg, vae_model, sub, prepared)
    return report.smoothed.metrics.fitness


def limits_study(
    cfg: RunConfig,
    ratios,
    modes,
    repeats: int,
    seed: int,
    threads: int = 1,
) -> StudyReport:
    """Subsample the split at each ratio/mode, rerun the pipeline, aggregate.

    The VAE is trained once per repeat (its corpus does not depend on the
    subsample) and shared across cells; each cell records the median design
    fitness, summarized as mean +/- std over repeats.
    """
    ratios = [float(r) for r in ratios]
    modes = list(modes)
    if any(not 0 < r <= 1 for r in ratios):
        raise ValueError("ratios must lie in (0, 1]")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    results: dict[tuple, list] = {(r, m): [] for r in ratios for m in modes}
    for rep in range(repeats):
        rep_seed = int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])
        rep_cfg = replace(cfg, ablation=False, seed=rep_seed)
        prepared = prepare_task(rep_cfg)
        vae_model = train_task_vae(rep_cfg, prepared)
        jobs = []
        for mi, mode in enumerate(modes):
            for ri, ratio in enumerate(ratios):
                cell_seed = int(np.random.SeedSequence([seed, rep, mi, ri]).generate_state(1)[0])
                jobs.append((rep_cfg, prepared, vae_model, ratio, mode, cell_seed))
        fits = _map_jobs(_limits_cell, jobs, threads)
        pos = 0
        for mode in modes:
            for ratio in ratios:
                results[(ratio, mode)].append(fits[pos])
                pos += 1
    cells = [
        StudyCell(
            ratio,
            mode,
            results[(ratio, mode)],
            float(np.mean(results[(ratio, mode)])),
            float(np.std(results[(ratio, mode)])),
        )
        for mode in modes
        for ratio in ratios
    ]
    return StudyReport(ratios=ratios, modes=modes, repeats=repeats, seed=seed, cells=cells)


def _map_jobs(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))
