"""Command-line interface: train-vae, optimize, eval, verify-props, sweep, limits.

Reports are deterministic JSON (17-significant-digit floats); the report path
also gets rendered matplotlib figures and, where natural, CSV tables. Wall
clock timings go to a ``.timings.json`` sidecar so the main report stays
byte-identical across reruns with the same config and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import load_config
from .data import Alphabet, parse_fasta, parse_labeled_csv
from .hull import SOURCES, run_prop1
from .mbo import Design, DesignSet
from .metrics import evaluate_designs
from .pipeline import (
    RunReport,
    execute_run,
    limits_study,
    prepare_task,
    run_pipeline,
    stage_seed,
    sweep,
    train_task_vae,
)
from .data import Sequence
from .reporting import write_csv, write_json
from .vae import VaeTrainConfig, load_vae, save_vae, train_vae

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--config", default=None, help="YAML config file or builtin:<name>")
    parser.add_argument("--out", required=True, help="output path")
    parser.add_argument("--threads", type=int, default=1, help="parallel cells for sweep/limits")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    parser.add_argument("--verbose", action="store_true", help="log stage progress")


def _load(args) -> tuple:
    cfg, grid = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg, grid


def _figure_path(out: str) -> str:
    return str(Path(out).with_suffix(".png"))


def _write_report(args, report: RunReport) -> None:
    write_json(args.out, report.to_dict())
    write_json(str(args.out) + ".timings.json", {"stages": report.timings})
    if not args.no_figures:
        from .plots import save_run_figure

        save_run_figure(report, _figure_path(args.out))


def cmd_train_vae(args) -> int:
    cfg, _ = _load(args)
    alphabet = Alphabet.from_string(cfg.task.alphabet)
    corpus_path = Path(args.corpus)
    if corpus_path.suffix.lower() in (".fa", ".fasta"):
        corpus = parse_fasta(corpus_path, alphabet)
    else:
        corpus = parse_labeled_csv(corpus_path, alphabet).sequences
    vcfg = VaeTrainConfig(
        alphabet=alphabet,
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
    model = train_vae(corpus, vcfg)
    save_vae(args.out, model)
    print(
        f"trained VAE on {len(corpus)} sequences "
        f"(loss {model.epoch_losses[0]:.4f} -> {model.epoch_losses[-1]:.4f}); saved to {args.out}"
    )
    return 0


def cmd_optimize(args) -> int:
    cfg, _ = _load(args)
    if args.data is not None:
        alphabet = Alphabet.from_string(cfg.task.alphabet)
        split = parse_labeled_csv(args.data, alphabet)
        if args.model is not None:
            vae_model = load_vae(args.model)
        else:
            vcfg = VaeTrainConfig(
                alphabet=alphabet,
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
            vae_model = train_vae(split.sequences, vcfg)
        report = execute_run(cfg, vae_model, split, prepared=None)
    elif args.model is not None:
        prepared = prepare_task(cfg)
        vae_model = load_vae(args.model)
        report = execute_run(cfg, vae_model, prepared.split, prepared)
    else:
        report = run_pipeline(cfg)
    _write_report(args, report)
    fitness = None if report.smoothed.metrics is None else report.smoothed.metrics.fitness
    print(
        f"{len(report.smoothed.designs)} designs written to {args.out}"
        + (f"; median normalized fitness {fitness:.4f}" if fitness is not None else "")
    )
    return 0


def _designs_from_file(path: str, alphabet: Alphabet) -> DesignSet:
    """Designs from an optimize report (JSON) or a CSV with a sequence column."""
    path = Path(path)
    rows: list[tuple[str, float]] = []
    if path.suffix.lower() == ".json":
        payload = json.loads(path.read_text())
        for record in payload["smoothed"]["designs"]:
            rows.append((record["sequence"], float(record["predicted_score"])))
    else:
        import csv as _csv

        with open(path, newline="") as fh:
            reader = _csv.reader(fh)
            header = next(reader)
            cols = [h.strip().lower() for h in header]
            if "sequence" not in cols:
                raise ValueError(f"{path}: need a 'sequence' column")
            si = cols.index("sequence")
            pi = cols.index("predicted_score") if "predicted_score" in cols else None
            for row in reader:
                if not row:
                    continue
                rows.append((row[si].strip(), float(row[pi]) if pi is not None else 0.0))
    if not rows:
        raise ValueError(f"{path}: no designs found")
    best: dict = {}
    first: dict = {}
    for pos, (text, score) in enumerate(rows):
        seq = alphabet.encode(text)
        if seq.indices not in best:
            best[seq.indices] = score
            first[seq.indices] = pos
        else:
            best[seq.indices] = max(best[seq.indices], score)
    ranked = sorted(best, key=lambda key: (-best[key], first[key]))
    designs = [Design(Sequence(key), np.zeros(1), best[key]) for key in ranked]
    return DesignSet(designs)


def cmd_eval(args) -> int:
    cfg, _ = _load(args)
    prepared = prepare_task(cfg)
    train = (
        parse_labeled_csv(args.data, prepared.alphabet) if args.data is not None else prepared.split
    )
    designs = _designs_from_file(args.designs, prepared.alphabet)
    metrics = evaluate_designs(designs, prepared.oracle, train, prepared.fitness_range)
    write_json(args.out, asdict(metrics))
    print(
        f"fitness {metrics.fitness:.4f}, diversity {metrics.diversity:.1f}, "
        f"novelty {metrics.novelty:.1f}, K_effective {metrics.k_effective}"
    )
    return 0


def cmd_verify_props(args) -> int:
    dims = [int(v) for v in args.dims.split(",") if v.strip()]
    if not dims:
        raise ValueError("need at least one dimension")
    report = run_prop1(dims, args.n, args.beta, args.trials, args.source, args.seed)
    records = []
    for entry in report.entries:
        record = asdict(entry)
        record["n_points"] = report.n_points
        record["source"] = report.source
        record["seed"] = report.seed
        records.append(record)
    write_json(args.out, records)
    if not args.no_figures:
        from .plots import save_prop_figure

        save_prop_figure(report, _figure_path(args.out))
    for entry in report.entries:
        print(
            f"d={entry.d}: fraction_outside={entry.fraction_outside:.3f} "
            f"mean_min_distance={entry.mean_min_distance:.3f} bound={entry.bound:.3f}"
        )
    return 0


def cmd_sweep(args) -> int:
    cfg, grid = _load(args)
    if not grid:
        raise ValueError("config has no sweep section (dotted field -> value list)")
    report = sweep(cfg, grid, args.budget, cfg.seed, threads=args.threads)
    payload = {
        "grid": {k: list(v) for k, v in report.grid.items()},
        "budget": report.budget,
        "seed": report.seed,
        "rows": [
            {
                "index": row.index,
                "overrides": row.overrides,
                "metrics": asdict(row.metrics),
                "best_training_fitness": row.best_training_fitness,
            }
            for row in report.rows
        ],
    }
    write_json(args.out, payload)
    keys = sorted(grid)
    write_csv(
        str(Path(args.out).with_suffix(".csv")),
        keys + ["fitness", "diversity", "novelty", "k_effective"],
        [
            [row.overrides[k] for k in keys]
            + [row.metrics.fitness, row.metrics.diversity, row.metrics.novelty, row.metrics.k_effective]
            for row in report.rows
        ],
    )
    if not args.no_figures:
        from .plots import save_sweep_figure

        save_sweep_figure(report, _figure_path(args.out))
    best = report.rows[0]
    print(f"{len(report.rows)} configurations; best fitness {best.metrics.fitness:.4f} at {best.overrides}")
    return 0


def cmd_limits(args) -> int:
    cfg, _ = _load(args)
    ratios = [float(v) for v in args.ratios.split(",") if v.strip()]
    modes = [v.strip() for v in args.modes.split(",") if v.strip()]
    report = limits_study(cfg, ratios, modes, args.repeats, cfg.seed, threads=args.threads)
    payload = {
        "ratios": report.ratios,
        "modes": report.modes,
        "repeats": report.repeats,
        "seed": report.seed,
        "cells": [asdict(c) for c in report.cells],
    }
    write_json(args.out, payload)
    write_csv(
        str(Path(args.out).with_suffix(".csv")),
        ["mode", "ratio", "mean_fitness", "std_fitness"],
        [[c.mode, c.ratio, c.mean, c.std] for c in report.cells],
    )
    if not args.no_figures:
        from .plots import save_limits_figure

        save_limits_figure(report, _figure_path(args.out))
    for cell in report.cells:
        print(f"{cell.mode} r={cell.ratio:g}: {cell.mean:.4f} +/- {cell.std:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqsmooth",
        description="Graph-smoothed latent-space optimization of discrete sequences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-vae", help="train a sequence VAE on an unlabeled corpus")
    p.add_argument("--corpus", required=True, help="FASTA or sequence,fitness CSV")
    _add_common(p)
    p.set_defaults(fn=cmd_train_vae)

    p = sub.add_parser("optimize", help="run the smoothing pipeline and propose designs")
    p.add_argument("--model", default=None, help="pretrained VAE (.npz); trained in-run if absent")
    p.add_argument("--data", default=None, help="labeled CSV split; from task config if absent")
    _add_common(p)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("eval", help="score a designs file against the task oracle")
    p.add_argument("--designs", required=True, help="optimize report JSON or CSV with sequences")
    p.add_argument("--data", default=None, help="training CSV for novelty (default: task split)")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify-props", help="empirical convex-hull extrapolation checks")
    p.add_argument("--dims", required=True, help="comma-separated latent dimensions")
    p.add_argument("--n", type=int, default=500, help="source points per dimension")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--source", choices=SOURCES, default="gaussian")
    _add_common(p)
    p.set_defaults(fn=cmd_verify_props, seed=0)

    p = sub.add_parser("sweep", help="grid search over config fields")
    p.add_argument("--budget", type=int, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("limits", help="label-scarcity study over subsample ratios")
    p.add_argument("--ratios", default="0.05,0.1,0.2,0.5,0.7,1.0")
    p.add_argument("--modes", default="random,lowest")
    p.add_argument("--repeats", type=int, default=3)
    _add_common(p)
    p.set_defaults(fn=cmd_limits)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
