"""Graph-smoothed latent-space optimization for discrete sequence design.

Workflow: embed sequences with a small VAE, surround the labeled latents
with interpolated synthetic nodes, propagate labels over the kNN graph,
train a surrogate on the smoothed labels, and ascend it to propose designs.
Includes exact NK/table oracles, evaluation metrics, convex-hull
extrapolation verification, and a benchmarking CLI.
"""

from .data import (
    DNA,
    PROTEIN,
    Alphabet,
    FitnessRange,
    LabeledDataset,
    Sequence,
    levenshtein,
    normalize_fitness,
    parse_fasta,
    parse_labeled_csv,
    percentile_gap_split,
    subsample,
)
from .graph import LatentGraph, SmoothingParams, create_graph, knn
from .hull import HullQuery, in_convex_hull, min_distance_to_set, run_prop1, run_prop2
from .mbo import (
    DesignSet,
    MboConfig,
    SurrogateConfig,
    SurrogateModel,
    gradient_ascent,
    lbfgs_ascend,
    propose_designs,
    train_surrogate,
)
from .metrics import MetricsReport, evaluate_designs
from .oracle import nk_landscape, table_oracle
from .pipeline import RunConfig, limits_study, nk_desk_config, run_pipeline, sweep
from .smoothing import LabelVector, init_labels, propagate_step, smooth
from .vae import (
    LatentVector,
    VaeModel,
    VaeTrainConfig,
    attention_pool,
    decode,
    encode,
    kl_diag_gaussian,
    train_vae,
    vae_loss,
)

__version__ = "0.1.0"
