"""Surrogate training and latent-space model-based optimization.

The surrogate is a 2-layer relu MLP with dropout on the first layer, trained
to minimize mean squared error over (latent, label) pairs. Optimization runs
gradient ascent or L-BFGS (with Armijo backtracking) from a set of latent
start points, then decodes, deduplicates, and ranks candidate designs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import Sequence
from .graph import LatentGraph
from .vae import LatentVector, VaeModel, decode_batch

logger = logging.getLogger(__name__)

ALGORITHMS = ("gradient-ascent", "lbfgs")
START_POLICIES = ("auto", "all-nodes", "top-by-prediction")

_ARMIJO_C = 1e-4
_MIN_BACKTRACK = 2.0 ** -30
_GRAD_TOL = 1e-10


@dataclass
class SurrogateConfig:
    """Training hyperparameters for the fitness surrogate."""

    hidden_dim: int = 256
    dropout: float = 0.2
    epochs: int = 60
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("hidden_dim", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class SurrogateModel:
    """Trained regressor over latent vectors (single scalar output)."""

    spec: nn.NetSpec
    params: nn.Params
    mse_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.spec.sizes[-1] != 1:
            raise ValueError("surrogate output dimension must be 1")

    @property
    def input_dim(self) -> int:
        return self.spec.sizes[0]


@dataclass
class MboConfig:
    """Optimizer selection, budgets, and start-point policy."""

    algorithm: str = "gradient-ascent"
    step_size: float = 0.005
    iterations: int = 400
    lbfgs_max_iters: int = 6
    lbfgs_memory: int = 10
    budget: int = 128
    start_policy: str = "auto"
    start_top_n: int = 2000

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.start_policy not in START_POLICIES:
            raise ValueError(f"start_policy must be one of {START_POLICIES}")
        for name in ("step_size", "iterations", "lbfgs_max_iters", "lbfgs_memory", "budget", "start_top_n"):
            if getattr(self, name) <= 0 and not (name == "iterations" and self.iterations == 0):
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Design:
    """One proposed design: decoded sequence, final latent, predicted score."""

    sequence: Sequence
    latent: np.ndarray
    score: float


@dataclass
class DesignSet:
    """Deduplicated designs ordered by non-increasing predicted score."""

    designs: list[Design]

    def __post_init__(self):
        seqs = [d.sequence for d in self.designs]
        if len(set(seqs)) != len(seqs):
            raise ValueError("design sequences must be pairwise distinct")
        scores = [d.score for d in self.designs]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("design scores must be non-increasing")

    def __len__(self) -> int:
        return len(self.designs)

    def sequences(self) -> list[Sequence]:
        return [d.sequence for d in self.designs]


def train_surrogate(nodes, labels, cfg: SurrogateConfig, seed: int) -> SurrogateModel:
    """Fit the MLP to (latent, label) pairs by MSE; seed-reproducible."""
    x = np.asarray(nodes, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"got {x.shape} latents for {y.shape} labels")
    if x.shape[0] < 2:
        raise ValueError("need at least two training points")
    spec = nn.NetSpec(
        (x.shape[1], cfg.hidden_dim, 1),
        ("relu", "identity"),
        (cfg.dropout, 0.0),
    )
    rng = np.random.default_rng(seed)
    params = nn.init_params(spec, rng)
    state = nn.OptimizerState(scheme=cfg.optimizer, step_size=cfg.learning_rate)
    n = x.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            mask_seed = int(rng.integers(0, 2**32))
            report = nn.forward_backward(
                params, spec, x[idx], y[idx], loss="mse", mode="train", seed=mask_seed
            )
            if not np.isfinite(report.loss):
                raise RuntimeError(f"surrogate training diverged at epoch {epoch}")
            params, state = nn.apply_update(params, report.param_grads, state)
            epoch_loss += report.loss * idx.size
        history.append(epoch_loss / n)
    return SurrogateModel(spec, params, history)


def predict_batch(model: SurrogateModel, z: np.ndarray) -> np.ndarray:
    """Infer-mode predictions for (n, d) latents."""
    z = np.asarray(z, dtype=float)
    return nn.forward(model.params, model.spec, z)[:, 0]


def predict(model: SurrogateModel, z) -> float:
    values = _latent_row(z, model.input_dim)
    return float(predict_batch(model, values[None, :])[0])


def input_gradient_batch(model: SurrogateModel, z: np.ndarray) -> np.ndarray:
    """Exact gradient of the prediction w.r.t. each latent row (dropout off)."""
    z = np.asarray(z, dtype=float)
    out, cache = nn.forward_cached(model.params, model.spec, z)
    _, dz = nn.backward(model.params, model.spec, cache, np.ones_like(out))
    return dz


def input_gradient(model: SurrogateModel, z) -> np.ndarray:
    values = _latent_row(z, model.input_dim)
    return input_gradient_batch(model, values[None, :])[0]


def _latent_row(z, dim: int) -> np.ndarray:
    values = z.values if isinstance(z, LatentVector) else np.asarray(z, dtype=float)
    if values.shape != (dim,):
        raise ValueError(f"latent shape {values.shape} != ({dim},)")
    return values


class _SurrogateObjective:
    def __init__(self, model: SurrogateModel):
        self.model = model

    def values(self, z: np.ndarray) -> np.ndarray:
        return predict_batch(self.model, z)

    def grads(self, z: np.ndarray) -> np.ndarray:
        return input_gradient_batch(self.model, z)


def _as_objective(model):
    """SurrogateModel or any object exposing values(Z)/grads(Z) (test hooks)."""
    if isinstance(model, SurrogateModel):
        return _SurrogateObjective(model)
    if hasattr(model, "values") and hasattr(model, "grads"):
        return model
    raise TypeError(f"cannot optimize over {type(model).__name__}")


def _stack_starts(starts) -> np.ndarray:
    if isinstance(starts, np.ndarray):
        return np.asarray(starts, dtype=float).copy()
    return np.array([s.values if isinstance(s, LatentVector) else s for s in starts], dtype=float)


def gradient_ascent(model, starts, step: float, iters: int) -> list[LatentVector]:
    """Fixed-step ascent on every start in parallel; outputs ordered as inputs.

    A trajectory whose iterate turns non-finite reverts to its last finite
    point, halts, and is reported through a warning log.
    """
    if iters < 0:
        raise ValueError("iters must be non-negative")
    obj = _as_objective(model)
    z = _stack_starts(starts)
    alive = np.ones(z.shape[0], dtype=bool)
    reverted = np.zeros(z.shape[0], dtype=bool)
    for _ in range(iters):
        if not alive.any():
            break
        grad = obj.grads(z[alive])
        proposal = z[alive] + step * grad
        finite = np.isfinite(proposal).all(axis=1)
        target = np.nonzero(alive)[0]
        z[target[finite]] = proposal[finite]
        reverted[target[~finite]] = True
        alive[target[~finite]] = False
    if reverted.any():
        logger.warning(
            "gradient ascent reverted %d/%d trajectories to their last finite point",
            int(reverted.sum()),
            z.shape[0],
        )
    return [LatentVector(row) for row in z]


def _lbfgs_direction(grad: np.ndarray, history: list) -> np.ndarray:
    """Two-loop recursion for the (negated-objective) descent direction."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if history:
        s, y, _ = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


def lbfgs_ascend(model, starts, max_iters: int, memory: int) -> list[LatentVector]:
    """L-BFGS maximization with Armijo backtracking; outputs ordered as inputs.

    Runs on the negated objective; a failed line search stops that trajectory
    at its last accepted point.
    """
    if memory < 1:
        raise ValueError("memory must be at least 1")
    if max_iters < 0:
        raise ValueError("max_iters must be non-negative")
    obj = _as_objective(model)
    z0 = _stack_starts(starts)
    finals = []
    for row in z0:
        x = row.copy()
        g = -obj.grads(x[None, :])[0]
        f = -float(obj.values(x[None, :])[0])
        history: list = []
        for _ in range(max_iters):
            if np.linalg.norm(g) < _GRAD_TOL:
                break
            p = _lbfgs_direction(g, history)
            slope = g @ p
            if slope >= 0.0:  # not a descent direction; fall back to steepest
                p = -g
                slope = g @ p
            t = 1.0
            accepted = False
            while t >= _MIN_BACKTRACK:
                x_new = x + t * p
                f_new = -float(obj.values(x_new[None, :])[0])
                if np.isfinite(f_new) and f_new <= f + _ARMIJO_C * t * slope:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                logger.warning("L-BFGS line search failed; stopping trajectory")
                break
            g_new = -obj.grads(x_new[None, :])[0]
            s = x_new - x
            y = g_new - g
            if s @ y > 1e-12:
                history.append((s, y, 1.0 / (s @ y)))
                if len(history) > memory:
                    history.pop(0)
            x, f, g = x_new, f_new, g_new
        finals.append(LatentVector(x))
    return finals


def _select_starts(model: SurrogateModel, candidates: np.ndarray, cfg: MboConfig) -> np.ndarray:
    policy = cfg.start_policy
    if policy == "auto":
        policy = "all-nodes" if candidates.shape[0] <= 5000 else "top-by-prediction"
    if policy == "all-nodes":
        return candidates
    scores = predict_batch(model, candidates)
    top = min(cfg.start_top_n, candidates.shape[0])
    order = np.argsort(-scores, kind="stable")[:top]
    return candidates[np.sort(order)]


def propose_designs(
    model: SurrogateModel,
    graph: LatentGraph,
    vae: VaeModel,
    cfg: MboConfig,
    candidates: np.ndarray | None = None,
) -> DesignSet:
    """Optimize from the start points, decode, dedupe, rank, truncate to budget.

    Duplicate decoded sequences keep their highest predicted score; ranking is
    by score descending with ties broken by first occurrence.
    """
    if graph.dim != model.input_dim or graph.dim != vae.latent_dim:
        raise ValueError("graph, surrogate, and VAE latent dimensions disagree")
    pool = graph.coords if candidates is None else np.asarray(candidates, dtype=float)
    starts = _select_starts(model, pool, cfg)
    if cfg.algorithm == "gradient-ascent":
        finals = gradient_ascent(model, starts, cfg.step_size, cfg.iterations)
    else:
        finals = lbfgs_ascend(model, starts, cfg.lbfgs_max_iters, cfg.lbfgs_memory)
    z = np.array([f.values for f in finals])
    scores = predict_batch(model, z)
    decoded = decode_batch(vae, z)

    best: dict[tuple, tuple[float, int, np.ndarray]] = {}
    for idx in range(z.shape[0]):
        key = tuple(int(v) for v in decoded[idx])
        score = float(scores[idx])
        if key not in best:
            best[key] = (score, idx, z[idx])
        elif score > best[key][0]:
            best[key] = (score, best[key][1], z[idx])
    ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[1][1]))
    designs = [
        Design(Sequence(key), latent.copy(), score)
        for key, (score, _, latent) in ranked[: cfg.budget]
    ]
    return DesignSet(designs)
