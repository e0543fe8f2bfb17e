"""Minimal dense feed-forward kernel with exact reverse-mode gradients.

Fixed-topology networks only: a stack of dense layers, each followed by a
relu or identity activation and optional inverted dropout (kept units are
scaled by 1/keep at train time, so inference needs no rescaling). Gradients
are computed analytically and can be validated against central finite
differences with :func:`finite_diff_check`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

ACTIVATIONS = ("relu", "identity")
LOSSES = ("mse", "cross-entropy")
OPTIMIZER_SCHEMES = ("sgd-momentum", "adam")


@dataclass(frozen=True)
class NetSpec:
    """Layer widths plus per-layer activation and dropout rate.

    ``sizes`` lists the input width followed by every layer's output width,
    so a spec with ``sizes=(4, 16, 1)`` has two dense layers.
    """

    sizes: tuple[int, ...]
    activations: tuple[str, ...]
    dropout: tuple[float, ...]

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("need at least one layer")
        if any(s <= 0 for s in self.sizes):
            raise ValueError(f"layer sizes must be positive: {self.sizes}")
        n = self.n_layers
        if len(self.activations) != n or len(self.dropout) != n:
            raise ValueError("activations and dropout must have one entry per layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        for r in self.dropout:
            if not 0 <= r < 1:
                raise ValueError(f"dropout rate must be in [0, 1), got {r}")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @classmethod
    def mlp(cls, sizes, hidden_activation: str = "relu", dropout=0.0) -> "NetSpec":
        """Relu (or given) hidden layers with an identity output layer.

        ``dropout`` may be a scalar applied to every hidden layer or a
        full per-layer tuple.
        """
        sizes = tuple(int(s) for s in sizes)
        n = len(sizes) - 1
        acts = tuple([hidden_activation] * (n - 1) + ["identity"])
        if np.isscalar(dropout):
            drop = tuple([float(dropout)] * (n - 1) + [0.0])
        else:
            drop = tuple(float(r) for r in dropout)
        return cls(sizes, acts, drop)


@dataclass
class Params:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "Params":
        return Params([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        """Flat view in update order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def check_finite(self) -> None:
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite parameter value")


def init_params(spec: NetSpec, rng: np.random.Generator) -> Params:
    """He-scaled init for relu layers, Xavier for identity; zero biases."""
    weights, biases = [], []
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.sizes[i], spec.sizes[i + 1]
        scale = np.sqrt(2.0 / fan_in) if spec.activations[i] == "relu" else np.sqrt(1.0 / fan_in)
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return Params(weights, biases)


def _check_shapes(params: Params, spec: NetSpec, x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != spec.sizes[0]:
        raise ValueError(f"input shape {x.shape} incompatible with input size {spec.sizes[0]}")
    for i in range(spec.n_layers):
        if params.weights[i].shape != (spec.sizes[i], spec.sizes[i + 1]):
            raise ValueError(f"weight {i} shape {params.weights[i].shape} mismatches spec")
        if params.biases[i].shape != (spec.sizes[i + 1],):
            raise ValueError(f"bias {i} shape {params.biases[i].shape} mismatches spec")


def forward_cached(params: Params, spec: NetSpec, x, mode: str = "infer", seed: int = 0):
    """Forward pass returning the output and the cache needed for backward."""
    x = np.asarray(x, dtype=float)
    _check_shapes(params, spec, x)
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed) if mode == "train" else None
    h = x
    cache = []
    for i in range(spec.n_layers):
        z = h @ params.weights[i] + params.biases[i]
        if spec.activations[i] == "relu":
            a = np.maximum(z, 0.0)
        else:
            a = z
        rate = spec.dropout[i]
        if mode == "train" and rate > 0.0:
            keep = 1.0 - rate
            mask = (rng.random(a.shape) < keep) / keep
            a = a * mask
        else:
            mask = None
        cache.append((h, z, mask))
        h = a
    return h, cache


def forward(params: Params, spec: NetSpec, x, mode: str = "infer", seed: int = 0) -> np.ndarray:
    """Batch forward pass; train mode applies seeded inverted dropout."""
    out, _ = forward_cached(params, spec, x, mode, seed)
    return out


def backward(params: Params, spec: NetSpec, cache, grad_out: np.ndarray):
    """Backpropagate ``grad_out`` through a cached forward pass.

    Returns parameter gradients (same shapes as ``params``) and the gradient
    with respect to the input batch. Relu uses subgradient 0 at exactly 0.
    """
    g = np.asarray(grad_out, dtype=float)
    w_grads = [None] * spec.n_layers
    b_grads = [None] * spec.n_layers
    for i in range(spec.n_layers - 1, -1, -1):
        h, z, mask = cache[i]
        if mask is not None:
            g = g * mask
        if spec.activations[i] == "relu":
            g = g * (z > 0.0)
        w_grads[i] = h.T @ g
        b_grads[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return Params(w_grads, b_grads), g


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for stability; rows sum to 1."""
    z = np.asarray(z, dtype=float)
    s = np.exp(z - z.max(axis=-1, keepdims=True))
    return s / s.sum(axis=-1, keepdims=True)


def mse_loss_grad(pred: np.ndarray, targets: np.ndarray):
    """Mean over rows of the squared error summed over output columns."""
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape != pred.shape:
        raise ValueError(f"target shape {targets.shape} != prediction shape {pred.shape}")
    diff = pred - targets
    loss = float((diff ** 2).sum() / pred.shape[0])
    return loss, 2.0 * diff / pred.shape[0]


def cross_entropy_loss_grad(logits: np.ndarray, classes: np.ndarray):
    """Mean categorical cross-entropy of row logits against integer classes.

    Computed in log space so the loss stays finite when the true-class
    probability underflows.
    """
    classes = np.asarray(classes)
    if classes.ndim != 1 or classes.shape[0] != logits.shape[0]:
        raise ValueError("classes must be one integer per logit row")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float((log_norm - shifted[np.arange(n), classes]).mean())
    grad = np.exp(shifted - log_norm[:, None])
    grad[np.arange(n), classes] -= 1.0
    return loss, grad / n


@dataclass
class GradReport:
    """Loss plus exact gradients for every parameter and the input batch."""

    loss: float
    param_grads: Params
    input_grads: np.ndarray


def forward_backward(
    params: Params,
    spec: NetSpec,
    x,
    targets,
    loss: str = "mse",
    mode: str = "infer",
    seed: int = 0,
) -> GradReport:
    """Loss and exact gradients; train mode reuses one dropout draw per call."""
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    out, cache = forward_cached(params, spec, x, mode, seed)
    if loss == "mse":
        value, grad_out = mse_loss_grad(out, targets)
    else:
        value, grad_out = cross_entropy_loss_grad(out, targets)
    if not np.isfinite(value):
        raise FloatingPointError("non-finite loss")
    param_grads, input_grads = backward(params, spec, cache, grad_out)
    for a in param_grads.arrays():
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite gradient")
    if not np.all(np.isfinite(input_grads)):
        raise FloatingPointError("non-finite input gradient")
    return GradReport(value, param_grads, input_grads)


def finite_diff_check(
    params: Params,
    spec: NetSpec,
    x,
    targets,
    loss: str = "mse",
    epsilon: float = 1e-5,
    mode: str = "infer",
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error for each coordinate is |analytic - fd| / max(1, |analytic|);
    both parameter and input coordinates are checked.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    x = np.asarray(x, dtype=float)
    report = forward_backward(params, spec, x, targets, loss, mode, seed)

    def loss_at(p: Params, xv: np.ndarray) -> float:
        out, _ = forward_cached(p, spec, xv, mode, seed)
        if loss == "mse":
            value, _ = mse_loss_grad(out, targets)
        else:
            value, _ = cross_entropy_loss_grad(out, targets)
        return value

    worst = 0.0
    work = params.copy()
    for arr, grad in zip(work.arrays(), report.param_grads.arrays()):
        flat, gflat = arr.ravel(), grad.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            hi = loss_at(work, x)
            flat[idx] = orig - epsilon
            lo = loss_at(work, x)
            flat[idx] = orig
            fd = (hi - lo) / (2.0 * epsilon)
            worst = max(worst, abs(gflat[idx] - fd) / max(1.0, abs(gflat[idx])))
    xwork = x.copy()
    xflat, gflat = xwork.ravel(), report.input_grads.ravel()
    for idx in range(xflat.size):
        orig = xflat[idx]
        xflat[idx] = orig + epsilon
        hi = loss_at(params, xwork)
        xflat[idx] = orig - epsilon
        lo = loss_at(params, xwork)
        xflat[idx] = orig
        fd = (hi - lo) / (2.0 * epsilon)
        worst = max(worst, abs(gflat[idx] - fd) / max(1.0, abs(gflat[idx])))
    return worst


@dataclass
class OptimizerState:
    """First-order update rule plus per-parameter accumulators.

    ``adam`` keeps first/second moment estimates with bias correction;
    ``sgd-momentum`` keeps a velocity per parameter. Accumulators are
    allocated lazily on the first update and must then match shapes.
    """

    scheme: str = "adam"
    step_size: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    slots: list[dict] | None = None
    t: int = 0

    def __post_init__(self):
        if self.scheme not in OPTIMIZER_SCHEMES:
            raise ValueError(f"unknown optimizer scheme {self.scheme!r}")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")


def apply_update(params: Params, grads: Params, state: OptimizerState):
    """One optimizer step; pure, returns new params and new state."""
    new_arrays, new_state = apply_update_arrays(params.arrays(), grads.arrays(), state)
    return Params(new_arrays[0::2], new_arrays[1::2]), new_state


def apply_update_arrays(arrays: list, garrays: list, state: OptimizerState):
    """One optimizer step over a flat list of arrays (pure)."""
    if len(arrays) != len(garrays):
        raise ValueError("gradient layout mismatches parameters")
    for a, g in zip(arrays, garrays):
        if a.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} mismatches parameter shape {a.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if state.slots is None:
        slots = []
        for a in arrays:
            slot = {"m": np.zeros_like(a)}
            if state.scheme == "adam":
                slot["v"] = np.zeros_like(a)
            slots.append(slot)
    else:
        slots = state.slots
        if len(slots) != len(arrays) or any(s["m"].shape != a.shape for s, a in zip(slots, arrays)):
            raise ValueError("accumulator shapes mismatch parameters")

    new_arrays = []
    new_slots = []
    t = state.t + 1
    for a, g, slot in zip(arrays, garrays, slots):
        if state.scheme == "sgd-momentum":
            m = state.momentum * slot["m"] + g
            new_arrays.append(a - state.step_size * m)
            new_slots.append({"m": m})
        else:
            m = state.beta1 * slot["m"] + (1.0 - state.beta1) * g
            v = state.beta2 * slot["v"] + (1.0 - state.beta2) * g * g
            mhat = m / (1.0 - state.beta1 ** t)
            vhat = v / (1.0 - state.beta2 ** t)
            new_arrays.append(a - state.step_size * mhat / (np.sqrt(vhat) + state.eps))
            new_slots.append({"m": m, "v": v})
    return new_arrays, replace(state, slots=new_slots, t=t)


def save_params(path, spec: NetSpec, params: Params, extra_meta: dict | None = None) -> None:
    """Write spec + parameters to an ``.npz`` file (exact binary round trip).

    Layout: a JSON string under ``meta`` describing the spec (and any extra
    metadata) plus row-major float64 arrays ``w0, b0, w1, b1, ...``.
    """
    meta = {
        "sizes": list(spec.sizes),
        "activations": list(spec.activations),
        "dropout": list(spec.dropout),
        "extra": extra_meta or {},
    }
    arrays = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_params(path):
    """Inverse of :func:`save_params`; returns (spec, params, extra_meta)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        spec = NetSpec(
            tuple(meta["sizes"]),
            tuple(meta["activations"]),
            tuple(meta["dropout"]),
        )
        weights = [data[f"w{i}"] for i in range(spec.n_layers)]
        biases = [data[f"b{i}"] for i in range(spec.n_layers)]
    return spec, Params(weights, biases), meta["extra"]
