"""Small sequence VAE: token embedding, attention pooling, Gaussian latent, decoder.

The encoder embeds each position (symbol one-hot concatenated with a position
one-hot, so token states carry positional information), pools the L token
states into one vector with a learnable attention vector, and maps the pooled
state to the mean and log-sigma of a diagonal Gaussian over the latent space.
The decoder is a dense net from the latent vector to L x |A| logits. All
gradients are exact reverse-mode through the whole objective.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import Alphabet, Sequence

logger = logging.getLogger(__name__)

POOLING_MODES = ("literal", "softmax")

ATTENTION_DENOM_FLOOR = 1e-12


@dataclass
class VaeModel:
    """Trained encoder/pooling/decoder parameters plus shape metadata."""

    alphabet: Alphabet
    length: int
    latent_dim: int
    hidden_dim: int
    kl_weight: float
    pooling: str
    token_spec: nn.NetSpec
    token_params: nn.Params
    omega: np.ndarray
    mu_spec: nn.NetSpec
    mu_params: nn.Params
    logvar_spec: nn.NetSpec
    logvar_params: nn.Params
    decoder_spec: nn.NetSpec
    decoder_params: nn.Params
    seed: int = 0
    epoch_losses: list = field(default_factory=list)

    def parameter_arrays(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in a fixed order (used by updates and checks)."""
        named = []
        for prefix, params in (
            ("token", self.token_params),
            ("mu", self.mu_params),
            ("logvar", self.logvar_params),
            ("decoder", self.decoder_params),
        ):
            for i, (w, b) in enumerate(zip(params.weights, params.biases)):
                named.append((f"{prefix}.w{i}", w))
                named.append((f"{prefix}.b{i}", b))
        named.append(("omega", self.omega))
        return named

    def _set_arrays(self, arrays: list[np.ndarray]) -> None:
        it = iter(arrays)
        for params in (self.token_params, self.mu_params, self.logvar_params, self.decoder_params):
            for i in range(len(params.weights)):
                params.weights[i] = next(it)
                params.biases[i] = next(it)
        self.omega = next(it)


@dataclass
class VaeTrainConfig:
    """Architecture and training hyperparameters for :func:`train_vae`."""

    alphabet: Alphabet
    latent_dim: int = 16
    hidden_dim: int = 32
    decoder_hidden: int = 128
    kl_weight: float = 1e-2
    pooling: str = "literal"
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be at least 2")
        for name in ("hidden_dim", "decoder_hidden", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.kl_weight < 0 or not np.isfinite(self.kl_weight):
            raise ValueError("kl_weight must be finite and non-negative")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")


@dataclass(frozen=True)
class LatentVector:
    """A point in the VAE latent space."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError("latent vector must be a finite 1-D array")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def attention_pool(token_states: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Pool L token states into one vector with attention weights that sum to 1.

    Each weight is ``omega . exp(h_i)`` normalized by the sum over positions;
    weights can be negative since the weighting is not a softmax.
    """
    h = np.asarray(token_states, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if h.ndim != 2 or h.shape[1] != omega.shape[0]:
        raise ValueError(f"token states {h.shape} incompatible with omega {omega.shape}")
    u = np.exp(h) @ omega
    denom = u.sum()
    if abs(denom) <= ATTENTION_DENOM_FLOOR:
        raise ValueError("attention denominator underflow")
    return (u / denom) @ h


def kl_diag_gaussian(mu: np.ndarray, log_sigma: np.ndarray) -> float:
    """KL divergence of N(mu, diag(sigma^2)) from the standard Gaussian.

    Closed form ``0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)`` with
    ``sigma = exp(log_sigma)``; always non-negative.
    """
    mu = np.asarray(mu, dtype=float)
    log_sigma = np.asarray(log_sigma, dtype=float)
    sig2 = np.exp(2.0 * log_sigma)
    return float(0.5 * np.sum(mu * mu + sig2 - 1.0 - 2.0 * log_sigma))


def _token_inputs(alphabet_size: int, length: int, matrix: np.ndarray) -> np.ndarray:
    """One-hot (symbol + position) rows for every position of every sequence."""
    b = matrix.shape[0]
    rows = b * length
    x = np.zeros((rows, alphabet_size + length))
    x[np.arange(rows), matrix.ravel()] = 1.0
    x[np.arange(rows), alphabet_size + np.tile(np.arange(length), b)] = 1.0
    return x


def _pool_batch(h: np.ndarray, omega: np.ndarray, pooling: str):
    """Batched pooling over (B, L, d_h) token states; returns pooled and cache."""
    if pooling == "literal":
        e = np.exp(h)
        u = e @ omega
        denom = u.sum(axis=1)
        if np.min(np.abs(denom)) <= ATTENTION_DENOM_FLOOR:
            raise ValueError("attention denominator underflow")
        w = u / denom[:, None]
        pooled = np.einsum("bl,bld->bd", w, h)
        return pooled, ("literal", h, e, denom, w, pooled)
    w = nn.softmax(h @ omega)
    pooled = np.einsum("bl,bld->bd", w, h)
    return pooled, ("softmax", h, None, None, w, pooled)


def _pool_backward(cache, omega: np.ndarray, g_pooled: np.ndarray):
    """Gradients of the pooled states w.r.t. token states and omega."""
    kind, h, e, denom, w, pooled = cache
    dot_hg = np.einsum("bld,bd->bl", h, g_pooled)
    if kind == "literal":
        dot_pg = np.einsum("bd,bd->b", pooled, g_pooled)
        du = (dot_hg - dot_pg[:, None]) / denom[:, None]
        dh = w[:, :, None] * g_pooled[:, None, :] + du[:, :, None] * (omega[None, None, :] * e)
        domega = np.einsum("bl,bld->d", du, e)
        return dh, domega
    da = w * (dot_hg - np.sum(w * dot_hg, axis=1, keepdims=True))
    dh = w[:, :, None] * g_pooled[:, None, :] + da[:, :, None] * omega[None, None, :]
    domega = np.einsum("bl,bld->d", da, h)
    return dh, domega


def _loss_and_grads(model: VaeModel, matrix: np.ndarray, noise: np.ndarray, want_grads: bool):
    """Total/CE/KL over a batch index matrix, optionally with exact gradients.

    ``noise`` is the (B, d) reparameterization draw, fixed by the caller so
    the loss is a deterministic, differentiable function of the parameters.
    """
    b, length = matrix.shape
    a_size = model.alphabet.size
    x_in = _token_inputs(a_size, length, matrix)
    h_flat, token_cache = nn.forward_cached(model.token_params, model.token_spec, x_in)
    h = h_flat.reshape(b, length, model.hidden_dim)
    pooled, pool_cache = _pool_batch(h, model.omega, model.pooling)
    mu, mu_cache = nn.forward_cached(model.mu_params, model.mu_spec, pooled)
    logsig, logvar_cache = nn.forward_cached(model.logvar_params, model.logvar_spec, pooled)
    sig = np.exp(logsig)
    z = mu + sig * noise
    logits_flat, dec_cache = nn.forward_cached(model.decoder_params, model.decoder_spec, z)
    logits = logits_flat.reshape(b * length, a_size)
    classes = matrix.ravel()
    # Log-space CE: finite even when the true-class probability underflows.
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(b * length), classes]
    ce = float((log_norm - picked).sum() / b)
    probs = np.exp(shifted - log_norm[:, None])
    kl = float(0.5 * np.sum(mu * mu + sig * sig - 1.0 - 2.0 * logsig) / b)
    total = ce + model.kl_weight * kl
    if not want_grads:
        return total, ce, kl, None

    dlogits = probs
    dlogits[np.arange(b * length), classes] -= 1.0
    dlogits /= b
    dec_grads, dz = nn.backward(
        model.decoder_params, model.decoder_spec, dec_cache, dlogits.reshape(b, length * a_size)
    )
    eta = model.kl_weight
    dmu = dz + eta * mu / b
    dlogsig = dz * noise * sig + eta * (sig * sig - 1.0) / b
    mu_grads, dp1 = nn.backward(model.mu_params, model.mu_spec, mu_cache, dmu)
    logvar_grads, dp2 = nn.backward(model.logvar_params, model.logvar_spec, logvar_cache, dlogsig)
    dh, domega = _pool_backward(pool_cache, model.omega, dp1 + dp2)
    token_grads, _ = nn.backward(
        model.token_params, model.token_spec, token_cache, dh.reshape(b * length, model.hidden_dim)
    )
    grads = []
    for g in (token_grads, mu_grads, logvar_grads, dec_grads):
        grads.extend(g.arrays())
    grads.append(domega)
    return total, ce, kl, grads


def _batch_matrix(batch: list[Sequence], length: int | None = None) -> np.ndarray:
    if not batch:
        raise ValueError("batch must be non-empty")
    lengths = {len(s) for s in batch}
    if len(lengths) != 1:
        raise ValueError(f"batch has inconsistent lengths {sorted(lengths)}")
    if length is not None and lengths != {length}:
        raise ValueError(f"sequence length {lengths.pop()} != model length {length}")
    return np.array([s.indices for s in batch], dtype=np.int64)


def vae_loss(batch: list[Sequence], model: VaeModel, seed: int = 0):
    """(total, cross-entropy, KL) of a batch with a seeded latent draw.

    Total is mean per-sequence cross-entropy (summed over positions) plus the
    KL weight times the mean per-sequence KL divergence.
    """
    matrix = _batch_matrix(batch, model.length)
    noise = np.random.default_rng(seed).standard_normal((matrix.shape[0], model.latent_dim))
    total, ce, kl, _ = _loss_and_grads(model, matrix, noise, want_grads=False)
    return total, ce, kl


def vae_loss_grads(batch: list[Sequence], model: VaeModel, seed: int = 0):
    """(total, grads) where grads align with ``model.parameter_arrays()``."""
    matrix = _batch_matrix(batch, model.length)
    noise = np.random.default_rng(seed).standard_normal((matrix.shape[0], model.latent_dim))
    total, _, _, grads = _loss_and_grads(model, matrix, noise, want_grads=True)
    return total, grads


def _init_model(cfg: VaeTrainConfig, length: int, rng: np.random.Generator) -> VaeModel:
    a_size = cfg.alphabet.size
    token_spec = nn.NetSpec((a_size + length, cfg.hidden_dim), ("relu",), (0.0,))
    head_spec = nn.NetSpec((cfg.hidden_dim, cfg.latent_dim), ("identity",), (0.0,))
    decoder_spec = nn.NetSpec(
        (cfg.latent_dim, cfg.decoder_hidden, length * a_size),
        ("relu", "identity"),
        (0.0, 0.0),
    )
    # omega starts uniform-positive so the literal denominator is far from 0.
    omega = np.full(cfg.hidden_dim, 1.0 / cfg.hidden_dim)
    return VaeModel(
        alphabet=cfg.alphabet,
        length=length,
        latent_dim=cfg.latent_dim,
        hidden_dim=cfg.hidden_dim,
        kl_weight=cfg.kl_weight,
        pooling=cfg.pooling,
        token_spec=token_spec,
        token_params=nn.init_params(token_spec, rng),
        omega=omega,
        mu_spec=head_spec,
        mu_params=nn.init_params(head_spec, rng),
        logvar_spec=head_spec,
        logvar_params=nn.init_params(head_spec, rng),
        decoder_spec=decoder_spec,
        decoder_params=nn.init_params(decoder_spec, rng),
        seed=cfg.seed,
    )


def train_vae(corpus: list[Sequence], cfg: VaeTrainConfig) -> VaeModel:
    """Train on an unlabeled corpus; deterministic for a given config seed."""
    matrix = _batch_matrix(corpus)
    n, length = matrix.shape
    rng = np.random.default_rng(cfg.seed)
    model = _init_model(cfg, length, rng)
    arrays = [a for _, a in model.parameter_arrays()]
    state = nn.OptimizerState(scheme=cfg.optimizer, step_size=cfg.learning_rate)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            noise = rng.standard_normal((idx.size, cfg.latent_dim))
            total, _, _, grads = _loss_and_grads(model, matrix[idx], noise, want_grads=True)
            if not np.isfinite(total):
                raise RuntimeError(f"VAE training diverged at epoch {epoch}")
            arrays, state = nn.apply_update_arrays(arrays, grads, state)
            model._set_arrays(arrays)
            epoch_loss += total * idx.size
        model.epoch_losses.append(epoch_loss / n)
    if model.epoch_losses and model.epoch_losses[-1] > model.epoch_losses[0]:
        logger.warning(
            "VAE loss did not improve: first epoch %.4f, last epoch %.4f",
            model.epoch_losses[0],
            model.epoch_losses[-1],
        )
    return model


def encode_batch(model: VaeModel, matrix: np.ndarray) -> np.ndarray:
    """Deterministic latent means for an (n, L) index matrix."""
    matrix = np.asarray(matrix, dtype=np.int64)
    b, length = matrix.shape
    if length != model.length:
        raise ValueError(f"sequence length {length} != model length {model.length}")
    x_in = _token_inputs(model.alphabet.size, length, matrix)
    h = nn.forward(model.token_params, model.token_spec, x_in).reshape(b, length, model.hidden_dim)
    pooled, _ = _pool_batch(h, model.omega, model.pooling)
    return nn.forward(model.mu_params, model.mu_spec, pooled)


def encode(model: VaeModel, s: Sequence) -> LatentVector:
    """Latent mean of one sequence (no sampling)."""
    if len(s) != model.length:
        raise ValueError(f"sequence length {len(s)} != model length {model.length}")
    return LatentVector(encode_batch(model, np.array([s.indices]))[0])


def decode_batch(model: VaeModel, z: np.ndarray) -> np.ndarray:
    """Argmax decoding of (n, d) latents to an (n, L) index matrix."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise ValueError(f"latents {z.shape} incompatible with latent dim {model.latent_dim}")
    logits = nn.forward(model.decoder_params, model.decoder_spec, z)
    return logits.reshape(z.shape[0], model.length, model.alphabet.size).argmax(axis=2)


def decode(model: VaeModel, z: LatentVector) -> Sequence:
    """Per-position argmax of the decoder logits; ties pick the lowest index."""
    row = decode_batch(model, np.asarray(z.values, dtype=float)[None, :])[0]
    return Sequence.from_array(row)


def reconstruction_accuracy(model: VaeModel, sequences: list[Sequence]) -> float:
    """Mean per-position accuracy of decode(encode(s)) over the sequences."""
    matrix = _batch_matrix(sequences, model.length)
    recon = decode_batch(model, encode_batch(model, matrix))
    return float((recon == matrix).mean())


def save_vae(path, model: VaeModel) -> None:
    """Write the model to ``.npz``: a JSON meta header plus float64 arrays."""
    meta = {
        "alphabet": "".join(model.alphabet.symbols),
        "length": model.length,
        "latent_dim": model.latent_dim,
        "hidden_dim": model.hidden_dim,
        "kl_weight": model.kl_weight,
        "pooling": model.pooling,
        "seed": model.seed,
        "specs": {
            name: {"sizes": list(spec.sizes), "activations": list(spec.activations), "dropout": list(spec.dropout)}
            for name, spec in (
                ("token", model.token_spec),
                ("mu", model.mu_spec),
                ("logvar", model.logvar_spec),
                ("decoder", model.decoder_spec),
            )
        },
    }
    arrays = {name.replace(".", "_"): arr for name, arr in model.parameter_arrays()}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_vae(path) -> VaeModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))

        def spec_of(name):
            s = meta["specs"][name]
            return nn.NetSpec(tuple(s["sizes"]), tuple(s["activations"]), tuple(s["dropout"]))

        def params_of(name, spec):
            weights = [data[f"{name}_w{i}"] for i in range(spec.n_layers)]
            biases = [data[f"{name}_b{i}"] for i in range(spec.n_layers)]
            return nn.Params(weights, biases)

        token_spec = spec_of("token")
        mu_spec = spec_of("mu")
        logvar_spec = spec_of("logvar")
        decoder_spec = spec_of("decoder")
        model = VaeModel(
            alphabet=Alphabet.from_string(meta["alphabet"]),
            length=meta["length"],
            latent_dim=meta["latent_dim"],
            hidden_dim=meta["hidden_dim"],
            kl_weight=meta["kl_weight"],
            pooling=meta["pooling"],
            token_spec=token_spec,
            token_params=params_of("token", token_spec),
            omega=data["omega"],
            mu_spec=mu_spec,
            mu_params=params_of("mu", mu_spec),
            logvar_spec=logvar_spec,
            logvar_params=params_of("logvar", logvar_spec),
            decoder_spec=decoder_spec,
            decoder_params=params_of("decoder", decoder_spec),
            seed=meta["seed"],
        )
    return model
