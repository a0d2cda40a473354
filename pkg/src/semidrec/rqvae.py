"""Residual-quantized autoencoder: encoder MLP, multi-level codebooks, decoder MLP.

The quantizer maps a latent z through p codebooks: level i picks the codeword
nearest to the running residual, and the residual recurrence r_{i+1} = r_i -
v_{d_i} telescopes so that z - zhat = r_p exactly. Training minimizes
reconstruction error plus the residual-quantization loss

    sum_i ||sg[r_i] - v_{d_i}||^2 + beta ||r_i - sg[v_{d_i}]||^2

where sg is stop-gradient. Numerically both terms share the value
||r_{i+1}||^2; the sg split only matters in the backward pass: the first term
moves codewords toward residuals, the commitment term pulls the encoder
toward its codewords, and the encoder receives reconstruction gradients
through the quantizer via the straight-through estimator. Residuals treat
earlier-level codewords as constants, so codebooks get no gradient from the
commitment term or from reconstruction.

Everything runs in float64 numpy; training is single-threaded and
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import fusion
from .errors import TrainingDivergence


@dataclass
class RqvaeConfig:
    input_dim: int = 64
    code_dim: int = 32
    hidden_dim: int = 128
    codebook_size: int = 256  # vectors per level
    num_levels: int = 4
    beta: float = 0.25

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        for name in ("input_dim", "code_dim", "hidden_dim", "codebook_size", "num_levels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class Codebook:
    level: int
    vectors: np.ndarray  # (K, code_dim)
    usage: np.ndarray = field(default=None)  # selections in the current epoch

    def __post_init__(self):
        if self.usage is None:
            self.usage = np.zeros(self.vectors.shape[0], dtype=np.int64)


@dataclass
class CodebookStack:
    levels: list[Codebook]

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def code_dim(self) -> int:
        return self.levels[0].vectors.shape[1]


class QuantizationResult(NamedTuple):
    codewords: list[int]
    quantized: np.ndarray
    residuals: list[np.ndarray]  # r_0 .. r_p; r_0 = z, r_p = z - quantized


def nearest_code(codebook: Codebook, r: np.ndarray) -> int:
    """Index of the codeword nearest to r in squared Euclidean distance.

    Ties resolve to the smallest index.
    """
    dists = ((codebook.vectors - r) ** 2).sum(axis=1)
    return int(np.argmin(dists))


def _nearest_codes(codebook: Codebook, R: np.ndarray) -> np.ndarray:
    dists = ((R[:, None, :] - codebook.vectors[None, :, :]) ** 2).sum(axis=-1)
    return dists.argmin(axis=1)


def quantize(stack: CodebookStack, z: np.ndarray) -> QuantizationResult:
    """Run the residual recurrence over all levels for a single latent."""
    z = np.asarray(z, dtype=float)
    residual = z
    codewords = []
    residuals = [residual]
    quantized = np.zeros_like(z)
    for cb in stack.levels:
        d = nearest_code(cb, residual)
        codewords.append(d)
        quantized = quantized + cb.vectors[d]
        residual = residual - cb.vectors[d]
        residuals.append(residual)
    return QuantizationResult(codewords, quantized, residuals)


def _quantize_batch(stack: CodebookStack, Z: np.ndarray):
    residual = Z
    residuals = [residual]
    codes = np.empty((Z.shape[0], stack.num_levels), dtype=np.int64)
    quantized = np.zeros_like(Z)
    for i, cb in enumerate(stack.levels):
        idx = _nearest_codes(cb, residual)
        codes[:, i] = idx
        quantized = quantized + cb.vectors[idx]
        residual = residual - cb.vectors[idx]
        residuals.append(residual)
    return codes, quantized, residuals


@dataclass
class RqvaeModel:
    """Two-layer tanh MLPs around the residual quantizer."""

    cfg: RqvaeConfig
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray
    stack: CodebookStack

    @classmethod
    def init(cls, cfg: RqvaeConfig, seed: int = 0) -> "RqvaeModel":
        rng = np.random.default_rng(seed)

        def layer(n_in, n_out):
            return rng.standard_normal((n_in, n_out)) / np.sqrt(n_in), np.zeros(n_out)

        w1, b1 = layer(cfg.input_dim, cfg.hidden_dim)
        w2, b2 = layer(cfg.hidden_dim, cfg.code_dim)
        w3, b3 = layer(cfg.code_dim, cfg.hidden_dim)
        w4, b4 = layer(cfg.hidden_dim, cfg.input_dim)
        # placeholder codebooks; train() re-initializes them with k-means
        levels = [
            Codebook(level=i, vectors=0.01 * rng.standard_normal((cfg.codebook_size, cfg.code_dim)))
            for i in range(cfg.num_levels)
        ]
        return cls(cfg, w1, b1, w2, b2, w3, b3, w4, b4, CodebookStack(levels))

    def encode(self, x: np.ndarray) -> np.ndarray:
        a1 = np.tanh(np.asarray(x, dtype=float) @ self.w1 + self.b1)
        return a1 @ self.w2 + self.b2

    def decode(self, zq: np.ndarray) -> np.ndarray:
        a2 = np.tanh(np.asarray(zq, dtype=float) @ self.w3 + self.b3)
        return a2 @ self.w4 + self.b4

    def parameters(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3, "w4": self.w4, "b4": self.b4}


class ForwardState(NamedTuple):
    x: np.ndarray
    a1: np.ndarray
    z: np.ndarray
    codes: np.ndarray
    residuals: list[np.ndarray]
    zq: np.ndarray
    a2: np.ndarray
    xhat: np.ndarray
    recon_per: np.ndarray
    rq_per: np.ndarray
    single: bool


class LossResult(NamedTuple):
    recon: float
    rq: float
    total: float
    state: ForwardState


@dataclass
class Grads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray
    codebooks: list[np.ndarray]
    d_input: np.ndarray  # gradient w.r.t. the encoder input (target side frozen)


def _forward(model: RqvaeModel, X: np.ndarray, single: bool) -> ForwardState:
    a1 = np.tanh(X @ model.w1 + model.b1)
    z = a1 @ model.w2 + model.b2
    codes, zq, residuals = _quantize_batch(model.stack, z)
    a2 = np.tanh(zq @ model.w3 + model.b3)
    xhat = a2 @ model.w4 + model.b4
    recon_per = ((X - xhat) ** 2).sum(axis=1)
    rq_per = (1.0 + model.cfg.beta) * sum(
        (residuals[i + 1] ** 2).sum(axis=1) for i in range(model.stack.num_levels)
    )
    return ForwardState(X, a1, z, codes, residuals, zq, a2, xhat, recon_per, rq_per, single)


def losses(model: RqvaeModel, x: np.ndarray) -> LossResult:
    """Reconstruction loss, RQ loss, their sum, and the cached forward state.

    For batched input the reported losses are per-example means.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    state = _forward(model, np.atleast_2d(x), single)
    recon = float(state.recon_per.mean())
    rq = float(state.rq_per.mean())
    if not (np.isfinite(recon) and np.isfinite(rq)):
        raise TrainingDivergence("numerical divergence in forward pass")
    return LossResult(recon, rq, recon + rq, state)


def backward(model: RqvaeModel, state: ForwardState) -> Grads:
    """Analytic gradients of the batch-mean total loss.

    Decoder: plain chain rule from reconstruction. Encoder: straight-through
    reconstruction gradient plus the commitment pull 2*beta*sum_i r_{i+1}.
    Codebooks: only the codeword-update term, -2*r_{i+1} on selected rows.
    """
    n = state.x.shape[0]
    beta = model.cfg.beta

    g_xhat = 2.0 * (state.xhat - state.x) / n
    g_w4 = state.a2.T @ g_xhat
    g_b4 = g_xhat.sum(axis=0)
    g_h2 = (g_xhat @ model.w4.T) * (1.0 - state.a2 ** 2)
    g_w3 = state.zq.T @ g_h2
    g_b3 = g_h2.sum(axis=0)
    g_dec_in = g_h2 @ model.w3.T

    g_z = g_dec_in + (2.0 * beta / n) * sum(state.residuals[1:])

    g_w2 = state.a1.T @ g_z
    g_b2 = g_z.sum(axis=0)
    g_h1 = (g_z @ model.w2.T) * (1.0 - state.a1 ** 2)
    g_w1 = state.x.T @ g_h1
    g_b1 = g_h1.sum(axis=0)
    d_input = g_h1 @ model.w1.T

    cb_grads = []
    for i, cb in enumerate(model.stack.levels):
        g = np.zeros_like(cb.vectors)
        np.add.at(g, state.codes[:, i], -2.0 * state.residuals[i + 1] / n)
        cb_grads.append(g)

    if state.single:
        d_input = d_input[0]
    return Grads(g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_w4, g_b4, cb_grads, d_input)


def kmeans(data: np.ndarray, k: int, rng: np.random.Generator, iters: int = 10) -> np.ndarray:
    """Seeded Lloyd iterations; final step is a mean update.

    Ending on the mean update guarantees that quantizing the same data with
    the returned centers never exceeds the data's mean squared norm. Empty
    clusters keep their previous center. When k exceeds the number of points,
    extra centers duplicate data points and stay idle until dead-code
    reseeding touches them.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n == 0:
        raise ValueError("kmeans needs at least one point")
    if k <= n:
        centers = data[rng.choice(n, size=k, replace=False)].copy()
    else:
        idx = np.concatenate([rng.permutation(n), rng.integers(0, n, size=k - n)])
        centers = data[idx].copy()
    for _ in range(iters):
        labels = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(-1).argmin(axis=1)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, data)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    return centers


def init_codebooks(model: RqvaeModel, X: np.ndarray, rng: np.random.Generator,
                   iters: int = 10) -> None:
    """K-means per level on the residuals left by the previous levels."""
    residual = model.encode(np.atleast_2d(np.asarray(X, dtype=float)))
    for cb in model.stack.levels:
        cb.vectors = kmeans(residual, cb.vectors.shape[0], rng, iters=iters)
        cb.usage[:] = 0
        idx = _nearest_codes(cb, residual)
        residual = residual - cb.vectors[idx]


class EpochStats(NamedTuple):
    recon: float
    rq: float


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs and batch_size must be >= 1 and lr > 0")


def _sgd_step(model: RqvaeModel, grads: Grads, lr: float) -> None:
    params = model.parameters()
    for name, p in params.items():
        p -= lr * getattr(grads, name)
    for cb, g in zip(model.stack.levels, grads.codebooks):
        cb.vectors -= lr * g


def _reseed_dead_codes(model: RqvaeModel, last_state: ForwardState,
                       rng: np.random.Generator) -> None:
    # dead = never selected this epoch; re-point it at a random residual the
    # level actually saw, so it can win assignments again
    for level, cb in enumerate(model.stack.levels):
        dead = np.flatnonzero(cb.usage == 0)
        if dead.size == 0:
            continue
        pool = last_state.residuals[level]
        cb.vectors[dead] = pool[rng.integers(0, pool.shape[0], size=dead.size)]


def train(model: RqvaeModel, inputs, config: TrainConfig) -> list[EpochStats]:
    """Plain SGD over shuffled minibatches; returns the per-epoch loss trace.

    Codebooks are (re-)initialized with seeded k-means on level-wise
    residuals of the initial encoder outputs; codes unused for a whole epoch
    are reseeded to random in-batch residuals. Deterministic for a fixed
    seed. Divergence aborts with the trace collected so far.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("train needs at least one input vector")
    rng = np.random.default_rng(config.seed)
    init_codebooks(model, X, rng)

    trace: list[EpochStats] = []
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for cb in model.stack.levels:
            cb.usage[:] = 0
        recon_sum = 0.0
        rq_sum = 0.0
        last_state = None
        for start in range(0, n, config.batch_size):
            batch = X[order[start:start + config.batch_size]]
            state = _forward(model, batch, single=False)
            if not (np.all(np.isfinite(state.recon_per)) and np.all(np.isfinite(state.rq_per))):
                raise TrainingDivergence(
                    "numerical divergence during training",
                    trace=trace, epoch=epoch, batch=start // config.batch_size,
                )
            grads = backward(model, state)
            _sgd_step(model, grads, config.lr)
            for i, cb in enumerate(model.stack.levels):
                np.add.at(cb.usage, state.codes[:, i], 1)
            recon_sum += float(state.recon_per.sum())
            rq_sum += float(state.rq_per.sum())
            last_state = state
        trace.append(EpochStats(recon_sum / n, rq_sum / n))
        _reseed_dead_codes(model, last_state, rng)
    return trace


def train_joint(model: RqvaeModel, attn: fusion.AttentionParams,
                reviews_by_user: dict[str, np.ndarray],
                id_by_user: dict[str, np.ndarray],
                config: TrainConfig) -> tuple[list[EpochStats], dict[str, np.ndarray]]:
    """Train the quantizer and the fusion matrix together.

    Each step re-fuses the batch users with the current attention matrix,
    runs the autoencoder on the fused vectors, and backpropagates the
    encoder-input gradient into A. The reconstruction target is the fused
    vector treated as a constant, so no gradient reaches A through the
    target side. Returns the loss trace and the final fused vectors.
    """
    users = sorted(reviews_by_user)
    if not users:
        raise ValueError("train_joint needs at least one user")
    rng = np.random.default_rng(config.seed)

    def fused_all():
        return np.stack([fusion.fuse(attn, reviews_by_user[u], id_by_user[u]) for u in users])

    init_codebooks(model, fused_all(), rng)

    trace: list[EpochStats] = []
    n = len(users)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for cb in model.stack.levels:
            cb.usage[:] = 0
        recon_sum = 0.0
        rq_sum = 0.0
        last_state = None
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            batch_users = [users[i] for i in rows]
            X = np.stack([
                fusion.fuse(attn, reviews_by_user[u], id_by_user[u]) for u in batch_users
            ])
            state = _forward(model, X, single=False)
            if not (np.all(np.isfinite(state.recon_per)) and np.all(np.isfinite(state.rq_per))):
                raise TrainingDivergence(
                    "numerical divergence during joint training",
                    trace=trace, epoch=epoch, batch=start // config.batch_size,
                )
            grads = backward(model, state)
            d_attn = np.zeros_like(attn.matrix)
            for row, u in enumerate(batch_users):
                d_attn += fusion.fusion_grad(
                    attn, reviews_by_user[u], id_by_user[u], grads.d_input[row]
                )
            _sgd_step(model, grads, config.lr)
            attn.matrix -= config.lr * d_attn
            for i, cb in enumerate(model.stack.levels):
                np.add.at(cb.usage, state.codes[:, i], 1)
            recon_sum += float(state.recon_per.sum())
            rq_sum += float(state.rq_per.sum())
            last_state = state
        trace.append(EpochStats(recon_sum / n, rq_sum / n))
        _reseed_dead_codes(model, last_state, rng)

    fused = fused_all()
    return trace, {u: fused[i] for i, u in enumerate(users)}


CHECKPOINT_VERSION = 1


def save_model(path, model: RqvaeModel, attention: fusion.AttentionParams | None = None) -> None:
    """Versioned npz checkpoint; float64 arrays round-trip bit-exactly."""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "dims": np.array([model.cfg.input_dim, model.cfg.code_dim, model.cfg.hidden_dim,
                          model.cfg.codebook_size, model.cfg.num_levels]),
        "beta": np.array(model.cfg.beta),
    }
    arrays.update(model.parameters())
    for i, cb in enumerate(model.stack.levels):
        arrays[f"codebook_{i}"] = cb.vectors
        arrays[f"usage_{i}"] = cb.usage
    if attention is not None:
        arrays["attention"] = attention.matrix
        arrays["attention_seed"] = np.array(attention.seed)
    np.savez(path, **arrays)


def load_model(path) -> tuple[RqvaeModel, fusion.AttentionParams | None]:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        d_in, d_code, d_hidden, k, p = (int(v) for v in data["dims"])
        cfg = RqvaeConfig(input_dim=d_in, code_dim=d_code, hidden_dim=d_hidden,
                          codebook_size=k, num_levels=p, beta=float(data["beta"]))
        levels = [
            Codebook(level=i, vectors=data[f"codebook_{i}"], usage=data[f"usage_{i}"])
            for i in range(p)
        ]
        model = RqvaeModel(
            cfg,
            data["w1"], data["b1"], data["w2"], data["b2"],
            data["w3"], data["b3"], data["w4"], data["b4"],
            CodebookStack(levels),
        )
        attention = None
        if "attention" in data:
            attention = fusion.AttentionParams(
                matrix=data["attention"], seed=int(data["attention_seed"])
            )
    return model, attention
