"""Dense tanh networks with hand-written backprop and Adam, plus the AE and
VAE models built from them.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of shape
``(batch, fan_in)`` maps to ``X @ W + b``. Hidden layers use tanh; the last
layer is linear unless ``tanh_output`` is set (used for encoder halves, whose
bottleneck is a tanh layer of the full autoencoder).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

AE_SHAPE = (25, 16, 5, 16, 25)


class TrainingDivergence(FloatingPointError):
    """Loss became non-finite during training."""


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    tanh_output: bool = False

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {W.shape} does not match bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {i}: input dim {W.shape[0]} does not chain")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(W.shape[1] for W in self.weights))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.tanh_output)

    def slice(self, start: int, stop: int | None = None, tanh_output: bool = False) -> "MlpParams":
        return MlpParams(self.weights[start:stop], self.biases[start:stop], tanh_output)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    val_fraction: float = 0.2
    patience: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")


@dataclass
class TrainReport:
    epochs_run: int
    best_val_loss: float
    best_epoch: int
    final_train_loss: float
    stopped_early: bool
    init_train_loss: float
    train_history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)


# --- core network ops ---------------------------------------------------------


def init_params(shape: Sequence[int], seed: int | np.random.Generator, tanh_output: bool = False) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    if len(shape) < 2 or any(int(s) < 1 for s in shape):
        raise ValueError(f"invalid layer shape {shape}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(shape[:-1], shape[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, tanh_output)


def _forward_cache(params: MlpParams, X: np.ndarray) -> list[np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"expected input with {params.weights[0].shape[0]} columns, got shape {X.shape}")
    acts = [X]
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        a = acts[-1] @ W + b
        if i < last or params.tanh_output:
            a = np.tanh(a)
        acts.append(a)
    return acts


def forward(params: MlpParams, X: np.ndarray) -> np.ndarray:
    return _forward_cache(params, X)[-1]


def _backward(params: MlpParams, acts: list[np.ndarray], d_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients (in ``arrays()`` order) and input gradient given dLoss/dOutput."""
    grads: list[np.ndarray] = [None] * (2 * len(params.weights))  # type: ignore[list-item]
    delta = d_out
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        if i < last or params.tanh_output:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
    return grads, delta


def mse_loss(params: MlpParams, X: np.ndarray, target: np.ndarray | None = None) -> float:
    Y = X if target is None else target
    return float(np.mean((forward(params, X) - Y) ** 2))


def grad_mse(params: MlpParams, X: np.ndarray, target: np.ndarray | None = None) -> tuple[float, list[np.ndarray]]:
    """Mean-squared error (over all entries) and its exact gradient.

    With ``target=None`` the network is scored on reconstructing ``X``.
    """
    X = np.asarray(X, dtype=float)
    Y = X if target is None else np.asarray(target, dtype=float)
    acts = _forward_cache(params, X)
    resid = acts[-1] - Y
    loss = float(np.mean(resid**2))
    grads, _ = _backward(params, acts, 2.0 * resid / resid.size)
    return loss, grads


class Adam:
    def __init__(self, arrays: list[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = arrays
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for a, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def chronological_split(X: np.ndarray, val_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    n = X.shape[0]
    n_val = int(round(n * val_fraction))
    if n_val < 1 or n - n_val < 1:
        raise ValueError(f"window of {n} rows is too short for validation fraction {val_fraction}")
    return X[: n - n_val], X[n - n_val :]


def _fit(
    arrays: list[np.ndarray],
    step_loss: Callable[[np.ndarray], tuple[float, list[np.ndarray]]],
    eval_loss: Callable[[np.ndarray, bool], float],
    X_train: np.ndarray,
    X_val: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> TrainReport:
    """Minibatch Adam with early stopping; restores the best-validation weights in place."""
    opt = Adam(arrays, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    init_train = eval_loss(X_train, False)
    best_val = eval_loss(X_val, True)
    best = [a.copy() for a in arrays]
    best_epoch, wait, stopped = 0, 0, False
    train_hist: list[float] = []
    val_hist: list[float] = []
    n = X_train.shape[0]
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            loss, grads = step_loss(X_train[perm[s : s + cfg.batch_size]])
            if not np.isfinite(loss):
                raise TrainingDivergence(f"non-finite training loss at epoch {epoch}")
            opt.step(grads)
        tr = eval_loss(X_train, False)
        va = eval_loss(X_val, True)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise TrainingDivergence(f"non-finite loss at end of epoch {epoch}")
        train_hist.append(tr)
        val_hist.append(va)
        if va < best_val:
            best_val, best_epoch, wait = va, epoch, 0
            best = [a.copy() for a in arrays]
        else:
            wait += 1
            if wait >= cfg.patience:
                stopped = True
                break
    for a, b in zip(arrays, best):
        a[...] = b
    return TrainReport(
        epochs_run=epoch,
        best_val_loss=float(best_val),
        best_epoch=best_epoch,
        final_train_loss=float(eval_loss(X_train, False)),
        stopped_early=stopped,
        init_train_loss=float(init_train),
        train_history=train_hist,
        val_history=val_hist,
    )


# --- autoencoder --------------------------------------------------------------


@dataclass
class AeModel:
    params: MlpParams  # full chain, e.g. 25 -> 16 -> 5 -> 16 -> 25
    latent_layer: int  # number of layers in the encoder half
    report: TrainReport | None = None
    standardizer: object | None = None

    @property
    def encoder(self) -> MlpParams:
        return self.params.slice(0, self.latent_layer, tanh_output=True)

    @property
    def decoder(self) -> MlpParams:
        return self.params.slice(self.latent_layer)

    @property
    def latent_dim(self) -> int:
        return self.params.weights[self.latent_layer - 1].shape[1]


def new_ae(shape: Sequence[int] = AE_SHAPE, seed: int = 0) -> AeModel:
    if len(shape) % 2 == 0:
        raise ValueError("autoencoder shape must be symmetric with an odd number of sizes")
    return AeModel(init_params(shape, seed), latent_layer=len(shape) // 2)


def encode(m: AeModel, X: np.ndarray) -> np.ndarray:
    return forward(m.encoder, X)


def decode(m: AeModel, Z: np.ndarray) -> np.ndarray:
    return forward(m.decoder, Z)


def train_ae(window: np.ndarray, cfg: TrainConfig = TrainConfig(), shape: Sequence[int] | None = None) -> AeModel:
    """Train an autoencoder on a standardized window (rows are days)."""
    X = np.asarray(window, dtype=float)
    if shape is None:
        n = X.shape[1]
        shape = (n, 16, 5, 16, n)
    rng = np.random.default_rng(cfg.seed)
    model = AeModel(init_params(shape, rng), latent_layer=len(shape) // 2)
    X_train, X_val = chronological_split(X, cfg.val_fraction)
    params = model.params

    def step(Xb):
        return grad_mse(params, Xb)

    def evaluate(Xe, _is_val):
        return mse_loss(params, Xe)

    model.report = _fit(params.arrays(), step, evaluate, X_train, X_val, cfg, rng)
    return model


# --- variational autoencoder --------------------------------------------------


def kl_divergence(mu, log_var) -> float:
    """KL(N(mu, diag exp(log_var)) || N(0, I)), summed over dimensions."""
    mu = np.asarray(mu, dtype=float)
    lv = np.asarray(log_var, dtype=float)
    return float(0.5 * np.sum(mu**2 + (np.expm1(lv) - lv)))  # expm1 avoids cancellation near lv = 0


def sample_latent(mu, log_var, eps) -> np.ndarray:
    mu, lv, eps = (np.asarray(a, dtype=float) for a in (mu, log_var, eps))
    if mu.shape != lv.shape or np.broadcast_shapes(mu.shape, eps.shape) != eps.shape:
        raise ValueError(f"shape mismatch: mu {mu.shape}, log_var {lv.shape}, eps {eps.shape}")
    return mu + np.exp(0.5 * lv) * eps


@dataclass
class VaeModel:
    trunk: MlpParams  # N -> 16, tanh output
    mu_head: MlpParams  # 16 -> d, linear
    logvar_head: MlpParams  # 16 -> d, linear
    decoder: MlpParams  # d -> 16 -> N
    kl_weight: float = 1.0
    report: TrainReport | None = None

    def arrays(self) -> list[np.ndarray]:
        return self.trunk.arrays() + self.mu_head.arrays() + self.logvar_head.arrays() + self.decoder.arrays()

    @property
    def latent_dim(self) -> int:
        return self.mu_head.weights[-1].shape[1]

    def networks(self) -> list[MlpParams]:
        return [self.trunk, self.mu_head, self.logvar_head, self.decoder]


def new_vae(n_inputs: int = 25, hidden: int = 16, d: int = 5, seed: int | np.random.Generator = 0) -> VaeModel:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    trunk = init_params((n_inputs, hidden), rng, tanh_output=True)
    mu_head = init_params((hidden, d), rng)
    lv_head = init_params((hidden, d), rng)
    decoder = init_params((d, hidden, n_inputs), rng)
    return VaeModel(trunk, mu_head, lv_head, decoder)


def vae_encode(m: VaeModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = forward(m.trunk, X)
    return forward(m.mu_head, h), forward(m.logvar_head, h)


def vae_decode(m: VaeModel, Z: np.ndarray) -> np.ndarray:
    return forward(m.decoder, Z)


def vae_loss_and_grad(m: VaeModel, X: np.ndarray, eps: np.ndarray, kl_weight: float | None = None, need_grad: bool = True):
    """Total loss ``MSE + kl_weight * mean_batch(KL)`` for a fixed noise draw.

    MSE averages over every entry of the batch; KL is summed over latent
    dimensions and averaged over rows. Returns ``(loss, mse, kl, grads)`` with
    grads ordered as ``m.arrays()``.
    """
    beta = m.kl_weight if kl_weight is None else kl_weight
    X = np.asarray(X, dtype=float)
    B = X.shape[0]
    t_acts = _forward_cache(m.trunk, X)
    h = t_acts[-1]
    mu_acts = _forward_cache(m.mu_head, h)
    lv_acts = _forward_cache(m.logvar_head, h)
    mu, lv = mu_acts[-1], lv_acts[-1]
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    d_acts = _forward_cache(m.decoder, z)
    resid = d_acts[-1] - X
    mse = float(np.mean(resid**2))
    kl = float(0.5 * np.sum(mu**2 + (np.expm1(lv) - lv)) / B)
    loss = mse + beta * kl
    if not need_grad:
        return loss, mse, kl, None

    g_dec, dz = _backward(m.decoder, d_acts, 2.0 * resid / resid.size)
    d_mu = dz + beta * mu / B
    d_lv = dz * eps * 0.5 * std + beta * 0.5 * (std**2 - 1.0) / B
    g_mu, dh_mu = _backward(m.mu_head, mu_acts, d_mu)
    g_lv, dh_lv = _backward(m.logvar_head, lv_acts, d_lv)
    g_trunk, _ = _backward(m.trunk, t_acts, dh_mu + dh_lv)
    return loss, mse, kl, g_trunk + g_mu + g_lv + g_dec


def train_vae(
    window: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    kl_weight: float | None = None,
    d: int = 5,
    hidden: int = 16,
) -> VaeModel:
    """Train a VAE on a standardized window with one noise draw per row per step.

    ``kl_weight=None`` uses ``1 / n_features``, which puts the KL term on the
    same footing as a reconstruction error summed over features. With weight
    1 against a per-entry MSE the posterior collapses onto the prior.

    Validation loss uses a single noise draw fixed before training so early
    stopping compares like with like across epochs.
    """
    X = np.asarray(window, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    model = new_vae(X.shape[1], hidden, d, rng)
    model.kl_weight = 1.0 / X.shape[1] if kl_weight is None else kl_weight
    X_train, X_val = chronological_split(X, cfg.val_fraction)
    val_eps = rng.standard_normal((X_val.shape[0], d))
    train_eps = rng.standard_normal((X_train.shape[0], d))

    def step(Xb):
        eps = rng.standard_normal((Xb.shape[0], d))
        loss, _, _, grads = vae_loss_and_grad(model, Xb, eps)
        return loss, grads

    def evaluate(Xe, is_val):
        eps = val_eps if is_val else train_eps
        return vae_loss_and_grad(model, Xe, eps, need_grad=False)[0]

    model.report = _fit(model.arrays(), step, evaluate, X_train, X_val, cfg, rng)
    return model


# --- flat binary weight dump --------------------------------------------------
#
# b"SLNN" | u32 version=1 | u32 n_networks | per network:
#   u32 tanh_output | u32 n_layers | u32 dims[n_layers + 1] |
#   per layer: f64 W[fan_in * fan_out] (row-major), f64 b[fan_out]
# All integers and floats little-endian.

_MAGIC = b"SLNN"
_VERSION = 1


def dump_networks(nets: Sequence[MlpParams], path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(nets)))
        for net in nets:
            dims = net.shape
            fh.write(struct.pack("<II", int(net.tanh_output), len(net.weights)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims))
            for W, b in zip(net.weights, net.biases):
                fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_networks(path: str | Path) -> list[MlpParams]:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{path}: not an SLNN weight file")
    version, n_nets = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported SLNN version {version}")
    off = 12
    nets = []
    for _ in range(n_nets):
        tanh_out, n_layers = struct.unpack_from("<II", buf, off)
        off += 8
        dims = struct.unpack_from(f"<{n_layers + 1}I", buf, off)
        off += 4 * (n_layers + 1)
        Ws, bs = [], []
        for fi, fo in zip(dims[:-1], dims[1:]):
            Ws.append(np.frombuffer(buf, "<f8", fi * fo, off).reshape(fi, fo).astype(float))
            off += 8 * fi * fo
            bs.append(np.frombuffer(buf, "<f8", fo, off).astype(float))
            off += 8 * fo
        nets.append(MlpParams(Ws, bs, bool(tanh_out)))
    return nets

