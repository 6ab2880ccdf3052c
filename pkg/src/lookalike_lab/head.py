"""Trainable shared-weight projection head over frozen face embeddings.

Both branches of the Siamese comparison apply one parameter set, so a
single ``HeadParams`` *is* the pair of branches.  The head is either a lone
affine map (activation "identity") or a one-hidden-layer MLP with a tanh
hidden nonlinearity (activation "tanh").

The objective is the contrastive loss

    L = (1 - y) * D^2 + y * max(0, m - D)^2,     D = ||f(x1) - f(x2)||_2

with label 0 for similar (twin) pairs and 1 for dissimilar (look-alike)
pairs: the squared distance pulls similar pairs together while the hinge
pushes dissimilar pairs past the margin m.  Subgradient 0 is used at the
two non-smooth points D = 0 and D = m.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegeneratePool,
    DimensionMismatch,
    DivergenceError,
    FormatError,
    TruncationError,
    ValidationError,
)
from .pairing import LABEL_SIMILAR, PairSpec, balanced_sampler

IDENTITY = "identity"
TANH = "tanh"
_ACTIVATION_CODES = {IDENTITY: 0, TANH: 1}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}

SGD = "sgd"
MOMENTUM = "momentum"


@dataclass(frozen=True)
class HeadParams:
    """Projection-head parameters, shared between both Siamese branches.

    ``weights[k]`` has shape (fan_out, fan_in); "identity" heads hold one
    affine layer, "tanh" heads hold two with tanh between them.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = IDENTITY

    def __post_init__(self):
        expected_layers = 1 if self.activation == IDENTITY else 2
        if self.activation not in _ACTIVATION_CODES:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if len(self.weights) != expected_layers or len(self.biases) != expected_layers:
            raise ValidationError(
                f"{self.activation} head needs {expected_layers} layer(s), "
                f"got {len(self.weights)} weights / {len(self.biases)} biases")
        prev = None
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValidationError(f"layer shapes {W.shape} / {b.shape} inconsistent")
            if prev is not None and W.shape[1] != prev:
                raise ValidationError("consecutive layer dimensions do not chain")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValidationError("head parameters must be finite")
            prev = W.shape[0]
        if self.d_out < 1:
            raise ValidationError("output dimension must be >= 1")
        for arr in (*self.weights, *self.biases):
            arr.setflags(write=False)

    @property
    def d_in(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def d_out(self) -> int:
        return int(self.weights[-1].shape[0])

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Project one embedding into head space."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d_in,):
            raise DimensionMismatch(f"expected input of shape ({self.d_in},), got {x.shape}")
        h = self.weights[0] @ x + self.biases[0]
        if self.activation == TANH:
            h = self.weights[1] @ np.tanh(h) + self.biases[1]
        return h

    def forward_batch(self, rows: np.ndarray) -> np.ndarray:
        """Project a block of embeddings, one per row."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.d_in:
            raise DimensionMismatch(f"expected rows of width {self.d_in}, got {rows.shape}")
        h = rows @ self.weights[0].T + self.biases[0]
        if self.activation == TANH:
            h = np.tanh(h) @ self.weights[1].T + self.biases[1]
        return h

    def flatten(self) -> np.ndarray:
        """All parameters as one vector (gradient-check convenience)."""
        return np.concatenate([a.ravel() for a in (*self.weights, *self.biases)])

    def with_flat(self, flat: np.ndarray) -> "HeadParams":
        """Rebuild parameters from a flat vector of the same total size."""
        arrays = []
        offset = 0
        for ref in (*self.weights, *self.biases):
            arrays.append(flat[offset:offset + ref.size].reshape(ref.shape).copy())
            offset += ref.size
        if offset != flat.size:
            raise DimensionMismatch(f"flat vector has {flat.size} entries, expected {offset}")
        n = len(self.weights)
        return HeadParams(tuple(arrays[:n]), tuple(arrays[n:]), self.activation)


def init_params(d_in: int, d_out: int, seed: int = 0, activation: str = IDENTITY,
                hidden_dim: int | None = None, noise: float = 1e-3) -> HeadParams:
    """Near-identity initialization: identity-padded (or truncated) weights
    plus small seeded uniform noise, zero biases.

    The head therefore starts close to raw embedding distance, the warm
    start a pretrained backbone would provide.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))

    def eye_block(rows: int, cols: int) -> np.ndarray:
        W = np.zeros((rows, cols))
        np.fill_diagonal(W, 1.0)
        return W + rng.uniform(-noise, noise, size=(rows, cols))

    if activation == IDENTITY:
        return HeadParams((eye_block(d_out, d_in),), (np.zeros(d_out),), IDENTITY)
    if activation == TANH:
        hidden = hidden_dim if hidden_dim is not None else d_out
        return HeadParams(
            (eye_block(hidden, d_in), eye_block(d_out, hidden)),
            (np.zeros(hidden), np.zeros(d_out)),
            TANH,
        )
    raise ConfigError(f"unknown activation {activation!r}")


@dataclass(frozen=True)
class LossValue:
    """Contrastive loss value together with the branch-output distance."""

    value: float
    distance: float


def contrastive_loss(p1: np.ndarray, p2: np.ndarray, y: int, margin: float) -> LossValue:
    """L = (1-y) * D^2 + y * max(0, m - D)^2 on projected pairs.

    Zero exactly when a similar pair coincides (y=0, D=0) or a dissimilar
    pair clears the margin (y=1, D >= m).  Symmetric in p1, p2.
    """
    if margin <= 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape != p2.shape:
        raise DimensionMismatch(f"shapes {p1.shape} and {p2.shape} differ")
    d = p1 - p2
    dist = float(np.sqrt((d * d).sum()))
    if y == 0:
        value = dist * dist
    else:
        hinge = max(0.0, margin - dist)
        value = hinge * hinge
    return LossValue(value, dist)


@dataclass(frozen=True)
class HeadGradient:
    """Per-layer gradients, same shapes as the HeadParams they refer to."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (*self.weights, *self.biases)])

    def scaled(self, factor: float) -> "HeadGradient":
        return HeadGradient(tuple(W * factor for W in self.weights),
                            tuple(b * factor for b in self.biases))


def _zero_gradient(params: HeadParams) -> HeadGradient:
    return HeadGradient(tuple(np.zeros_like(W) for W in params.weights),
                        tuple(np.zeros_like(b) for b in params.biases))


def loss_gradient(params: HeadParams, x1: np.ndarray, x2: np.ndarray,
                  y: int, margin: float) -> tuple[LossValue, HeadGradient]:
    """Analytic gradient of the contrastive loss through the shared weights.

    Both branches accumulate into the same parameter set.  At the
    non-differentiable points (D = 0 with y = 1, and the hinge corner
    D = m) the subgradient 0 is returned.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    # branch forwards, keeping hidden activations for backprop
    def branch(x):
        z = params.weights[0] @ x + params.biases[0]
        if params.activation == TANH:
            h = np.tanh(z)
            return params.weights[1] @ h + params.biases[1], h
        return z, None

    p1, h1 = branch(x1)
    p2, h2 = branch(x2)
    diff = p1 - p2
    dist = float(np.sqrt((diff * diff).sum()))
    if y == 0:
        value = dist * dist
        dl_ddiff = 2.0 * diff
    else:
        hinge = max(0.0, margin - dist)
        value = hinge * hinge
        if hinge == 0.0 or dist == 0.0:
            return LossValue(value, dist), _zero_gradient(params)
        dl_ddiff = (-2.0 * hinge / dist) * diff

    d_weights = [np.zeros_like(W) for W in params.weights]
    d_biases = [np.zeros_like(b) for b in params.biases]
    for sign, x, h in ((1.0, x1, h1), (-1.0, x2, h2)):
        g_out = sign * dl_ddiff
        if params.activation == TANH:
            d_weights[1] += np.outer(g_out, h)
            d_biases[1] += g_out
            g_hidden = (params.weights[1].T @ g_out) * (1.0 - h * h)
            d_weights[0] += np.outer(g_hidden, x)
            d_biases[0] += g_hidden
        else:
            d_weights[0] += np.outer(g_out, x)
            d_biases[0] += g_out
    return LossValue(value, dist), HeadGradient(tuple(d_weights), tuple(d_biases))


def batch_loss_and_gradient(params: HeadParams, pairs: "list[tuple[np.ndarray, np.ndarray, int]]",
                            margin: float) -> tuple[float, HeadGradient]:
    """Mean loss and mean gradient over a batch of (x1, x2, y) samples.

    Per-sample gradients are stacked and reduced with numpy's pairwise
    summation (a fixed reduction tree), so the result does not depend on
    any parallel evaluation order of the samples.
    """
    losses = np.empty(len(pairs))
    w_stacks = [np.empty((len(pairs),) + W.shape) for W in params.weights]
    b_stacks = [np.empty((len(pairs),) + b.shape) for b in params.biases]
    for i, (x1, x2, y) in enumerate(pairs):
        loss, grad = loss_gradient(params, x1, x2, y, margin)
        losses[i] = loss.value
        for k in range(len(w_stacks)):
            w_stacks[k][i] = grad.weights[k]
            b_stacks[k][i] = grad.biases[k]
    mean_grad = HeadGradient(tuple(s.mean(axis=0) for s in w_stacks),
                             tuple(s.mean(axis=0) for s in b_stacks))
    return float(losses.mean()), mean_grad


@dataclass(frozen=True)
class TrainConfig:
    """Training schedule; the defaults are the reference fine-tuning recipe
    (four epochs at learning rate 1e-5 with margin 0.5)."""

    learning_rate: float = 1e-5
    margin: float = 0.5
    epochs: int = 4
    steps_per_epoch: int | None = None
    seed: int = 0
    optimizer: str = SGD
    momentum_beta: float = 0.9
    d_out: int = 64
    activation: str = IDENTITY
    hidden_dim: int | None = None
    init_noise: float = 1e-3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")
        if self.optimizer not in (SGD, MOMENTUM):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum_beta < 1.0:
            raise ConfigError(f"momentum_beta must be in [0, 1), got {self.momentum_beta}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    val_auc: float


def _pair_rows(pairs: list[PairSpec], store, index: dict[str, int]) -> list[tuple[np.ndarray, np.ndarray, int]]:
    rows = store.matrix64()
    out = []
    for p in pairs:
        if p.label is None:
            raise ValidationError(f"pair ({p.a}, {p.b}) has no training label")
        if p.a not in index or p.b not in index:
            raise ValidationError(f"pair ({p.a}, {p.b}) references an image missing from the store")
        out.append((rows[index[p.a]], rows[index[p.b]], p.label))
    return out


def _validation_auc(params: HeadParams, samples) -> float:
    """AUC of -distance as a similarity-verification score on labelled pairs
    (genuine = similar label); ties count one half."""
    genuine, impostor = [], []
    for x1, x2, y in samples:
        d = params.forward(x1) - params.forward(x2)
        score = -float(np.sqrt((d * d).sum()))
        (genuine if y == LABEL_SIMILAR else impostor).append(score)
    if not genuine or not impostor:
        return float("nan")
    g = np.sort(np.asarray(genuine))
    i = np.sort(np.asarray(impostor))
    wins = np.searchsorted(i, g, side="left").sum()
    ties = (np.searchsorted(i, g, side="right") - np.searchsorted(i, g, side="left")).sum()
    return float((wins + 0.5 * ties) / (len(g) * len(i)))


def train(train_pairs: list[PairSpec], val_pairs: list[PairSpec], store,
          config: TrainConfig) -> tuple[HeadParams, list[EpochStats]]:
    """Optimize the head with balanced-sampled SGD steps.

    Each epoch draws ``steps_per_epoch`` pairs (default: one per training
    pair) from the 50/50 balanced sampler and records held-out verification
    AUC; stopping on AUC degradation is realized as returning the
    best-AUC epoch's checkpoint.  Fully deterministic for a given seed.
    """
    index = {img: i for i, img in enumerate(store.image_ids)}
    train_samples = _pair_rows(train_pairs, store, index)
    val_samples = _pair_rows(val_pairs, store, index) if val_pairs else []
    by_key = {p.key(): s for p, s in zip(train_pairs, train_samples)}

    params = init_params(store.dim, config.d_out, seed=config.seed,
                         activation=config.activation, hidden_dim=config.hidden_dim,
                         noise=config.init_noise)
    steps = config.steps_per_epoch if config.steps_per_epoch is not None else len(train_pairs)
    sampler = balanced_sampler(train_pairs, seed=config.seed)
    velocity = _zero_gradient(params)

    best_params = params
    best_auc = -np.inf
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        losses = np.empty(steps)
        for step in range(steps):
            x1, x2, y = by_key[next(sampler).key()]
            loss, grad = loss_gradient(params, x1, x2, y, config.margin)
            losses[step] = loss.value
            if not np.isfinite(loss.value):
                raise DivergenceError(f"loss became non-finite at epoch {epoch} step {step}")
            if config.optimizer == MOMENTUM:
                velocity = HeadGradient(
                    tuple(config.momentum_beta * v + g for v, g in zip(velocity.weights, grad.weights)),
                    tuple(config.momentum_beta * v + g for v, g in zip(velocity.biases, grad.biases)))
                update = velocity
            else:
                update = grad
            params = HeadParams(
                tuple(W - config.learning_rate * dW for W, dW in zip(params.weights, update.weights)),
                tuple(b - config.learning_rate * db for b, db in zip(params.biases, update.biases)),
                params.activation)
        val_auc = _validation_auc(params, val_samples) if val_samples else float("nan")
        history.append(EpochStats(epoch, float(losses.mean()), val_auc))
        if val_samples and val_auc > best_auc:
            best_auc = val_auc
            best_params = params
    if not val_samples:
        best_params = params
    return best_params, history


# --- HED1 parameter file ---

_HED1_MAGIC = b"HED1"
_HED1_VERSION = 1


def write_head(path, params: HeadParams) -> None:
    """Serialize head parameters: magic HED1, u16 version, u32 d_in,
    u32 d_out, u8 activation code (u32 hidden size follows for tanh heads),
    then row-major f64 weights and biases per layer."""
    parts = [struct.pack("<4sHIIB", _HED1_MAGIC, _HED1_VERSION,
                         params.d_in, params.d_out, _ACTIVATION_CODES[params.activation])]
    if params.activation == TANH:
        parts.append(struct.pack("<I", params.weights[0].shape[0]))
    for W, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def read_head(path) -> HeadParams:
    with open(path, "rb") as f:
        data = f.read()
    head = struct.Struct("<4sHIIB")
    if len(data) < head.size:
        raise TruncationError(f"{path}: file shorter than HED1 header")
    magic, version, d_in, d_out, act_code = head.unpack_from(data, 0)
    if magic != _HED1_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _HED1_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if act_code not in _ACTIVATION_NAMES:
        raise FormatError(f"{path}: unknown activation code {act_code}")
    activation = _ACTIVATION_NAMES[act_code]
    offset = head.size
    if activation == TANH:
        if len(data) < offset + 4:
            raise TruncationError(f"{path}: missing hidden size")
        (hidden,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shapes = [(hidden, d_in), (hidden,), (d_out, hidden), (d_out,)]
    else:
        shapes = [(d_out, d_in), (d_out,)]
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape))
        if offset + 8 * n > len(data):
            raise TruncationError(f"{path}: truncated parameter block")
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape).copy())
        offset += 8 * n
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    if activation == TANH:
        return HeadParams((arrays[0], arrays[2]), (arrays[1], arrays[3]), TANH)
    return HeadParams((arrays[0],), (arrays[1],), IDENTITY)
