"""A small ReLU encoder trained to put embeddings on predefined centers.

Backpropagation and AdamW are written out by hand in numpy.  Parameters and
optimizer moments are float32 so checkpoints hold them bit-exactly; losses
and their gradients with respect to the embeddings are evaluated in float64.
"""

from __future__ import annotations

import copy
import enum
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import core
from .data import LabeledDataset, concat
from .errors import (
    CenterDriftError,
    ConfigurationError,
    DivergenceError,
    EmptyInputError,
    InvalidArchitectureError,
    LabelRangeError,
    MissingClassError,
    ParseError,
    ShapeError,
)
from .rootsys import CenterConfiguration, CenterMatrix, Family


class Loss(str, enum.Enum):
    COS = "cos"
    DIST = "dist"
    COMBINED = "combined"


@dataclass
class EncoderParams:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def param_count(self) -> int:
        return int(sum(a.size for a in self.arrays()))

    def copy(self) -> "EncoderParams":
        return EncoderParams(tuple(self.layer_dims), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams(
            tuple(self.layer_dims),
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
        )

    def equals(self, other: "EncoderParams") -> bool:
        return tuple(self.layer_dims) == tuple(other.layer_dims) and all(
            a.dtype == b.dtype and np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: Loss = Loss.COS
    seed: int = 0
    label_permutation: np.ndarray | None = None
    # (epoch, new_rate): epochs after ``epoch`` use ``new_rate``
    lr_drop: tuple[int, float] | None = None
    weight_dist: float = 1.0
    weight_cos: float = 1.0

    def __post_init__(self):
        self.loss = Loss(self.loss)
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if not (self.learning_rate > 0 and self.weight_decay >= 0):
            raise ConfigurationError("learning rate must be positive and weight decay non-negative")
        if self.lr_drop is not None and not self.lr_drop[1] > 0:
            raise ConfigurationError("lr_drop rate must be positive")
        if self.label_permutation is not None:
            perm = np.asarray(self.label_permutation, dtype=np.int64)
            if not np.array_equal(np.sort(perm), np.arange(len(perm))):
                raise ConfigurationError("label_permutation is not a permutation")
            self.label_permutation = perm

    @property
    def metric(self) -> str:
        return "dist" if self.loss is Loss.DIST else "cos"

    def rate_for_epoch(self, epoch: int) -> float:
        """Learning rate used in 1-based ``epoch``."""
        if self.lr_drop is not None and epoch > self.lr_drop[0]:
            return float(self.lr_drop[1])
        return self.learning_rate

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "loss": self.loss.value,
            "seed": self.seed,
            "label_permutation": None if self.label_permutation is None else self.label_permutation.tolist(),
            "lr_drop": None if self.lr_drop is None else list(self.lr_drop),
            "weight_dist": self.weight_dist,
            "weight_cos": self.weight_cos,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("lr_drop") is not None:
            d["lr_drop"] = (int(d["lr_drop"][0]), float(d["lr_drop"][1]))
        return cls(**d)


@dataclass
class TrainState:
    params: EncoderParams
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    epoch: int = 0
    history: list[dict] = field(default_factory=list)
    rng_state: dict | None = None
    config: TrainConfig | None = None
    # centers the parameters were last trained against (not checkpointed)
    centers: CenterMatrix | None = None

    @classmethod
    def fresh(cls, params: EncoderParams, seed: int = 0) -> "TrainState":
        return cls(
            params=params,
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
            rng_state=np.random.default_rng(seed).bit_generator.state,
        )

    def copy(self) -> "TrainState":
        return TrainState(
            self.params.copy(),
            [a.copy() for a in self.m],
            [a.copy() for a in self.v],
            self.step,
            self.epoch,
            copy.deepcopy(self.history),
            copy.deepcopy(self.rng_state),
            self.config,
            self.centers,
        )


def init_encoder(layer_dims, seed: int = 0, dtype=np.float32) -> EncoderParams:
    """Weights ~ N(0, 1/fan_in), zero biases, drawn deterministically from ``seed``."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidArchitectureError(f"need at least two positive layer sizes, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append((rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return EncoderParams(dims, weights, biases)


def _forward_cache(params: EncoderParams, X):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != params.layer_dims[0]:
        raise ShapeError(f"expected inputs of width {params.layer_dims[0]}, got shape {X.shape}")
    a = X.astype(params.dtype, copy=False)
    inputs, pre = [], []
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        h = a @ w.T + b
        pre.append(h)
        a = np.maximum(h, 0) if l < last else h
    return a, (inputs, pre)


def forward(params: EncoderParams, X) -> np.ndarray:
    """Affine + ReLU hidden layers, affine output layer."""
    return _forward_cache(params, X)[0]


def backward(params: EncoderParams, cache, dZ) -> list[np.ndarray]:
    """Gradients of the loss for every parameter array, ordered like ``params.arrays()``."""
    inputs, pre = cache
    g = np.asarray(dZ, dtype=params.dtype)
    grads = [None] * (2 * len(params.weights))
    for l in range(len(params.weights) - 1, -1, -1):
        grads[2 * l] = g.T @ inputs[l]
        grads[2 * l + 1] = g.sum(axis=0)
        if l > 0:
            g = (g @ params.weights[l]) * (pre[l - 1] > 0)
    return grads


def adamw_update(p, g, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One in-place AdamW step (decoupled decay applied before the Adam update)."""
    if weight_decay:
        p *= p.dtype.type(1.0 - lr * weight_decay)
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    return p


def loss_and_grad(Z, targets, C: CenterMatrix, cfg: TrainConfig):
    """Batch loss and its gradient w.r.t. the embeddings; gathers centers once."""
    Zd = np.asarray(Z, dtype=np.float64)
    Cb = core.gather_centers(C, targets)
    if cfg.loss is Loss.COS:
        return core.cos_loss(Zd, Cb), core.cos_loss_grad(Zd, Cb)
    radii = C.radius(targets)
    if cfg.loss is Loss.DIST:
        return core.dist_loss_gathered(Zd, Cb, radii), core.dist_loss_grad_gathered(Zd, Cb, radii)
    return (
        core.combined_loss_gathered(Zd, Cb, radii, cfg.weight_dist, cfg.weight_cos),
        core.combined_loss_grad_gathered(Zd, Cb, radii, cfg.weight_dist, cfg.weight_cos),
    )


def _targets(labels: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    if cfg.label_permutation is None:
        return labels
    return cfg.label_permutation[labels]


def train_step(state: TrainState, X, labels, C: CenterMatrix, cfg: TrainConfig, lr: float | None = None):
    """Forward, gather, loss, backprop and one AdamW update, in place. Returns the loss."""
    # overflow here means divergence, which the caller reports
    with np.errstate(over="ignore", invalid="ignore"):
        Z, cache = _forward_cache(state.params, X)
        loss, dZ = loss_and_grad(Z, _targets(np.asarray(labels), cfg), C, cfg)
    if not np.isfinite(loss.value) or not np.all(np.isfinite(dZ)):
        return loss
    grads = backward(state.params, cache, dZ)
    state.step += 1
    rate = cfg.learning_rate if lr is None else lr
    for k, (p, g) in enumerate(zip(state.params.arrays(), grads)):
        decay = cfg.weight_decay if k % 2 == 0 else 0.0
        adamw_update(p, g, state.m[k], state.v[k], state.step, rate,
                     cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, decay)
    return loss


def _check_compat(params: EncoderParams, dataset: LabeledDataset, C: CenterMatrix, cfg: TrainConfig | None = None):
    if params.n_dim != C.n_dim:
        raise ShapeError(f"encoder output dim {params.n_dim} != center dim {C.n_dim}")
    if dataset.dim != params.layer_dims[0]:
        raise ShapeError(f"feature dim {dataset.dim} != encoder input dim {params.layer_dims[0]}")
    limit = C.n_classes
    if cfg is not None and cfg.label_permutation is not None:
        if len(cfg.label_permutation) != C.n_classes:
            raise ConfigurationError("label_permutation must cover every center")
    bad = np.flatnonzero(dataset.labels >= limit)
    if len(bad):
        raise LabelRangeError(int(bad[0]), int(dataset.labels[bad[0]]), limit)


def predict(params: EncoderParams, X, C: CenterMatrix, metric: str = "cos") -> np.ndarray:
    Z = forward(params, X).astype(np.float64)
    if metric == "dist":
        return core.assign_labels_dist(Z, C)
    return core.assign_labels_cos(Z, C)


def eval_accuracy(params: EncoderParams, dataset: LabeledDataset, C: CenterMatrix,
                  metric: str = "cos", label_permutation=None) -> float:
    """Fraction of samples whose nearest center is their (possibly permuted) class center."""
    if dataset is None or len(dataset) == 0:
        raise EmptyInputError("cannot evaluate on an empty dataset")
    _check_compat(params, dataset, C)
    truth = dataset.labels if label_permutation is None else np.asarray(label_permutation)[dataset.labels]
    return float(np.mean(predict(params, dataset.features, C, metric) == truth))


def train(state: TrainState, dataset: LabeledDataset, C: CenterMatrix, cfg: TrainConfig) -> TrainState:
    """Run ``cfg.epochs`` epochs of shuffled mini-batch training; returns a new state.

    Each epoch appends ``{"epoch", "loss", "train_accuracy", "lr"}`` to the
    history, where loss is the mean batch loss and accuracy is measured
    after the epoch on the whole dataset.
    """
    _check_compat(state.params, dataset, C, cfg)
    state = state.copy()
    state.config = cfg
    state.centers = C
    rng = np.random.default_rng()
    rng.bit_generator.state = state.rng_state or np.random.default_rng(cfg.seed).bit_generator.state
    X, y = dataset.features, dataset.labels
    m = len(dataset)
    for _ in range(cfg.epochs):
        epoch = state.epoch + 1
        lr = cfg.rate_for_epoch(epoch)
        snapshot = state.copy()
        order = rng.permutation(m)
        losses = []
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = train_step(state, X[idx], y[idx], C, cfg, lr)
            if not np.isfinite(loss.value):
                raise DivergenceError(epoch, snapshot)
            losses.append(loss.value)
        acc = eval_accuracy(state.params, dataset, C, cfg.metric, cfg.label_permutation)
        state.epoch = epoch
        state.rng_state = rng.bit_generator.state
        state.history.append({"epoch": epoch, "loss": float(np.mean(losses)), "train_accuracy": acc, "lr": lr})
    state.rng_state = rng.bit_generator.state
    return state


def extract_mean_embeddings(params: EncoderParams, dataset: LabeledDataset, n_classes: int | None = None) -> CenterMatrix:
    """Per-class mean embedding (row i = mean over class-i samples)."""
    n_classes = dataset.n_classes if n_classes is None else n_classes
    Z = forward(params, dataset.features).astype(np.float64)
    counts = np.bincount(dataset.labels, minlength=n_classes)
    missing = np.flatnonzero(counts == 0)
    if len(missing):
        raise MissingClassError(int(missing[0]))
    sums = np.zeros((n_classes, Z.shape[1]))
    np.add.at(sums, dataset.labels, Z)
    means = sums / counts[:, None]
    cfg = CenterConfiguration.from_vectors(means, family=Family.CEEMBS)
    return CenterMatrix(means, config=cfg, source=Family.CEEMBS.value)


def distill(teacher_params: EncoderParams, student_layer_dims, dataset: LabeledDataset, cfg: TrainConfig) -> TrainState:
    """Train a fresh student on the teacher's class-mean embeddings with the cosine loss.

    The teacher runs once, to extract the targets; the returned state's
    ``centers`` are those targets.
    """
    dims = tuple(student_layer_dims)
    if dims[-1] != teacher_params.n_dim:
        raise InvalidArchitectureError(
            f"student output dim {dims[-1]} != teacher output dim {teacher_params.n_dim}"
        )
    if dims[0] != teacher_params.layer_dims[0]:
        raise InvalidArchitectureError("student and teacher must read the same features")
    targets = extract_mean_embeddings(teacher_params, dataset)
    student = TrainState.fresh(init_encoder(dims, cfg.seed), cfg.seed)
    return train(student, dataset, targets, replace(cfg, loss=Loss.COS))


def continual_extend(state: TrainState, new_dataset: LabeledDataset | None, C_extended: CenterMatrix,
                     cfg: TrainConfig, *, old_dataset: LabeledDataset | None = None,
                     previous_centers: CenterMatrix | None = None) -> TrainState:
    """Resume training on old + new data against centers with appended classes.

    ``previous_centers`` defaults to the centers ``state`` was trained
    against; their rows must reappear unchanged at the top of ``C_extended``.
    """
    previous = previous_centers if previous_centers is not None else state.centers
    if previous is None:
        raise ConfigurationError("the previous center matrix is unknown")
    if not C_extended.starts_with(previous):
        raise CenterDriftError("extended centers do not start with the previous center rows")
    parts = [p.relabeled(C_extended.n_classes) for p in (old_dataset, new_dataset) if p is not None and len(p)]
    if not parts:
        raise EmptyInputError("no data to continue training on")
    combined = concat(*parts)
    return train(state, combined, C_extended, cfg)


# --- checkpoints -----------------------------------------------------------

CKPT_MAGIC = b"LSCK"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<4sII")


def save_checkpoint(path, state: TrainState, extra: dict | None = None) -> None:
    """Versioned container: magic, version, JSON header, then raw float32 blobs.

    Blob order: parameters (W0, b0, W1, b1, ...), first moments, second moments.
    """
    params = state.params
    if params.dtype != np.float32:
        raise ConfigurationError("checkpoints store float32 parameters")
    header = {
        "layer_dims": list(params.layer_dims),
        "dtype": "float32",
        "step": state.step,
        "epoch": state.epoch,
        "history": state.history,
        "rng_state": state.rng_state,
        "config": None if state.config is None else state.config.to_dict(),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(blob)))
        fh.write(blob)
        for arr in params.arrays() + state.m + state.v:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[TrainState, dict]:
    """Inverse of :func:`save_checkpoint`; returns (state, extra)."""
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEAD.size:
        raise ParseError(f"{path}: truncated checkpoint")
    magic, version, hlen = _CKPT_HEAD.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CKPT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    off = _CKPT_HEAD.size
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except ValueError as exc:
        raise ParseError(f"{path}: bad header: {exc}") from exc
    off += hlen
    dims = tuple(header["layer_dims"])
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes += [(fan_out, fan_in), (fan_out,)]
    arrays = []
    for _ in range(3):
        for shape in shapes:
            n = int(np.prod(shape))
            if off + 4 * n > len(data):
                raise ParseError(f"{path}: truncated parameter data")
            arrays.append(np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float32))
            off += 4 * n
    if off != len(data):
        raise ParseError(f"{path}: {len(data) - off} trailing bytes")
    k = len(shapes)
    p = arrays[:k]
    params = EncoderParams(dims, p[0::2], p[1::2])
    cfg = None if header.get("config") is None else TrainConfig.from_dict(header["config"])
    state = TrainState(params, arrays[k:2 * k], arrays[2 * k:], header["step"], header["epoch"],
                       header["history"], header["rng_state"], cfg)
    return state, header.get("extra", {})
