"""Minibatch SGD with plateau stopping, plus evaluation and checkpoints.

One training run is a pure function of (model spec, datasets, config):
initialization, shuffling, and the update sequence all come from the
config seed, so reruns are bit-identical.  Weight decay is coupled: the
update direction is the exact gradient of the penalized loss, i.e. the
minibatch data gradient plus ``2 * wd * theta``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import Dataset
from .errors import ConfigError, DimensionError, DivergenceError, FormatError, ParameterError
from .model import Batch, ModelSpec, ParamVector, _mean_cross_entropy, forward, he_init, loss_grad
from .rng import Rng

CHECKPOINT_MAGIC = b"LLAB"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LinearDecay:
    """Linear learning-rate ramp from full rate down to a final fraction."""

    start_epoch: int
    end_epoch: int
    final_fraction: float

    def __post_init__(self):
        if self.start_epoch >= self.end_epoch:
            raise ConfigError("schedule", "start_epoch must precede end_epoch")
        if not 0.0 <= self.final_fraction <= 1.0:
            raise ConfigError("schedule", "final_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr: float = 0.05
    weight_decay: float = 5e-4
    max_epochs: int = 150
    plateau_eps: float = 1e-4
    plateau_epochs: int = 5
    schedule: LinearDecay | None = None
    linear_scale_lr: bool = False
    reference_batch: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", "must be >= 1")
        # lr == 0 is legal: a zero-step run must leave the init untouched.
        if self.lr < 0:
            raise ConfigError("train.lr", "must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay", "must be >= 0")
        if self.max_epochs < 1:
            raise ConfigError("train.max_epochs", "must be >= 1")
        if self.reference_batch < 1:
            raise ConfigError("train.reference_batch", "must be >= 1")

    @property
    def effective_lr(self) -> float:
        if self.linear_scale_lr:
            return self.lr * (self.batch_size / self.reference_batch)
        return self.lr


def schedule_lr(epoch: int, base_lr: float, schedule: LinearDecay | None) -> float:
    """Learning rate at a given (0-based) epoch under an optional decay."""
    if schedule is None:
        return base_lr
    if epoch < schedule.start_epoch:
        return base_lr
    if epoch >= schedule.end_epoch:
        return base_lr * schedule.final_fraction
    span = schedule.end_epoch - schedule.start_epoch
    frac = (epoch - schedule.start_epoch) / span
    return base_lr * (1.0 - frac * (1.0 - schedule.final_fraction))


def linear_decay_lr(epoch: int, cfg: TrainConfig) -> float:
    if cfg.schedule is None:
        raise ConfigError("train.schedule", "linear_decay_lr requires a linear_decay schedule")
    return schedule_lr(epoch, cfg.effective_lr, cfg.schedule)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    lr_used: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_by_plateau: bool = False

    @property
    def best_train_loss_epoch(self) -> int:
        losses = [r.train_loss for r in self.records]
        return int(np.argmin(losses))

    @property
    def best_test_acc_epoch(self) -> int:
        accs = [r.test_acc for r in self.records]
        return int(np.argmax(accs))


@dataclass
class EvalResult:
    loss: float
    err01: float
    acc: float


def evaluate(spec: ModelSpec, theta: ParamVector, ds: Dataset, weight_decay: float = 0.0) -> EvalResult:
    """Mean cross-entropy (optionally penalized) and accuracy in percent.

    Argmax ties break toward the lowest class index.
    """
    if ds.n == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    logits = forward(spec, theta, ds.X)
    loss = _mean_cross_entropy(logits, ds.y)
    if weight_decay:
        loss += weight_decay * float(theta.values @ theta.values)
    pred = np.argmax(logits, axis=1)
    acc = 100.0 * float(np.mean(pred == ds.y))
    return EvalResult(loss=loss, err01=100.0 - acc, acc=acc)


def epoch_batches(n: int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """Shuffled disjoint minibatch index blocks covering every row once."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def _check_dims(spec: ModelSpec, ds: Dataset, which: str) -> None:
    if ds.dim != spec.input_dim:
        raise DimensionError(f"{which} dimension {ds.dim} != input_dim {spec.input_dim}")
    if ds.num_classes != spec.num_classes:
        raise DimensionError(f"{which} classes {ds.num_classes} != num_classes {spec.num_classes}")


def sgd_train(
    spec: ModelSpec,
    train: Dataset,
    test: Dataset,
    cfg: TrainConfig,
    data_weight: float = 1.0,
) -> tuple[ParamVector, TrainHistory]:
    """Train an MLP, returning the epoch-end weights with lowest training loss.

    Stops early once the epoch-end training loss changes by less than
    ``plateau_eps`` for ``plateau_epochs`` consecutive epochs; otherwise
    runs ``max_epochs``.  Best-loss selection applies either way.
    """
    _check_dims(spec, train, "train")
    _check_dims(spec, test, "test")
    rng = Rng(cfg.seed)
    theta = he_init(spec, rng)
    wd = cfg.weight_decay
    base_lr = cfg.effective_lr

    history = TrainHistory()
    best_loss = np.inf
    best_theta = theta.copy()
    prev_loss = None
    streak = 0

    for epoch in range(cfg.max_epochs):
        lr_t = schedule_lr(epoch, base_lr, cfg.schedule)
        # overflow on the way to a non-finite loss is expected and becomes
        # a DivergenceError, so the numpy warnings are just noise here
        with np.errstate(over="ignore", invalid="ignore"):
            for idx in epoch_batches(train.n, cfg.batch_size, rng):
                batch = Batch(train.X[idx], train.y[idx])
                loss_b, grad = loss_grad(spec, theta, batch, wd, data_weight)
                if not np.isfinite(loss_b):
                    raise DivergenceError(epoch)
                theta.values -= lr_t * grad.values

            train_eval = evaluate(spec, theta, train)
            epoch_loss = data_weight * train_eval.loss + wd * float(theta.values @ theta.values)
            if not np.isfinite(epoch_loss):
                raise DivergenceError(epoch)
            test_eval = evaluate(spec, theta, test)
        history.records.append(
            EpochRecord(epoch, epoch_loss, train_eval.acc, test_eval.loss, test_eval.acc, lr_t)
        )

        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_theta = theta.copy()

        if prev_loss is not None and abs(epoch_loss - prev_loss) < cfg.plateau_eps:
            streak += 1
            if streak >= cfg.plateau_epochs:
                history.stopped_by_plateau = True
                break
        else:
            streak = 0
        prev_loss = epoch_loss

    return best_theta, history


# -- checkpoint persistence ---------------------------------------------


def save_checkpoint(theta: ParamVector, spec: ModelSpec, meta: dict, path) -> None:
    """Binary checkpoint: magic, version, spec, raw f64 values, JSON meta."""
    if theta.layout != spec.layout():
        raise DimensionError("theta layout does not match spec")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", spec.input_dim)
    blob += struct.pack("<I", len(spec.hidden_widths))
    for w in spec.hidden_widths:
        blob += struct.pack("<I", w)
    blob += struct.pack("<I", spec.num_classes)
    blob += struct.pack("<Q", theta.values.size)
    blob += theta.values.astype("<f8").tobytes()
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(meta_bytes))
    blob += meta_bytes
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def _take(buf: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(buf):
        raise FormatError(f"checkpoint truncated while reading {what}")
    return buf[offset : offset + count], offset + count


def load_checkpoint(path) -> tuple[ParamVector, ModelSpec, dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, 4, "magic")
    if raw != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {raw!r}")
    raw, off = _take(buf, off, 4, "version")
    version = struct.unpack("<I", raw)[0]
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    raw, off = _take(buf, off, 4, "input_dim")
    input_dim = struct.unpack("<I", raw)[0]
    raw, off = _take(buf, off, 4, "hidden count")
    n_hidden = struct.unpack("<I", raw)[0]
    widths = []
    for i in range(n_hidden):
        raw, off = _take(buf, off, 4, f"hidden width {i}")
        widths.append(struct.unpack("<I", raw)[0])
    raw, off = _take(buf, off, 4, "num_classes")
    num_classes = struct.unpack("<I", raw)[0]
    spec = ModelSpec(input_dim=input_dim, hidden_widths=tuple(widths), num_classes=num_classes)
    raw, off = _take(buf, off, 8, "parameter count")
    count = struct.unpack("<Q", raw)[0]
    if count != spec.param_count:
        raise FormatError(f"parameter count {count} does not match spec ({spec.param_count})")
    raw, off = _take(buf, off, 8 * count, "parameter values")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    raw, off = _take(buf, off, 4, "meta length")
    meta_len = struct.unpack("<I", raw)[0]
    raw, off = _take(buf, off, meta_len, "meta")
    meta = json.loads(raw.decode("utf-8"))
    return ParamVector(spec.layout(), values), spec, meta
