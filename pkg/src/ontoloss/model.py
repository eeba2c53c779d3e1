"""Reference multi-label MLP trained with Adamax on the constraint loss."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import losses
from .datagen import Dataset
from .losses import ConfigError, LossConfig
from .metrics import f1_scores
from .ontology import ConstraintSet

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ontoloss-checkpoint"
CHECKPOINT_VERSION = 1
LOGIT_CLIP = 30.0


class NonFiniteError(FloatingPointError):
    pass


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; ``model`` holds the best checkpoint seen so far."""

    def __init__(self, epoch: int, model: "MLP", log: list):
        self.epoch = epoch
        self.model = model
        self.log = log
        super().__init__(f"non-finite loss in epoch {epoch}; last finite epoch {epoch - 1}")


@dataclass
class MLP:
    """Rectifier hidden layers, sigmoid outputs.  ``weights[i]`` has shape (in, out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator) -> "MLP":
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray, cache: bool = False):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("non-finite input features")
        single = x.ndim == 1
        h = x[None, :] if single else x
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
                acts.append(h)
        if not np.all(np.isfinite(z)):
            raise NonFiniteError("non-finite logits")
        out = 1.0 / (1.0 + np.exp(-np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)))
        if cache:
            return out, (acts, z)
        return out[0] if single else out

    def predict(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if len(x) == 0:
            return np.zeros((0, self.dims[-1]))
        return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def forward(model: MLP, features) -> np.ndarray:
    return model.forward(features)


def backward(model: MLP, features, y, cs: ConstraintSet, cfg: LossConfig, labelled=None):
    """Mean combined loss over the rows and its gradient for every parameter.

    Returns ``(BatchLoss, grads)`` with ``grads`` ordered like ``model.params()``.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
        y = None if y is None else np.asarray(y)[None, :]
        labelled = None if labelled is None else np.atleast_1d(labelled)
    n = len(x)
    out, (acts, z) = model.forward(x, cache=True)
    if y is None:
        y = np.zeros_like(out)
    parts = losses.batch_loss(cfg, cs, y, out, labelled)
    d_out = losses.batch_loss_grad(cfg, cs, y, out, labelled) / n
    live = np.abs(z) < LOGIT_CLIP
    delta = d_out * out * (1.0 - out) * live
    grads: list[np.ndarray] = []
    for i in range(len(model.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    grads.reverse()
    # reversed order is (W0, b0, W1, b1, ...), matching params()
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NonFiniteError("non-finite gradient")
    return parts, grads


@dataclass
class Adamax:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    u: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        """In-place update; returns ``params`` for convenience."""
        if len(params) != len(grads):
            raise ValueError("parameter and gradient lists differ in length")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.u = [np.zeros_like(p) for p in params]
        self.step_count += 1
        scale = self.lr / (1.0 - self.beta1**self.step_count)
        for p, g, m, u in zip(params, grads, self.m, self.u):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            np.maximum(self.beta2 * u, np.abs(g), out=u)
            p -= scale * m / (u + self.eps)
        return params


def adamax_step(opt: Adamax, params, grads):
    return opt.step(params, grads)


TRAIN_KEYS = ("max_epochs", "batch_size", "learning_rate", "hidden", "semi_supervised", "split")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (128,)
    seed: int = 0
    semi_supervised: bool = False
    loss: LossConfig = field(default_factory=LossConfig)
    split: tuple[float, float, float] = (340.0, 9.0, 51.0)

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def train_config_from_mapping(values: Mapping[str, str], seed: int = 0) -> TrainConfig:
    """Split a flat key-value mapping into trainer and loss settings."""
    unknown = set(values) - set(TRAIN_KEYS) - set(losses.LOSS_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    loss_cfg = losses.loss_config_from_mapping({k: v for k, v in values.items() if k in losses.LOSS_KEYS})
    kwargs: dict = {"seed": seed, "loss": loss_cfg}
    try:
        if "max_epochs" in values:
            kwargs["max_epochs"] = int(values["max_epochs"])
        if "batch_size" in values:
            kwargs["batch_size"] = int(values["batch_size"])
        if "learning_rate" in values:
            kwargs["learning_rate"] = float(values["learning_rate"])
        if "hidden" in values:
            kwargs["hidden"] = tuple(int(v) for v in values["hidden"].split(",") if v.strip())
        if "split" in values:
            parts = tuple(float(v) for v in values["split"].replace("/", ",").split(","))
            if len(parts) != 3:
                raise ConfigError("split needs three ratios, e.g. 340/9/51")
            kwargs["split"] = parts
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    if "semi_supervised" in values:
        kwargs["semi_supervised"] = _parse_bool(values["semi_supervised"])
    return TrainConfig(**kwargs)


def load_train_config(path, seed: int = 0) -> TrainConfig:
    return train_config_from_mapping(losses.parse_kv_file(path), seed=seed)


@dataclass
class EpochRecord:
    epoch: int
    base: float
    impl_term: float
    disj_term: float
    total: float
    val_micro_f1: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def validation_f1(model: MLP, val: Dataset, threshold: float = 0.5) -> float:
    return f1_scores(val.labels, model.predict(val.features), threshold, val.labelled)[0]


def train(train_data: Dataset, val_data: Dataset, cs: ConstraintSet, tc: TrainConfig):
    """Adamax mini-batch training with best-validation-micro-F1 checkpointing.

    Returns ``(best_model, log, optimizer)`` where the optimizer state is the
    one saved with the best epoch; ``log`` holds one :class:`EpochRecord` per
    epoch with mean per-row loss components.
    """
    if len(train_data) == 0 or not val_data.labelled.any():
        raise ValueError("training data must be non-empty and validation needs labelled rows")
    if train_data.n_labels != cs.universe_size or val_data.n_labels != cs.universe_size:
        raise ValueError(f"data has {train_data.n_labels} labels, constraints cover {cs.universe_size}")
    if not tc.semi_supervised:
        train_data = train_data.subset(np.flatnonzero(train_data.labelled))
        if len(train_data) == 0:
            raise ValueError("no labelled training rows and semi_supervised is off")

    counts = train_data.labels[train_data.labelled].sum(axis=0)
    cfg = tc.loss.with_counts(counts)
    rng = np.random.default_rng(tc.seed)
    model = MLP.init([train_data.feature_dim, *tc.hidden, cs.universe_size], rng)
    opt = Adamax(lr=tc.learning_rate)
    params = model.params()

    best, best_opt, best_f1 = model.copy(), copy.deepcopy(opt), -1.0
    log: list[EpochRecord] = []
    n = len(train_data)
    for epoch in range(1, tc.max_epochs + 1):
        sums = np.zeros(4)
        order = rng.permutation(n)
        try:
            for start in range(0, n, tc.batch_size):
                idx = order[start:start + tc.batch_size]
                parts, grads = backward(
                    model, train_data.features[idx], train_data.labels[idx], cs, cfg, train_data.labelled[idx]
                )
                batch_sums = np.array([p.sum() for p in parts])
                if not np.all(np.isfinite(batch_sums)):
                    raise NonFiniteError("non-finite loss")
                sums += batch_sums
                opt.step(params, grads)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise NonFiniteError("non-finite parameters")
            val_f1 = validation_f1(model, val_data)
        except NonFiniteError:
            raise TrainingDiverged(epoch, best, log) from None
        mean = sums / n
        record = EpochRecord(epoch, *(float(v) for v in mean), val_micro_f1=float(val_f1))
        log.append(record)
        logger.debug("epoch %d total %.6f val micro-F1 %.4f", epoch, record.total, val_f1)
        if val_f1 > best_f1:
            best, best_opt, best_f1 = model.copy(), copy.deepcopy(opt), val_f1
    return best, log, best_opt


def write_log(log: Sequence[EpochRecord], path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in log), encoding="utf-8")


def read_log(path) -> list[EpochRecord]:
    return [EpochRecord(**json.loads(line)) for line in Path(path).read_text().splitlines() if line.strip()]


def save_checkpoint(path, model: MLP, opt: Optional[Adamax] = None, epoch: int = 0, seed: int = 0,
                    metadata: Optional[dict] = None) -> None:
    """JSON checkpoint; floats are written with repr so they round-trip exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": model.dims,
        "epoch": epoch,
        "seed": seed,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "metadata": metadata or {},
    }
    if opt is not None:
        doc["optimizer"] = {
            "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
            "step_count": opt.step_count,
            "m": [a.ravel().tolist() for a in opt.m],
            "u": [a.ravel().tolist() for a in opt.u],
        }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[MLP, Optional[Adamax], dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
    dims = doc["dims"]
    weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(doc["weights"], dims[:-1], dims[1:])]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    model = MLP(weights, biases)
    opt = None
    if "optimizer" in doc:
        o = doc["optimizer"]
        shapes = [p.shape for p in model.params()]
        opt = Adamax(
            lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], step_count=o["step_count"],
            m=[np.array(a, dtype=float).reshape(s) for a, s in zip(o["m"], shapes)],
            u=[np.array(a, dtype=float).reshape(s) for a, s in zip(o["u"], shapes)],
        )
    meta = {k: doc[k] for k in ("epoch", "seed", "metadata")}
    return model, opt, meta

