"""Fuzzy-logic constraint losses with exact analytic gradients.

All element-wise functions accept scalars or numpy arrays.  Batch functions
take a prediction matrix of shape ``(n_samples, n_classes)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .ontology import ConstraintSet

DOMAIN_SLACK = 1e-9
LOG_CLAMP = 1e-12


class TNorm(str, enum.Enum):
    PRODUCT = "product"
    LUKASIEWICZ = "lukasiewicz"


class Variant(str, enum.Enum):
    STANDARD = "standard"
    BALANCED = "balanced"
    XU = "xu"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    tnorm: TNorm = TNorm.PRODUCT
    variant: Variant = Variant.STANDARD
    k: float = 2.0
    epsilon: float = 0.01
    w_impl: float = 0.01
    w_disj: float = 100.0
    beta: float = 0.99
    class_counts: Optional[tuple[int, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tnorm", TNorm(self.tnorm))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.w_impl < 0 or self.w_disj < 0:
            raise ConfigError("w_impl and w_disj must be non-negative")
        if not 0 <= self.beta < 1:
            raise ConfigError("beta must lie in [0, 1)")
        if self.variant is Variant.BALANCED and not (self.k > 1 and self.epsilon > 0):
            raise ConfigError("balanced variant needs k > 1 and epsilon > 0")
        if self.class_counts is not None:
            counts = tuple(int(c) for c in self.class_counts)
            if any(c < 0 for c in counts):
                raise ConfigError("class counts must be non-negative")
            object.__setattr__(self, "class_counts", counts)

    def with_counts(self, counts: Sequence[int]) -> "LossConfig":
        return replace(self, class_counts=tuple(int(c) for c in counts))


LOSS_KEYS = ("tnorm", "variant", "k", "epsilon", "w_impl", "w_disj", "beta")


def parse_kv_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":" if ":" in line else None
            if sep is None:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split(sep, 1))
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def loss_config_from_mapping(values: Mapping[str, str]) -> LossConfig:
    unknown = set(values) - set(LOSS_KEYS)
    if unknown:
        raise ConfigError(f"unknown loss config key(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for f in fields(LossConfig):
        if f.name in values:
            raw = values[f.name]
            try:
                kwargs[f.name] = raw.lower() if f.name in ("tnorm", "variant") else float(raw)
            except ValueError:
                raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
    try:
        return LossConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_loss_config(path) -> LossConfig:
    return loss_config_from_mapping(parse_kv_file(path))


def _unit(*arrays):
    """Validate truth values against [0, 1] (with slack) and clip into range."""
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)) or np.any(a < -DOMAIN_SLACK) or np.any(a > 1 + DOMAIN_SLACK):
            raise ValueError("fuzzy truth values must lie in [0, 1]")
        out.append(np.clip(a, 0.0, 1.0))
    return out[0] if len(out) == 1 else out


def tnorm(kind, a, b):
    a, b = _unit(a, b)
    kind = TNorm(kind)
    if kind is TNorm.PRODUCT:
        return a * b
    return np.maximum(a + b - 1.0, 0.0)


def tnorm_grad(kind, a, b):
    """Partial derivatives of the t-norm; Łukasiewicz kink gets subgradient 0."""
    kind = TNorm(kind)
    if kind is TNorm.PRODUCT:
        return b * np.ones_like(a), a * np.ones_like(b)
    active = (np.asarray(a) + np.asarray(b) - 1.0 > 0).astype(float)
    return active, active


def balanced_antecedent(a, k: float, eps: float):
    """Rescaled ``(a + eps)^(1/k)`` that maps 0 to 0 and 1 to 1."""
    r = 1.0 / k
    lo = eps**r
    return ((a + eps) ** r - lo) / ((1.0 + eps) ** r - lo)


def balanced_antecedent_grad(a, k: float, eps: float):
    r = 1.0 / k
    with np.errstate(divide="ignore"):
        return r * (a + eps) ** (r - 1.0) / ((1.0 + eps) ** r - eps**r)


def balanced_implication(kind, ya, yb, k: float, eps: float):
    return tnorm(kind, balanced_antecedent(ya, k, eps), (1.0 - yb) ** k)


def balanced_implication_grad(kind, ya, yb, k: float, eps: float):
    f = balanced_antecedent(ya, k, eps)
    g = (1.0 - yb) ** k
    df, dg = tnorm_grad(kind, f, g)
    with np.errstate(invalid="ignore"):
        da = df * balanced_antecedent_grad(ya, k, eps)
    db = dg * (-k * (1.0 - yb) ** (k - 1.0))
    return da, db


def _xu(u):
    return -np.log(np.maximum(u, LOG_CLAMP))


def implication_loss(cfg: LossConfig, ya, yb):
    ya, yb = _unit(ya, yb)
    if cfg.variant is Variant.XU:
        return _xu(1.0 - ya * (1.0 - yb))
    if cfg.variant is Variant.BALANCED:
        return balanced_implication(cfg.tnorm, ya, yb, cfg.k, cfg.epsilon)
    return tnorm(cfg.tnorm, ya, 1.0 - yb)


def implication_grad(cfg: LossConfig, ya, yb):
    if cfg.variant is Variant.XU:
        u = 1.0 - ya * (1.0 - yb)
        live = u > LOG_CLAMP
        safe = np.where(live, u, 1.0)
        return np.where(live, (1.0 - yb) / safe, 0.0), np.where(live, -ya / safe, 0.0)
    if cfg.variant is Variant.BALANCED:
        return balanced_implication_grad(cfg.tnorm, ya, yb, cfg.k, cfg.epsilon)
    da, dnb = tnorm_grad(cfg.tnorm, ya, 1.0 - yb)
    return da, -dnb


def disjointness_loss(cfg: LossConfig, yc, yd):
    yc, yd = _unit(yc, yd)
    if cfg.variant is Variant.XU:
        return _xu(1.0 - yc * yd)
    return tnorm(cfg.tnorm, yc, yd)


def disjointness_grad(cfg: LossConfig, yc, yd):
    if cfg.variant is Variant.XU:
        u = 1.0 - yc * yd
        live = u > LOG_CLAMP
        safe = np.where(live, u, 1.0)
        return np.where(live, yd / safe, 0.0), np.where(live, yc / safe, 0.0)
    return tnorm_grad(cfg.tnorm, yc, yd)


def class_weights(cfg: LossConfig, n_classes: Optional[int] = None) -> np.ndarray:
    """Effective-number class weights, normalised to sum to the class count.

    Classes without positives get the weight of a single-positive class.
    """
    if cfg.class_counts is None:
        if n_classes is None:
            raise ValueError("class_counts or n_classes required")
        return np.ones(n_classes)
    if n_classes is not None and len(cfg.class_counts) != n_classes:
        raise ValueError(f"{len(cfg.class_counts)} class counts for {n_classes} classes")
    counts = np.maximum(np.asarray(cfg.class_counts, dtype=float), 1.0)
    raw = (1.0 - cfg.beta) / (1.0 - cfg.beta**counts)
    return raw * len(raw) / raw.sum()


def _as_batch(yhat):
    yhat = np.asarray(yhat, dtype=float)
    return yhat[None, :] if yhat.ndim == 1 else yhat


def base_loss_terms(weights: np.ndarray, y, yhat) -> np.ndarray:
    """Element-wise weighted binary cross-entropy (positive terms scaled by ``weights``)."""
    y = _as_batch(y)
    yhat = _as_batch(yhat)
    pos = np.log(np.clip(yhat, LOG_CLAMP, 1.0))
    neg = np.log(np.clip(1.0 - yhat, LOG_CLAMP, 1.0))
    return -(weights * y * pos + (1.0 - y) * neg)


def base_loss_batch(weights: np.ndarray, y, yhat) -> np.ndarray:
    return base_loss_terms(weights, y, yhat).sum(axis=1)


def base_loss_grad_batch(weights: np.ndarray, y, yhat) -> np.ndarray:
    y = _as_batch(y)
    yhat = _as_batch(yhat)
    dpos = np.where(yhat > LOG_CLAMP, 1.0 / np.maximum(yhat, LOG_CLAMP), 0.0)
    dneg = np.where(1.0 - yhat > LOG_CLAMP, 1.0 / np.maximum(1.0 - yhat, LOG_CLAMP), 0.0)
    return -weights * y * dpos + (1.0 - y) * dneg


def base_loss(cfg: LossConfig, y, yhat, labelled: bool = True) -> float:
    if not labelled:
        raise ValueError("base loss is undefined for unlabelled samples")
    yhat = _unit(yhat)
    return float(base_loss_batch(class_weights(cfg, yhat.shape[-1]), y, yhat)[0])


class LossBreakdown(NamedTuple):
    base: float
    impl_term: float
    disj_term: float
    total: float


class BatchLoss(NamedTuple):
    base: np.ndarray
    impl_term: np.ndarray
    disj_term: np.ndarray
    total: np.ndarray


def _check_dims(cs: ConstraintSet, yhat: np.ndarray) -> None:
    if yhat.shape[-1] != cs.universe_size:
        raise ValueError(f"prediction has {yhat.shape[-1]} classes, constraints cover {cs.universe_size}")


def batch_loss(cfg: LossConfig, cs: ConstraintSet, y, yhat, labelled=None) -> BatchLoss:
    """Per-row loss components.  ``labelled`` masks rows that carry labels."""
    yhat = _as_batch(yhat)
    _check_dims(cs, yhat)
    yhat = _unit(yhat)
    n, m = yhat.shape
    labelled = np.ones(n, dtype=bool) if labelled is None else np.asarray(labelled, dtype=bool)
    base = np.zeros(n)
    if labelled.any():
        y = _as_batch(y)
        base[labelled] = base_loss_batch(class_weights(cfg, m), y[labelled], yhat[labelled])
    ia, ib = cs.impl_index
    ic, id_ = cs.disj_index
    impl = implication_loss(cfg, yhat[:, ia], yhat[:, ib]).sum(axis=1)
    disj = disjointness_loss(cfg, yhat[:, ic], yhat[:, id_]).sum(axis=1)
    total = base + cfg.w_impl * impl + cfg.w_disj * disj
    return BatchLoss(base, impl, disj, total)


def batch_loss_grad(cfg: LossConfig, cs: ConstraintSet, y, yhat, labelled=None) -> np.ndarray:
    """Gradient of each row's total loss with respect to that row's predictions."""
    yhat = _as_batch(yhat)
    _check_dims(cs, yhat)
    yhat = _unit(yhat)
    n, m = yhat.shape
    labelled = np.ones(n, dtype=bool) if labelled is None else np.asarray(labelled, dtype=bool)
    grad = np.zeros((n, m))
    if labelled.any():
        y = _as_batch(y)
        grad[labelled] = base_loss_grad_batch(class_weights(cfg, m), y[labelled], yhat[labelled])

    # scatter pair gradients back to classes through one-hot incidence matrices
    ia, ib = cs.impl_index
    if len(ia):
        da, db = implication_grad(cfg, yhat[:, ia], yhat[:, ib])
        sa, sb = cs.impl_incidence
        grad += cfg.w_impl * (da @ sa + db @ sb)
    ic, id_ = cs.disj_index
    if len(ic):
        dc, dd = disjointness_grad(cfg, yhat[:, ic], yhat[:, id_])
        sc, sd = cs.disj_incidence
        grad += cfg.w_disj * (dc @ sc + dd @ sd)
    return grad


def combined_loss(cfg: LossConfig, cs: ConstraintSet, y, yhat, labelled: bool = True) -> LossBreakdown:
    parts = batch_loss(cfg, cs, y, yhat, labelled=[labelled])
    return LossBreakdown(*(float(p[0]) for p in parts))


def combined_loss_grad(cfg: LossConfig, cs: ConstraintSet, y, yhat, labelled: bool = True) -> np.ndarray:
    return batch_loss_grad(cfg, cs, y, yhat, labelled=[labelled])[0]
