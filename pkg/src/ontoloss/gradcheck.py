"""Finite-difference audit of the analytic loss gradients."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import losses
from .losses import LossConfig, TNorm, Variant
from .ontology import ConstraintSet

GradFn = Callable[[LossConfig, ConstraintSet, np.ndarray, np.ndarray, bool], np.ndarray]


@dataclass
class Offender:
    trial: int
    component: int
    analytic: float
    numeric: float
    error: float


@dataclass
class VariantReport:
    name: str
    trials: int
    worst: Optional[Offender]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst is None or self.worst.error < self.tolerance


@dataclass
class BoundaryReport:
    k: float
    d_antecedent: float
    d_consequent: float

    @property
    def passed(self) -> bool:
        return self.d_antecedent == 1.0 / self.k and self.d_consequent == -self.k


def audit_variants(cfg: LossConfig) -> dict[str, LossConfig]:
    """The four configurations audited by default, sharing ``cfg``'s k and epsilon."""
    k = cfg.k if cfg.k > 1 else 2.0
    eps = cfg.epsilon if cfg.epsilon > 0 else 0.01
    return {
        "product": LossConfig(tnorm=TNorm.PRODUCT, variant=Variant.STANDARD),
        "lukasiewicz": LossConfig(tnorm=TNorm.LUKASIEWICZ, variant=Variant.STANDARD),
        "balanced": LossConfig(tnorm=cfg.tnorm, variant=Variant.BALANCED, k=k, epsilon=eps),
        "xu": LossConfig(variant=Variant.XU),
    }


def term_values(cfg: LossConfig, cs: ConstraintSet, y, yhat, labelled: bool) -> np.ndarray:
    """Every weighted summand of the total loss, one column per term."""
    yhat = np.atleast_2d(yhat)
    cols = []
    if labelled:
        weights = losses.class_weights(cfg, yhat.shape[1])
        cols.append(losses.base_loss_terms(weights, np.broadcast_to(y, yhat.shape), yhat))
    ia, ib = cs.impl_index
    cols.append(cfg.w_impl * losses.implication_loss(cfg, yhat[:, ia], yhat[:, ib]))
    ic, id_ = cs.disj_index
    cols.append(cfg.w_disj * losses.disjointness_loss(cfg, yhat[:, ic], yhat[:, id_]))
    return np.concatenate(cols, axis=1)


def numeric_grad(cfg: LossConfig, cs: ConstraintSet, y, yhat, labelled: bool, step: float = 1e-6) -> np.ndarray:
    """Central differences of the total loss, differenced term by term."""
    m = len(yhat)
    shift = step * np.eye(m)
    plus = term_values(cfg, cs, y, yhat + shift, labelled)
    minus = term_values(cfg, cs, y, yhat - shift, labelled)
    return (plus - minus).sum(axis=1) / (2 * step)


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-3 * max|a|); components that cancel are judged on the vector scale."""
    floor = 1e-3 * np.max(np.abs(analytic), initial=0.0) + 1e-12
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def random_instance(rng: np.random.Generator, cfg: LossConfig, max_classes: int = 8, low: float = 0.05,
                    high: float = 0.95, kink_margin: float = 1e-3):
    """Random weights, constraints, labels and predictions away from kinks and clamps."""
    m = int(rng.integers(2, max_classes + 1))
    pairs = [(a, b) for a in range(m) for b in range(m) if a != b]
    n_impl = int(rng.integers(0, min(len(pairs), 12) + 1))
    impl = [pairs[i] for i in rng.choice(len(pairs), size=n_impl, replace=False)]
    upairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    n_disj = int(rng.integers(0, min(len(upairs), 6) + 1))
    disj = [upairs[i] for i in rng.choice(len(upairs), size=n_disj, replace=False)]
    cs = ConstraintSet(names=tuple(f"C{i}" for i in range(m)), implications=tuple(impl), disjointness=tuple(disj))
    cfg = replace(
        cfg,
        w_impl=float(10 ** rng.uniform(-2, 2)),
        w_disj=float(10 ** rng.uniform(-2, 2)),
        class_counts=tuple(int(c) for c in rng.integers(0, 50, size=m)),
    )
    labelled = bool(rng.random() < 0.5)
    y = (rng.random(m) < 0.5).astype(float)
    ia, ib = cs.impl_index
    ic, id_ = cs.disj_index
    while True:
        yhat = rng.uniform(low, high, size=m)
        if cfg.tnorm is TNorm.LUKASIEWICZ and cfg.variant is not Variant.XU:
            if cfg.variant is Variant.BALANCED:
                f = losses.balanced_antecedent(yhat[ia], cfg.k, cfg.epsilon)
                near = np.abs(f + (1 - yhat[ib]) ** cfg.k - 1) < kink_margin
            else:
                near = np.abs(yhat[ia] - yhat[ib]) < kink_margin
            if near.any() or (np.abs(yhat[ic] + yhat[id_] - 1) < kink_margin).any():
                continue
        return cfg, cs, y, yhat, labelled


def check_variant(name: str, cfg: LossConfig, trials: int, rng: np.random.Generator,
                  tolerance: float = 1e-5, step: float = 1e-6,
                  grad_fn: GradFn = losses.combined_loss_grad) -> VariantReport:
    worst: Optional[Offender] = None
    for trial in range(trials):
        icfg, cs, y, yhat, labelled = random_instance(rng, cfg)
        analytic = np.asarray(grad_fn(icfg, cs, y, yhat, labelled), dtype=float)
        numeric = numeric_grad(icfg, cs, y, yhat, labelled, step)
        err = relative_errors(analytic, numeric)
        j = int(np.argmax(err))
        if worst is None or err[j] > worst.error:
            worst = Offender(trial, j, float(analytic[j]), float(numeric[j]), float(err[j]))
    return VariantReport(name, trials, worst, tolerance)


def boundary_gradients(k: float, tnorm: TNorm = TNorm.PRODUCT) -> BoundaryReport:
    """Balanced implication gradient at the maximal violation (1, 0) with epsilon = 0."""
    da, db = losses.balanced_implication_grad(tnorm, np.float64(1.0), np.float64(0.0), k, 0.0)
    return BoundaryReport(k, float(da), float(db))


def run_gradcheck(cfg: Optional[LossConfig] = None, trials: int = 1000, seed: int = 0,
                  tolerance: float = 1e-5, step: float = 1e-6,
                  grad_fn: GradFn = losses.combined_loss_grad) -> tuple[list[VariantReport], BoundaryReport]:
    cfg = cfg or LossConfig()
    rng = np.random.default_rng(seed)
    reports = [
        check_variant(name, vcfg, trials, rng, tolerance, step, grad_fn)
        for name, vcfg in audit_variants(cfg).items()
    ]
    k = cfg.k if cfg.k > 1 else 2.0
    return reports, boundary_gradients(k)
