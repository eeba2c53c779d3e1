"""Consistency-violation counts and multi-label classification scores."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .ontology import ConstraintSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViolationCounts:
    tp_impl: int = 0
    fn_impl: int = 0
    tp_disj: int = 0
    fn_disj: int = 0
    threshold: float = 0.5

    def __add__(self, other: "ViolationCounts") -> "ViolationCounts":
        if self.threshold != other.threshold:
            raise ValueError("cannot merge counts taken at different thresholds")
        return ViolationCounts(
            self.tp_impl + other.tp_impl,
            self.fn_impl + other.fn_impl,
            self.tp_disj + other.tp_disj,
            self.fn_disj + other.fn_disj,
            self.threshold,
        )

    def as_dict(self) -> dict:
        return asdict(self)


def _check(cs: ConstraintSet, yhat: np.ndarray) -> np.ndarray:
    yhat = np.asarray(yhat, dtype=float)
    if yhat.ndim == 1:
        yhat = yhat[None, :]
    if yhat.shape[1] != cs.universe_size:
        raise ValueError(f"prediction has {yhat.shape[1]} classes, constraints cover {cs.universe_size}")
    return yhat


def per_sample_violations(cs: ConstraintSet, yhat, threshold: float = 0.5) -> dict[str, np.ndarray]:
    """TP/FN counts for every row; disjointness axioms count in both directions."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    pos = _check(cs, yhat) > threshold
    ia, ib = cs.impl_index
    a, b = pos[:, ia], pos[:, ib]
    ic, id_ = cs.disj_index
    c, d = pos[:, ic], pos[:, id_]
    return {
        "tp_impl": (a & b).sum(axis=1),
        "fn_impl": (a & ~b).sum(axis=1),
        "tp_disj": (c & ~d).sum(axis=1) + (d & ~c).sum(axis=1),
        "fn_disj": 2 * (c & d).sum(axis=1),
    }


def count_violations(cs: ConstraintSet, yhat, threshold: float = 0.5) -> ViolationCounts:
    rows = per_sample_violations(cs, yhat, threshold)
    return ViolationCounts(threshold=threshold, **{k: int(v.sum()) for k, v in rows.items()})


def fnr(counts: ViolationCounts, family: str) -> Optional[float]:
    """False negative rate for ``"impl"`` or ``"disj"``; ``None`` when undefined (0/0)."""
    if family not in ("impl", "disj"):
        raise ValueError(f"unknown axiom family {family!r}")
    tp = getattr(counts, f"tp_{family}")
    fn = getattr(counts, f"fn_{family}")
    if tp + fn == 0:
        return None
    return fn / (fn + tp)


def _labelled_rows(y, yhat, labelled=None):
    y = np.asarray(y)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 2:
        raise ValueError(f"label shape {y.shape} does not match prediction shape {yhat.shape}")
    if labelled is not None:
        labelled = np.asarray(labelled, dtype=bool)
        y, yhat = y[labelled], yhat[labelled]
    if len(y) == 0:
        raise ValueError("no labelled rows")
    return y.astype(bool), yhat


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(v, dtype=float) for v in (tp, fp, fn))
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(denom), where=denom > 0)


def f1_scores(y, yhat, threshold: float = 0.5, labelled=None) -> tuple[float, float]:
    """Micro and macro F1 of ``yhat > threshold``.

    A class with neither positives nor positive predictions scores 0 in the
    macro mean.
    """
    y, yhat = _labelled_rows(y, yhat, labelled)
    pred = yhat > threshold
    tp = (pred & y).sum(axis=0)
    fp = (pred & ~y).sum(axis=0)
    fn = (~pred & y).sum(axis=0)
    micro = float(_f1(tp.sum(), fp.sum(), fn.sum()))
    macro = float(_f1(tp, fp, fn).mean())
    return micro, macro


def _auc(labels: np.ndarray, scores: np.ndarray) -> Optional[float]:
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_per_class(y, yhat, labelled=None) -> np.ndarray:
    """Per-class ROC-AUC; NaN where a class lacks positives or negatives."""
    y, yhat = _labelled_rows(y, yhat, labelled)
    out = np.full(y.shape[1], np.nan)
    for j in range(y.shape[1]):
        value = _auc(y[:, j], yhat[:, j])
        if value is not None:
            out[j] = value
    return out


def roc_auc(y, yhat, labelled=None) -> tuple[Optional[float], Optional[float]]:
    """Rank-based micro and macro ROC-AUC (ties get half credit)."""
    y, yhat = _labelled_rows(y, yhat, labelled)
    micro = _auc(y.ravel(), yhat.ravel())
    per_class = auc_per_class(y, yhat)
    valid = ~np.isnan(per_class)
    if not valid.all():
        logger.debug("macro AUC skips %d class(es) lacking both outcomes", int((~valid).sum()))
    macro = float(per_class[valid].mean()) if valid.any() else None
    return micro, macro


def threshold_grid(step: float = 0.05) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.round(np.arange(1, n) * step, 10)


def optimal_threshold(y, yhat, grid_step: float = 0.05, labelled=None) -> float:
    """Grid threshold with the best micro-F1; ties prefer 0.5, then the smallest."""
    grid = threshold_grid(grid_step)
    scores = np.array([f1_scores(y, yhat, t, labelled)[0] for t in grid])
    best = scores.max()
    winners = grid[np.isclose(scores, best, rtol=0, atol=1e-12)]
    if np.any(np.isclose(winners, 0.5)):
        return 0.5
    return float(winners.min())


@dataclass(frozen=True)
class ClassificationScores:
    micro_f1: float
    macro_f1: float
    micro_roc_auc: Optional[float]
    macro_roc_auc: Optional[float]
    threshold: float


def classification_scores(y, yhat, threshold: float = 0.5, labelled=None) -> ClassificationScores:
    micro_f1, macro_f1 = f1_scores(y, yhat, threshold, labelled)
    micro_auc, macro_auc = roc_auc(y, yhat, labelled)
    return ClassificationScores(micro_f1, macro_f1, micro_auc, macro_auc, threshold)
