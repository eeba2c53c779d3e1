"""Fuzzy-logic consistency losses for ontology-constrained multi-label classification."""

from .losses import LossBreakdown, LossConfig, TNorm, Variant, combined_loss, combined_loss_grad
from .metrics import ViolationCounts, count_violations, f1_scores, fnr, optimal_threshold, roc_auc
from .ontology import (
    ConstraintSet,
    CycleError,
    InconsistentAxioms,
    OntologyGraph,
    check_acyclic,
    compile_constraints,
    parse_ontology,
    select_labels,
)

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet",
    "CycleError",
    "InconsistentAxioms",
    "LossBreakdown",
    "LossConfig",
    "OntologyGraph",
    "TNorm",
    "Variant",
    "ViolationCounts",
    "check_acyclic",
    "combined_loss",
    "combined_loss_grad",
    "compile_constraints",
    "count_violations",
    "f1_scores",
    "fnr",
    "optimal_threshold",
    "parse_ontology",
    "roc_auc",
    "select_labels",
]
