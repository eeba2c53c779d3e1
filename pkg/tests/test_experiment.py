from dataclasses import replace

from ontoloss.experiment import BASELINE, DESK_SPEC, consistency_experiment, desk_variant, semi_supervised_experiment
from ontoloss.losses import Variant

SMALL = replace(DESK_SPEC, n_classes=10, dag_density=0.2, n_disjoint_axioms=2, n_samples=400, feature_dim=8)


def test_desk_variant():
    assert desk_variant("baseline") == BASELINE
    bal = desk_variant("balanced", w_disj=1.0)
    assert bal.variant is Variant.BALANCED and bal.k == 2.0 and bal.w_disj == 1.0 and bal.w_impl == 4.5


def test_consistency_smoke():
    res = consistency_experiment(SMALL, seeds=(0,), variants=("baseline", "product"), max_epochs=2)
    assert [r.variant for r in res] == ["baseline", "product"]
    assert all(0 <= r.micro_f1 <= 1 and 1 <= r.best_epoch <= 2 for r in res)
    again = consistency_experiment(SMALL, seeds=(0,), variants=("baseline", "product"), max_epochs=2)
    assert res == again


def test_semi_supervised_smoke():
    pairs = semi_supervised_experiment(SMALL, seeds=(0,), n_unlabelled=100, n_ood_test=50, max_epochs=2)
    sup, semi = pairs[0]
    assert sup.variant == "supervised" and semi.variant == "semi-supervised"
