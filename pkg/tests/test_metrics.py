import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import auc_bruteforce, f1_bruteforce, violations_bruteforce
from ontoloss.metrics import (
    ViolationCounts,
    auc_per_class,
    classification_scores,
    count_violations,
    f1_scores,
    fnr,
    optimal_threshold,
    per_sample_violations,
    roc_auc,
    threshold_grid,
)
from ontoloss.ontology import ConstraintSet


def random_instance(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 9))
    pairs = [(a, b) for a in range(m) for b in range(m) if a != b]
    pick = rng.permutation(len(pairs))[: int(rng.integers(0, 16))]
    impl, disj = [], []
    for i in pick:
        a, b = pairs[i]
        if rng.random() < 0.6:
            impl.append((a, b))
        elif (min(a, b), max(a, b)) not in disj:
            disj.append((min(a, b), max(a, b)))
    cs = ConstraintSet(names=tuple(f"c{i}" for i in range(m)), implications=tuple(impl), disjointness=tuple(disj))
    n = int(rng.integers(1, 11))
    # coarse values so that ties with the threshold happen
    yhat = rng.integers(0, 21, size=(n, m)) / 20
    return rng, cs, yhat


class TestCountViolations:
    def test_implication_example(self):
        cs = ConstraintSet(names=("A", "B"), implications=((0, 1),))
        c = count_violations(cs, [[0.9, 0.2]], 0.5)
        assert (c.tp_impl, c.fn_impl) == (0, 1)

    def test_disjointness_example(self):
        cs = ConstraintSet(names=("C", "D"), disjointness=((0, 1),))
        c = count_violations(cs, [[0.9, 0.9]], 0.5)
        assert (c.tp_disj, c.fn_disj) == (0, 2)

    def test_all_zero(self):
        cs = ConstraintSet(names=tuple("abc"), implications=((0, 1), (1, 2)), disjointness=((0, 2),))
        assert count_violations(cs, np.zeros((4, 3))) == ViolationCounts()

    def test_threshold_is_strict(self):
        cs = ConstraintSet(names=("A", "B"), implications=((0, 1),))
        assert count_violations(cs, [[0.5, 0.0]]).fn_impl == 0
        assert count_violations(cs, [[0.51, 0.5]]).fn_impl == 1

    def test_errors(self):
        cs = ConstraintSet(names=("A", "B"), implications=((0, 1),))
        with pytest.raises(ValueError):
            count_violations(cs, [[0.1, 0.2, 0.3]])
        with pytest.raises(ValueError):
            count_violations(cs, [[0.1, 0.2]], threshold=1.0)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 0.75]))
    def test_matches_bruteforce(self, seed, theta):
        _, cs, yhat = random_instance(seed)
        c = count_violations(cs, yhat, theta)
        assert (c.tp_impl, c.fn_impl, c.tp_disj, c.fn_disj) == violations_bruteforce(
            cs.implications, cs.disjointness, yhat, theta)
        assert c.fn_disj % 2 == 0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_threshold_monotone(self, seed):
        _, cs, yhat = random_instance(seed)
        active = [c.tp_impl + c.fn_impl for c in (count_violations(cs, yhat, t) for t in threshold_grid())]
        assert all(x >= y for x, y in zip(active, active[1:]))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_permutation_invariance(self, seed):
        rng, cs, yhat = random_instance(seed)
        base = count_violations(cs, yhat)
        assert count_violations(cs, yhat[rng.permutation(len(yhat))]) == base
        perm = rng.permutation(cs.universe_size)  # old id -> new id
        relabelled = ConstraintSet(
            names=cs.names,
            implications=tuple((int(perm[a]), int(perm[b])) for a, b in cs.implications),
            disjointness=tuple((int(perm[a]), int(perm[b])) for a, b in cs.disjointness),
        )
        moved = np.empty_like(yhat)
        moved[:, perm] = yhat
        assert count_violations(relabelled, moved) == base

    def test_rows_merge_by_addition(self):
        _, cs, yhat = random_instance(11)
        halves = count_violations(cs, yhat[:3]) + count_violations(cs, yhat[3:])
        assert halves == count_violations(cs, yhat)
        rows = per_sample_violations(cs, yhat)
        assert int(rows["fn_impl"].sum()) == count_violations(cs, yhat).fn_impl


class TestFnr:
    def test_examples(self):
        assert fnr(ViolationCounts(tp_impl=3, fn_impl=1), "impl") == 0.25
        assert fnr(ViolationCounts(tp_impl=5, fn_impl=0), "impl") == 0.0
        assert fnr(ViolationCounts(), "impl") is None
        assert fnr(ViolationCounts(tp_disj=6, fn_disj=2), "disj") == 0.25

    def test_bad_family(self):
        with pytest.raises(ValueError):
            fnr(ViolationCounts(), "both")


class TestF1:
    def test_perfect(self):
        y = np.array([[1, 0], [0, 1]])
        assert f1_scores(y, y.astype(float)) == (1.0, 1.0)

    def test_example(self):
        micro, macro = f1_scores([[1, 0], [1, 1]], [[0.9, 0.9], [0.2, 0.6]], 0.5)
        assert micro == pytest.approx(2 / 3, abs=1e-12)
        assert macro == pytest.approx(2 / 3, abs=1e-12)

    def test_all_below(self):
        assert f1_scores([[1, 0], [0, 1]], np.full((2, 2), 0.1))[0] == 0.0

    def test_empty_class_scores_zero(self):
        # second class never positive and never predicted
        assert f1_scores([[1, 0]], [[0.9, 0.1]]) == (1.0, 0.5)

    def test_unlabelled_rows_excluded(self):
        got = f1_scores([[1, 0], [0, 0]], [[0.9, 0.1], [0.9, 0.9]], labelled=[True, False])
        assert got == (1.0, 0.5)

    def test_errors(self):
        with pytest.raises(ValueError):
            f1_scores([[1, 0]], [[0.5]])
        with pytest.raises(ValueError):
            f1_scores([[1, 0]], [[0.5, 0.5]], labelled=[False])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(1, 11), rng.integers(1, 9)
        y = rng.integers(0, 2, size=(n, m))
        yhat = rng.integers(0, 11, size=(n, m)) / 10
        got = f1_scores(y, yhat, 0.5)
        want = f1_bruteforce(y.tolist(), yhat.tolist(), 0.5)
        assert got == pytest.approx(want, abs=1e-12)


class TestAuc:
    def test_example(self):
        y = np.array([[0], [0], [1], [1]])
        s = np.array([[0.1], [0.4], [0.35], [0.8]])
        assert roc_auc(y, s) == (0.75, 0.75)

    def test_separated_and_ties(self):
        y = np.array([[0, 1], [1, 0]])
        assert roc_auc(y, np.array([[0.1, 0.9], [0.8, 0.2]])) == (1.0, 1.0)
        assert roc_auc(y, np.full((2, 2), 0.3)) == (0.5, 0.5)

    def test_degenerate_class_skipped(self):
        y = np.array([[0, 1], [1, 1]])
        per = auc_per_class(y, np.array([[0.2, 0.5], [0.7, 0.5]]))
        assert per[0] == 1.0 and np.isnan(per[1])
        assert roc_auc(y, np.array([[0.2, 0.5], [0.7, 0.5]]))[1] == 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(2, 11), rng.integers(1, 9)
        y = rng.integers(0, 2, size=(n, m))
        yhat = rng.integers(0, 6, size=(n, m)) / 5
        micro, macro = roc_auc(y, yhat)
        want_micro = auc_bruteforce(y.ravel().tolist(), yhat.ravel().tolist())
        assert (micro is None) == (want_micro is None)
        if micro is not None:
            assert micro == pytest.approx(want_micro, abs=1e-12)
        per = [auc_bruteforce(y[:, j].tolist(), yhat[:, j].tolist()) for j in range(m)]
        per = [v for v in per if v is not None]
        if per:
            assert macro == pytest.approx(sum(per) / len(per), abs=1e-12)
        else:
            assert macro is None


class TestOptimalThreshold:
    def test_grid(self):
        g = threshold_grid()
        assert len(g) == 19 and g[0] == 0.05 and g[-1] == 0.95 and 0.5 in g

    def test_exact_predictions_prefer_half(self):
        y = np.array([[1, 0], [0, 1]])
        assert optimal_threshold(y, y.astype(float)) == 0.5

    def test_example(self):
        assert optimal_threshold([[1], [0]], [[0.62], [0.58]]) == 0.6

    def test_all_positive(self):
        # every score below 0.3 must be lowered past
        y = np.ones((3, 1))
        assert optimal_threshold(y, [[0.2], [0.6], [0.9]]) == 0.05
        assert optimal_threshold(y, [[0.55], [0.6], [0.9]]) == 0.5

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(1, 8), rng.integers(1, 5)
        y = rng.integers(0, 2, size=(n, m))
        yhat = rng.integers(0, 21, size=(n, m)) / 20 + 0.01
        yhat = np.clip(yhat, 0, 1)
        grid = [round(0.05 * i, 10) for i in range(1, 20)]
        scores = {t: f1_bruteforce(y.tolist(), yhat.tolist(), t)[0] for t in grid}
        best = max(scores.values())
        winners = [t for t in grid if abs(scores[t] - best) < 1e-12]
        want = 0.5 if 0.5 in winners else min(winners)
        assert optimal_threshold(y, yhat) == want


def test_classification_scores_bundle():
    s = classification_scores([[1, 0], [1, 1]], [[0.9, 0.9], [0.2, 0.6]])
    assert s.micro_f1 == pytest.approx(2 / 3)
    assert s.threshold == 0.5
    assert 0 <= s.micro_roc_auc <= 1 and 0 <= s.macro_roc_auc <= 1
