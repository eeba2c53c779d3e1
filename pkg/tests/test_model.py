import numpy as np
import pytest

from ontoloss.datagen import Dataset, SyntheticSpec, generate, split
from ontoloss.losses import LossConfig, TNorm, Variant, batch_loss, class_weights
from ontoloss.model import (
    MLP,
    Adamax,
    TrainConfig,
    adamax_step,
    backward,
    forward,
    load_checkpoint,
    load_train_config,
    read_log,
    save_checkpoint,
    train,
    write_log,
)
from ontoloss.losses import ConfigError
from ontoloss.ontology import ConstraintSet


def sigmoid(z):
    return 1 / (1 + np.exp(-z))


def small_cs():
    return ConstraintSet(names=tuple("abcde"), implications=((0, 1), (1, 2), (0, 2), (3, 4)),
                         disjointness=((0, 3), (2, 4)))


class TestForward:
    def test_zero_model(self):
        m = MLP([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
        np.testing.assert_array_equal(forward(m, np.ones((5, 3))), 0.5)

    def test_single_layer_by_hand(self):
        m = MLP([np.array([[0.5], [-1.0]])], [np.array([0.25])])
        x = np.array([2.0, 0.5])
        assert forward(m, x)[0] == pytest.approx(sigmoid(0.5 * 2 - 0.5 + 0.25), rel=1e-15)

    def test_hidden_unit_permutation(self):
        rng = np.random.default_rng(0)
        m = MLP.init([4, 6, 3], rng)
        perm = np.array([1, 0, 2, 3, 4, 5])
        p = MLP([m.weights[0][:, perm], m.weights[1][perm]], [m.biases[0][perm], m.biases[1]])
        x = rng.standard_normal((7, 4))
        np.testing.assert_allclose(forward(p, x), forward(m, x), rtol=1e-14)

    def test_non_finite_input(self):
        m = MLP.init([2, 1], np.random.default_rng(0))
        with pytest.raises(FloatingPointError):
            forward(m, np.array([np.nan, 0.0]))


def total_loss(model, x, y, cs, cfg, labelled):
    return batch_loss(cfg, cs, y, model.forward(x), labelled).total.mean()


class TestBackward:
    @pytest.mark.parametrize("cfg", [
        LossConfig(w_impl=0.7, w_disj=2.0),
        LossConfig(tnorm=TNorm.LUKASIEWICZ, w_impl=0.7, w_disj=2.0),
        LossConfig(variant=Variant.BALANCED, w_impl=0.7, w_disj=2.0),
        LossConfig(variant=Variant.XU, w_impl=0.7, w_disj=2.0),
    ])
    def test_finite_differences(self, cfg):
        rng = np.random.default_rng(1)
        cs = small_cs()
        cfg = cfg.with_counts([4, 9, 20, 3, 6])
        model = MLP.init([3, 4, 5], rng)
        x = rng.standard_normal((6, 3))
        y = (rng.random((6, 5)) < 0.5).astype(float)
        labelled = np.array([True, True, False, True, False, True])
        _, grads = backward(model, x, y, cs, cfg, labelled)
        h = 1e-5
        worst = 0.0
        for p, g in zip(model.params(), grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = total_loss(model, x, y, cs, cfg, labelled)
                p[idx] = old - h
                down = total_loss(model, x, y, cs, cfg, labelled)
                p[idx] = old
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6))
        assert worst < 1e-4

    def test_unlabelled_without_constraints_is_zero(self):
        rng = np.random.default_rng(2)
        model = MLP.init([3, 4, 2], rng)
        _, grads = backward(model, rng.standard_normal((4, 3)), np.zeros((4, 2)), ConstraintSet.empty(2),
                            LossConfig(), np.zeros(4, dtype=bool))
        assert all(not g.any() for g in grads)

    def test_base_only_matches_logit_form(self):
        # for weighted BCE on one row: dL/dz = w*y*(sig - 1) + (1 - y)*sig
        rng = np.random.default_rng(3)
        cfg = LossConfig(w_impl=0, w_disj=0).with_counts([1, 5, 30])
        w = class_weights(cfg)
        model = MLP.init([2, 3], rng)
        x = rng.standard_normal(2)
        y = np.array([1.0, 0.0, 1.0])
        _, grads = backward(model, x, y, ConstraintSet.empty(3), cfg)
        s = sigmoid(x @ model.weights[0] + model.biases[0])
        np.testing.assert_allclose(grads[1], w * y * (s - 1) + (1 - y) * s, rtol=1e-10)


class TestAdamax:
    def test_zero_gradient(self):
        p = [np.array([1.0, -2.0])]
        opt = Adamax()
        for _ in range(10):
            adamax_step(opt, p, [np.zeros(2)])
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_one_step(self):
        p = [np.array([0.0])]
        opt = Adamax(lr=1e-3)
        adamax_step(opt, p, [np.array([1.0])])
        assert opt.m[0][0] == pytest.approx(0.1)
        assert opt.u[0][0] == 1.0
        assert p[0][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)

    def test_opposes_persistent_gradient(self):
        p = [np.array([0.0, 0.0])]
        opt = Adamax()
        for _ in range(5):
            adamax_step(opt, p, [np.array([2.0, -0.5])])
        assert p[0][0] < 0 < p[0][1]


def toy_data(seed=0, n=200):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    pos = x[:, 0] + x[:, 1] > 0
    y = np.stack([pos, ~pos], axis=1).astype(np.int8)
    x = x + np.where(pos, 0.5, -0.5)[:, None]
    return Dataset(x, y, np.ones(n, dtype=bool))


@pytest.fixture(scope="module")
def synthetic():
    world, ds = generate(SyntheticSpec(n_classes=12, n_samples=600, feature_dim=8, n_disjoint_axioms=2,
                                       dag_density=0.2, noise=1.0, seed=0))
    tr, va, te = split(len(ds), seed=0)
    return world.constraints(), ds.subset(tr), ds.subset(va)


class TestTrain:
    def test_separable_toy(self):
        data = toy_data()
        cs = ConstraintSet(names=("pos", "neg"), disjointness=((0, 1),))
        tc = TrainConfig(max_epochs=50, batch_size=16, learning_rate=1e-2, hidden=(8,), loss=LossConfig(w_impl=0, w_disj=0))
        model, log, _ = train(data, data, cs, tc)
        assert max(r.val_micro_f1 for r in log) == 1.0

    def test_deterministic(self, synthetic, tmp_path):
        cs, tr, va = synthetic
        tc = TrainConfig(max_epochs=3, hidden=(16,), seed=7, loss=LossConfig(w_impl=1, w_disj=1))
        logs = []
        for i in range(2):
            _, log, _ = train(tr, va, cs, tc)
            write_log(log, tmp_path / f"{i}.jsonl")
            logs.append((tmp_path / f"{i}.jsonl").read_bytes())
        assert logs[0] == logs[1]
        assert read_log(tmp_path / "0.jsonl") == log

    def test_zero_weights_equal_empty_constraints(self, synthetic):
        cs, tr, va = synthetic
        tc = TrainConfig(max_epochs=3, hidden=(16,), seed=1, loss=LossConfig(w_impl=0, w_disj=0))
        m1, log1, _ = train(tr, va, cs, tc)
        m2, log2, _ = train(tr, va, ConstraintSet.empty(cs.universe_size), tc)
        assert [(r.base, r.total, r.val_micro_f1) for r in log1] == [(r.base, r.total, r.val_micro_f1) for r in log2]
        assert all(np.array_equal(a, b) for a, b in zip(m1.params(), m2.params()))

    def test_all_unlabelled_no_constraints_keeps_parameters(self, synthetic):
        cs, tr, va = synthetic
        tc = TrainConfig(max_epochs=3, hidden=(16,), seed=2, semi_supervised=True)
        _, log, opt = train(tr.unlabel(), va, ConstraintSet.empty(cs.universe_size), tc)
        init = MLP.init([tr.feature_dim, 16, cs.universe_size], np.random.default_rng(2))
        # the best model is the epoch-1 copy, identical to the initialisation
        model, _, _ = train(tr.unlabel(), va, ConstraintSet.empty(cs.universe_size), tc)
        assert all(np.array_equal(a, b) for a, b in zip(model.params(), init.params()))
        assert all(r.total == 0 for r in log)

    def test_unlabelled_dropped_when_supervised(self, synthetic):
        cs, tr, va = synthetic
        mixed = Dataset.concat(tr, tr.unlabel())
        tc = TrainConfig(max_epochs=2, hidden=(8,), seed=3)
        with pytest.raises(ValueError):
            train(tr.unlabel(), va, cs, tc)
        _, log_mixed, _ = train(mixed, va, cs, tc)
        assert len(log_mixed) == 2

    def test_checkpoint_rule(self, synthetic):
        from ontoloss.model import validation_f1
        cs, tr, va = synthetic
        tc = TrainConfig(max_epochs=8, hidden=(16,), seed=4, loss=LossConfig(w_impl=0.5, w_disj=1))
        model, log, _ = train(tr, va, cs, tc)
        assert validation_f1(model, va) == max(r.val_micro_f1 for r in log)

    def test_fuzzy_pressure_lowers_impl_term(self, synthetic):
        cs, tr, va = synthetic
        base_cfg = LossConfig(w_impl=0, w_disj=0)
        fuzzy_cfg = LossConfig(w_impl=1.0, w_disj=1.0)
        terms = []
        for cfg in (base_cfg, fuzzy_cfg):
            tc = TrainConfig(max_epochs=15, hidden=(16,), seed=5, learning_rate=3e-3, loss=cfg)
            model, _, _ = train(tr, va, cs, tc)
            parts = batch_loss(LossConfig(), cs, tr.labels, model.predict(tr.features))
            terms.append(parts.impl_term.mean())
        assert terms[1] < terms[0]

    def test_mismatched_constraints(self, synthetic):
        _, tr, va = synthetic
        with pytest.raises(ValueError):
            train(tr, va, ConstraintSet.empty(3), TrainConfig(max_epochs=1))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        model = MLP.init([3, 5, 2], rng)
        opt = Adamax(lr=0.01)
        grads = [rng.standard_normal(p.shape) for p in model.params()]
        opt.step(model.params(), grads)
        save_checkpoint(tmp_path / "m.json", model, opt, epoch=4, seed=9, metadata={"k": "v"})
        m2, o2, meta = load_checkpoint(tmp_path / "m.json")
        assert all(np.array_equal(a, b) for a, b in zip(model.params(), m2.params()))
        assert o2.step_count == 1 and all(np.array_equal(a, b) for a, b in zip(opt.m, o2.m))
        assert meta["epoch"] == 4 and meta["seed"] == 9 and meta["metadata"] == {"k": "v"}

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "x.json")


class TestTrainConfigFile:
    def test_mixed_keys(self, tmp_path):
        path = tmp_path / "t.cfg"
        path.write_text("max_epochs = 5\nhidden = 32,16\nsplit = 8/1/1\nw_impl = 0.5\nsemi_supervised = yes\n")
        tc = load_train_config(path, seed=3)
        assert (tc.max_epochs, tc.hidden, tc.split, tc.seed, tc.semi_supervised) == (5, (32, 16), (8.0, 1.0, 1.0), 3, True)
        assert tc.loss.w_impl == 0.5

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "t.cfg"
        path.write_text("epochs = 5\n")
        with pytest.raises(ConfigError):
            load_train_config(path)
