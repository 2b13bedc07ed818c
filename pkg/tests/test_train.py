import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csicl import model as m
from csicl import train as tr


def quadratic(theta):
    return 0.5 * float(theta @ theta), theta.copy()


@pytest.fixture
def tiny_params(tiny_model_config):
    return m.init_params(tiny_model_config, seed=3)


def make_batch(rng, n_items, cfg, soft=False):
    xs = [rng.standard_normal((rng.integers(3, 8), cfg.input_width))
          for _ in range(n_items)]
    if soft:
        t = rng.random((n_items, cfg.n_classes))
        t /= t.sum(axis=1, keepdims=True)
    else:
        t = np.eye(cfg.n_classes)[rng.integers(0, cfg.n_classes, n_items)]
    return tr.BatchData.from_sequences(xs, t)


class TestCeLoss:
    def test_uniform_against_onehot(self):
        p = np.full(10, 0.1)
        t = np.eye(10)[3]
        assert tr.ce_loss(p, t) == pytest.approx(math.log(10), abs=1e-12)

    def test_perfect_prediction(self):
        p = np.eye(10)[3]
        assert tr.ce_loss(p, p) <= 1e-11

    def test_hand_value(self):
        assert tr.ce_loss(np.array([0.7, 0.2, 0.1]), np.array([1.0, 0.0, 0.0])) \
            == pytest.approx(0.356675, abs=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            tr.ce_loss(np.array([0.5, 0.5]), np.array([1.0, 0.0, 0.0]))

    @given(st.integers(0, 200))
    def test_nonnegative_for_soft_targets(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.random(6)
        p /= p.sum()
        t = rng.random(6)
        t /= t.sum()
        assert tr.ce_loss(p, t) >= 0.0


class TestObjective:
    def test_no_replay_equals_batch_ce(self, tiny_model_config, tiny_params, rng):
        batch = make_batch(rng, 3, tiny_model_config)
        obj = tr.make_objective(tiny_model_config, batch)
        loss, _ = obj(tiny_params.flat)
        expected = 0.0
        for i in range(3):
            x = batch.x[i, batch.mask[i]]
            p, _ = m.forward(tiny_params, x)
            expected += tr.ce_loss(p, batch.targets[i])
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_pr_penalty_vanishes_at_anchor(self, tiny_model_config, tiny_params, rng):
        batch = make_batch(rng, 2, tiny_model_config)
        imp = tr.ImportanceVector(np.abs(rng.standard_normal(tiny_params.flat.size)),
                                  tiny_params.flat.copy())
        plain = tr.make_objective(tiny_model_config, batch)(tiny_params.flat)[0]
        with_pr = tr.make_objective(tiny_model_config, batch,
                                    importance=imp)(tiny_params.flat)[0]
        assert with_pr == pytest.approx(plain, rel=1e-12)

    def test_replay_term_hand_summed(self, tiny_model_config, tiny_params, rng):
        """Objective = sum of plain CE over the batch plus downscaled CE over
        the exemplars, each term checked from the definition."""
        eta = 2.0
        batch = make_batch(rng, 1, tiny_model_config)
        replay = make_batch(rng, 1, tiny_model_config, soft=True)
        obj = tr.make_objective(tiny_model_config, batch, replay=replay, eta=eta)
        loss, _ = obj(tiny_params.flat)
        x_cur = batch.x[0, batch.mask[0]]
        x_rep = replay.x[0, replay.mask[0]]
        logits_cur, _ = m.forward_batch(tiny_params, x_cur[None])
        logits_rep, _ = m.forward_batch(tiny_params, x_rep[None])
        expected = tr.ce_loss(m.softmax(logits_cur[0]), batch.targets[0]) \
            + tr.ce_loss(m.softmax(logits_rep[0] / eta), replay.targets[0])
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_replay_and_importance_are_exclusive(self, tiny_model_config, rng):
        batch = make_batch(rng, 1, tiny_model_config)
        imp = tr.ImportanceVector(np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError):
            tr.make_objective(tiny_model_config, batch, replay=batch, importance=imp)


class TestGradient:
    def test_quadratic_through_the_machinery(self, rng):
        theta = rng.standard_normal(20)
        assert np.array_equal(tr.gradient(theta, quadratic), theta)

    @pytest.mark.oracle
    def test_finite_difference_agreement(self, rng):
        cfg = m.ModelConfig(input_width=4, mlp_widths=(6, 8), feature_width=8,
                            n_heads=2, n_blocks=1, n_classes=2, dropout_rate=0.0)
        params = m.init_params(cfg, seed=17)
        # perturb off the freshly-initialized zero biases: a dead encoder row
        # would otherwise park ReLU kinks exactly at the evaluation point
        params.flat += rng.uniform(-0.2, 0.2, params.flat.size)
        batch = make_batch(rng, 2, cfg)
        obj = tr.make_objective(cfg, batch)
        _, grad = obj(params.flat)
        step = 1e-5
        worst = 0.0
        for i in rng.choice(params.flat.size, size=200, replace=False):
            theta = params.flat.copy()
            theta[i] += step
            up = obj(theta)[0]
            theta[i] -= 2 * step
            down = obj(theta)[0]
            fd = (up - down) / (2 * step)
            worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-8))
        assert worst < 1e-4

    def test_predictor_bias_gradient_is_p_minus_target(self, tiny_model_config,
                                                       tiny_params):
        x = np.zeros((4, tiny_model_config.input_width))
        target = np.array([[1.0, 0.0]])
        batch = tr.BatchData.from_sequences([x], target)
        _, grad = tr.make_objective(tiny_model_config, batch)(tiny_params.flat)
        gviews = m._views(tiny_model_config, grad)
        p, _ = m.forward(tiny_params, x)
        assert np.allclose(gviews["head_b"], p - target[0], atol=1e-12)

    def test_non_finite_rejected(self, tiny_model_config, rng):
        batch = make_batch(rng, 1, tiny_model_config)
        theta = np.full(m.param_count(tiny_model_config), np.nan)
        obj = tr.make_objective(tiny_model_config, batch)
        with pytest.raises(tr.NumericalError):
            tr.gradient(theta, obj)


class TestSamStep:
    def test_closed_form(self):
        theta = np.array([3.0, 4.0])
        new, loss, gnorm = tr.sam_step(theta, quadratic, 0.1, 0.5)
        assert np.abs(new - np.array([2.67, 3.56])).max() <= 1e-12
        assert loss == pytest.approx(12.5)
        assert gnorm == pytest.approx(5.0)

    def test_zero_radius_is_plain_sgd_bitwise(self, rng):
        theta = rng.standard_normal(12)
        stepped, _, _ = tr.sam_step(theta, quadratic, 0.05, 0.0)
        assert np.array_equal(stepped, theta - 0.05 * theta)

    def test_vanishing_gradient_guard(self):
        theta = np.zeros(4)
        new, _, _ = tr.sam_step(theta, quadratic, 0.1, 0.5)
        assert np.array_equal(new, theta)

    def test_defaults_match_protocol(self):
        cfg = tr.TrainConfig()
        assert cfg.learning_rate == 1e-3
        assert cfg.iterations == 500
        assert cfg.deviation_radius == 0.03

    @pytest.mark.oracle
    def test_climb_direction_maximizes_linearized_loss(self, rng):
        """The normalized-gradient climb attains the largest loss on the
        epsilon sphere for a quadratic objective at small radius."""
        theta = rng.standard_normal(16)
        eps = 1e-3
        _, g = quadratic(theta)
        delta_star = eps * g / np.linalg.norm(g)
        best = quadratic(theta + delta_star)[0]
        for _ in range(100):
            d = rng.standard_normal(16)
            d *= eps / np.linalg.norm(d)
            assert best >= quadratic(theta + d)[0] - 1e-9


class TestImportance:
    def test_identical_samples_give_squared_gradient(self, tiny_model_config, rng):
        params = m.init_params(tiny_model_config, seed=5)
        x = rng.standard_normal((4, tiny_model_config.input_width))
        t = np.array([1.0, 0.0])
        xs, targets = [x, x.copy(), x.copy()], np.stack([t, t, t])
        imp = tr.estimate_importance(params, xs, targets, "ewc")
        single = tr.make_objective(
            tiny_model_config,
            tr.BatchData.from_sequences([x], t[None]))(params.flat)[1]
        assert np.allclose(imp.weights, single ** 2, rtol=1e-9)
        assert np.array_equal(imp.anchor, params.flat)

    def test_nonnegative_full_length(self, tiny_model_config, rng):
        params = m.init_params(tiny_model_config, seed=5)
        batch = make_batch(rng, 5, tiny_model_config)
        xs = [batch.x[i, batch.mask[i]] for i in range(5)]
        for method in ("ewc", "mas"):
            imp = tr.estimate_importance(params, xs, batch.targets, method, 3)
            assert imp.weights.shape == params.flat.shape
            assert np.all(imp.weights >= 0)

    def test_bias_entries_hand_computed(self, tiny_model_config, rng):
        """For one sample the predictor-bias entries are (p - target)^2 under
        the Fisher estimate and |logits| under the sensitivity estimate."""
        params = m.init_params(tiny_model_config, seed=5)
        x = rng.standard_normal((3, tiny_model_config.input_width))
        t = np.array([0.0, 1.0])
        p, cache = m.forward(params, x)
        ewc = tr.estimate_importance(params, [x], t[None], "ewc")
        mas = tr.estimate_importance(params, [x], t[None], "mas")
        bias = m._views(tiny_model_config, ewc.weights)["head_b"]
        assert np.allclose(bias, (p - t) ** 2, atol=1e-12)
        bias_mas = m._views(tiny_model_config, mas.weights)["head_b"]
        assert np.allclose(bias_mas, np.abs(cache.logits[0]), atol=1e-12)

    def test_rejects_empty(self, tiny_model_config, rng):
        params = m.init_params(tiny_model_config, seed=5)
        with pytest.raises(ValueError):
            tr.estimate_importance(params, [], np.zeros((0, 2)), "ewc", None)

    def test_penalty_shape(self, rng):
        v = np.abs(rng.standard_normal(6))
        anchor = rng.standard_normal(6)
        imp = tr.ImportanceVector(v, anchor)
        assert imp.penalty(anchor) == 0.0
        theta = anchor.copy()
        prev = 0.0
        for scale in (0.1, 0.5, 1.0, 2.0):
            theta = anchor + scale
            cur = imp.penalty(theta)
            assert cur > prev
            prev = cur
        assert np.allclose(imp.penalty_grad(anchor), 0.0)


class TestTrainEpochs:
    def test_zero_iterations_is_identity(self, tiny_model_config, rng):
        params = m.init_params(tiny_model_config, seed=5)
        before = params.flat.copy()
        data = make_batch(rng, 6, tiny_model_config)
        out, trace = tr.train_epochs(params, data,
                                     tr.TrainConfig(iterations=0, seed=1))
        assert np.array_equal(out.flat, before)
        assert trace.shape == (0, 3)

    @pytest.mark.oracle
    def test_separable_toy_converges(self, rng):
        """Logistic-regression-like sanity: on two well-separated classes the
        loss collapses within 200 iterations."""
        cfg = m.ModelConfig(input_width=4, mlp_widths=(6, 8), feature_width=8,
                            n_heads=2, n_blocks=1, n_classes=2, dropout_rate=0.0)
        params = m.init_params(cfg, seed=2)
        xs, targets = [], []
        for i in range(24):
            c = i % 2
            base = np.full((5, 4), 3.0 if c else -3.0)
            xs.append(base + 0.1 * rng.standard_normal((5, 4)))
            targets.append(np.eye(2)[c])
        data = tr.BatchData.from_sequences(xs, np.array(targets))
        cfg_t = tr.TrainConfig(learning_rate=1e-2, iterations=200, batch_size=8,
                               seed=0, variant="bl_ft")
        _, trace = tr.train_epochs(params, data, cfg_t)
        assert trace[-1, 1] < 0.1 * trace[0, 1]

    def test_deterministic_trace(self, tiny_model_config, rng):
        data = make_batch(rng, 6, tiny_model_config)
        pool = make_batch(rng, 4, tiny_model_config, soft=True)
        cfg_t = tr.TrainConfig(iterations=10, batch_size=3, seed=42,
                               variant="proposed")
        params = m.init_params(tiny_model_config, seed=5)
        out1, trace1 = tr.train_epochs(params.copy(), data, cfg_t,
                                       replay_pool=pool, eta=2.0)
        out2, trace2 = tr.train_epochs(params.copy(), data, cfg_t,
                                       replay_pool=pool, eta=2.0)
        assert np.array_equal(trace1, trace2)
        assert np.array_equal(out1.flat, out2.flat)

    def test_empty_domain_rejected(self, tiny_model_config):
        params = m.init_params(tiny_model_config, seed=5)
        empty = tr.BatchData(np.zeros((0, 2, 4)), np.zeros((0, 2), dtype=bool),
                             np.zeros((0, 2)))
        with pytest.raises(ValueError):
            tr.train_epochs(params, empty, tr.TrainConfig(iterations=1))

    def test_variant_config_mapping(self):
        base = tr.TrainConfig(learning_rate=1e-3, deviation_radius=0.03)
        ft2 = tr.variant_train_config(base, "bl_ft", period=2)
        assert ft2.learning_rate == pytest.approx(1e-4)
        assert tr.effective_radius(ft2) == 0.0
        ft1 = tr.variant_train_config(base, "bl_ft", period=1)
        assert ft1.learning_rate == pytest.approx(1e-3)
        for variant in tr.VARIANTS:
            cfg = tr.variant_train_config(base, variant, period=3)
            expected = 0.03 if variant == "proposed" else 0.0
            assert tr.effective_radius(cfg) == expected

    def test_full_batch_mode(self, tiny_model_config, rng):
        data = make_batch(rng, 5, tiny_model_config)
        params = m.init_params(tiny_model_config, seed=5)
        cfg_t = tr.TrainConfig(iterations=3, batch_size=None, seed=1,
                               variant="bl_cumulative")
        _, trace = tr.train_epochs(params, data, cfg_t)
        assert trace.shape == (3, 3)
