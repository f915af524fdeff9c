"""Core network ops against independent naive oracles."""

import numpy as np
import pytest

import spikelane as sl
from spikelane.model import _log_softmax

from oracles import naive_lif, naive_matmul


class TestLinearForward:
    def test_zero_input_rows_equal_bias(self):
        layer = sl.new_model(seed=1).feature_layer
        out = sl.linear_forward(np.zeros((12, 5)), layer)
        assert out.shape == (12, 24)
        assert (out == layer.bias).all()

    def test_identity_weights_pass_through(self):
        layer = sl.LinearLayer(weights=np.eye(5), bias=np.zeros(5))
        e1 = np.zeros((1, 5))
        e1[0, 0] = 1.0
        assert (sl.linear_forward(e1, layer) == e1).all()

    def test_matches_naive_matmul(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 3))
        layer = sl.LinearLayer(weights=rng.normal(size=(3, 2)), bias=rng.normal(size=2))
        got = sl.linear_forward(x, layer)
        want = naive_matmul(x, layer.weights, layer.bias)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        layer = sl.LinearLayer(weights=np.zeros((3, 2)), bias=np.zeros(2))
        with pytest.raises(sl.ShapeError, match=r"\(2, 4\).*\(3, 2\)"):
            sl.linear_forward(np.zeros((2, 4)), layer)


class TestLifForward:
    def test_hand_computed_recurrence(self):
        # beta 0.5: membrane walks 0.6, 0.9, 1.05; the third step crosses
        cfg = sl.LifConfig(beta=0.5, v_threshold=1.0)
        currents = np.array([[0.6], [0.6], [0.6], [0.0]])
        spikes, membrane = sl.lif_forward(currents, cfg)
        np.testing.assert_allclose(membrane[:, 0], [0.6, 0.9, 1.05, 0.0], atol=1e-12)
        assert spikes[:, 0].tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_zero_currents_stay_silent(self):
        spikes, membrane = sl.lif_forward(np.zeros((12, 24)), sl.LifConfig())
        assert not spikes.any()
        assert not membrane.any()

    def test_threshold_is_inclusive(self):
        currents = np.zeros((3, 1))
        currents[1, 0] = 1.0
        spikes, _ = sl.lif_forward(currents, sl.LifConfig())
        assert spikes[:, 0].tolist() == [0.0, 1.0, 0.0]

    def test_subtract_reset_keeps_residual(self):
        cfg = sl.LifConfig(beta=0.5, v_threshold=1.0, reset_mode="subtract")
        currents = np.array([[1.2], [0.0]])
        spikes, membrane = sl.lif_forward(currents, cfg)
        assert spikes[0, 0] == 1.0
        # residual 0.2 decays to 0.1 at the next step
        np.testing.assert_allclose(membrane[:, 0], [1.2, 0.1], atol=1e-12)

    def test_subthreshold_matches_geometric_sum(self):
        rng = np.random.default_rng(11)
        cfg = sl.LifConfig()
        currents = rng.uniform(-0.05, 0.08, size=(12, 24))
        spikes, membrane = sl.lif_forward(currents, cfg)
        assert not spikes.any()
        t_idx = np.arange(12)
        for t in range(12):
            closed_form = (cfg.beta ** (t - t_idx[: t + 1])) @ currents[: t + 1]
            np.testing.assert_allclose(membrane[t], closed_form, atol=1e-12)

    @pytest.mark.parametrize("reset_mode", ["to_zero", "subtract"])
    def test_suprathreshold_matches_naive_recurrence_bitwise(self, reset_mode):
        rng = np.random.default_rng(12)
        cfg = sl.LifConfig(reset_mode=reset_mode)
        currents = rng.uniform(-0.5, 1.5, size=(12, 24))
        spikes, membrane = sl.lif_forward(currents, cfg)
        want_s, want_m = naive_lif(currents, cfg.beta, cfg.v_threshold, reset_mode)
        assert spikes.sum() > 0
        assert (spikes == want_s).all()
        assert (membrane == want_m).all()

    def test_nonfinite_current_names_position(self):
        currents = np.zeros((12, 24))
        currents[3, 7] = np.nan
        with pytest.raises(sl.NumericError, match=r"t=3.*j=7"):
            sl.lif_forward(currents, sl.LifConfig())


class TestPoolingAndSoftmax:
    def test_all_ones_pool_to_one(self):
        assert (sl.temporal_mean(np.ones((12, 24))) == 1.0).all()
        assert (sl.temporal_mean(np.zeros((12, 24))) == 0.0).all()

    def test_single_spike_pools_to_one_twelfth(self):
        spikes = np.zeros((12, 24))
        spikes[4, 9] = 1.0
        pooled = sl.temporal_mean(spikes)
        assert pooled[9] == pytest.approx(1 / 12, abs=0)
        assert pooled.sum() == pooled[9]

    def test_uniform_logits_give_uniform_probs(self):
        lp = sl.softmax_logprobs(np.zeros(3))
        np.testing.assert_allclose(lp, np.log(1 / 3), atol=1e-15)

    def test_huge_logit_does_not_overflow(self):
        lp = sl.softmax_logprobs(np.array([1000.0, 0.0, 0.0]))
        probs = np.exp(lp)
        assert np.isfinite(lp).all()
        np.testing.assert_allclose(probs, [1.0, 0.0, 0.0], atol=1e-300)

    def test_matches_naive_softmax(self):
        z = np.array([1.0, 2.0, 3.0])
        naive = np.exp(z) / np.exp(z).sum()
        np.testing.assert_allclose(np.exp(sl.softmax_logprobs(z)), naive, atol=1e-12)

    def test_normalization_and_shift_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            z = rng.normal(scale=10.0, size=3)
            lp = sl.softmax_logprobs(z)
            assert abs(np.exp(lp).sum() - 1.0) < 1e-9
            shifted = sl.softmax_logprobs(z + rng.normal(scale=100.0))
            np.testing.assert_allclose(lp, shifted, atol=1e-12)


class TestForward:
    def test_zero_model_zero_input_is_uniform(self):
        model = sl.replace_params(
            sl.new_model(), [np.zeros((5, 24)), np.zeros(24), np.zeros((24, 3)), np.zeros(3)]
        )
        cache = sl.forward(model, np.zeros((12, 5)))
        np.testing.assert_allclose(np.exp(cache.log_probs), 1 / 3, atol=1e-15)

    def test_probabilities_normalize(self):
        rng = np.random.default_rng(8)
        model = sl.new_model(seed=2)
        for _ in range(20):
            cache = sl.forward(model, rng.normal(size=(12, 5)))
            assert abs(np.exp(cache.log_probs).sum() - 1.0) < 1e-9

    def test_cache_is_deterministic(self):
        model = sl.new_model(seed=3)
        x = np.random.default_rng(9).normal(size=(12, 5))
        a, b = sl.forward(model, x), sl.forward(model, x)
        for name in ("currents", "membrane", "spikes", "pooled", "logits", "log_probs"):
            assert (getattr(a, name) == getattr(b, name)).all()

    def test_spikes_are_binary(self):
        model = sl.new_model(seed=4)
        cache = sl.forward(model, np.random.default_rng(10).normal(size=(12, 5)))
        assert set(np.unique(cache.spikes)) <= {0.0, 1.0}

    def test_rejects_wrong_shape_and_nan(self):
        model = sl.new_model()
        with pytest.raises(sl.ShapeError):
            sl.forward(model, np.zeros((11, 5)))
        bad = np.zeros((12, 5))
        bad[0, 0] = np.inf
        with pytest.raises(sl.NumericError):
            sl.forward(model, bad)


class TestNllLoss:
    def test_uniform_single_sample_is_ln3(self):
        lp = np.log(np.full(3, 1 / 3))
        assert sl.nll_loss([lp], [1]) == pytest.approx(np.log(3.0), abs=1e-12)

    def test_certain_prediction_is_zero(self):
        lp = np.array([0.0, -np.inf, -np.inf])
        assert sl.nll_loss([lp], [0]) == 0.0

    def test_hand_computed_batch_of_two(self):
        lp1 = np.log(np.array([0.5, 0.3, 0.2]))
        lp2 = np.log(np.array([0.25, 0.5, 0.25]))
        want = (np.log(2.0) + np.log(4.0)) / 2.0
        assert sl.nll_loss([lp1, lp2], [0, 0]) == pytest.approx(want, abs=1e-12)

    def test_usage_errors(self):
        lp = np.log(np.full(3, 1 / 3))
        with pytest.raises(sl.UsageError):
            sl.nll_loss([], [])
        with pytest.raises(sl.UsageError):
            sl.nll_loss([lp], [0, 1])
        with pytest.raises(sl.UsageError):
            sl.nll_loss([lp], [3])


class TestParamsAndConfig:
    def test_default_model_has_219_parameters(self):
        assert sl.param_count(sl.new_model()) == 219

    def test_tiny_model_count_closed_form(self):
        model = sl.new_model(hidden_dim=1)
        assert sl.param_count(model) == 5 + 1 + 3 + 3

    def test_degenerate_dims_rejected(self):
        with pytest.raises(sl.ConfigError):
            sl.new_model(hidden_dim=0)

    def test_lif_config_validation(self):
        with pytest.raises(sl.ConfigError):
            sl.LifConfig(beta=1.0)
        with pytest.raises(sl.ConfigError):
            sl.LifConfig(v_threshold=0.0)
        with pytest.raises(sl.ConfigError):
            sl.LifConfig(reset_mode="clamp")

    def test_new_model_seeded_and_bounded(self):
        a, b = sl.new_model(seed=42), sl.new_model(seed=42)
        for pa, pb in zip(sl.model_params(a), sl.model_params(b)):
            assert (pa == pb).all()
        assert np.abs(a.feature_layer.weights).max() <= 1 / np.sqrt(5)
        assert np.abs(a.classifier.weights).max() <= 1 / np.sqrt(24)
        c = sl.new_model(seed=43)
        assert (a.feature_layer.weights != c.feature_layer.weights).any()

    def test_replace_params_roundtrip(self):
        model = sl.new_model(seed=6)
        same = sl.replace_params(model, sl.model_params(model))
        for pa, pb in zip(sl.model_params(model), sl.model_params(same)):
            assert (pa == pb).all()
        assert same.lif == model.lif


class TestBatchedTwins:
    def test_forward_batch_matches_single_forward_bitwise(self):
        rng = np.random.default_rng(13)
        model = sl.new_model(seed=5)
        windows = rng.normal(size=(17, 12, 5))
        batch = sl.forward_batch(model, windows)
        for i in range(17):
            single = sl.forward(model, windows[i])
            assert (batch.spikes[i] == single.spikes).all()
            assert (batch.membrane[i] == single.membrane).all()
            np.testing.assert_allclose(batch.log_probs[i], single.log_probs, atol=1e-12)

    def test_backward_batch_is_mean_of_singles(self):
        rng = np.random.default_rng(14)
        model = sl.new_model(seed=5)
        windows = rng.normal(size=(9, 12, 5))
        labels = rng.integers(0, 3, size=9)
        batch = sl.forward_batch(model, windows)
        got = sl.backward_batch(model, batch, labels)
        singles = [
            sl.backward(model, sl.forward(model, windows[i]), int(labels[i])).as_list()
            for i in range(9)
        ]
        for k, arr in enumerate(got.as_list()):
            want = np.mean([s[k] for s in singles], axis=0)
            np.testing.assert_allclose(arr, want, atol=1e-12)

    def test_label_length_mismatch(self):
        model = sl.new_model()
        batch = sl.forward_batch(model, np.zeros((4, 12, 5)))
        with pytest.raises(sl.UsageError):
            sl.backward_batch(model, batch, np.zeros(3, dtype=int))


def test_log_softmax_batched_rows_match_single():
    rng = np.random.default_rng(15)
    z = rng.normal(size=(6, 3)) * 5
    rows = _log_softmax(z)
    for i in range(6):
        np.testing.assert_allclose(rows[i], sl.softmax_logprobs(z[i]), atol=1e-15)
