import numpy as np
import pytest

from simchan.baselines import (
    ElmModel,
    MlpModel,
    baseline_predict,
    elm_train,
    mlp_train,
    reduce_dataset,
    reduce_input,
)
from simchan.chanscene import LabeledDataset, channel_matrix
from simchan.numkernel import dominant_left_sv, finite_diff_grad, phase_normalize
from simchan.simnet import SimilarityModel
from simchan.train import TrainConfig


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def toy_regression(L=40, d=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((L, d))
    T = np.stack([X[:, 0] + X[:, 1], np.sin(X[:, 2]), X[:, 3] * 0.5], axis=1)
    return LabeledDataset(X.astype(complex), T, "positioning", d, 1)


class TestReduceInput:
    def test_rank_one(self):
        rng = np.random.default_rng(0)
        u = crandn(rng, 5)
        u /= np.linalg.norm(u)
        H = np.outer(u, crandn(rng, 3))
        np.testing.assert_allclose(reduce_input(H), phase_normalize(u), atol=1e-10)

    def test_stacked_length(self):
        rng = np.random.default_rng(1)
        x = reduce_input(crandn(rng, 56, 8), stacked=True)
        assert x.shape == (112,) and x.dtype == np.float64

    def test_delegates_to_power_iteration(self):
        rng = np.random.default_rng(2)
        H = crandn(rng, 4, 6)
        assert reduce_input(H).tobytes() == dominant_left_sv(H)[0].tobytes()

    def test_phase_invariant(self):
        rng = np.random.default_rng(3)
        H = crandn(rng, 6, 4)
        rot = H * np.exp(1j * rng.uniform(0, 2 * np.pi, size=4))[None, :]
        np.testing.assert_allclose(reduce_input(rot), reduce_input(H), atol=1e-10)

    def test_reduce_dataset(self):
        rng = np.random.default_rng(4)
        N, S = 3, 4
        ds = LabeledDataset(crandn(rng, 5, N * S), rng.standard_normal((5, 3)), "positioning", N, S)
        red = reduce_dataset(ds)
        assert red.inputs.shape == (5, N) and red.n_subcarriers == 1
        np.testing.assert_array_equal(red.targets, ds.targets)
        np.testing.assert_array_equal(red.inputs[2], reduce_input(channel_matrix(ds.inputs[2], N)))


class TestMlp:
    def test_zero_last_layer_outputs_offset(self):
        m = MlpModel.init(4, hidden=8, zero_last=True)
        np.testing.assert_array_equal(m.predict(np.ones((3, 4))), np.zeros((3, 3)))

    def test_zero_epochs_is_init(self):
        ds = toy_regression()
        m, hist = mlp_train(ds, TrainConfig(epochs=0, loss_kind="positioning"), hidden=16, seed=1, standardize=False)
        ref = MlpModel.init(2 * ds.input_dim, hidden=16, seed=1)
        assert hist == [] and m.get_params().tobytes() == ref.get_params().tobytes()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        m = MlpModel.init(5, hidden=7, seed=2)
        m.target_scale = 1.7
        X = rng.standard_normal((4, 5))
        G = rng.standard_normal((4, 3))
        an = m.gradients(X, G)

        def f(theta):
            mm = m.copy()
            mm.set_params(theta)
            return float(np.sum(mm.predict(X) * G))

        fd = finite_diff_grad(f, m.get_params(), 1e-6)
        np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-7)

    def test_relu_kill_gives_final_bias(self):
        m = MlpModel.init(3, hidden=5, seed=0)
        m.weights[0][:] = 0.0
        m.biases[0][:] = -1.0  # every first-layer unit is dead
        expected = m.weights[2] @ np.maximum(m.biases[1], 0) + m.biases[2]
        np.testing.assert_allclose(m.predict(np.ones(3)), expected, atol=1e-15)

    def test_training_reduces_loss(self):
        ds = toy_regression(L=80)
        cfg = TrainConfig(learning_rate=1e-2, epochs=40, batch_size=16, loss_kind="positioning")
        _, hist = mlp_train(ds, cfg, hidden=32)
        assert hist[-1] < 0.7 * hist[0]

    def test_batch_equals_single(self):
        rng = np.random.default_rng(6)
        m = MlpModel.init(4, hidden=6)
        X = rng.standard_normal((7, 4))
        batch = m.predict(X)
        for x, b in zip(X, batch):
            np.testing.assert_allclose(m.predict(x), b, atol=1e-14)

    def test_input_size_checked(self):
        with pytest.raises(ValueError, match="features"):
            MlpModel.init(4).predict(np.ones(5))


class TestElm:
    def test_zero_targets_zero_weights(self):
        ds = toy_regression()
        ds = LabeledDataset(ds.inputs, np.zeros_like(ds.targets), "positioning", ds.n_antennas, 1)
        m = elm_train(ds, hidden=20)
        assert np.all(m.output_weights == 0)

    def test_seeded(self):
        ds = toy_regression()
        a, b = elm_train(ds, hidden=30, seed=3), elm_train(ds, hidden=30, seed=3)
        assert a.output_weights.tobytes() == b.output_weights.tobytes()
        assert not np.array_equal(a.hidden_weights, elm_train(ds, hidden=30, seed=4).hidden_weights)

    def test_hidden_weights_frozen(self):
        m = elm_train(toy_regression(), hidden=10)
        with pytest.raises(ValueError):
            m.hidden_weights[0, 0] = 1.0

    def test_interpolates_with_wide_layer(self):
        ds = toy_regression(L=10)
        m = elm_train(ds, hidden=500, ridge=1e-12)
        np.testing.assert_allclose(m.predict(ds.inputs), ds.targets, atol=1e-4)

    @pytest.mark.parametrize("hidden", [15, 80])  # primal and dual branches
    def test_ridge_optimality(self, hidden):
        ds = toy_regression(L=40)
        m = elm_train(ds, hidden=hidden, ridge=1e-3)
        Z = m.features(np.concatenate([ds.inputs.real, ds.inputs.imag], axis=1))
        resid = Z.T @ (Z @ m.output_weights - ds.targets) + m.ridge * m.output_weights
        assert np.max(np.abs(resid)) < 1e-8 * np.max(np.abs(Z.T @ ds.targets))

    def test_singular_without_ridge(self):
        with pytest.raises(np.linalg.LinAlgError, match="ridge > 0"):
            elm_train(toy_regression(L=10), hidden=50, ridge=0.0)

    def test_batch_equals_single(self):
        ds = toy_regression()
        m = elm_train(ds, hidden=25)
        batch = m.predict(ds.inputs[:5])
        for x, b in zip(ds.inputs[:5], batch):
            np.testing.assert_allclose(m.predict(x), b, atol=1e-12)


def test_baseline_predict_dispatch():
    ds = toy_regression()
    elm = elm_train(ds, hidden=10)
    np.testing.assert_array_equal(baseline_predict(elm, ds.inputs[:2]), elm.predict(ds.inputs[:2]))
    assert isinstance(elm, ElmModel)
    with pytest.raises(TypeError):
        baseline_predict(SimilarityModel(np.ones((2, 2)), np.ones((3, 2)), 1), np.ones(2))
