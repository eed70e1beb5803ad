import math

import numpy as np
import pytest

from consonet.errors import ValidationError
from consonet.nn import (
    AdamState,
    FourierEmbedding,
    MlpParams,
    MlpSpec,
    adam_update,
    fourier_embed,
    hidden_stack,
    init_mlp,
    mlp_backward,
    mlp_forward,
)


class TestInit:
    def test_seed_determinism(self):
        spec = MlpSpec((4, 16, 3))
        a, b = init_mlp(spec, 9), init_mlp(spec, 9)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = init_mlp(spec, 10)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_weight_shapes(self):
        params = init_mlp(MlpSpec((3, 30, 50)), 0)
        assert params.weights[0].shape == (30, 3)
        assert params.weights[1].shape == (50, 30)
        assert params.biases[0].shape == (30,)
        assert np.all(params.biases[0] == 0.0)

    def test_glorot_bounds_monte_carlo(self):
        # fan_in = fan_out = 30: bound sqrt(6/60); 12 seeds x 900 weights
        bound = math.sqrt(6.0 / 60.0)
        samples = np.concatenate([
            init_mlp(MlpSpec((30, 30)), seed, dtype=np.float64).weights[0].ravel()
            for seed in range(12)
        ])
        assert samples.size > 10_000
        assert np.max(np.abs(samples)) <= bound
        assert np.max(samples) > 0.95 * bound
        assert np.min(samples) < -0.95 * bound

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            MlpSpec((4,))
        with pytest.raises(ValidationError):
            MlpSpec((4, 0, 2))
        with pytest.raises(ValidationError):
            MlpSpec((4, 4), activation="gelu")


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        params = init_mlp(MlpSpec((3, 8, 2)), 0, dtype=np.float64)
        for w in params.weights:
            w[...] = 0.0
        out, _ = mlp_forward(params, np.random.default_rng(0).standard_normal((4, 3)))
        assert np.all(out == 0.0)

    def test_identity_linear_layer(self):
        spec = MlpSpec((4, 4))
        params = MlpParams(spec, [np.eye(4)], [np.zeros(4)])
        x = np.random.default_rng(1).standard_normal((6, 4))
        out, _ = mlp_forward(params, x)
        assert np.array_equal(out, x)

    def test_matches_straight_line_reimplementation(self):
        # independent per-sample evaluation with math.tanh
        spec = MlpSpec((5, 7, 7, 7, 2))
        params = init_mlp(spec, 3, dtype=np.float64)
        rng = np.random.default_rng(4)
        x = rng.standard_normal((9, 5))
        out, _ = mlp_forward(params, x)
        for s in range(9):
            v = list(x[s])
            for l in range(params.n_layers):
                w, b = params.weights[l], params.biases[l]
                nxt = [sum(w[o][i] * v[i] for i in range(len(v))) + b[o]
                       for o in range(w.shape[0])]
                if l < params.n_layers - 1:
                    nxt = [math.tanh(z) for z in nxt]
                v = nxt
            assert np.max(np.abs(np.array(v) - out[s])) < 1e-12

    def test_relu_activation(self):
        spec = MlpSpec((2, 3, 1), activation="relu")
        params = init_mlp(spec, 0, dtype=np.float64)
        x = np.random.default_rng(5).standard_normal((8, 2))
        out, cache = mlp_forward(params, x)
        assert np.all(cache[1] >= 0.0)
        assert out.shape == (8, 1)

    def test_shape_mismatch(self):
        params = init_mlp(MlpSpec((3, 4)), 0)
        with pytest.raises(ValidationError):
            mlp_forward(params, np.zeros((2, 5)))

    def test_forward_determinism(self):
        params = init_mlp(MlpSpec((6, 20, 20, 4)), 11)
        x = np.random.default_rng(6).standard_normal((32, 6)).astype(np.float32)
        a, _ = mlp_forward(params, x)
        b, _ = mlp_forward(params, x)
        assert np.array_equal(a, b)


class TestBackward:
    def test_zero_output_gradient(self):
        params = init_mlp(MlpSpec((3, 5, 2)), 0, dtype=np.float64)
        x = np.random.default_rng(7).standard_normal((4, 3))
        _, cache = mlp_forward(params, x)
        din = mlp_backward(params, cache, np.zeros((4, 2)))
        assert np.all(din == 0.0)
        assert all(np.all(g == 0.0) for g in params.grads())

    def test_gradients_match_finite_differences(self):
        spec = MlpSpec((4, 6, 6, 2))
        params = init_mlp(spec, 13, dtype=np.float64)
        rng = np.random.default_rng(14)
        x = rng.standard_normal((5, 4))
        target = rng.standard_normal((5, 2))

        def loss():
            out, _ = mlp_forward(params, x)
            return float(np.mean((out - target) ** 2))

        out, cache = mlp_forward(params, x)
        params.zero_grad()
        mlp_backward(params, cache, 2.0 * (out - target) / out.size)
        analytic = np.concatenate([g.ravel().copy() for g in params.grads()])

        eps = 1e-5
        fd = np.empty_like(analytic)
        k = 0
        for arr in params.arrays():
            flat = arr.ravel()
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                lp = loss()
                flat[i] = old - eps
                lm = loss()
                flat[i] = old
                fd[k] = (lp - lm) / (2 * eps)
                k += 1
        rel = np.linalg.norm(analytic - fd) / np.linalg.norm(fd)
        assert rel < 1e-6

    def test_input_gradient_of_linear_layer_is_transpose_action(self):
        spec = MlpSpec((4, 3))
        params = init_mlp(spec, 2, dtype=np.float64)
        x = np.random.default_rng(8).standard_normal((6, 4))
        _, cache = mlp_forward(params, x)
        gout = np.random.default_rng(9).standard_normal((6, 3))
        din = mlp_backward(params, cache, gout)
        assert np.allclose(din, gout @ params.weights[0], atol=1e-14)

    def test_gradients_accumulate(self):
        params = init_mlp(MlpSpec((2, 3, 1)), 3, dtype=np.float64)
        x = np.random.default_rng(10).standard_normal((4, 2))
        _, cache = mlp_forward(params, x)
        gout = np.ones((4, 1))
        params.zero_grad()
        mlp_backward(params, cache, gout)
        once = [g.copy() for g in params.grads()]
        mlp_backward(params, cache, gout)
        for g1, g2 in zip(once, params.grads()):
            assert np.allclose(g2, 2 * g1)

    def test_stale_cache_rejected(self):
        params = init_mlp(MlpSpec((2, 3, 1)), 3)
        with pytest.raises(ValidationError):
            mlp_backward(params, [np.zeros((2, 2))], np.zeros((2, 1)))


class TestAdam:
    def test_zero_gradient_is_a_fixed_point(self):
        params = init_mlp(MlpSpec((3, 4)), 0, dtype=np.float64)
        before = [a.copy() for a in params.arrays()]
        state = AdamState(params.arrays())
        adam_update(params.arrays(), [np.zeros_like(a) for a in params.arrays()], state)
        for b, a in zip(before, params.arrays()):
            assert np.array_equal(b, a)

    def test_first_step_is_signed_learning_rate(self):
        arrays = [np.array([1.0, -2.0, 3.0])]
        grads = [np.array([0.5, -0.25, 2.0])]
        state = AdamState(arrays)
        adam_update(arrays, grads, state, lr=1e-3, eps=1e-300)
        assert np.allclose(arrays[0], [1.0 - 1e-3, -2.0 + 1e-3, 3.0 - 1e-3],
                           atol=1e-15)

    def test_ten_step_trajectory_matches_scalar_oracle(self):
        # quadratic (x - 3)^2 / 2, gradient x - 3
        x = np.array([0.0])
        arrays, state = [x], AdamState([x])
        lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
        # independent scalar implementation
        xs, m, v = 0.0, 0.0, 0.0
        for t in range(1, 11):
            g = float(arrays[0][0]) - 3.0
            adam_update(arrays, [np.array([g])], state, lr, b1, b2, eps)
            gs = xs - 3.0
            m = b1 * m + (1 - b1) * gs
            v = b2 * v + (1 - b2) * gs * gs
            xs = xs - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
            assert arrays[0][0] == pytest.approx(xs, abs=1e-12)


class TestFourier:
    def test_zero_frequency_matrix(self):
        emb = FourierEmbedding(b_matrix=np.zeros((4, 3)), sigma=0.0, m_freq=4)
        out = fourier_embed(emb, np.array([0.3, -0.7, 1.1]))
        assert np.all(out[:4] == 0.0)
        assert np.all(out[4:] == 1.0)

    def test_output_width_is_twice_m_freq(self):
        emb = FourierEmbedding.create(50, 3, 1.0, 0)
        assert emb.out_width == 100
        out = fourier_embed(emb, np.zeros(3))
        assert out.shape == (100,)

    def test_quarter_period_row(self):
        emb = FourierEmbedding(b_matrix=np.array([[1.0, 0.0, 0.0]]), sigma=1.0,
                               m_freq=1)
        out = fourier_embed(emb, np.array([0.25, 5.0, -3.0]))
        assert out[0] == pytest.approx(1.0, abs=1e-12)  # sin(pi/2)
        assert out[1] == pytest.approx(0.0, abs=1e-12)  # cos(pi/2)

    def test_sin_cos_pairing(self):
        emb = FourierEmbedding.create(16, 3, 1.0, 5, dtype=np.float64)
        rng = np.random.default_rng(6)
        out = fourier_embed(emb, rng.standard_normal((40, 3)))
        energy = out[:, :16] ** 2 + out[:, 16:] ** 2
        assert np.max(np.abs(energy - 1.0)) < 1e-12

    def test_creation_seeded_and_scaled(self):
        a = FourierEmbedding.create(8, 2, 2.5, 42, dtype=np.float64)
        b = FourierEmbedding.create(8, 2, 2.5, 42, dtype=np.float64)
        assert np.array_equal(a.b_matrix, b.b_matrix)
        wide = FourierEmbedding.create(2000, 2, 2.5, 1, dtype=np.float64)
        assert np.std(wide.b_matrix) == pytest.approx(2.5, rel=0.05)

    def test_width_mismatch(self):
        emb = FourierEmbedding.create(4, 3, 1.0, 0)
        with pytest.raises(ValidationError):
            fourier_embed(emb, np.zeros(2))


def test_hidden_stack_builder():
    spec = hidden_stack(100, 50, hidden=30, depth=6)
    assert spec.layer_widths == (100, 30, 30, 30, 30, 30, 30, 50)
