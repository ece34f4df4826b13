import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzfmtl.fmtl.network import (Architecture, ModelParameters, forward, init_params, loss,
                                  loss_and_grad, task_losses)
from thzfmtl.metrics import PAPER_PARAMETER_COUNT
from thzfmtl.system import child_rng


def small_arch(activation="relu", dropout=0.0, hidden=(12, 10)):
    return Architecture(input_dim=9, hidden=hidden, channel_dim=8, support_dim=6,
                        dropout_prob=dropout, activation=activation)


def _fd_grad(params, X, Y1, Y2, w1, w2, step=1e-5):
    theta = params.flat_params
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        lp = loss(params.with_params(theta + e), X, Y1, Y2, w1, w2)
        lm = loss(params.with_params(theta - e), X, Y1, Y2, w1, w2)
        g[i] = (lp - lm) / (2 * step)
    return g


class TestArchitecture:
    def test_param_count_is_layer_sum(self):
        arch = Architecture.for_scenario(8, 64, 320)
        expect = 24 * 256 + 256 + 256 * 256 + 256 + 256 * 128 + 128 + 256 * 320 + 320
        assert arch.num_params == expect
        assert init_params(arch, child_rng(0, "m")).num_params == expect

    def test_reference_constant(self):
        assert PAPER_PARAMETER_COUNT == 1_196_928

    def test_small_net_size(self):
        assert 400 <= small_arch().num_params <= 600

    def test_dict_round_trip(self):
        arch = small_arch("tanh", 0.3)
        assert Architecture.from_dict(arch.to_dict()) == arch

    @pytest.mark.parametrize("kw", [{"dropout_prob": 1.0}, {"activation": "gelu"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Architecture(input_dim=3, **kw)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            ModelParameters(small_arch(), np.zeros(3))


class TestForward:
    def test_zero_params(self):
        p = ModelParameters(small_arch(), np.zeros(small_arch().num_params))
        o1, o2 = forward(p, np.ones((4, 3, 3)))
        assert not o1.any() and not o2.any()

    def test_eval_deterministic(self, rng):
        p = init_params(small_arch(dropout=0.5), rng)
        X = rng.standard_normal((5, 9))
        a, b = forward(p, X), forward(p, X)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_shared_trunk(self, rng):
        p = init_params(small_arch(activation="tanh"), rng)
        X = rng.standard_normal((5, 9))
        base = forward(p, X)
        theta = p.flat_params.copy()
        theta[0] += 1e-3
        moved = forward(p.with_params(theta), X)
        assert not np.allclose(base[0], moved[0]) and not np.allclose(base[1], moved[1])

    def test_rejects_nan(self, rng):
        p = init_params(small_arch(), rng)
        with pytest.raises(ValueError):
            forward(p, np.full((1, 9), np.nan))

    def test_dropout_changes_training_output(self, rng):
        p = init_params(small_arch(dropout=0.5), rng)
        X = rng.standard_normal((5, 9))
        a = forward(p, X, rng=np.random.default_rng(0))[0]
        b = forward(p, X, rng=np.random.default_rng(1))[0]
        assert not np.allclose(a, b)


class TestLoss:
    def test_perfect_prediction(self, rng):
        p = init_params(small_arch(), rng)
        X = rng.standard_normal((3, 9))
        o1, o2 = forward(p, X)
        assert loss(p, X, o1, o2, 0.8, 0.2) == 0.0

    def test_omega2_zero(self, rng):
        p = init_params(small_arch(), rng)
        X = rng.standard_normal((3, 9))
        Y1, Y2 = rng.standard_normal((3, 8)), rng.standard_normal((3, 6))
        l1, _ = task_losses(*forward(p, X), Y1, Y2)
        assert loss(p, X, Y1, Y2, 1.0, 0.0) == pytest.approx(l1)

    def test_batch_mean(self, rng):
        p = init_params(small_arch(), rng)
        X = rng.standard_normal((2, 9))
        Y1, Y2 = rng.standard_normal((2, 8)), rng.standard_normal((2, 6))
        single = [loss(p, X[i:i + 1], Y1[i:i + 1], Y2[i:i + 1], 0.8, 0.2) for i in range(2)]
        assert loss(p, X, Y1, Y2, 0.8, 0.2) == pytest.approx(np.mean(single))

    def test_negative_weight(self, rng):
        p = init_params(small_arch(), rng)
        with pytest.raises(ValueError):
            loss(p, np.zeros((1, 9)), np.zeros((1, 8)), np.zeros((1, 6)), -0.1, 1.1)


class TestGradient:
    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, activation, seed):
        r = np.random.default_rng(seed)
        p = init_params(small_arch(activation), r)
        X = r.standard_normal((7, 9))
        Y1, Y2 = r.standard_normal((7, 8)), r.standard_normal((7, 6))
        _, _, _, g = loss_and_grad(p, X, Y1, Y2, 0.8, 0.2)
        fd = _fd_grad(p, X, Y1, Y2, 0.8, 0.2)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4

    def test_zero_at_minimum(self, rng):
        p = init_params(small_arch(), rng)
        X = rng.standard_normal((4, 9))
        o1, o2 = forward(p, X)
        _, _, _, g = loss_and_grad(p, X, o1, o2, 0.8, 0.2)
        assert np.linalg.norm(g) == 0.0

    def test_linear_in_residual(self, rng):
        p = init_params(small_arch(hidden=()), rng)
        X = rng.standard_normal((4, 9))
        o1, o2 = forward(p, X)
        R1, R2 = rng.standard_normal(o1.shape), rng.standard_normal(o2.shape)
        g1 = loss_and_grad(p, X, o1 - R1, o2 - R2, 0.6, 0.4)[3]
        g2 = loss_and_grad(p, X, o1 - 2 * R1, o2 - 2 * R2, 0.6, 0.4)[3]
        np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12, atol=1e-14)

    def test_loss_decomposition(self, rng):
        p = init_params(small_arch(), rng)
        X = rng.standard_normal((4, 9))
        total, l1, l2, _ = loss_and_grad(p, X, rng.standard_normal((4, 8)),
                                         rng.standard_normal((4, 6)), 0.7, 0.3)
        assert total == pytest.approx(0.7 * l1 + 0.3 * l2, rel=1e-12)

    @given(seed=st.integers(0, 2 ** 32), w2=st.floats(0, 1))
    @settings(max_examples=15, deadline=None)
    def test_finite_differences_property(self, seed, w2):
        r = np.random.default_rng(seed)
        p = init_params(small_arch("tanh", hidden=(5,)), r)
        X = r.standard_normal((3, 9))
        Y1, Y2 = r.standard_normal((3, 8)), r.standard_normal((3, 6))
        g = loss_and_grad(p, X, Y1, Y2, 1 - w2, w2)[3]
        fd = _fd_grad(p, X, Y1, Y2, 1 - w2, w2)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)
