import numpy as np
import pytest

from acsim.mlp import (MLP, AdamState, _forward_cached, adam_step, backward_mse_single, clone,
                       copy_parameters, forward)


def make_net(sizes, seed=0):
    return MLP.create(sizes, np.random.default_rng(seed))


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        net = make_net([4, 8, 8, 2])
        for w in net.weights:
            w[:] = 0.0
        assert np.array_equal(forward(net, np.ones(4)), np.zeros(2))

    def test_single_linear_layer_identity(self):
        net = MLP(sizes=[2, 2], weights=[np.eye(2)], biases=[np.zeros(2)])
        assert np.allclose(forward(net, [3.0, -1.0]), [3.0, -1.0])

    def test_hand_computed_2_2_2(self):
        net = MLP(
            sizes=[2, 2, 2],
            weights=[np.array([[1.0, 2.0], [-1.0, 0.5]]), np.array([[1.0, -1.0], [2.0, 1.0]])],
            biases=[np.array([0.5, -1.0]), np.array([0.0, 0.25])],
        )
        # x=(2,1): z1=(4.5,-2.5) -> relu (4.5,0) -> out=(4.5, 9.25)
        assert np.allclose(forward(net, [2.0, 1.0]), [4.5, 9.25], atol=1e-12)

    def test_shape_mismatch(self):
        net = make_net([3, 4, 2])
        with pytest.raises(ValueError):
            forward(net, np.ones(4))

    def test_bounded_inputs_no_nan(self):
        net = make_net([4, 16, 16, 2], seed=3)
        rng = np.random.default_rng(4)
        for x in rng.uniform(-10, 10, size=(100_000, 4)):
            out = forward(net, x)
            assert np.all(np.isfinite(out))


class TestBackward:
    def test_zero_residual_zero_gradients(self):
        net = make_net([3, 5, 2], seed=1)
        x = np.array([0.3, -0.2, 1.1])
        target = float(forward(net, x)[1])
        gw, gb, loss = backward_mse_single(net, x, 1, target)
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in gw)
        assert all(np.all(g == 0.0) for g in gb)

    def test_nonselected_output_bias_gradient_is_zero(self):
        net = make_net([3, 5, 2], seed=2)
        gw, gb, _ = backward_mse_single(net, np.array([1.0, 2.0, -1.0]), 0, 3.0)
        assert gb[-1][1] == 0.0
        assert gb[-1][0] != 0.0

    @pytest.mark.parametrize("case", range(100))
    def test_gradients_match_finite_differences(self, case):
        rng = np.random.default_rng(100 + case)
        sizes = [int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 6)), 2]
        net = MLP.create(sizes, rng)
        for b in net.biases[:-1]:
            b += rng.uniform(0.05, 0.2, size=b.shape)
        while True:
            # keep the point differentiable: stay away from the ReLU kinks
            x = rng.uniform(-2.0, 2.0, size=sizes[0])
            pre, _ = _forward_cached(net, x)
            if all(np.abs(z).min() > 1e-3 for z in pre[:-1]):
                break
        action = int(rng.integers(0, 2))
        target = float(rng.uniform(-3.0, 3.0))
        gw, gb, _ = backward_mse_single(net, x, action, target)

        h = 1e-5

        def loss_at():
            q = forward(net, x)
            return (target - q[action]) ** 2

        worst = 0.0
        for layer, grads in ((0, gw), (1, gb)):
            for li in range(len(net.weights)):
                params = net.weights[li] if layer == 0 else net.biases[li]
                it = np.nditer(params, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = params[idx]
                    params[idx] = orig + h
                    up = loss_at()
                    params[idx] = orig - h
                    down = loss_at()
                    params[idx] = orig
                    fd = (up - down) / (2.0 * h)
                    analytic = grads[li][idx]
                    denom = max(abs(fd), abs(analytic), 1e-6)
                    worst = max(worst, abs(fd - analytic) / denom)
        assert worst < 1e-4

    def test_invalid_action_index(self):
        net = make_net([3, 4, 2])
        with pytest.raises(ValueError):
            backward_mse_single(net, np.ones(3), 2, 0.0)


class TestAdam:
    def test_zero_gradient_is_identity(self):
        net = make_net([3, 4, 2], seed=5)
        before = [w.copy() for w in net.weights]
        adam = AdamState.for_net(net)
        gw = [np.zeros_like(w) for w in net.weights]
        gb = [np.zeros_like(b) for b in net.biases]
        adam_step(net, adam, gw, gb)
        for w, old in zip(net.weights, before):
            assert np.array_equal(w, old)

    def test_first_step_is_signed_learning_rate(self):
        net = make_net([2, 3, 2], seed=6)
        before = [w.copy() for w in net.weights]
        adam = AdamState.for_net(net, learning_rate=1e-3)
        rng = np.random.default_rng(7)
        gw = [rng.uniform(0.5, 2.0, size=w.shape) * rng.choice([-1, 1], size=w.shape)
              for w in net.weights]
        gb = [rng.uniform(0.5, 2.0, size=b.shape) * rng.choice([-1, 1], size=b.shape)
              for b in net.biases]
        adam_step(net, adam, gw, gb)
        for w, old, g in zip(net.weights, before, gw):
            assert np.allclose(w - old, -1e-3 * np.sign(g), atol=1e-7)

    def test_quadratic_convergence(self):
        # minimize (w*1 - 2)^2 for the 1x1 linear net
        net = MLP(sizes=[1, 1], weights=[np.array([[0.0]])], biases=[np.array([0.0])])
        adam = AdamState.for_net(net, learning_rate=1e-3)
        for _ in range(10_000):
            gw, gb, _ = backward_mse_single(net, np.array([1.0]), 0, 2.0)
            adam_step(net, adam, gw, gb)
        assert abs(float(forward(net, np.array([1.0]))[0]) - 2.0) < 1e-3

    def test_shape_mismatch(self):
        net = make_net([3, 4, 2])
        adam = AdamState.for_net(net)
        bad = [np.zeros((1, 1)) for _ in net.weights]
        with pytest.raises(ValueError):
            adam_step(net, adam, bad, [np.zeros_like(b) for b in net.biases])


class TestCopy:
    def test_copy_then_forward_identical(self):
        src = make_net([3, 6, 2], seed=8)
        dst = make_net([3, 6, 2], seed=9)
        copy_parameters(src, dst)
        x = np.array([0.1, -0.5, 2.0])
        assert np.array_equal(forward(src, x), forward(dst, x))

    def test_copy_is_deep(self):
        src = make_net([3, 6, 2], seed=10)
        dst = make_net([3, 6, 2], seed=11)
        copy_parameters(src, dst)
        src.weights[0][0, 0] += 1.0
        assert dst.weights[0][0, 0] != src.weights[0][0, 0]

    def test_architecture_mismatch(self):
        with pytest.raises(ValueError):
            copy_parameters(make_net([3, 6, 2]), make_net([3, 5, 2]))

    def test_clone_detached(self):
        src = make_net([2, 4, 2], seed=12)
        dup = clone(src)
        src.weights[0][0, 0] += 1.0
        assert dup.weights[0][0, 0] != src.weights[0][0, 0]


class TestDeterminism:
    def test_same_seed_same_training_trajectory(self):
        def train():
            rng = np.random.default_rng(13)
            net = MLP.create([3, 8, 2], rng)
            adam = AdamState.for_net(net, learning_rate=1e-3)
            for i in range(50):
                x = rng.uniform(-1, 1, size=3)
                gw, gb, _ = backward_mse_single(net, x, i % 2, float(rng.uniform(-1, 1)))
                adam_step(net, adam, gw, gb)
            return net

        a, b = train(), train()
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
