"""Recurrent cells, losses, Adam, and finite-difference gradient checks."""

import math

import numpy as np
import pytest

from vrmotion import nn
from vrmotion.core import stream_rng


class TestLstmCell:
    def test_zero_params_zero_state(self):
        cell = nn.LSTMCell(3, 4)
        h, c = cell.step(np.zeros(3), np.zeros(4), np.zeros(4))
        assert np.allclose(h, 0.0)
        assert np.allclose(c, 0.0)

    def test_gate_saturation_preserves_state(self):
        # forget gate pinned open, input gate pinned closed: c' ~= c
        cell = nn.LSTMCell(2, 3)
        H = 3
        cell.b[:H] = 50.0  # forget
        cell.b[H:2 * H] = -50.0  # input
        c0 = np.array([0.3, -0.7, 1.1])
        _, c1 = cell.step(np.array([5.0, -5.0]), np.zeros(3), c0)
        assert np.allclose(c1, c0, atol=1e-9)

    def test_gradient_check(self):
        rng = stream_rng(0, "test-lstm")
        net = nn.RecurrentNetwork.build("lstm", 3, 8, 1, 2, rng)
        x = rng.standard_normal((4, 6, 3))
        y = rng.standard_normal((4, 6, 2))
        report = nn.grad_check(net, x, y, tol=1e-4)
        assert report.passed, f"max rel error {report.max_rel_error}"


class TestGruCell:
    def test_zero_params_zero_state(self):
        cell = nn.GRUCell(3, 4)
        h = cell.step(np.zeros(3), np.zeros(4))
        assert np.allclose(h, 0.0)

    def test_update_gate_saturated_closed(self):
        # retain gate pinned closed: h' ~= candidate activation
        cell = nn.GRUCell(2, 3)
        rng = stream_rng(1, "test-gru")
        cell.Wg[:] = rng.standard_normal(cell.Wg.shape) * 0.1
        cell.Wc[:] = rng.standard_normal(cell.Wc.shape) * 0.1
        cell.bg[:3] = -50.0
        x = np.array([1.0, -2.0])
        h0 = np.array([0.5, 0.5, 0.5])
        h1 = cell.step(x, h0)
        # recompute the candidate by hand
        a = np.concatenate([x, h0]) @ cell.Wg + cell.bg
        r = 1.0 / (1.0 + np.exp(-a[3:]))
        g = np.tanh(np.concatenate([x, r * h0]) @ cell.Wc + cell.bc)
        assert np.allclose(h1, g, atol=1e-9)

    def test_gradient_check(self):
        rng = stream_rng(0, "test-gru-grad")
        net = nn.RecurrentNetwork.build("gru", 3, 8, 1, 2, rng)
        x = rng.standard_normal((4, 6, 3))
        y = rng.standard_normal((4, 6, 2))
        report = nn.grad_check(net, x, y, tol=1e-4)
        assert report.passed, f"max rel error {report.max_rel_error}"


class TestRecurrentNetwork:
    def test_t1_reduces_to_single_step(self):
        rng = stream_rng(2, "test-t1")
        net = nn.RecurrentNetwork.build("lstm", 3, 5, 1, 2, rng)
        x = rng.standard_normal((1, 1, 3))
        out = net.forward(x)
        h, _ = net.cells[0].step(x[0, 0], np.zeros(5), np.zeros(5))
        assert np.allclose(out[0, 0], net.head.forward(h))

    def test_zero_head_zero_output(self):
        rng = stream_rng(3, "test-zero-head")
        net = nn.RecurrentNetwork.build("gru", 2, 4, 2, 3, rng)
        net.head.W[:] = 0.0
        net.head.b[:] = 0.0
        x = rng.standard_normal((2, 7, 2))
        assert np.allclose(net.forward(x), 0.0)

    def test_deterministic_forward(self):
        rng = stream_rng(4, "test-det")
        net = nn.RecurrentNetwork.build("lstm", 2, 4, 2, 1, rng)
        x = rng.standard_normal((2, 5, 2))
        assert np.array_equal(net.forward(x), net.forward(x))

    def test_end_to_end_gradient_stack(self):
        rng = stream_rng(5, "test-e2e")
        net = nn.RecurrentNetwork.build("lstm", 3, 4, 2, 2, rng,
                                        head_activation="tanh")
        x = rng.standard_normal((3, 5, 3))
        y = rng.standard_normal((3, 5, 2))
        report = nn.grad_check(net, x, y, tol=1e-4)
        assert report.passed

    def test_sigmoid_head_with_bce(self):
        # discriminator-style network: sequence -> final logit
        rng = stream_rng(6, "test-disc")
        net = nn.RecurrentNetwork.build("gru", 2, 4, 1, 1, rng,
                                        return_sequence=False)
        x = rng.standard_normal((4, 5, 2))
        y = (rng.random((4, 1)) > 0.5) * 1.0
        report = nn.grad_check(net, x, y, loss_fn=nn.bce_loss, tol=1e-4)
        assert report.passed

    def test_serialization_round_trip(self):
        rng = stream_rng(7, "test-ser")
        net = nn.RecurrentNetwork.build("lstm", 2, 3, 2, 2, rng)
        x = rng.standard_normal((2, 4, 2))
        clone = nn.RecurrentNetwork.from_dict(net.to_dict())
        assert np.array_equal(net.forward(x), clone.forward(x))


class TestLosses:
    def test_mse_examples(self):
        assert nn.mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))[0] == 0.0
        assert nn.mse_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0]))[0] == 0.5

    def test_mse_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.mse_loss(np.zeros(2), np.zeros(3))

    def test_bce_logit_zero_label_one(self):
        loss, _ = nn.bce_loss(np.array([0.0]), np.array([1.0]))
        assert loss == pytest.approx(math.log(2.0), abs=1e-9)

    def test_bce_gradient_direction(self):
        _, d = nn.bce_loss(np.array([0.0]), np.array([1.0]))
        assert d[0] < 0.0  # raising the logit lowers the loss


class TestAdam:
    def test_first_step_magnitude(self):
        w = np.array([1.0])
        opt = nn.Adam([w], lr=1e-3)
        opt.step([np.array([0.1])])
        assert w[0] == pytest.approx(1.0 - 1e-3, abs=1e-6)

    def test_zero_gradient_no_move(self):
        w = np.array([1.0, -2.0])
        opt = nn.Adam([w], lr=1e-3)
        opt.step([np.zeros(2)])
        assert np.allclose(w, [1.0, -2.0])

    def test_converges_on_quadratic(self):
        w = np.array([1.0])
        opt = nn.Adam([w], lr=0.1)
        for _ in range(100):
            opt.step([2.0 * w])
        assert abs(w[0]) < 0.05

    def test_functional_wrapper(self):
        w = np.array([1.0])
        params, opt = nn.adam_update([w], [np.array([0.1])], lr=1e-3)
        assert params[0][0] == pytest.approx(1.0 - 1e-3, abs=1e-6)
        nn.adam_update([w], [np.array([0.1])], optimizer=opt)
        assert opt.state.step == 2


class TestGradCheck:
    def test_linear_model_near_machine_precision(self):
        rng = stream_rng(8, "test-linear")
        # a 1-layer GRU with zero recurrent influence is still nonlinear, so
        # check the exact analytic case through the dense head alone
        net = nn.RecurrentNetwork.build("gru", 2, 2, 1, 1, rng)
        for _, p in net.parameters():
            p *= 0.0
        net.head.W[:] = rng.standard_normal(net.head.W.shape)
        x = rng.standard_normal((2, 1, 2))
        y = rng.standard_normal((2, 1, 1))
        report = nn.grad_check(net, x, y, tol=1e-9)
        assert report.max_rel_error < 1e-6

    def test_corrupted_gradient_fails(self):
        rng = stream_rng(9, "test-corrupt")
        net = nn.RecurrentNetwork.build("lstm", 2, 4, 1, 1, rng)

        original = net.backward

        def corrupted(dy):
            original(dy)
            net.head.dW += 1.0

        net.backward = corrupted
        x = rng.standard_normal((2, 3, 2))
        y = rng.standard_normal((2, 3, 1))
        report = nn.grad_check(net, x, y, tol=1e-4)
        assert not report.passed

    def test_rejects_large_networks(self):
        rng = stream_rng(10, "test-large")
        net = nn.RecurrentNetwork.build("lstm", 32, 64, 2, 8, rng)
        x = rng.standard_normal((1, 2, 32))
        y = rng.standard_normal((1, 2, 8))
        with pytest.raises(ValueError):
            nn.grad_check(net, x, y)
