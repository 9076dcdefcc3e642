from __future__ import annotations

import numpy as np
import pytest

from signweave.neuralkit import (
    AdamW,
    ParameterSet,
    Tensor,
    clamp,
    concat,
    dense,
    gelu,
    layer_norm,
    load_checkpoint,
    restore_into,
    rope_apply,
    save_checkpoint,
    scaled_dot_attention,
    sinusoidal_embedding,
    softmax,
    stack,
    tensor,
    where,
)
from signweave.neuralkit.gradcheck import check_gradients


def leaf(rng, shape, name=None):
    t = Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)
    t.name = name
    return t


class TestKernelGradients:
    """Every kernel against central finite differences (fp64, h=1e-5)."""

    def test_dense(self):
        rng = np.random.default_rng(0)
        x = leaf(rng, (4, 3), "x")
        w = leaf(rng, (3, 5), "w")
        b = leaf(rng, (5,), "b")
        check_gradients(lambda: (dense(x, w, b) ** 2).sum(), [x, w, b])

    def test_gelu(self):
        rng = np.random.default_rng(1)
        x = leaf(rng, (6,), "x")
        check_gradients(lambda: gelu(x).sum(), [x])

    def test_layer_norm(self):
        rng = np.random.default_rng(2)
        x = leaf(rng, (3, 8), "x")
        gamma = leaf(rng, (8,), "gamma")
        beta = leaf(rng, (8,), "beta")
        check_gradients(lambda: (layer_norm(x, gamma, beta) ** 3).sum(), [x, gamma, beta])

    def test_softmax(self):
        rng = np.random.default_rng(3)
        x = leaf(rng, (4, 5), "x")
        target = rng.normal(size=(4, 5))
        check_gradients(lambda: ((softmax(x) - target) ** 2).sum(), [x])

    def test_attention(self):
        rng = np.random.default_rng(4)
        q = leaf(rng, (2, 5, 4), "q")
        k = leaf(rng, (2, 6, 4), "k")
        v = leaf(rng, (2, 6, 4), "v")
        check_gradients(lambda: (scaled_dot_attention(q, k, v) ** 2).sum(), [q, k, v])

    def test_attention_causal(self):
        rng = np.random.default_rng(5)
        q = leaf(rng, (5, 4), "q")
        k = leaf(rng, (5, 4), "k")
        v = leaf(rng, (5, 4), "v")
        check_gradients(lambda: (scaled_dot_attention(q, k, v, causal=True) ** 2).sum(), [q, k, v])

    def test_rope(self):
        rng = np.random.default_rng(6)
        x = leaf(rng, (5, 8), "x")
        pos = np.arange(5)
        check_gradients(lambda: (rope_apply(x, pos) ** 2).sum(), [x])

    def test_elementwise(self):
        rng = np.random.default_rng(7)
        x = leaf(rng, (7,), "x")
        check_gradients(lambda: (x.exp() + (x**2 + 1.2).log() + x.tanh() + x.sigmoid() + x.softplus()).sum(), [x])

    def test_matmul_div_getitem(self):
        rng = np.random.default_rng(8)
        a = leaf(rng, (3, 4), "a")
        b = leaf(rng, (4, 2), "b")

        def f():
            prod = a @ b
            return (prod[1:, :] / (prod.abs() + 2.0).sum()).sum()

        check_gradients(f, [a, b])

    def test_concat_stack_where(self):
        rng = np.random.default_rng(9)
        a = leaf(rng, (3, 2), "a")
        b = leaf(rng, (2, 2), "b")
        cond = rng.random((5, 2)) > 0.5

        def f():
            joined = concat([a, b], axis=0)
            chosen = where(cond, joined, joined * 0.5)
            piled = stack([chosen, chosen * 2.0], axis=0)
            return (piled**2).sum()

        check_gradients(f, [a, b])


class TestSoftmaxRows:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(10)
        x = tensor(rng.normal(size=(11, 7)) * 4)
        s = softmax(x).data
        assert np.allclose(s.sum(axis=1), 1.0, atol=1e-6)


class TestRope:
    def test_inner_product_depends_only_on_offset(self):
        rng = np.random.default_rng(11)
        q = rng.normal(size=(1, 8))
        k = rng.normal(size=(1, 8))
        d = 7  # relative offset

        def rotated_dot(p):
            rq = rope_apply(tensor(q), np.array([p])).data[0]
            rk = rope_apply(tensor(k), np.array([p + d])).data[0]
            return float(rq @ rk)

        assert rotated_dot(0) == pytest.approx(rotated_dot(7), abs=1e-10)
        assert rotated_dot(3) == pytest.approx(rotated_dot(10), abs=1e-10)


class TestAdamW:
    def test_zero_grad_no_decay_keeps_params(self):
        params = ParameterSet(dtype=np.float64)
        p = params.add("p", np.array([1.0, 2.0]))
        opt = AdamW(params, lr=0.1, weight_decay=0.0)
        p.grad = np.zeros_like(p.data)
        opt.step()
        assert np.allclose(p.data, [1.0, 2.0])

    def test_zero_grad_with_decay_shrinks(self):
        params = ParameterSet(dtype=np.float64)
        p = params.add("p", np.array([1.0, -2.0]))
        opt = AdamW(params, lr=0.1, weight_decay=0.5)
        p.grad = np.zeros_like(p.data)
        opt.step()
        assert np.allclose(p.data, np.array([1.0, -2.0]) * (1.0 - 0.1 * 0.5))

    def test_single_step_hand_computed(self):
        # one AdamW step on f(p) = p^2 from p=1 with lr=0.01, wd=0.1
        params = ParameterSet(dtype=np.float64)
        p = params.add("p", np.array([1.0]))
        opt = AdamW(params, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.1)
        p.grad = np.array([2.0])
        opt.step()
        m_hat = (0.1 * 2.0) / (1 - 0.9)
        v_hat = (0.001 * 4.0) / (1 - 0.999)
        expected = 1.0 - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8) - 0.01 * 0.1 * 1.0
        assert p.data[0] == pytest.approx(expected, abs=1e-15)


class TestEma:
    def test_identical_shadow_unchanged(self):
        params = ParameterSet(dtype=np.float64, ema_decay=0.9)
        p = params.add("p", np.array([3.0]))
        params.ema_update()
        assert params.ema_value("p")[0] == pytest.approx(3.0)

    def test_decay_zero_copies_params(self):
        params = ParameterSet(dtype=np.float64, ema_decay=0.0)
        p = params.add("p", np.array([1.0]))
        p.data = np.array([5.0])
        params.ema_update()
        assert params.ema_value("p")[0] == pytest.approx(5.0)

    def test_two_steps_closed_form(self):
        d = 0.8
        params = ParameterSet(dtype=np.float64, ema_decay=d)
        p = params.add("p", np.array([0.0]))  # shadow starts at 0
        p.data = np.array([1.0])
        params.ema_update()
        p.data = np.array([2.0])
        params.ema_update()
        expected = d * (d * 0.0 + (1 - d) * 1.0) + (1 - d) * 2.0
        assert params.ema_value("p")[0] == pytest.approx(expected, abs=1e-15)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        params = ParameterSet(dtype=np.float32)
        params.add("layer.weight", rng.normal(size=(3, 4)))
        params.add("layer.bias", rng.normal(size=4))
        params.ema_update(decay=0.5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params)

        fresh = ParameterSet(dtype=np.float32)
        fresh.add("layer.weight", np.zeros((3, 4)))
        fresh.add("layer.bias", np.zeros(4))
        restore_into(fresh, load_checkpoint(path))
        assert np.array_equal(fresh["layer.weight"].data, params["layer.weight"].data)
        assert np.array_equal(fresh.ema_value("layer.bias"), params.ema_value("layer.bias"))

    def test_missing_param_rejected(self, tmp_path):
        params = ParameterSet()
        params.add("a", np.zeros(2))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params)
        other = ParameterSet()
        other.add("b", np.zeros(2))
        with pytest.raises(KeyError):
            restore_into(other, load_checkpoint(path))


class TestClampAndHelpers:
    def test_clamp_gradient_inside_only(self):
        x = Tensor(np.array([-5.0, 0.5, 5.0]), requires_grad=True)
        loss = clamp(x, -3.0, 3.0).sum()
        loss.backward()
        assert np.allclose(x.grad, [0.0, 1.0, 0.0])

    def test_sinusoidal_embedding_shape(self):
        emb = sinusoidal_embedding(np.array([0.0, 1.0, 2.0]), 16)
        assert emb.shape == (3, 16)
        assert np.allclose(emb[0], np.concatenate([np.ones(8), np.zeros(8)]))


class TestFullModelGradient:
    def test_two_layer_toy_model(self):
        rng = np.random.default_rng(13)
        params = ParameterSet(dtype=np.float64)
        w1 = params.add("w1", rng.normal(size=(6, 8)) * 0.4)
        b1 = params.add("b1", np.zeros(8))
        g1 = params.add("g1", np.ones(8))
        be1 = params.add("be1", np.zeros(8))
        w2 = params.add("w2", rng.normal(size=(8, 6)) * 0.4)
        b2 = params.add("b2", np.zeros(6))
        x = rng.normal(size=(5, 6))
        target = rng.normal(size=(5, 6))

        def f():
            h = gelu(dense(tensor(x), w1, b1))
            h = layer_norm(h, g1, be1)
            out = dense(h, w2, b2)
            return ((out - tensor(target)) ** 2).mean()

        check_gradients(f, params.tensors(), tol=1e-5)


class TestDeterminism:
    def test_identical_seeds_identical_updates(self):
        def run():
            rng = np.random.default_rng(99)
            params = ParameterSet(dtype=np.float32)
            w = params.add("w", rng.normal(size=(4, 4)))
            opt = AdamW(params, lr=1e-2, weight_decay=1e-4)
            for _ in range(5):
                x = tensor(rng.normal(size=(3, 4)).astype(np.float32))
                loss = ((x @ w) ** 2).mean()
                params.zero_grad()
                loss.backward()
                opt.step()
                params.ema_update()
            return w.data.copy(), params.ema_value("w").copy()

        w_a, e_a = run()
        w_b, e_b = run()
        assert np.array_equal(w_a, w_b)
        assert np.array_equal(e_a, e_b)
