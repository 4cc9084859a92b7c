from __future__ import annotations

import numpy as np
import pytest

from moldiff import autograd as ag
from moldiff.autograd import Tensor
from moldiff.gradcheck import check_gradients, projection_loss, rel_error
from moldiff.nn import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, param


def leaf(rng, *shape, positive=False):
    x = rng.standard_normal(shape)
    return Tensor(np.abs(x) + 0.5 if positive else x, requires_grad=True)


UNARY = {
    "exp": ag.exp,
    "tanh": ag.tanh,
    "silu": ag.silu,
    "gelu": ag.gelu,
    "neg": ag.neg,
    "softmax": lambda a: ag.softmax(a, axis=-1),
    "log_softmax": lambda a: ag.log_softmax(a, axis=-1),
    "sum_axis": lambda a: ag.tsum(a, axis=1, keepdims=True),
    "mean": lambda a: ag.mean(a, axis=0),
    "reshape": lambda a: ag.reshape(a, (4, 3)),
    "transpose": lambda a: ag.transpose(a, (1, 0)),
}


class TestOps:
    @pytest.mark.parametrize("name", sorted(UNARY))
    def test_unary(self, name, rng):
        a = leaf(rng, 3, 4)
        rep = check_gradients(name, [("a", a)], lambda: projection_loss(UNARY[name](a)), coords=12)
        assert rep.ok(), rep

    def test_log(self, rng):
        a = leaf(rng, 3, 4, positive=True)
        assert check_gradients("log", [("a", a)], lambda: projection_loss(ag.log(a)), coords=12).ok()

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
    def test_broadcast_binary(self, op, rng):
        a, b = leaf(rng, 2, 3, 4), leaf(rng, 4, positive=True)
        fn = getattr(ag, op)
        rep = check_gradients(op, [("a", a), ("b", b)], lambda: projection_loss(fn(a, b)), coords=20)
        assert rep.ok(), rep

    def test_batched_matmul_with_shared_weight(self, rng):
        a, w = leaf(rng, 2, 3, 4), leaf(rng, 4, 5)
        assert check_gradients("matmul", [("a", a), ("w", w)], lambda: projection_loss(a @ w), coords=30).ok()

    def test_masked_softmax(self, rng):
        a = leaf(rng, 2, 5)
        mask = np.array([[True, True, False, True, False], [False, True, True, True, True]])
        out = ag.softmax(a, mask=mask)
        assert np.allclose(out.data[~mask], 0.0)
        assert np.allclose(out.data.sum(-1), 1.0)
        assert check_gradients("msoftmax", [("a", a)], lambda: projection_loss(ag.softmax(a, mask=mask))).ok()

    def test_embedding_repeated_ids(self, rng):
        table = leaf(rng, 6, 3)
        ids = np.array([[0, 2, 2], [5, 0, 0]])
        assert check_gradients("emb", [("t", table)], lambda: projection_loss(ag.embedding(table, ids)), coords=18).ok()

    def test_take_along_last(self, rng):
        a = leaf(rng, 2, 3, 5)
        ids = rng.integers(0, 5, size=(2, 3))
        assert check_gradients("take", [("a", a)], lambda: projection_loss(ag.take_along_last(a, ids)), coords=30).ok()

    def test_layer_norm(self, rng):
        x, w, b = leaf(rng, 2, 3, 6), leaf(rng, 6), leaf(rng, 6)
        rep = check_gradients("ln", [("x", x), ("w", w), ("b", b)],
                              lambda: projection_loss(ag.layer_norm(x, w, b)), coords=30)
        assert rep.ok(), rep


class TestEngine:
    def test_accumulates_over_reuse(self):
        a = Tensor(np.array([2.0]), requires_grad=True)
        (a * a + a).sum().backward()
        assert a.grad.tolist() == [5.0]

    def test_diamond_graph(self):
        a = Tensor(np.array([3.0]), requires_grad=True)
        b = a * 2.0
        (b * b + b).sum().backward()
        assert a.grad.tolist() == [2 * (2 * 6.0 + 1)]

    def test_no_grad(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with ag.no_grad():
            out = (a * 2).sum()
        assert not out.requires_grad

    def test_scalar_keeps_dtype(self):
        a = Tensor(np.ones(3, dtype=np.float32))
        assert (a * 0.5).data.dtype == np.float32 and (2.0 - a).data.dtype == np.float32

    def test_backward_needs_scalar_or_grad(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (a * 2).backward()

    def test_deep_chain_no_recursion_limit(self):
        a = Tensor(np.ones(1), requires_grad=True)
        x = a
        for _ in range(3000):
            x = x * 1.0
        x.sum().backward()
        assert a.grad.tolist() == [1.0]

    def test_rel_error_floor(self):
        assert rel_error(0.0, 1e-12) < 1e-3
        assert rel_error(1.0, 1.01) == pytest.approx(0.01 / 1.01)


class Toy(Module):
    def __init__(self, rng):
        super().__init__()
        self.w = param(rng, (3, 2), 1.0)
        self.inner = [Linear(rng, 2, 2), Linear(rng, 2, 2)]


class TestModule:
    def test_registration_and_state(self, rng):
        m = Toy(rng)
        names = [k for k, _ in m.named_parameters()]
        assert names == ["w", "inner.0.weight", "inner.0.bias", "inner.1.weight", "inner.1.bias"]
        state = {k: v * 0 + 1 for k, v in m.state_dict().items()}
        m.load_state_dict(state)
        assert all((p.data == 1).all() for p in m.parameters())
        with pytest.raises(KeyError):
            m.load_state_dict({"w": state["w"]})
        with pytest.raises(ValueError):
            m.load_state_dict({**state, "w": np.ones((2, 2))})

    def test_freeze(self, rng):
        m = Toy(rng)
        m.freeze()
        assert m.trainable() == []

    def test_num_parameters(self, rng):
        assert Toy(rng).num_parameters() == 6 + 2 * (4 + 2)


class TestLayers:
    """Every layer type at toy width in float64; at least 100 coordinates each."""

    def test_linear(self, rng):
        lin = Linear(rng, 4, 3).astype(np.float64)
        x = Tensor(rng.standard_normal((2, 5, 4)))
        assert check_gradients("linear", lin.trainable(), lambda: projection_loss(lin(x))).ok()

    def test_layernorm(self, rng):
        ln = LayerNorm(6).astype(np.float64)
        ln.weight.data = rng.standard_normal(6)
        x = Tensor(rng.standard_normal((2, 5, 6)))
        assert check_gradients("layernorm", ln.trainable(), lambda: projection_loss(ln(x))).ok()

    def test_feedforward(self, rng):
        ff = FeedForward(rng, 4, 16).astype(np.float64)
        x = Tensor(rng.standard_normal((2, 3, 4)))
        assert check_gradients("ffn", ff.trainable(), lambda: projection_loss(ff(x)), coords=120).ok()

    def test_cross_attention_with_mask(self, rng):
        att = MultiHeadAttention(rng, 8, 2, d_ctx=6).astype(np.float64)
        x = Tensor(rng.standard_normal((2, 3, 8)))
        ctx = Tensor(rng.standard_normal((2, 4, 6)), requires_grad=True)
        mask = np.array([[True, True, True, False], [True, False, True, True]])
        params = att.trainable() + [("ctx", ctx)]
        rep = check_gradients("attention", params, lambda: projection_loss(att(x, ctx, mask)), coords=150)
        assert rep.ok(), rep

    def test_all_keys_masked(self, rng):
        att = MultiHeadAttention(rng, 4, 2)
        x = Tensor(rng.standard_normal((1, 2, 4)).astype(np.float32))
        with pytest.raises(ValueError):
            att(x, x, np.zeros((1, 2), dtype=bool))


class TestGradcheckBudget:
    def test_small_tensors_hand_over_their_share(self, rng):
        big, small = leaf(rng, 10, 12), leaf(rng, 3)
        rep = check_gradients("budget", [("small", small), ("big", big)],
                              lambda: projection_loss(big * 2.0) + ag.tsum(small * small), coords=100)
        assert rep.coords == 100 and rep.ok()

    def test_capped_by_size(self, rng):
        a = leaf(rng, 2, 3)
        assert check_gradients("tiny", [("a", a)], lambda: projection_loss(a), coords=100).coords == 6
