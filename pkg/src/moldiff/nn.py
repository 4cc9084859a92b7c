"""Parameter containers and transformer blocks on top of :mod:`moldiff.autograd`."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from moldiff import autograd as ag
from moldiff.autograd import Tensor


class Module:
    """Registers parameters and submodules in attribute order."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name: str, value) -> None:
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, list) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._modules[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(k, p) for k, p in self.named_parameters() if p.requires_grad]

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            arr = np.asarray(state[k])
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def param(rng: np.random.Generator, shape: tuple[int, ...], scale: float, dtype=np.float32) -> Tensor:
    return Tensor((rng.standard_normal(shape) * scale).astype(dtype), requires_grad=True)


def zeros(shape: tuple[int, ...], dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones(shape: tuple[int, ...], dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


class Linear(Module):
    """``y = x W + b`` with ``W`` of shape ``(d_in, d_out)``."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True,
                 scale: float | None = None) -> None:
        super().__init__()
        self.weight = param(rng, (d_in, d_out), scale if scale is not None else 1.0 / math.sqrt(d_in))
        self.bias = zeros((d_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ag.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.weight = ones((d,))
        self.bias = zeros((d,))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.weight, self.bias, self.eps)


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, d: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = Linear(rng, d, hidden)
        self.fc2 = Linear(rng, hidden, d)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ag.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention with separate query and key/value inputs.

    Queries come from ``x`` ``(B, n, d)``; keys and values from ``ctx``
    ``(B, m, d_ctx)``. ``key_mask`` ``(B, m)`` marks keys that may be
    attended (True) and is required to have at least one True per row.
    """

    def __init__(self, rng: np.random.Generator, d: int, heads: int, d_ctx: int | None = None) -> None:
        super().__init__()
        if d % heads:
            raise ValueError(f"model width {d} not divisible by {heads} heads")
        d_ctx = d if d_ctx is None else d_ctx
        self.heads = heads
        self.q = Linear(rng, d, d, bias=False)
        self.k = Linear(rng, d_ctx, d, bias=False)
        self.v = Linear(rng, d_ctx, d, bias=False)
        self.o = Linear(rng, d, d)

    def _split(self, x: Tensor) -> Tensor:
        B, n, d = x.shape
        return ag.transpose(ag.reshape(x, (B, n, self.heads, d // self.heads)), (0, 2, 1, 3))

    def weights(self, x: Tensor, ctx: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        """Attention probabilities ``(B, heads, n, m)``."""
        q, k = self._split(self.q(x)), self._split(self.k(ctx))
        scale = 1.0 / math.sqrt(q.shape[-1])
        logits = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))) * scale
        mask = None
        if key_mask is not None:
            key_mask = np.asarray(key_mask, dtype=bool)
            if not key_mask.any(axis=-1).all():
                raise ValueError("every context row needs at least one unmasked key")
            mask = key_mask[:, None, None, :]
        return ag.softmax(logits, axis=-1, mask=mask)

    def __call__(self, x: Tensor, ctx: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        B, n, d = x.shape
        att = self.weights(x, ctx, key_mask)
        v = self._split(self.v(ctx))
        out = ag.transpose(ag.matmul(att, v), (0, 2, 1, 3))
        return self.o(ag.reshape(out, (B, n, d)))


def sinusoidal(positions: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sine/cosine features ``(len(positions), dim)``; the first half are sines."""
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half, 1))
    angles = positions[:, None] * freqs[None, :]
    out = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    if dim % 2:
        out = np.concatenate([out, np.zeros((len(positions), 1))], axis=1)
    return out
