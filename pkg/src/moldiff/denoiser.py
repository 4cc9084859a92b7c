"""Transformer that predicts the clean embeddings ``x0`` from ``x_t``, ``t`` and text."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from moldiff import autograd as ag
from moldiff.autograd import Tensor
from moldiff.nn import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, param, sinusoidal
from moldiff.textenc import TextContext


class NumericalError(FloatingPointError):
    """A non-finite value appeared in a forward pass."""

    def __init__(self, message: str, layer: int | None = None) -> None:
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class DenoiserConfig:
    L: int = 4
    d: int = 32
    d2: int = 128
    heads: int = 4
    n: int = 96
    d1: int = 128
    T: int = 2000

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"denoiser {k} must be positive, got {v}")
        if self.d2 % self.heads:
            raise ValueError(f"d2={self.d2} is not divisible by heads={self.heads}")


class DenoiserLayer(Module):
    def __init__(self, rng: np.random.Generator, d2: int, heads: int) -> None:
        super().__init__()
        self.ln_self = LayerNorm(d2)
        self.self_attn = MultiHeadAttention(rng, d2, heads)
        self.ln_cross = LayerNorm(d2)
        self.cross_attn = MultiHeadAttention(rng, d2, heads, d_ctx=d2)
        self.ln_ff = LayerNorm(d2)
        self.ff = FeedForward(rng, d2, 4 * d2)

    def __call__(self, z: Tensor, ctx: Tensor, ctx_mask: np.ndarray) -> Tensor:
        h = self.ln_self(z)
        z = z + self.self_attn(h, h)
        z = z + self.cross_attn(self.ln_cross(z), ctx, ctx_mask)
        return z + self.ff(self.ln_ff(z))


class Denoiser(Module):
    """``f(x_t, t, C)`` with pre-norm self-attention, cross-attention and feed-forward blocks."""

    def __init__(self, cfg: DenoiserConfig, seed: int = 0) -> None:
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        d, d2 = cfg.d, cfg.d2
        self.w_in = Linear(rng, d, d2, bias=False)
        self.pos_emb = param(rng, (cfg.n, d2), 0.02)
        self.time_fc1 = Linear(rng, d2, d2)
        self.time_fc2 = Linear(rng, d2, d2)
        self.ctx_fc1 = Linear(rng, cfg.d1, d2)
        self.ctx_fc2 = Linear(rng, d2, d2)
        self.layers = [DenoiserLayer(rng, d2, cfg.heads) for _ in range(cfg.L)]
        self.ln_out = LayerNorm(d2)
        self.w_out = Linear(rng, d2, d)

    def _check_t(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        if t.min() < 1 or t.max() > self.cfg.T:
            raise ValueError(f"time step outside [1, {self.cfg.T}]: {t.min()}..{t.max()}")
        return t

    def time_embed(self, t: np.ndarray) -> Tensor:
        """``(B, 1, d2)`` time features, broadcast over positions."""
        t = self._check_t(t)
        dtype = self.pos_emb.data.dtype
        feats = Tensor(sinusoidal(t, self.cfg.d2).astype(dtype))
        h = self.time_fc2(ag.silu(self.time_fc1(feats)))
        return ag.reshape(h, (t.shape[0], 1, self.cfg.d2))

    def input_embed(self, x_t: Tensor, t: np.ndarray) -> Tensor:
        """``PosEmb + x_t W_in + TimeEmb(t)``, shape ``(B, n, d2)``."""
        n = x_t.shape[1]
        if n > self.cfg.n:
            raise ValueError(f"sequence length {n} exceeds configured n={self.cfg.n}")
        pos = ag.reshape(self._pos_rows(n), (1, n, self.cfg.d2))
        return self.w_in(x_t) + pos + self.time_embed(t)

    def _pos_rows(self, n: int) -> Tensor:
        if n == self.cfg.n:
            return self.pos_emb
        return ag.embedding(self.pos_emb, np.arange(n))

    def context(self, ctx: TextContext) -> Tensor:
        """Shared projection ``MLP(C)`` from ``d1`` to ``d2``."""
        return self.ctx_fc2(ag.silu(self.ctx_fc1(ctx.matrix)))

    def __call__(self, x_t, t, ctx: TextContext, check_finite: bool = True) -> Tensor:
        return self.forward(x_t, t, ctx, check_finite)

    def forward(self, x_t, t, ctx: TextContext, check_finite: bool = True) -> Tensor:
        x_t = ag.as_tensor(x_t)
        if x_t.ndim != 3 or x_t.shape[2] != self.cfg.d:
            raise ValueError(f"expected x_t of shape (B, n, {self.cfg.d}), got {x_t.shape}")
        z = self.input_embed(x_t, t)
        c = self.context(ctx)
        mask = np.asarray(ctx.mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ValueError("every text context needs at least one unmasked position")
        for i, layer in enumerate(self.layers):
            z = layer(z, c, mask)
            if check_finite and not np.isfinite(z.data).all():
                raise NumericalError(f"non-finite activation after layer {i}", layer=i)
        out = self.w_out(self.ln_out(z))
        if check_finite and not np.isfinite(out.data).all():
            raise NumericalError("non-finite output projection", layer=len(self.layers))
        return out
