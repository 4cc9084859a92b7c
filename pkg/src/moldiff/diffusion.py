"""Noise schedules, forward noising, reverse sampling and rounding to tokens.

Arrays are token-major: a sequence of ``n`` embeddings of width ``d`` has
shape ``(n, d)`` and a batch ``(B, n, d)``. Time indices are 1-based:
``beta[t - 1]`` is the noise added at step ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Literal

import numpy as np

from moldiff import _kernels
from moldiff.tokenizer import repair

ScheduleKind = Literal["linear", "sqrt", "cosine"]
Beta0 = Literal["min", "repeat", "zero"]

_DEFAULT_BOUNDS = {"linear": (1e-4, 0.02), "sqrt": (1e-5, 0.999), "cosine": (1e-5, 0.999)}


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step arrays of a (possibly respaced) diffusion chain.

    Attributes:
        beta: effective noise increment of each kept step.
        alpha_bar: cumulative signal fraction after each step.
        alpha_bar_prev: the same quantity one step earlier; its first entry
            is the chain's ``alpha_bar_0``.
        timesteps: original step index of each entry (``1..T`` when not respaced).
    """

    beta: np.ndarray
    alpha_bar: np.ndarray
    alpha_bar_prev: np.ndarray
    timesteps: np.ndarray
    kind: str = "linear"

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def gamma(self) -> np.ndarray:
        """Coefficient of the predicted ``x0`` in the posterior mean."""
        return np.sqrt(self.alpha_bar_prev) * self.beta / (1.0 - self.alpha_bar)

    @property
    def coef_xt(self) -> np.ndarray:
        """Coefficient of ``x_t`` in the posterior mean."""
        return np.sqrt(self.alpha) * (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bar)

    @property
    def sigma2(self) -> np.ndarray:
        """Posterior variance ``Sigma_t``."""
        return (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bar) * self.beta

    def check(self) -> None:
        """Raise ``ValueError`` unless the schedule invariants hold."""
        if not ((self.beta > 0) & (self.beta < 1)).all():
            raise ValueError("beta must lie in (0, 1)")
        if not (np.diff(np.concatenate([self.alpha_bar_prev[:1], self.alpha_bar])) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        if not (self.gamma < 1).all():
            raise ValueError("gamma_t must stay below 1")


def _alpha_bar_fn(kind: str, T: int) -> Callable[[np.ndarray], np.ndarray]:
    if kind == "cosine":
        s = 0.008
        return lambda t: np.cos((t / T + s) / (1 + s) * math.pi / 2) ** 2
    if kind == "sqrt":
        return lambda t: 1.0 - np.sqrt(t / T + 1e-4)
    raise ValueError(f"unknown schedule kind {kind!r}")


def _from_betas(beta: np.ndarray, beta0: float, kind: str) -> NoiseSchedule:
    alpha_bar = (1.0 - beta0) * np.cumprod(1.0 - beta)
    prev = np.concatenate([[1.0 - beta0], alpha_bar[:-1]])
    return NoiseSchedule(beta, alpha_bar, prev, np.arange(1, beta.shape[0] + 1), kind)


def make_schedule(
    kind: ScheduleKind = "linear",
    T: int = 2000,
    beta_min: float | None = None,
    beta_max: float | None = None,
    beta0: Beta0 = "min",
) -> NoiseSchedule:
    """Build a schedule of ``T`` steps.

    ``alpha_bar_t`` is the product of ``1 - beta_s`` for ``s = 0..t``. The
    ``beta0`` convention sets the extra factor: ``"min"`` (default) uses
    ``beta_min``, ``"repeat"`` uses ``beta_1`` and ``"zero"`` gives
    ``alpha_bar_0 = 1``. Any positive ``beta_0`` keeps every ``gamma_t``
    strictly below one; zero makes ``gamma_1 = 1`` and ``Sigma_1 = 0``. A
    small ``beta_0`` keeps the chain's end point close to ``x0`` (the sqrt
    and cosine curves have a large ``beta_1``).

    Linear schedules interpolate ``beta`` between the bounds; ``sqrt`` and
    ``cosine`` derive ``beta`` from their ``alpha_bar`` curves and clip it to
    the bounds.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if kind not in _DEFAULT_BOUNDS:
        raise ValueError(f"unknown schedule kind {kind!r}")
    lo_default, hi_default = _DEFAULT_BOUNDS[kind]
    lo = lo_default if beta_min is None else float(beta_min)
    hi = hi_default if beta_max is None else float(beta_max)
    if not (0 < lo <= hi < 1):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {lo}, {hi}")
    if beta0 not in ("min", "repeat", "zero"):
        raise ValueError(f"unknown beta0 convention {beta0!r}")
    if kind == "linear":
        beta = np.linspace(lo, hi, T) if T > 1 else np.array([lo])
    else:
        f = _alpha_bar_fn(kind, T)
        t = np.arange(T + 1, dtype=np.float64)
        ab = f(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = 1.0 - ab[1:] / ab[:-1]
        beta = np.clip(np.nan_to_num(beta, nan=hi, posinf=hi, neginf=hi), lo, hi)
    beta = beta.astype(np.float64)
    b0 = {"min": lo, "repeat": beta[0], "zero": 0.0}[beta0]
    return _from_betas(beta, b0, kind)


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "linear"
    T: int = 2000
    beta_min: float | None = None
    beta_max: float | None = None
    beta0: str = "min"

    def build(self) -> NoiseSchedule:
        return make_schedule(self.kind, self.T, self.beta_min, self.beta_max, self.beta0)  # type: ignore[arg-type]


def truncate(sched: NoiseSchedule, t_start: int) -> NoiseSchedule:
    """The first ``t_start`` steps of a chain."""
    if not 1 <= t_start <= sched.T:
        raise ValueError(f"t_start {t_start} outside [1, {sched.T}]")
    return replace(
        sched,
        beta=sched.beta[:t_start].copy(),
        alpha_bar=sched.alpha_bar[:t_start].copy(),
        alpha_bar_prev=sched.alpha_bar_prev[:t_start].copy(),
        timesteps=sched.timesteps[:t_start].copy(),
    )


def respace_indices(T: int, K: int) -> np.ndarray:
    """``K`` uniformly spaced 1-based indices ending at ``T``."""
    if not 1 <= K <= T:
        raise ValueError(f"kept steps K={K} outside [1, {T}]")
    return np.round(np.linspace(T / K, T, K)).astype(np.int64)


def respace(sched: NoiseSchedule, K: int) -> NoiseSchedule:
    """Keep ``K`` uniformly spaced steps with recomputed effective betas.

    ``alpha_bar`` at each kept step equals the original exactly, so the
    sub-chain has the same forward marginals there.
    """
    idx = respace_indices(sched.T, K)
    if K == sched.T:
        return replace(sched, beta=sched.beta.copy(), alpha_bar=sched.alpha_bar.copy(),
                       alpha_bar_prev=sched.alpha_bar_prev.copy(), timesteps=sched.timesteps.copy())
    ab = sched.alpha_bar[idx - 1]
    prev = np.concatenate([sched.alpha_bar_prev[:1], ab[:-1]])
    return replace(sched, beta=1.0 - ab / prev, alpha_bar=ab.copy(), alpha_bar_prev=prev,
                   timesteps=sched.timesteps[idx - 1].copy())


def _check_t(t, T: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64)
    if t.size and (t.min() < 1 or t.max() > T):
        raise ValueError(f"time step outside [1, {T}]")
    return t


def embed_and_jitter(ids: np.ndarray, emb: np.ndarray, sigma0: float, rng: np.random.Generator) -> np.ndarray:
    """``Emb(ids) + sigma0 * eps`` with ``eps`` standard normal."""
    if sigma0 < 0:
        raise ValueError("sigma0 must be non-negative")
    x0 = np.asarray(emb)[np.asarray(ids)]
    if sigma0 == 0:
        return x0.copy()
    return x0 + (sigma0 * rng.standard_normal(x0.shape)).astype(x0.dtype)


def _per_example(values: np.ndarray, t: np.ndarray, ndim: int) -> np.ndarray:
    v = values[t - 1]
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form marginal ``sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``.

    ``t`` is a scalar or one step per leading (batch) index of ``x0``.
    """
    t = _check_t(t, sched.T)
    ab = _per_example(sched.alpha_bar, t, x0.ndim) if t.ndim else sched.alpha_bar[int(t) - 1]
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype, copy=False)


def forward_step(x_prev: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One forward transition ``sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps``."""
    t = int(_check_t(t, sched.T))
    b = sched.beta[t - 1]
    return np.sqrt(1.0 - b) * x_prev + np.sqrt(b) * eps


def denoise_step(x_t: np.ndarray, t: int, x0_hat: np.ndarray, sched: NoiseSchedule,
                 eps: np.ndarray | None) -> np.ndarray:
    """Sample ``x_{t-1}`` from the Gaussian posterior given the predicted ``x0``.

    The noise term is dropped at ``t = 1`` and when ``eps`` is None.
    """
    t = int(_check_t(t, sched.T))
    i = t - 1
    mean = sched.gamma[i] * x0_hat + sched.coef_xt[i] * x_t
    if t == 1 or eps is None:
        return mean.astype(x_t.dtype, copy=False)
    return (mean + math.sqrt(sched.sigma2[i]) * eps).astype(x_t.dtype, copy=False)


@dataclass(frozen=True)
class Rounded:
    raw: np.ndarray
    ids: np.ndarray
    repaired: np.ndarray


def round_to_tokens(x0: np.ndarray, emb: np.ndarray) -> Rounded:
    """Nearest embedding row per position (squared L2, lowest id on ties), then repair.

    Accepts ``(n, d)`` or ``(B, n, d)``; ``repaired`` counts changed positions per sequence.
    """
    x0 = np.asarray(x0)
    squeeze = x0.ndim == 2
    batch = x0[None] if squeeze else x0
    B, n, d = batch.shape
    raw, _ = _kernels.nearest_rows(batch.reshape(B * n, d), emb)
    raw = raw.reshape(B, n)
    fixed = np.empty_like(raw)
    counts = np.zeros(B, dtype=np.int64)
    for b in range(B):
        fixed[b], counts[b] = repair(raw[b])
    if squeeze:
        return Rounded(raw[0], fixed[0], counts[:1])
    return Rounded(raw, fixed, counts)


def min_pairwise_distance(emb: np.ndarray) -> float:
    """Smallest L2 distance between two distinct rows of the embedding table."""
    emb = np.asarray(emb, dtype=np.float64)
    sq = (emb * emb).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2 * emb @ emb.T
    np.fill_diagonal(d2, np.inf)
    # exact recomputation for the closest pair guards against cancellation
    i, j = np.unravel_index(np.argmin(d2), d2.shape)
    return float(np.linalg.norm(emb[i] - emb[j]))


Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SampleResult:
    rounded: Rounded
    x0: np.ndarray
    chain: NoiseSchedule


def sampling_chain(sched: NoiseSchedule, t_start: int | None = None, steps: int | None = None) -> NoiseSchedule:
    """Steps visited by the sampler: the first ``t_start`` steps, respaced to ``steps``."""
    t_start = sched.T if t_start is None else t_start
    chain = truncate(sched, t_start)
    if steps is not None and steps < chain.T:
        chain = respace(chain, steps)
    return chain


def sample(
    predict: Predictor,
    emb: np.ndarray,
    sched: NoiseSchedule,
    *,
    source_ids: np.ndarray | None = None,
    shape: tuple[int, int] | None = None,
    t_start: int | None = None,
    steps: int | None = None,
    seed: int | np.random.Generator = 0,
    clamp: bool = False,
) -> SampleResult:
    """Run the reverse chain and round the result.

    Args:
        predict: ``predict(x_t, t)`` returns the predicted ``x0`` for a batch
            ``(B, n, d)`` at original step indices ``t`` of shape ``(B,)``.
        emb: Token embedding table ``(V, d)``.
        sched: Training schedule.
        source_ids: ``(B, n)`` token ids for source initialization; None
            starts from pure noise at ``T``.
        shape: ``(B, n)`` for noise initialization.
        t_start: Start step for source initialization (default ``T``).
        steps: Number of respaced reverse steps (default: every step).
        seed: Seed or generator; the whole run is a function of it.
        clamp: Snap every ``x0`` prediction to its nearest token embedding
            before the posterior step.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    emb = np.asarray(emb)
    d = emb.shape[1]
    if source_ids is None:
        if shape is None:
            raise ValueError("noise initialization needs a (B, n) shape")
        chain = sampling_chain(sched, sched.T, steps)
        x = rng.standard_normal((*shape, d)).astype(emb.dtype)
    else:
        source_ids = np.atleast_2d(source_ids)
        chain = sampling_chain(sched, t_start, steps)
        eps = rng.standard_normal((*source_ids.shape, d)).astype(emb.dtype)
        x = q_sample(emb[source_ids], int(chain.timesteps[-1]), eps, sched)
    B = x.shape[0]
    x0_hat = x
    for i in range(chain.T, 0, -1):
        t_orig = np.full(B, chain.timesteps[i - 1], dtype=np.int64)
        x0_hat = np.asarray(predict(x, t_orig), dtype=x.dtype)
        if clamp:
            idx, _ = _kernels.nearest_rows(x0_hat.reshape(-1, d), emb)
            x0_hat = emb[idx].reshape(x0_hat.shape)
        eps = rng.standard_normal(x.shape).astype(x.dtype) if i > 1 else None
        x = denoise_step(x, i, x0_hat, chain, eps)
    return SampleResult(round_to_tokens(x, emb), x, chain)
