"""Training objective, Adam optimizer and the training loop."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from moldiff import autograd as ag
from moldiff.autograd import Tensor
from moldiff.denoiser import Denoiser, DenoiserConfig, NumericalError
from moldiff.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from moldiff.diffusion import NoiseSchedule, ScheduleConfig
from moldiff.nn import Module, param
from moldiff.textenc import TextContext, TextEncoder, WordVocab
from moldiff.tokenizer import Vocab


@dataclass(frozen=True)
class ModelConfig:
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    text_layers: int = 2
    text_heads: int = 4
    max_text_len: int = 128
    text_frozen: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["denoiser"] = DenoiserConfig(**obj["denoiser"])
        return cls(**obj)


class DiffusionLM(Module):
    """Token embedding table, text encoder and denoiser trained jointly."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab, words: WordVocab, seed: int = 0) -> None:
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.vocab = vocab
        self.words = words
        self.emb = param(rng, (len(vocab), cfg.denoiser.d), 1.0)
        sub = rng.integers(0, 2**31, size=2)
        self.text = TextEncoder(words, d1=cfg.denoiser.d1, layers=cfg.text_layers, heads=cfg.text_heads,
                                max_len=cfg.max_text_len, frozen=cfg.text_frozen, seed=int(sub[0]))
        self.denoiser = Denoiser(cfg.denoiser, seed=int(sub[1]))

    def predictor(self, ctx: TextContext) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        """``predict(x_t, t)`` closure for the sampler; no graph is recorded."""

        def predict(x_t: np.ndarray, t: np.ndarray) -> np.ndarray:
            with ag.no_grad():
                return self.denoiser(Tensor(x_t), t, ctx).data

        return predict


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    warmup: int = 0
    batch_size: int = 16
    steps: int = 1000
    sigma0: float = 0.05
    seed: int = 0
    w_mse: float = 1.0
    w_nll: float = 1.0
    tau: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 50
    ckpt_every: int = 0

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.warmup < 0 or self.warmup > max(self.steps, 0):
            raise ValueError("warmup must lie in [0, steps]")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.sigma0 < 0 or self.tau <= 0:
            raise ValueError("sigma0 must be >= 0 and tau > 0")


@dataclass
class LossParts:
    total: Tensor
    mse: float
    nll: float


def diffusion_loss(
    model: DiffusionLM,
    ids: np.ndarray,
    text_ids: np.ndarray,
    text_mask: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    sigma0: float = 0.05,
    tau: float = 1.0,
    w_mse: float = 1.0,
    w_nll: float = 1.0,
    t: np.ndarray | None = None,
) -> LossParts:
    """Denoising MSE plus rounding negative log-likelihood, averaged over the batch.

    Per example: ``x0 = Emb(ids) + sigma0 * eps``, ``t ~ U{1..T}``,
    ``x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps'`` and

        ``w_mse * ||f(x_t, t, C) - x0||^2 - w_nll * sum_i log softmax_v(-||x0_i - Emb_v||^2 / tau)[ids_i]``.

    The random draws happen in a fixed order (jitter, t, noise), so the loss is a
    deterministic function of the generator state.
    """
    ids = np.asarray(ids)
    B, n = ids.shape
    dtype = model.emb.data.dtype
    d = model.emb.shape[1]
    jitter = (sigma0 * rng.standard_normal((B, n, d))).astype(dtype)
    if t is None:
        t = rng.integers(1, sched.T + 1, size=B)
    t = np.asarray(t, dtype=np.int64)
    noise = rng.standard_normal((B, n, d)).astype(dtype)
    ab = sched.alpha_bar[t - 1].reshape(B, 1, 1)

    x0 = ag.embedding(model.emb, ids) + jitter
    x_t = x0 * np.sqrt(ab).astype(dtype) + Tensor((np.sqrt(1.0 - ab) * noise).astype(dtype))
    ctx = model.text.encode_ids(text_ids, text_mask)
    f = model.denoiser(x_t, t, ctx)
    diff = f - x0
    mse = ag.tsum(diff * diff) * (1.0 / B)

    dots = ag.matmul(x0, ag.transpose(model.emb))
    sq_x = ag.tsum(x0 * x0, axis=-1, keepdims=True)
    sq_e = ag.tsum(model.emb * model.emb, axis=-1)
    logits = (dots * 2.0 - sq_x - sq_e) * (1.0 / tau)
    picked = ag.take_along_last(ag.log_softmax(logits, axis=-1), ids)
    nll = ag.tsum(picked) * (-1.0 / B)

    total = mse * w_mse + nll * w_nll
    if not np.isfinite(total.data):
        raise NumericalError(f"non-finite loss (mse={mse.data}, nll={nll.data}, t={t.tolist()})")
    return LossParts(total, float(mse.data), float(nll.data))


class Adam:
    """Adam with linear warmup to a constant rate."""

    def __init__(self, params: Sequence[tuple[str, Tensor]], lr: float, warmup: int = 0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = list(params)
        self.lr, self.warmup = lr, warmup
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params}

    def rate(self, step: int) -> float:
        """Learning rate applied at 1-based update ``step``."""
        if self.warmup and step <= self.warmup:
            return self.lr * step / self.warmup
        return self.lr

    def step(self) -> float:
        self.t += 1
        lr = self.rate(self.t)
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params:
            g = p.grad
            if g is None:
                continue
            g = g.astype(p.data.dtype, copy=False)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            if lr:
                update = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
                p.data = p.data - update.astype(p.data.dtype, copy=False)
        return lr


@dataclass
class TrainData:
    """Tokenized targets and descriptions of a training set."""

    ids: np.ndarray
    text_ids: np.ndarray
    text_mask: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @classmethod
    def build(cls, model: DiffusionLM, targets: Sequence[np.ndarray], descriptions: Sequence[str]) -> "TrainData":
        if not len(targets):
            raise ValueError("training set is empty")
        if len(targets) != len(descriptions):
            raise ValueError("targets and descriptions differ in length")
        text_ids, mask = model.text.token_ids(descriptions)
        return cls(np.stack([np.asarray(t, dtype=np.int64) for t in targets]), text_ids, mask)


@dataclass
class LogEntry:
    step: int
    loss: float
    mse: float
    nll: float
    lr: float


class Trainer:
    def __init__(self, model: DiffusionLM, sched_cfg: ScheduleConfig, cfg: TrainConfig, data: TrainData) -> None:
        if len(data) == 0:
            raise ValueError("training set is empty")
        if sched_cfg.T != model.cfg.denoiser.T:
            raise ValueError(f"schedule T={sched_cfg.T} differs from denoiser T={model.cfg.denoiser.T}")
        self.model, self.cfg, self.data = model, cfg, data
        self.sched_cfg = sched_cfg
        self.sched = sched_cfg.build()
        self.opt = Adam(model.trainable(), cfg.lr, cfg.warmup, cfg.beta1, cfg.beta2, cfg.eps)
        self.rng = np.random.default_rng(cfg.seed)
        self.step_count = 0
        self.history: list[LogEntry] = []

    def _batch(self) -> np.ndarray:
        N, B = len(self.data), self.cfg.batch_size
        if B == N:
            return np.arange(N)
        # whole passes over the data, topped up without replacement
        full = [np.arange(N)] * (B // N)
        rest = np.sort(self.rng.choice(N, size=B % N, replace=False))
        return np.concatenate(full + [rest])

    def step(self) -> LogEntry:
        idx = self._batch()
        self.model.zero_grad()
        parts = diffusion_loss(
            self.model, self.data.ids[idx], self.data.text_ids[idx], self.data.text_mask[idx],
            self.sched, self.rng, self.cfg.sigma0, self.cfg.tau, self.cfg.w_mse, self.cfg.w_nll,
        )
        parts.total.backward()
        lr = self.opt.step()
        self.step_count += 1
        entry = LogEntry(self.step_count, float(parts.total.data), parts.mse, parts.nll, lr)
        self.history.append(entry)
        return entry

    def train(self, steps: int | None = None, callback: Callable[["Trainer", LogEntry], None] | None = None) -> list[LogEntry]:
        """Run ``steps`` updates (default: up to ``cfg.steps`` in total)."""
        todo = self.cfg.steps - self.step_count if steps is None else steps
        out = []
        for _ in range(max(todo, 0)):
            entry = self.step()
            out.append(entry)
            if callback is not None:
                callback(self, entry)
        return out


    def save(self, path, extra: dict | None = None) -> None:
        """Checkpoint parameters, Adam moments, step counter and generator state."""
        tensors: dict[str, np.ndarray] = {}
        for k, p in self.model.named_parameters():
            tensors[f"model/{k}"] = p.data
        for k, _ in self.opt.params:
            tensors[f"adam_m/{k}"] = self.opt.m[k]
            tensors[f"adam_v/{k}"] = self.opt.v[k]
        meta = {
            "model_config": self.model.cfg.to_dict(),
            "train_config": asdict(self.cfg),
            "schedule": asdict(self.sched_cfg),
            "vocab": list(self.model.vocab.tokens),
            "words": list(self.model.words.words),
            "step": self.step_count,
            "adam_t": self.opt.t,
            "rng_state": self.rng.bit_generator.state,
            "extra": extra or {},
        }
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path, data: TrainData | None = None, cfg: TrainConfig | None = None) -> "Trainer":
        """Rebuild a trainer from a checkpoint; training data must be supplied to continue."""
        model, sched_cfg, tensors, meta = _restore_model(path)
        tcfg = cfg or TrainConfig(**meta["train_config"])
        if data is None:
            data = TrainData(np.zeros((1, model.cfg.denoiser.n), dtype=np.int64),
                             np.full((1, 1), 2, dtype=np.int64), np.ones((1, 1), dtype=bool))
        trainer = cls(model, sched_cfg, tcfg, data)
        for k, _ in trainer.opt.params:
            try:
                trainer.opt.m[k] = tensors[f"adam_m/{k}"].copy()
                trainer.opt.v[k] = tensors[f"adam_v/{k}"].copy()
            except KeyError as exc:
                raise CheckpointError(f"checkpoint lacks optimizer moments for {k}") from exc
        trainer.opt.t = int(meta["adam_t"])
        trainer.step_count = int(meta["step"])
        trainer.rng.bit_generator.state = meta["rng_state"]
        return trainer


def _restore_model(path) -> tuple[DiffusionLM, ScheduleConfig, dict[str, np.ndarray], dict]:
    tensors, meta = load_checkpoint(path)
    try:
        mcfg = ModelConfig.from_dict(meta["model_config"])
        sched_cfg = ScheduleConfig(**meta["schedule"])
        vocab = Vocab(tuple(meta["vocab"]))
        words = WordVocab(tuple(meta["words"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint metadata incomplete: {exc}") from exc
    model = DiffusionLM(mcfg, vocab, words)
    state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    model.load_state_dict(state)
    return model, sched_cfg, tensors, meta


def load_model(path) -> tuple[DiffusionLM, NoiseSchedule, dict]:
    """Model, its training schedule and the checkpoint metadata."""
    model, sched_cfg, _, meta = _restore_model(path)
    return model, sched_cfg.build(), meta


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        raise ValueError(f"need at least {window} values")
    c = np.cumsum(np.concatenate([[0.0], v]))
    return (c[window:] - c[:-window]) / window

