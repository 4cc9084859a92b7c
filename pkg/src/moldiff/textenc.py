"""Small transformer encoder turning a description into a context matrix."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from moldiff import autograd as ag
from moldiff.autograd import Tensor
from moldiff.nn import FeedForward, LayerNorm, Module, MultiHeadAttention, param, sinusoidal

_WORD_RE = re.compile(r"\d+(?:\.\d+)?|\w+|[^\w\s]")
WORD_PAD, WORD_UNK, WORD_CLS = "[PAD]", "[UNK]", "[CLS]"
WORD_SPECIALS = (WORD_PAD, WORD_UNK, WORD_CLS)


def split_words(text: str) -> list[str]:
    """Lower-cased words, numbers (``2.442`` stays whole) and punctuation marks."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class WordVocab:
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if tuple(self.words[:3]) != WORD_SPECIALS:
            raise ValueError("word vocabulary must start with [PAD], [UNK], [CLS]")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def ids(self, text: str) -> list[int]:
        """``[CLS]`` followed by one id per word."""
        index = self._index  # type: ignore[attr-defined]
        return [2] + [index.get(w, 1) for w in split_words(text)]

    @classmethod
    def build(cls, texts: Iterable[str]) -> "WordVocab":
        seen: set[str] = set()
        for t in texts:
            seen.update(split_words(t))
        seen.difference_update(WORD_SPECIALS)
        return cls(WORD_SPECIALS + tuple(sorted(seen)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WordVocab":
        return cls(tuple(w for w in Path(path).read_text(encoding="utf-8").splitlines() if w))


@dataclass
class TextContext:
    """Context rows ``(B, m, d1)`` and key mask ``(B, m)`` (True = real word)."""

    matrix: Tensor
    mask: np.ndarray

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


class EncoderLayer(Module):
    def __init__(self, rng: np.random.Generator, d: int, heads: int) -> None:
        super().__init__()
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(rng, d, heads)
        self.ln2 = LayerNorm(d)
        self.ff = FeedForward(rng, d, 4 * d)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, mask)
        return x + self.ff(self.ln2(x))


class TextEncoder(Module):
    """Word embeddings + sinusoidal positions + pre-norm self-attention layers.

    Args:
        vocab: Word vocabulary.
        d1: Context width.
        layers: Encoder depth.
        heads: Attention heads.
        max_len: Longest accepted description, counting the leading slot.
        frozen: Keep the random initialization fixed during training.
    """

    def __init__(self, vocab: WordVocab, d1: int = 128, layers: int = 2, heads: int = 4,
                 max_len: int = 128, frozen: bool = False, seed: int = 0) -> None:
        super().__init__()
        rng = np.random.default_rng(seed)
        self.vocab = vocab
        self.d1 = d1
        self.max_len = max_len
        self.word_emb = param(rng, (len(vocab), d1), 1.0)
        self.layers = [EncoderLayer(rng, d1, heads) for _ in range(layers)]
        self.ln = LayerNorm(d1)
        self._pos = sinusoidal(np.arange(max_len), d1)
        if frozen:
            self.freeze()

    def token_ids(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        rows = [self.vocab.ids(t) for t in texts]
        m = max(len(r) for r in rows)
        if m > self.max_len:
            raise ValueError(f"description of {m} slots exceeds max text length {self.max_len}")
        ids = np.zeros((len(rows), m), dtype=np.int64)
        mask = np.zeros((len(rows), m), dtype=bool)
        for i, r in enumerate(rows):
            ids[i, :len(r)] = r
            mask[i, :len(r)] = True
        return ids, mask

    def encode_ids(self, ids: np.ndarray, mask: np.ndarray) -> TextContext:
        dtype = self.word_emb.data.dtype
        x = ag.embedding(self.word_emb, ids) + self._pos[: ids.shape[1]].astype(dtype)
        for layer in self.layers:
            x = layer(x, mask)
        return TextContext(self.ln(x), mask)

    def encode(self, texts: Sequence[str]) -> TextContext:
        """Batch of descriptions to a padded context; padded rows are masked."""
        return self.encode_ids(*self.token_ids(texts))


def encode_text(desc: str, encoder: TextEncoder) -> np.ndarray:
    """Context matrix ``(m, d1)`` of one description, ``m`` = words + 1."""
    with ag.no_grad():
        return encoder.encode([desc]).matrix.data[0]
