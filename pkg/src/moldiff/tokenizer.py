"""Semantic-group SMILES tokenizer with fixed-length padding."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

SOS, EOS, PAD, UNK = "[SOS]", "[EOS]", "[PAD]", "[UNK]"
SPECIALS = (SOS, EOS, PAD, UNK)
SOS_ID, EOS_ID, PAD_ID, UNK_ID = 0, 1, 2, 3

_TOKEN_RE = re.compile(r"\[[^\]]*\]|Br|Cl|%\d{2}|.")


class TokenizeError(ValueError):
    """Raised for strings that cannot be segmented or do not fit."""


def tokenize(smiles: str) -> list[str]:
    """Split SMILES into semantic tokens.

    Bracket atoms stay whole, ``Cl``/``Br`` are single tokens and ``%nn``
    ring-closure escapes form one unit.

    >>> tokenize("CC([Si]=O)C[CH3-]")
    ['C', 'C', '(', '[Si]', '=', 'O', ')', 'C', '[CH3-]']
    """
    tokens = _TOKEN_RE.findall(smiles)
    for tok in tokens:
        if tok == "[":
            raise TokenizeError(f"unterminated bracket in {smiles!r}")
    return tokens


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[:4]) != SPECIALS:
            raise ValueError("the first four tokens must be the special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(line for line in lines if line))


def build_vocab(corpus: Iterable[str], size: int | None = None) -> Vocab:
    """Specials followed by every observed token in lexicographic order.

    When ``size`` is given the vocabulary is padded with unused
    placeholder tokens ``[unused0]``, ``[unused1]``, ... up to that size.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus is empty")
    seen: set[str] = set()
    for s in corpus:
        seen.update(tokenize(s))
    seen.difference_update(SPECIALS)
    tokens = list(SPECIALS) + sorted(seen)
    if size is not None:
        if size < len(tokens):
            raise ValueError(f"requested size {size} below observed vocabulary {len(tokens)}")
        tokens += [f"[unused{i}]" for i in range(size - len(tokens))]
    return Vocab(tuple(tokens))


def encode(smiles: str, vocab: Vocab, n: int) -> np.ndarray:
    """``[SOS] tokens [EOS] [PAD]...`` as an int64 array of length ``n``."""
    tokens = tokenize(smiles)
    if len(tokens) + 2 > n:
        raise TokenizeError(f"{len(tokens)} tokens + 2 specials exceed length {n}")
    ids = np.full(n, PAD_ID, dtype=np.int64)
    ids[0] = SOS_ID
    ids[1:len(tokens) + 1] = [vocab.id(t) for t in tokens]
    ids[len(tokens) + 1] = EOS_ID
    return ids


@dataclass(frozen=True)
class Decoded:
    smiles: str
    decodable: bool
    terminated: bool


def decode(ids: Iterable[int], vocab: Vocab) -> Decoded:
    """Concatenate tokens after ``[SOS]`` up to the first ``[EOS]``.

    ``[UNK]`` renders as ``?`` and clears ``decodable``; a missing
    ``[EOS]`` decodes to the end and clears ``terminated``. Other
    special tokens inside the span are skipped.
    """
    ids = [int(i) for i in ids]
    start = 1 if ids and ids[0] == SOS_ID else 0
    parts: list[str] = []
    decodable, terminated = True, False
    for i in ids[start:]:
        if i == EOS_ID:
            terminated = True
            break
        if i == UNK_ID:
            parts.append("?")
            decodable = False
        elif i in (PAD_ID, SOS_ID):
            continue
        elif 0 <= i < len(vocab):
            parts.append(vocab.tokens[i])
        else:
            parts.append("?")
            decodable = False
    return Decoded("".join(parts), decodable, terminated)


def repair(ids: np.ndarray) -> tuple[np.ndarray, int]:
    """Force a well-formed sequence; returns the repaired copy and a change count.

    Position 0 becomes ``[SOS]``, everything after the first ``[EOS]`` becomes
    ``[PAD]``; if no ``[EOS]`` exists the last position is set to ``[EOS]``.
    Stray ``[SOS]`` tokens in the body are replaced by ``[PAD]``.
    """
    out = np.array(ids, dtype=np.int64, copy=True)
    n = out.shape[0]
    out[0] = SOS_ID
    body = out[1:]
    eos = np.flatnonzero(body == EOS_ID)
    end = int(eos[0]) + 1 if eos.size else n - 1
    out[end] = EOS_ID
    out[end + 1:] = PAD_ID
    span = out[1:end]
    span[span == SOS_ID] = PAD_ID
    return out, int(np.count_nonzero(out != np.asarray(ids)))
