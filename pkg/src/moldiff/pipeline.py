"""Glue between datasets, descriptions, the model and the sampler."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from moldiff import autograd as ag
from moldiff.descgen import DescMode, MMPRecord, PhrasingConfig, describe
from moldiff.diffusion import NoiseSchedule, sample
from moldiff.textenc import WordVocab
from moldiff.tokenizer import TokenizeError, Vocab, build_vocab, decode, encode, tokenize
from moldiff.trainer import DiffusionLM, TrainData

InitMode = Literal["source", "noise"]


@dataclass(frozen=True)
class DescribedRecord:
    record: MMPRecord
    description: str


def describe_all(
    records: Sequence[MMPRecord],
    names: dict[str, str] | None = None,
    mode: DescMode = "names",
    cfg: PhrasingConfig | None = None,
    properties: Iterable[str] | None = None,
) -> tuple[list[DescribedRecord], list[tuple[str, str]]]:
    """Describe every record; failures are returned as ``(id, message)``."""
    props = list(properties) if properties is not None else None
    done, failed = [], []
    for rec in records:
        try:
            done.append(DescribedRecord(rec, describe(rec, mode, names, cfg, props)))
        except KeyError as exc:
            failed.append((rec.id, f"missing property {exc.args[0]!r}"))
    return done, failed


def vocab_from(smiles: Iterable[str], size: int | None = None) -> Vocab:
    """SMILES vocabulary over ``smiles``; untokenizable strings are skipped."""
    good = []
    for s in smiles:
        try:
            tokenize(s)
        except TokenizeError:
            continue
        good.append(s)
    return build_vocab(good, size)


def record_smiles(records: Iterable[MMPRecord]) -> list[str]:
    out = []
    for r in records:
        out.extend((r.source, r.target))
    return out


def training_set(model: DiffusionLM, items: Sequence[DescribedRecord]) -> TrainData:
    n = model.cfg.denoiser.n
    targets = [encode(it.record.target, model.vocab, n) for it in items]
    return TrainData.build(model, targets, [it.description for it in items])


def word_vocab(items: Sequence[DescribedRecord]) -> WordVocab:
    return WordVocab.build([it.description for it in items])


def generate(
    model: DiffusionLM,
    sched: NoiseSchedule,
    items: Sequence[DescribedRecord],
    init: InitMode = "source",
    steps: int | None = None,
    t_start: int | None = None,
    seed: int = 0,
    batch_size: int = 32,
    clamp: bool = False,
) -> list[dict]:
    """Sample one molecule per record.

    Each batch draws from its own child of ``SeedSequence(seed)``, so output
    depends on ``seed`` and ``batch_size`` only.
    """
    if init not in ("source", "noise"):
        raise ValueError(f"unknown init mode {init!r}")
    n = model.cfg.denoiser.n
    emb = model.emb.data
    batches = [items[i:i + batch_size] for i in range(0, len(items), batch_size)]
    children = np.random.SeedSequence(seed).spawn(len(batches))
    out: list[dict] = []
    for chunk, child in zip(batches, children):
        with ag.no_grad():
            ctx = model.text.encode([it.description for it in chunk])
        predict = model.predictor(ctx)
        rng = np.random.default_rng(child)
        if init == "source":
            src = np.stack([encode(it.record.source, model.vocab, n) for it in chunk])
            res = sample(predict, emb, sched, source_ids=src, t_start=t_start, steps=steps, seed=rng, clamp=clamp)
        else:
            res = sample(predict, emb, sched, shape=(len(chunk), n), steps=steps, seed=rng, clamp=clamp)
        for i, it in enumerate(chunk):
            dec = decode(res.rounded.ids[i], model.vocab)
            out.append({
                "id": it.record.id,
                "source": it.record.source,
                "description": it.description,
                "output_smiles": dec.smiles,
                "valid": _valid(dec.smiles) if dec.decodable else False,
                "repaired_positions": int(res.rounded.repaired[i]),
                "seed": seed,
                "steps": int(res.chain.T),
                "init": init,
            })
    return out


def _valid(smiles: str) -> bool:
    from moldiff.chem import canonicalize

    return canonicalize(smiles) is not None


def write_jsonl(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: {exc.msg}") from exc
    return rows
