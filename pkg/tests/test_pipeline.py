from __future__ import annotations

import numpy as np
import pytest

from moldiff.denoiser import DenoiserConfig
from moldiff.descgen import MMPRecord
from moldiff.diffusion import make_schedule
from moldiff.pipeline import (
    describe_all, generate, read_jsonl, record_smiles, training_set, vocab_from, word_vocab, write_jsonl,
)
from moldiff.trainer import DiffusionLM, ModelConfig


@pytest.fixture
def items(toy_records, toy_names):
    done, failed = describe_all(toy_records, toy_names)
    assert not failed
    return done


@pytest.fixture
def model(items):
    vocab = vocab_from(record_smiles(it.record for it in items))
    cfg = ModelConfig(DenoiserConfig(L=1, d=8, d2=16, heads=2, n=32, d1=16, T=10), text_layers=1, text_heads=2)
    return DiffusionLM(cfg, vocab, word_vocab(items), seed=0)


class TestDescribeAll:
    def test_missing_property_is_reported(self):
        rec = MMPRecord("CCO", "CCN", {"logd": (1.0, 2.0)}, id="r1")
        done, failed = describe_all([rec], properties=["logd", "clint"])
        assert not done and failed[0][0] == "r1" and "clint" in failed[0][1]


class TestVocab:
    def test_skips_untokenizable(self):
        assert vocab_from(["CCO", "C[C"]) == vocab_from(["CCO"])

    def test_record_smiles(self, toy_records):
        s = record_smiles(toy_records[:2])
        assert s == [toy_records[0].source, toy_records[0].target, toy_records[1].source, toy_records[1].target]


class TestGenerate:
    def test_rows(self, model, items):
        rows = generate(model, make_schedule("linear", 10), items, seed=4, batch_size=3)
        assert [r["id"] for r in rows] == [it.record.id for it in items]
        assert all(isinstance(r["valid"], bool) and r["steps"] == 10 for r in rows)

    def test_training_set_shapes(self, model, items):
        data = training_set(model, items)
        assert data.ids.shape == (10, 32) and len(data.text_ids) == 10

    def test_seeded_and_batch_dependent_only(self, model, items):
        sched = make_schedule("linear", 10)
        a = generate(model, sched, items, seed=4, batch_size=4)
        b = generate(model, sched, items, seed=4, batch_size=4)
        assert a == b

    def test_bad_init(self, model, items):
        with pytest.raises(ValueError):
            generate(model, make_schedule("linear", 10), items, init="zeros")


class TestJsonl:
    def test_round_trip(self, tmp_path):
        rows = [{"id": "a", "x": 1.5}, {"id": "é", "x": None}]
        write_jsonl(rows, tmp_path / "r.jsonl")
        assert read_jsonl(tmp_path / "r.jsonl") == rows

    def test_line_number_in_error(self, tmp_path):
        (tmp_path / "r.jsonl").write_text('{"a": 1}\n\n{oops\n')
        with pytest.raises(ValueError, match="line 3"):
            read_jsonl(tmp_path / "r.jsonl")
