from __future__ import annotations

import numpy as np
import pytest

from moldiff.checkpoint import CheckpointError
from moldiff.denoiser import DenoiserConfig
from moldiff.descgen import describe
from moldiff.diffusion import ScheduleConfig
from moldiff.textenc import WordVocab
from moldiff.tokenizer import build_vocab, encode
from moldiff.trainer import (
    Adam, DiffusionLM, ModelConfig, TrainConfig, TrainData, Trainer, diffusion_loss, load_model, moving_average,
)

N_TOK = 24


@pytest.fixture
def setup(toy_records, toy_names):
    recs = toy_records[:6]
    descs = [describe(r, names=toy_names) for r in recs]
    vocab = build_vocab([s for r in recs for s in (r.source, r.target)])
    words = WordVocab.build(descs)
    cfg = ModelConfig(DenoiserConfig(L=1, d=8, d2=16, heads=2, n=N_TOK, d1=16, T=20), text_layers=1, text_heads=2)

    def make(seed=0):
        model = DiffusionLM(cfg, vocab, words, seed=seed)
        data = TrainData.build(model, [encode(r.target, vocab, N_TOK) for r in recs], descs)
        return model, data

    return make


def trainer(make, **kw):
    model, data = make()
    tcfg = TrainConfig(**{"lr": 1e-3, "batch_size": 4, "steps": 6, "seed": 3, **kw})
    return Trainer(model, ScheduleConfig("linear", 20), tcfg, data)


class TestLoss:
    def test_parts_add_up(self, setup):
        model, data = setup()
        sched = ScheduleConfig("linear", 20).build()
        args = (model, data.ids, data.text_ids, data.text_mask, sched)
        p = diffusion_loss(*args, np.random.default_rng(0))
        assert float(p.total.data) == pytest.approx(p.mse + p.nll, rel=1e-5)
        q = diffusion_loss(*args, np.random.default_rng(0), w_mse=2.0, w_nll=0.0)
        assert q.mse == pytest.approx(p.mse) and float(q.total.data) == pytest.approx(2 * p.mse, rel=1e-5)

    def test_deterministic_in_generator(self, setup):
        model, data = setup()
        sched = ScheduleConfig("linear", 20).build()
        args = (model, data.ids, data.text_ids, data.text_mask, sched)
        a = diffusion_loss(*args, np.random.default_rng(5))
        b = diffusion_loss(*args, np.random.default_rng(5))
        assert a.mse == b.mse and a.nll == b.nll

    def test_gradients_reach_every_trainable(self, setup):
        model, data = setup()
        sched = ScheduleConfig("linear", 20).build()
        diffusion_loss(model, data.ids, data.text_ids, data.text_mask, sched, np.random.default_rng(0)).total.backward()
        assert all(p.grad is not None for _, p in model.trainable())


class TestAdam:
    def test_warmup_rate(self):
        from moldiff.autograd import Tensor

        opt = Adam([("w", Tensor(np.zeros(2)))], lr=1.0, warmup=4)
        assert [opt.rate(s) for s in (1, 2, 4, 5, 100)] == [0.25, 0.5, 1.0, 1.0, 1.0]

    def test_first_step_is_signed_lr(self):
        from moldiff.autograd import Tensor

        w = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        w.grad = np.array([3.0, -0.5])
        opt = Adam([("w", w)], lr=0.1)
        opt.step()
        assert np.allclose(w.data, [0.9, -0.9], atol=1e-6)


class TestTrainer:
    def test_zero_lr_changes_nothing(self, setup):
        tr = trainer(setup, lr=0.0)
        before = {k: p.data.copy() for k, p in tr.model.named_parameters()}
        tr.train()
        assert all(np.array_equal(before[k], p.data) for k, p in tr.model.named_parameters())

    def test_updates_with_positive_lr(self, setup):
        tr = trainer(setup)
        before = tr.model.emb.data.copy()
        tr.train(2)
        assert not np.array_equal(before, tr.model.emb.data)

    def test_reproducible(self, setup):
        a = [e.loss for e in trainer(setup).train()]
        b = [e.loss for e in trainer(setup).train()]
        assert a == b

    def test_resume_bit_identical(self, setup, tmp_path):
        full = trainer(setup)
        full.train()
        part = trainer(setup)
        part.train(3)
        part.save(tmp_path / "half.ckpt")
        _, data = setup()
        resumed = Trainer.load(tmp_path / "half.ckpt", data)
        resumed.train()
        assert resumed.step_count == 6
        assert [e.loss for e in resumed.history] == [e.loss for e in full.history[3:]]
        ref = dict(full.model.named_parameters())
        # checkpoints store float32, so the run is float32 throughout
        for k, p in resumed.model.named_parameters():
            assert np.array_equal(p.data, ref[k].data), k

    def test_batch_tiling(self, setup):
        tr = trainer(setup, batch_size=14)
        idx = tr._batch()
        assert len(idx) == 14 and np.bincount(idx, minlength=6).min() >= 2
        assert np.array_equal(trainer(setup, batch_size=6)._batch(), np.arange(6))

    def test_schedule_length_must_match(self, setup):
        model, data = setup()
        with pytest.raises(ValueError):
            Trainer(model, ScheduleConfig("linear", 30), TrainConfig(), data)

    def test_load_model(self, setup, tmp_path):
        tr = trainer(setup)
        tr.train(1)
        tr.save(tmp_path / "m.ckpt")
        model, sched, meta = load_model(tmp_path / "m.ckpt")
        assert sched.T == 20 and meta["step"] == 1
        assert np.array_equal(model.emb.data, tr.model.emb.data.astype(np.float32))

    def test_incomplete_metadata(self, tmp_path):
        from moldiff.checkpoint import save_checkpoint

        save_checkpoint(tmp_path / "x.ckpt", {"a": np.zeros(2)}, {"step": 1})
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "x.ckpt")


class TestConfigChecks:
    @pytest.mark.parametrize("kw", [dict(lr=-1.0), dict(warmup=5, steps=4), dict(batch_size=0), dict(tau=0.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_empty_data(self, setup):
        model, _ = setup()
        with pytest.raises(ValueError):
            TrainData.build(model, [], [])


def test_moving_average():
    assert moving_average([1, 2, 3, 4], 2).tolist() == [1.5, 2.5, 3.5]
    with pytest.raises(ValueError):
        moving_average([1.0], 2)
