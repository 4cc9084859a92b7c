from __future__ import annotations

import numpy as np
import pytest

from moldiff.diffusion import (
    ScheduleConfig, denoise_step, embed_and_jitter, forward_step, make_schedule, min_pairwise_distance,
    q_sample, respace, respace_indices, round_to_tokens, sample, sampling_chain, truncate,
)
from moldiff.tokenizer import EOS_ID, PAD_ID, SOS_ID

KINDS = ["linear", "sqrt", "cosine"]


def spread_embeddings(rng, V=12, d=8, scale=3.0):
    return (scale * rng.standard_normal((V, d))).astype(np.float64)


def sequences(rng, B=4, n=10, V=12):
    ids = rng.integers(4, V, size=(B, n))
    ids[:, 0] = SOS_ID
    ids[:, 6] = EOS_ID
    ids[:, 7:] = PAD_ID
    return ids


class TestSchedule:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("T", [1, 50, 1000, 2000])
    def test_invariants(self, kind, T):
        s = make_schedule(kind, T)
        s.check()
        ab = np.concatenate([s.alpha_bar_prev[:1], s.alpha_bar])
        assert (np.diff(ab) < 0).all()
        assert (s.gamma < 1).all()
        assert (np.diff(np.cumsum(np.log(s.gamma))) < 0).all()

    def test_linear_1000_alpha_bar(self):
        s = make_schedule("linear", 1000)
        expected = np.prod(1 - np.linspace(1e-4, 0.02, 1000)) * (1 - 1e-4)
        assert s.alpha_bar[-1] == pytest.approx(expected, rel=1e-12)
        assert s.alpha_bar[-1] == pytest.approx(4.035e-5, rel=1e-3)

    def test_single_step_gamma(self):
        s = make_schedule("linear", 1, 0.5, 0.5)
        assert s.gamma[0] == pytest.approx(np.sqrt(0.5) * 0.5 / 0.75)
        assert s.gamma[0] < 1

    def test_zero_beta0_convention(self):
        s = make_schedule("linear", 1, 0.5, 0.5, beta0="zero")
        assert s.alpha_bar[0] == 0.5 and s.gamma[0] == pytest.approx(1.0)
        s = make_schedule("linear", 100, beta0="zero")
        assert s.sigma2[0] == 0.0 and s.alpha_bar_prev[0] == 1.0

    @pytest.mark.parametrize("kind", KINDS)
    def test_beta0_conventions(self, kind):
        lo = {"linear": 1e-4, "sqrt": 1e-5, "cosine": 1e-5}[kind]
        s = make_schedule(kind, 100)
        assert s.alpha_bar_prev[0] == pytest.approx(1 - lo, rel=1e-15)
        r = make_schedule(kind, 100, beta0="repeat")
        assert r.alpha_bar_prev[0] == pytest.approx(1 - r.beta[0], rel=1e-15)
        assert np.array_equal(s.beta, r.beta)

    @pytest.mark.parametrize("kw", [dict(T=0), dict(beta_min=0.0), dict(beta_min=0.1, beta_max=0.05),
                                    dict(beta_max=1.0), dict(kind="exp"), dict(beta0="one")])
    def test_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            make_schedule(**{"kind": "linear", "T": 10, **kw})

    def test_posterior_mean_identity(self):
        s = make_schedule("cosine", 200)
        ab = np.concatenate([s.alpha_bar_prev[:1], s.alpha_bar])
        mean = s.gamma + s.coef_xt * np.sqrt(s.alpha_bar)
        assert np.allclose(mean, np.sqrt(ab[:-1]), rtol=1e-12, atol=0)

    def test_config_builds(self):
        assert ScheduleConfig("sqrt", 30).build().T == 30


class TestRespace:
    @pytest.mark.parametrize("kind", KINDS)
    def test_alpha_bar_kept_exactly(self, kind):
        s = make_schedule(kind, 1000)
        r = respace(s, 200)
        assert r.T == 200 and r.timesteps[-1] == 1000
        assert np.array_equal(r.alpha_bar, s.alpha_bar[r.timesteps - 1])
        assert np.allclose(np.cumprod(1 - r.beta) * r.alpha_bar_prev[0], r.alpha_bar, rtol=1e-9, atol=0)
        r.check()

    def test_identity(self):
        s = make_schedule("linear", 50)
        r = respace(s, 50)
        assert np.array_equal(r.beta, s.beta) and np.array_equal(r.timesteps, s.timesteps)

    def test_indices(self):
        idx = respace_indices(1000, 200)
        assert len(idx) == 200 and idx[-1] == 1000 and (np.diff(idx) == 5).all()
        with pytest.raises(ValueError):
            respace_indices(10, 11)

    def test_truncate_then_respace(self):
        s = make_schedule("linear", 200)
        chain = sampling_chain(s, 120, 30)
        assert chain.T == 30 and chain.timesteps[-1] == 120
        assert np.array_equal(chain.alpha_bar, s.alpha_bar[chain.timesteps - 1])
        with pytest.raises(ValueError):
            truncate(s, 201)


class TestForward:
    def test_jitter(self, rng):
        emb = spread_embeddings(rng)
        ids = np.array([[4, 5, 6]])
        assert np.array_equal(embed_and_jitter(ids, emb, 0.0, rng), emb[ids])
        draws = np.stack([embed_and_jitter(ids, emb, 0.05, rng) for _ in range(10_000)])
        assert draws.var(0).mean() == pytest.approx(0.05 ** 2, rel=0.05)
        se = 0.05 / np.sqrt(10_000)
        assert np.abs(draws.mean(0) - emb[ids]).max() < 4 * se

    def test_t1_is_nearly_clean(self, rng):
        s = make_schedule("linear", 1000)
        x0 = rng.standard_normal((3, 4))
        assert np.allclose(q_sample(x0, 1, rng.standard_normal(x0.shape), s), x0, atol=0.05)

    def test_per_example_steps(self, rng):
        s = make_schedule("linear", 100)
        x0, eps = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
        both = q_sample(x0, np.array([5, 90]), eps, s)
        assert np.allclose(both[0], q_sample(x0[0], 5, eps[0], s))
        assert np.allclose(both[1], q_sample(x0[1], 90, eps[1], s))

    def test_out_of_range(self, rng):
        s = make_schedule("linear", 10)
        with pytest.raises(ValueError):
            q_sample(np.zeros(2), 11, np.zeros(2), s)


class TestReverse:
    def test_final_step_has_no_noise(self, rng):
        s = make_schedule("linear", 10)
        x = rng.standard_normal((2, 3))
        x0 = rng.standard_normal((2, 3))
        a = denoise_step(x, 1, x0, s, rng.standard_normal((2, 3)))
        assert np.array_equal(a, denoise_step(x, 1, x0, s, None))

    def test_oracle_recovers_x0(self, rng):
        s = make_schedule("linear", 100)
        x0 = rng.standard_normal((5, 8))
        x = q_sample(x0, 100, rng.standard_normal(x0.shape), s)
        for t in range(100, 0, -1):
            x = denoise_step(x, t, x0, s, None)
        assert np.linalg.norm(x - x0) <= 1e-3 * np.linalg.norm(x0)


class TestRounding:
    def test_exact_embeddings(self, rng):
        emb = spread_embeddings(rng)
        ids = sequences(rng)
        r = round_to_tokens(emb[ids], emb)
        assert np.array_equal(r.ids, ids) and (r.repaired == 0).all()

    def test_stability_radius(self, rng):
        emb = spread_embeddings(rng)
        ids = sequences(rng)
        radius = 0.5 * min_pairwise_distance(emb)
        for _ in range(50):
            noise = rng.standard_normal(emb[ids].shape)
            noise *= rng.uniform(0, 0.999, size=noise.shape[:-1] + (1,)) * radius / np.linalg.norm(noise, axis=-1, keepdims=True)
            assert np.array_equal(round_to_tokens(emb[ids] + noise, emb).raw, ids)

    def test_tie_goes_to_lower_id(self):
        emb = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])
        r = round_to_tokens(np.zeros((1, 2)), emb)
        assert r.raw.tolist() == [0]
        r = round_to_tokens(np.zeros((1, 1, 2)) + np.array([0.0, 0.0]), emb[1:3])
        assert r.raw.tolist() == [[0]]

    def test_repair_counts(self, rng):
        emb = spread_embeddings(rng)
        ids = sequences(rng, B=1)
        broken = ids.copy()
        broken[0, 0] = 5
        broken[0, -1] = 7
        r = round_to_tokens(emb[broken], emb)
        assert np.array_equal(r.raw, broken)
        assert np.array_equal(r.ids, ids) and r.repaired.tolist() == [2]

    def test_min_distance(self):
        emb = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
        assert min_pairwise_distance(emb) == pytest.approx(1.0)


class TestSample:
    def test_oracle_source_mode(self, rng):
        emb = spread_embeddings(rng)
        target = sequences(rng)
        source = np.roll(target, 1, axis=0)
        oracle = lambda x, t: emb[target]
        res = sample(oracle, emb, make_schedule("linear", 100), source_ids=source, seed=0)
        assert np.array_equal(res.rounded.ids, target)

    @pytest.mark.parametrize("steps", [None, 20])
    def test_oracle_noise_mode(self, rng, steps):
        emb = spread_embeddings(rng)
        target = sequences(rng)
        res = sample(lambda x, t: emb[target], emb, make_schedule("cosine", 100), shape=target.shape,
                     steps=steps, seed=3)
        assert np.array_equal(res.rounded.ids, target)
        assert res.chain.T == (steps or 100)

    def test_untrained_output_is_well_formed(self, rng):
        emb = spread_embeddings(rng)
        junk = lambda x, t: rng.standard_normal(x.shape) * 4
        r = sample(junk, emb, make_schedule("linear", 30), shape=(6, 10), seed=1).rounded
        for row in r.ids:
            assert row[0] == SOS_ID
            eos = np.flatnonzero(row == EOS_ID)
            assert eos.size >= 1 and (row[eos[0] + 1:] == PAD_ID).all()

    def test_deterministic(self, rng):
        emb = spread_embeddings(rng)
        src = sequences(rng)
        pred = lambda x, t: np.tanh(x)
        s = make_schedule("linear", 40)
        a = sample(pred, emb, s, source_ids=src, seed=9, t_start=30)
        b = sample(pred, emb, s, source_ids=src, seed=9, t_start=30)
        assert np.array_equal(a.x0, b.x0)

    def test_predictor_sees_original_steps(self, rng):
        emb = spread_embeddings(rng)
        seen = []

        def pred(x, t):
            seen.append(int(t[0]))
            return x

        sample(pred, emb, make_schedule("linear", 1000), shape=(1, 4), steps=200, seed=0)
        assert seen[0] == 1000 and seen[-1] == 5 and len(seen) == 200

    def test_init_modes_differ_only_in_start(self, rng):
        emb = spread_embeddings(rng)
        src = sequences(rng)
        starts = {}

        def pred(x, t, key):
            starts.setdefault(key, x.copy())
            return emb[src]

        s = make_schedule("linear", 50)
        a = sample(lambda x, t: pred(x, t, "src"), emb, s, source_ids=src, seed=2)
        b = sample(lambda x, t: pred(x, t, "noise"), emb, s, shape=src.shape, seed=2)
        assert not np.allclose(starts["src"], starts["noise"])
        assert np.array_equal(a.rounded.ids, b.rounded.ids)

    def test_clamp_snaps_predictions(self, rng):
        emb = spread_embeddings(rng)
        target = sequences(rng)
        near = lambda x, t: emb[target] + 0.1 * rng.standard_normal(emb[target].shape)
        res = sample(near, emb, make_schedule("linear", 50), shape=target.shape, seed=0, clamp=True)
        assert np.array_equal(res.rounded.ids, target)

    def test_needs_shape(self, rng):
        with pytest.raises(ValueError):
            sample(lambda x, t: x, spread_embeddings(rng), make_schedule("linear", 5))
