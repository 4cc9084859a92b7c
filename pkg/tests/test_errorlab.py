from __future__ import annotations

import json

import numpy as np
import pytest

from moldiff.diffusion import make_schedule
from moldiff.errorlab import (
    DiffSimConfig, TradSimConfig, VarianceCurve, analytic_diffusion_variance, attenuation, fit_loglog_slope,
    run_comparison, simulate_diffusion, simulate_traditional,
)


class TestTraditional:
    @pytest.mark.parametrize("model, slope", [("independent", 1.0), ("systematic", 2.0)])
    def test_slope(self, model, slope):
        curve = simulate_traditional(TradSimConfig(Z=200, error_model=model), trials=10_000, seed=1)
        assert fit_loglog_slope(curve) == pytest.approx(slope, abs=0.05)

    @pytest.mark.parametrize("model", ["independent", "systematic"])
    def test_matches_analytic(self, model):
        cfg = TradSimConfig(Z=50, eta=0.3, H=2.0, sigma=0.5, error_model=model)
        curve = simulate_traditional(cfg, trials=20_000, seed=2)
        # sample variance of a Gaussian has relative SE sqrt(2 / trials)
        rel = np.abs(curve.variance / cfg.analytic_variance() - 1)
        assert rel.max() < 5 * np.sqrt(2 / 20_000)

    def test_seeded(self):
        a = simulate_traditional(TradSimConfig(Z=20), trials=200, seed=4)
        b = simulate_traditional(TradSimConfig(Z=20), trials=200, seed=4)
        assert np.array_equal(a.variance, b.variance)

    @pytest.mark.parametrize("kw", [dict(Z=0), dict(eta=0.0), dict(sigma=-1.0), dict(error_model="drift")])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            TradSimConfig(**kw)

    def test_too_few_trials(self):
        with pytest.raises(ValueError):
            simulate_traditional(TradSimConfig(), trials=10)


class TestDiffusion:
    @pytest.mark.parametrize("kind", ["linear", "sqrt", "cosine"])
    def test_final_variance_matches_analytic(self, kind):
        cfg = DiffSimConfig(make_schedule(kind, 1000), sigma=1.0)
        curve = simulate_diffusion(cfg, trials=10_000, seed=3)
        exact = analytic_diffusion_variance(cfg)
        assert curve.final == pytest.approx(exact, rel=5 * np.sqrt(2 / 10_000))
        assert curve.final <= 1000 * cfg.sigma ** 2

    def test_contributions_sum_to_final(self):
        cfg = DiffSimConfig(make_schedule("linear", 200), sigma=0.7)
        curve = simulate_diffusion(cfg, trials=5_000, seed=0)
        assert np.allclose(curve.contribution, (0.7 * attenuation(cfg.schedule)) ** 2, rtol=0.1)

    def test_attenuation_decreasing(self):
        w = attenuation(make_schedule("cosine", 500))
        assert (np.diff(w) <= 0).all() and w[0] < 1
        assert (np.diff(w[w > 0]) < 0).all()

    def test_zero_sigma(self):
        curve = simulate_diffusion(DiffSimConfig(make_schedule("linear", 20), sigma=0.0), trials=100)
        assert curve.final == 0.0


class TestSlopeFit:
    def test_window(self):
        steps = np.arange(1, 101)
        var = np.where(steps <= 50, steps ** 1.0, 50.0 * (steps / 50.0) ** 3)
        curve = VarianceCurve(steps, var, 100)
        assert fit_loglog_slope(curve, (1, 50)) == pytest.approx(1.0)
        assert fit_loglog_slope(curve, (50, 100)) == pytest.approx(3.0)

    def test_needs_points(self):
        with pytest.raises(ValueError):
            fit_loglog_slope(VarianceCurve(np.arange(1, 5), np.ones(4), 100))


class TestComparison:
    def test_outputs(self, tmp_path):
        scheds = {k: make_schedule(k, 100) for k in ("linear", "cosine")}
        summary, curves = run_comparison(scheds, trials=500, seed=3, out_dir=tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"summary.json", "curves.dat"} | {f"{k}.csv" for k in curves}
        data = json.loads((tmp_path / "summary.json").read_text())
        assert data["diffusion_bound_T_sigma2"] == 100.0 and data["trials"] == 500
        assert max(summary.diffusion_final.values()) < summary.systematic_final
        assert (tmp_path / "curves.dat").read_text().count("# step variance") == 4

    def test_reproducible(self):
        scheds = {"linear": make_schedule("linear", 50)}
        a, _ = run_comparison(scheds, trials=200, seed=9)
        b, _ = run_comparison(scheds, trials=200, seed=9)
        assert a == b

    def test_needs_schedule(self):
        with pytest.raises(ValueError):
            run_comparison({})
