"""Monte-Carlo study of how prediction errors accumulate.

Two processes are compared:

* predictor-guided optimization, where each of ``Z`` update steps adds a
  deviation ``eta * H * eps_z``; with independent ``eps_z`` the variance
  grows like ``Z``, with a persistent bias it grows like ``Z**2``;
* reverse diffusion, where the error ``delta_t`` of the ``x0`` prediction
  enters through ``gamma_t`` and is damped by every later step,
  ``D_{t-1} = gamma_t (D_t + delta_t)``.

All simulations are scalar and fully determined by their seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from moldiff import _kernels
from moldiff.diffusion import NoiseSchedule

ErrorModel = Literal["independent", "systematic"]
MIN_TRIALS = 100


@dataclass(frozen=True)
class TradSimConfig:
    Z: int = 200
    eta: float = 0.1
    H: float = 1.0
    sigma: float = 1.0
    error_model: ErrorModel = "systematic"

    def __post_init__(self) -> None:
        if self.Z < 1:
            raise ValueError("Z must be at least 1")
        if self.eta <= 0 or self.H <= 0 or self.sigma < 0:
            raise ValueError("eta and H must be positive and sigma non-negative")
        if self.error_model not in ("independent", "systematic"):
            raise ValueError(f"unknown error model {self.error_model!r}")

    def analytic_variance(self) -> np.ndarray:
        """Exact variance after steps ``1..Z``."""
        z = np.arange(1, self.Z + 1, dtype=np.float64)
        scale = (self.eta * self.H * self.sigma) ** 2
        return scale * (z if self.error_model == "independent" else z * z)


@dataclass(frozen=True)
class DiffSimConfig:
    schedule: NoiseSchedule
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass
class VarianceCurve:
    """Estimated variance per step.

    ``contribution`` (diffusion only) holds the estimated variance each
    step's injected error leaves in the final deviation.
    """

    steps: np.ndarray
    variance: np.ndarray
    trials: int
    contribution: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        if self.trials < MIN_TRIALS:
            raise ValueError(f"need at least {MIN_TRIALS} trials")
        if (self.variance < 0).any():
            raise ValueError("variances must be non-negative")

    @property
    def final(self) -> float:
        return float(self.variance[-1])


def _check_trials(trials: int) -> None:
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}, got {trials}")


def simulate_traditional(cfg: TradSimConfig, trials: int = 10_000, seed: int = 0) -> VarianceCurve:
    """Variance of the accumulated deviation after each of ``Z`` steps."""
    _check_trials(trials)
    rng = np.random.default_rng(seed)
    scale = cfg.eta * cfg.H
    if cfg.error_model == "independent":
        eps = rng.normal(0.0, cfg.sigma, size=(trials, cfg.Z))
    else:
        bias = rng.normal(0.0, cfg.sigma, size=(trials, 1))
        eps = np.repeat(bias, cfg.Z, axis=1)
    deviation = _kernels.accumulate(scale * eps)
    return VarianceCurve(np.arange(1, cfg.Z + 1), deviation.var(axis=0), trials)


def attenuation(sched: NoiseSchedule) -> np.ndarray:
    """``prod_{s<=t} gamma_s`` for ``t = 1..T``: the weight of ``delta_t`` in the final deviation."""
    return np.exp(np.cumsum(np.log(sched.gamma)))


def simulate_diffusion(cfg: DiffSimConfig, trials: int = 10_000, seed: int = 0) -> VarianceCurve:
    """Inject ``delta_t ~ N(0, sigma^2)`` at each reverse step and propagate.

    ``variance[k]`` is the variance of the deviation after ``k + 1`` reverse
    steps (the last entry is the terminal deviation ``D_0``); ``steps``
    counts reverse steps taken. ``contribution[t - 1]`` estimates the
    variance that ``delta_t`` alone leaves in ``D_0``.
    """
    _check_trials(trials)
    rng = np.random.default_rng(seed)
    sched = cfg.schedule
    T = sched.T
    delta = rng.normal(0.0, cfg.sigma, size=(trials, T))
    path = _kernels.gamma_recursion(sched.gamma, delta)
    weights = attenuation(sched)
    contribution = (weights[None, :] * delta).var(axis=0)
    return VarianceCurve(np.arange(1, T + 1), path[:, 1:].var(axis=0), trials, contribution)


def analytic_diffusion_variance(cfg: DiffSimConfig) -> float:
    """Exact variance of ``D_0``: ``sigma^2 * sum_t (prod_{s<=t} gamma_s)^2``."""
    return float(cfg.sigma ** 2 * np.sum(attenuation(cfg.schedule) ** 2))


def fit_loglog_slope(curve: VarianceCurve, window: tuple[int, int] | None = None) -> float:
    """Least-squares slope of ``log variance`` against ``log step``.

    Args:
        curve: Curve to fit.
        window: Inclusive ``(first, last)`` step range; default all steps.
    """
    steps = np.asarray(curve.steps, dtype=np.float64)
    var = np.asarray(curve.variance, dtype=np.float64)
    if window is not None:
        keep = (steps >= window[0]) & (steps <= window[1])
        steps, var = steps[keep], var[keep]
    if steps.size < 10:
        raise ValueError("need at least 10 points to fit a slope")
    if (var <= 0).any() or (steps <= 0).any():
        raise ValueError("non-positive variance or step in the fit window")
    slope, _ = np.polyfit(np.log(steps), np.log(var), 1)
    return float(slope)


def write_csv(curve: VarianceCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["step", "variance"] + (["contribution"] if curve.contribution is not None else [])
        w.writerow(header)
        for i, (s, v) in enumerate(zip(curve.steps, curve.variance)):
            row = [int(s), repr(float(v))]
            if curve.contribution is not None:
                row.append(repr(float(curve.contribution[i])))
            w.writerow(row)


def write_gnuplot(curves: dict[str, VarianceCurve], path: str | Path) -> None:
    """One indexed data block per curve (``plot 'f.dat' index 0``, ...)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, (name, c) in enumerate(curves.items()):
            if i:
                fh.write("\n\n")
            fh.write(f"# {name}\n# step variance\n")
            for s, v in zip(c.steps, c.variance):
                fh.write(f"{int(s)} {float(v):.10g}\n")


@dataclass(frozen=True)
class ErrsimSummary:
    independent_slope: float
    systematic_slope: float
    diffusion_final: dict[str, float]
    diffusion_bound: float
    systematic_final: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "independent_slope": self.independent_slope,
            "systematic_slope": self.systematic_slope,
            "diffusion_final_variance": self.diffusion_final,
            "diffusion_bound_T_sigma2": self.diffusion_bound,
            "systematic_final_variance": self.systematic_final,
            "trials": self.trials,
        }


def run_comparison(
    schedules: dict[str, NoiseSchedule],
    sigma: float = 1.0,
    eta: float = 1.0,
    H: float = 1.0,
    trials: int = 10_000,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> tuple[ErrsimSummary, dict[str, VarianceCurve]]:
    """Both traditional models and one diffusion run per schedule at matched step counts.

    The traditional step count matches the first schedule's ``T``. With
    ``out_dir`` set, writes one CSV per curve, ``summary.json`` and
    ``curves.dat``.
    """
    if not schedules:
        raise ValueError("need at least one schedule")
    T = next(iter(schedules.values())).T
    ss = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(2 + len(schedules))]
    curves: dict[str, VarianceCurve] = {
        "traditional_independent": simulate_traditional(TradSimConfig(T, eta, H, sigma, "independent"), trials, seeds[0]),
        "traditional_systematic": simulate_traditional(TradSimConfig(T, eta, H, sigma, "systematic"), trials, seeds[1]),
    }
    finals = {}
    for (name, sched), s in zip(schedules.items(), seeds[2:]):
        curve = simulate_diffusion(DiffSimConfig(sched, sigma), trials, s)
        curves[f"diffusion_{name}"] = curve
        finals[name] = curve.final
    summary = ErrsimSummary(
        independent_slope=fit_loglog_slope(curves["traditional_independent"]),
        systematic_slope=fit_loglog_slope(curves["traditional_systematic"]),
        diffusion_final=finals,
        diffusion_bound=T * sigma ** 2,
        systematic_final=curves["traditional_systematic"].final,
        trials=trials,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, c in curves.items():
            write_csv(c, out / f"{name}.csv")
        (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
        write_gnuplot(curves, out / "curves.dat")
    return summary, curves
