"""Predictive simulation, forecast scores and the expanding-window backtest."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .data import NsCurveConfig, TimeSeriesMatrix, ns_extract_factors, ns_map_forecasts
from .errors import ConfigError
from .sampler import ModelConfig, PosteriorDraws, estimate, rng_stream


@dataclass(frozen=True)
class PredictiveDraws:
    """Simulated paths: ``values[d, s, j]`` is variable j, s+1 steps after ``origin``.

    ``origin`` is the number of observations the forecast conditions on.
    """

    values: np.ndarray
    names: tuple[str, ...]
    origin: int

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != len(self.names):
            raise ValueError("values must be draws x horizons x variables")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("predictive draws contain non-finite values")

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    def median(self) -> np.ndarray:
        return np.median(self.values, axis=0)

    def quantile(self, q) -> np.ndarray:
        return np.quantile(self.values, q, axis=0)


def _lag_matrix(hist: np.ndarray, P: int) -> np.ndarray:
    """hist is (draws, >=P, M) with the newest row last; returns (draws, P*M)."""
    return np.ascontiguousarray(hist[:, ::-1][:, :P].reshape(hist.shape[0], -1))


def evaluate_forests(draws: PosteriorDraws, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """Forest of draw d evaluated at X[d]; result is (draws, M).

    Work is split over contiguous blocks of draws, so the result does not
    depend on ``threads``.
    """
    f = draws.forest
    D, M, _ = f.roots.shape
    out = np.empty((D, M))
    X = np.ascontiguousarray(X, dtype=float)

    def run(lo, hi):
        K.eval_draws(f.roots[lo:hi], f.var, f.threshold, f.value, f.left, f.right, X[lo:hi], out[lo:hi])

    if threads <= 1 or D < 2:
        run(0, D)
    else:
        edges = np.linspace(0, D, min(threads, D) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run(*b), zip(edges[:-1], edges[1:])))
    return out


def _align(draws: PosteriorDraws, Y: TimeSeriesMatrix | None) -> np.ndarray:
    if Y is None:
        return draws.data.values
    if tuple(Y.names) != tuple(draws.names):
        try:
            Y = Y.reorder(draws.names)
        except ValueError:
            raise ValueError(f"series {list(Y.names)} do not match the fitted {list(draws.names)}") from None
    n_fit = draws.data.T
    if Y.T < n_fit:
        raise ValueError(f"history has {Y.T} rows but the model was fitted on {n_fit}")
    return Y.values


def volatility_at_origin(draws: PosteriorDraws, gap: int, rng: np.random.Generator) -> np.ndarray:
    """Log-volatility at the forecast origin, propagating the AR(1) over
    ``gap`` periods observed after the estimation sample."""
    h = draws.h[:, :, -1].copy()
    sd = np.sqrt(draws.sigma2_h)
    for _ in range(gap):
        h = draws.c + draws.rho * (h - draws.c) + sd * rng.standard_normal(h.shape)
    return h


def predict(draws: PosteriorDraws, Y: TimeSeriesMatrix | None, horizon: int, rng: np.random.Generator,
            threads: int = 1) -> PredictiveDraws:
    """Simulate ``horizon`` steps ahead from the end of ``Y`` for every draw."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if draws.n_draws < 1:
        raise ValueError("no posterior draws")
    values = _align(draws, Y)
    D, M, P = draws.n_draws, draws.M, draws.P
    gap = values.shape[0] - draws.data.T
    h = volatility_at_origin(draws, gap, rng)
    A0 = draws.A0()
    sd = np.sqrt(draws.sigma2_h)
    z_h = rng.standard_normal((horizon, D, M))
    z_e = rng.standard_normal((horizon, D, M))
    hist = np.broadcast_to(values[-P:], (D, P, M)).copy()
    out = np.empty((D, horizon, M))
    for s in range(horizon):
        F = evaluate_forests(draws, _lag_matrix(hist, P), threads)
        h = draws.c + draws.rho * (h - draws.c) + sd * z_h[s]
        e = np.exp(0.5 * h) * z_e[s]
        y = F + np.einsum("dij,dj->di", A0, e)
        out[:, s] = y
        hist = np.concatenate([hist[:, 1:], y[:, None, :]], axis=1)
    return PredictiveDraws(out, tuple(draws.names), values.shape[0])


def msfe(forecasts, outcomes) -> np.ndarray:
    forecasts = np.asarray(forecasts, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    if forecasts.shape != outcomes.shape:
        raise ValueError("forecasts and outcomes must have the same shape")
    if forecasts.shape[0] == 0:
        raise ValueError("no forecasts to score")
    return np.mean((forecasts - outcomes) ** 2, axis=0)


def crps(samples, y):
    """Empirical CRPS, mean|x - y| - (1/2M^2) sum_ij |x_i - x_j|.

    ``samples`` has the draws on axis 0; ``y`` broadcasts against the rest.
    """
    x = np.sort(np.asarray(samples, dtype=float), axis=0)
    m = x.shape[0]
    if m < 2:
        raise ValueError("CRPS needs at least 2 samples")
    y = np.asarray(y, dtype=float)
    first = np.mean(np.abs(x - y), axis=0)
    # sum_ij |x_i - x_j| = 2 sum_i (2i - m - 1) x_(i) for sorted x, i = 1..m
    weights = (2 * np.arange(1, m + 1) - m - 1).reshape((m,) + (1,) * (x.ndim - 1))
    spread = 2.0 * np.sum(weights * x, axis=0)
    out = first - spread / (2.0 * m * m)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_crps(mu, sigma, y) -> float:
    from scipy.stats import norm

    z = (y - mu) / sigma
    return float(sigma * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / math.sqrt(math.pi)))


@dataclass(frozen=True)
class BacktestConfig:
    holdout: int
    horizons: tuple[int, ...] = (1, 3)
    reestimate_every: int = 1
    baseline_draws: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if self.holdout < 1:
            raise ConfigError("backtest.holdout", "holdout must be >= 1")
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigError("backtest.horizons", "horizons must be positive integers")
        if max(self.horizons) > self.holdout:
            raise ConfigError("backtest.horizons", "longest horizon exceeds the hold-out")
        if self.reestimate_every < 1:
            raise ConfigError("backtest.reestimate_every", "reestimate_every must be >= 1")
        if self.baseline_draws < 2:
            raise ConfigError("backtest.baseline_draws", "baseline_draws must be >= 2")


@dataclass
class BacktestResult:
    """Per-forecast records and summary tables.

    ``records`` rows: model, origin, horizon, series, point, outcome, crps.
    """

    records: list
    series: tuple[str, ...]
    horizons: tuple[int, ...]

    def table(self, model: str = "bavart") -> list[dict]:
        rows = []
        for h in self.horizons:
            for name in self.series:
                sel = [r for r in self.records if r["model"] == model and r["horizon"] == h and r["series"] == name]
                point = np.array([r["point"] for r in sel])
                obs = np.array([r["outcome"] for r in sel])
                rows.append({
                    "model": model, "series": name, "horizon": h, "n": len(sel),
                    "msfe": float(msfe(point, obs)),
                    "crps": float(np.mean([r["crps"] for r in sel])),
                })
        return rows

    def count(self, horizon: int, model: str = "bavart") -> int:
        """Number of scored forecast origins at ``horizon``."""
        return len({r["origin"] for r in self.records if r["model"] == model and r["horizon"] == horizon})


def _window_seed(seed: int, window: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(window,)).generate_state(1)[0])


def backtest(Y: TimeSeriesMatrix, model: ModelConfig, bt: BacktestConfig, ns: NsCurveConfig | None = None,
             progress=None) -> BacktestResult:
    """Expanding-window evaluation over the last ``bt.holdout`` observations.

    With ``ns`` set, ``Y`` holds yields; the model runs on extracted factors and
    every draw is mapped to yields before taking medians and scores.
    """
    T = Y.T
    H = bt.holdout
    if H >= T:
        raise ConfigError("backtest.holdout", f"hold-out {H} is not shorter than the sample ({T})")
    h_max = max(bt.horizons)
    target = Y
    modelled = ns_extract_factors(Y, ns) if ns is not None else Y
    if ns is None and model.ordering is not None:
        target = Y.reorder(model.ordering)
    records = []
    draws = None
    for i in range(H):
        origin = T - H + i
        if i % bt.reestimate_every == 0:
            window_cfg = replace(model, seed=_window_seed(model.seed, i))
            draws = estimate(modelled.head(origin), window_cfg)
        rng = rng_stream(model.seed, 1 << 20, i)
        steps = min(h_max, T - origin)
        pred = predict(draws, modelled.head(origin), steps, rng, threads=model.threads)
        sims = ns_map_forecasts(pred.values, ns) if ns is not None else pred.values
        base_rng = rng_stream(model.seed, 1 << 21, i)
        train = target.values[:origin]
        base = train.mean(axis=0) + train.std(axis=0, ddof=1) * base_rng.standard_normal(
            (bt.baseline_draws, steps, target.M))
        for h in bt.horizons:
            if h > steps:
                continue
            outcome = target.values[origin + h - 1]
            for model_name, paths in (("bavart", sims), ("white_noise", base)):
                point = np.median(paths[:, h - 1], axis=0)
                scores = crps(paths[:, h - 1], outcome)
                for j, name in enumerate(target.names):
                    records.append({
                        "model": model_name, "origin": origin, "horizon": h, "series": name,
                        "point": float(point[j]), "outcome": float(outcome[j]), "crps": float(scores[j]),
                    })
        if progress is not None:
            progress(i + 1, H)
    return BacktestResult(records, tuple(target.names), bt.horizons)
