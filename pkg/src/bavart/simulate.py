"""Synthetic data generators with known ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import NsCurveConfig, TimeSeriesMatrix, ns_loading_matrix
from .errors import ConfigError

KINDS = ("linear_var", "threshold_var", "sv", "friedman", "ns_yields")


@dataclass(frozen=True)
class Simulation:
    data: TimeSeriesMatrix
    truth: dict = field(default_factory=dict)


def _names(M: int, prefix: str = "y") -> tuple[str, ...]:
    return tuple(f"{prefix}{j + 1}" for j in range(M))


def _matrix(value, shape, key) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ConfigError(key, f"expected shape {shape}, got {arr.shape}")
    return arr


def linear_var(phi, a0=None, sd=None, T: int = 400, burn: int = 100, seed: int = 0,
               intercept=None) -> Simulation:
    """y_t = b + Phi y_{t-1} + A0 diag(sd) z_t."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ConfigError("simulate.phi", "phi must be a square matrix")
    M = phi.shape[0]
    if np.max(np.abs(np.linalg.eigvals(phi))) >= 1:
        raise ConfigError("simulate.phi", "phi is not stable (spectral radius >= 1)")
    a0 = np.eye(M) if a0 is None else _matrix(a0, (M, M), "simulate.a0")
    if not np.allclose(np.triu(a0, 1), 0) or not np.allclose(np.diag(a0), 1):
        raise ConfigError("simulate.a0", "a0 must be unit lower triangular")
    sd = np.ones(M) if sd is None else _matrix(sd, (M,), "simulate.sd")
    b = np.zeros(M) if intercept is None else _matrix(intercept, (M,), "simulate.intercept")
    _check_length(T, burn)
    rng = np.random.default_rng(seed)
    y = np.zeros((T + burn, M))
    for t in range(1, T + burn):
        y[t] = b + phi @ y[t - 1] + a0 @ (sd * rng.standard_normal(M))
    y = y[burn:]
    truth = {"kind": "linear_var", "phi": phi.tolist(), "a0": a0.tolist(), "sd": sd.tolist(),
             "intercept": b.tolist(), "seed": seed, "T": T, "burn": burn}
    return Simulation(TimeSeriesMatrix(y, _names(M)), truth)


def threshold_var(phi_low, phi_high, threshold: float = 0.0, switch_var: int = 0, a0=None, sd=None,
                  intercept_low=None, intercept_high=None, T: int = 400, burn: int = 100,
                  seed: int = 0) -> Simulation:
    """Two-regime VAR(1); the regime at t is 'low' when y_{t-1, switch_var} <= threshold."""
    phi_low = np.asarray(phi_low, dtype=float)
    M = phi_low.shape[0]
    phi_high = _matrix(phi_high, (M, M), "simulate.phi_high")
    a0 = np.eye(M) if a0 is None else _matrix(a0, (M, M), "simulate.a0")
    sd = np.ones(M) if sd is None else _matrix(sd, (M,), "simulate.sd")
    b_lo = np.zeros(M) if intercept_low is None else _matrix(intercept_low, (M,), "simulate.intercept_low")
    b_hi = np.zeros(M) if intercept_high is None else _matrix(intercept_high, (M,), "simulate.intercept_high")
    if not 0 <= switch_var < M:
        raise ConfigError("simulate.switch_var", "switch_var out of range")
    for key, phi in (("simulate.phi_low", phi_low), ("simulate.phi_high", phi_high)):
        if np.max(np.abs(np.linalg.eigvals(phi))) >= 1:
            raise ConfigError(key, "regime coefficient matrix is not stable")
    _check_length(T, burn)
    rng = np.random.default_rng(seed)
    y = np.zeros((T + burn, M))
    regime = np.zeros(T + burn, dtype=int)
    for t in range(1, T + burn):
        low = y[t - 1, switch_var] <= threshold
        regime[t] = 0 if low else 1
        mean = (b_lo + phi_low @ y[t - 1]) if low else (b_hi + phi_high @ y[t - 1])
        y[t] = mean + a0 @ (sd * rng.standard_normal(M))
    truth = {"kind": "threshold_var", "phi_low": phi_low.tolist(), "phi_high": phi_high.tolist(),
             "intercept_low": b_lo.tolist(), "intercept_high": b_hi.tolist(), "threshold": threshold,
             "switch_var": switch_var, "a0": a0.tolist(), "sd": sd.tolist(), "regime": regime[burn:].tolist(),
             "seed": seed, "T": T, "burn": burn}
    return Simulation(TimeSeriesMatrix(y[burn:], _names(M)), truth)


def threshold_var_mean(truth: dict, y_prev: np.ndarray) -> np.ndarray:
    """Conditional mean of the threshold VAR given the previous observation(s)."""
    y_prev = np.atleast_2d(y_prev)
    low = y_prev[:, truth["switch_var"]] <= truth["threshold"]
    lo = np.asarray(truth["intercept_low"]) + y_prev @ np.asarray(truth["phi_low"]).T
    hi = np.asarray(truth["intercept_high"]) + y_prev @ np.asarray(truth["phi_high"]).T
    return np.where(low[:, None], lo, hi)


def sv_series(c: float = -1.0, rho: float = 0.95, sigma_h: float = 0.2, T: int = 1000,
              seed: int = 0) -> Simulation:
    """y_t = exp(h_t / 2) z_t with stationary AR(1) log-variance h_t."""
    if not abs(rho) < 1:
        raise ConfigError("simulate.rho", "rho must lie in (-1, 1)")
    if not sigma_h > 0:
        raise ConfigError("simulate.sigma_h", "sigma_h must be positive")
    _check_length(T, 0)
    rng = np.random.default_rng(seed)
    h = np.empty(T)
    prev = c + sigma_h / math.sqrt(1 - rho**2) * rng.standard_normal()
    for t in range(T):
        prev = c + rho * (prev - c) + sigma_h * rng.standard_normal()
        h[t] = prev
    y = np.exp(h / 2) * rng.standard_normal(T)
    truth = {"kind": "sv", "c": c, "rho": rho, "sigma_h": sigma_h, "h": h.tolist(), "seed": seed, "T": T}
    return Simulation(TimeSeriesMatrix(y[:, None], ("y1",)), truth)


def friedman_inputs(lags: np.ndarray) -> np.ndarray:
    """Squash lagged values into (0, 1) for the Friedman function."""
    return 1.0 / (1.0 + np.exp(-(lags - 14.0) / 5.0))


def friedman_function(u: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(u)
    return (10 * np.sin(np.pi * u[:, 0] * u[:, 1]) + 20 * (u[:, 2] - 0.5) ** 2
            + 10 * u[:, 3] + 5 * u[:, 4])


def friedman(T: int = 500, noise_sd: float = 1.0, burn: int = 100, seed: int = 0) -> Simulation:
    """Univariate series whose conditional mean is the Friedman function of
    its first five lags (squashed into the unit cube)."""
    _check_length(T, burn)
    if not noise_sd > 0:
        raise ConfigError("simulate.noise_sd", "noise_sd must be positive")
    rng = np.random.default_rng(seed)
    n = T + burn + 5
    y = np.full(n, 14.0)
    f = np.zeros(n)
    for t in range(5, n):
        u = friedman_inputs(y[t - 5:t][::-1])
        f[t] = friedman_function(u)[0]
        y[t] = f[t] + noise_sd * rng.standard_normal()
    keep = slice(burn + 5, n)
    truth = {"kind": "friedman", "noise_sd": noise_sd, "mean": f[keep].tolist(), "lags": 5,
             "seed": seed, "T": T, "burn": burn}
    return Simulation(TimeSeriesMatrix(y[keep][:, None], ("y1",)), truth)


def ns_yields(maturities=(3, 12, 36, 60, 84, 120, 180), gamma: float = 0.0609, T: int = 200,
              noise_sd: float = 0.0, persistence=(0.95, 0.9, 0.8), factor_sd=(0.1, 0.15, 0.25),
              factor_mean=(4.0, -1.0, 0.5), burn: int = 100, seed: int = 0) -> Simulation:
    """Yields generated from AR(1) level/slope/curvature factors via the NS loadings."""
    cfg = NsCurveConfig(tuple(maturities), gamma)
    _check_length(T, burn)
    rho = _matrix(persistence, (3,), "simulate.persistence")
    sd = _matrix(factor_sd, (3,), "simulate.factor_sd")
    mean = _matrix(factor_mean, (3,), "simulate.factor_mean")
    if np.any(np.abs(rho) >= 1):
        raise ConfigError("simulate.persistence", "factor persistence must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    f = np.tile(mean, (T + burn, 1))
    for t in range(1, T + burn):
        f[t] = mean + rho * (f[t - 1] - mean) + sd * rng.standard_normal(3)
    f = f[burn:]
    y = f @ ns_loading_matrix(cfg).T + noise_sd * rng.standard_normal((T, len(cfg.maturities)))
    names = tuple(f"m{m:g}" for m in cfg.maturities)
    truth = {"kind": "ns_yields", "maturities": list(cfg.maturities), "gamma": gamma,
             "factors": f.tolist(), "persistence": rho.tolist(), "factor_sd": sd.tolist(),
             "factor_mean": mean.tolist(), "noise_sd": noise_sd, "seed": seed, "T": T, "burn": burn}
    return Simulation(TimeSeriesMatrix(y, names), truth)


def _check_length(T: int, burn: int) -> None:
    if T < 2:
        raise ConfigError("simulate.T", "T must be >= 2")
    if burn < 0:
        raise ConfigError("simulate.burn", "burn must be >= 0")


GENERATORS = {
    "linear_var": linear_var,
    "threshold_var": threshold_var,
    "sv": sv_series,
    "friedman": friedman,
    "ns_yields": ns_yields,
}


def simulate(kind: str, **params) -> Simulation:
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ConfigError("simulate.kind", f"unknown DGP {kind!r}; choose from {', '.join(KINDS)}") from None
    try:
        return gen(**params)
    except TypeError as exc:
        raise ConfigError("simulate.params", str(exc)) from None
