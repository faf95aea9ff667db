"""Stochastic volatility: AR(1) log-variances sampled with the 10-component
log-chi-square mixture and ancillarity-sufficiency interweaving."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

# 10-component normal mixture approximating log(chi^2_1) (Omori et al. 2007)
MIX_WEIGHTS = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                        0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIX_MEANS = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                      -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIX_VARS = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                     0.98583, 1.57469, 2.54498, 4.16591, 7.33342])
LOG_OFFSET = 1e-10


@dataclass(frozen=True)
class SvPrior:
    c_mean: float = 0.0
    c_var: float = 100.0
    rho_a: float = 25.0
    rho_b: float = 5.0
    sigma2_shape: float = 0.5
    sigma2_rate: float = 0.5

    @property
    def rho_mean(self) -> float:
        return 2.0 * self.rho_a / (self.rho_a + self.rho_b) - 1.0


@dataclass(frozen=True)
class SvState:
    h: np.ndarray
    c: float
    rho: float
    sigma2_h: float
    h0: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"persistence must lie in (-1, 1), got {self.rho}")
        if not self.sigma2_h >= 0:
            raise ValueError("sigma2_h must be non-negative")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("log-volatilities must be finite")

    @classmethod
    def constant(cls, T: int, log_var: float, rho: float = 0.9, sigma2_h: float = 0.1) -> "SvState":
        return cls(h=np.full(T, float(log_var)), c=float(log_var), rho=rho, sigma2_h=sigma2_h, h0=float(log_var))


def _draw_indicators(ystar, h, rng):
    resid = ystar[:, None] - h[:, None] - MIX_MEANS[None, :]
    logp = np.log(MIX_WEIGHTS) - 0.5 * np.log(MIX_VARS) - 0.5 * resid**2 / MIX_VARS
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(len(ystar)) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), len(MIX_WEIGHTS) - 1)


def _draw_states(ystar, r, c, rho, sigma2, rng):
    """Draw (h_0, ..., h_T) from its Gaussian full conditional (banded precision)."""
    T = len(ystar)
    inv_s2 = 1.0 / sigma2
    diag = np.full(T + 1, (1.0 + rho**2) * inv_s2)
    diag[0] = inv_s2
    diag[-1] = inv_s2
    off = np.full(T, -rho * inv_s2)
    b = np.empty(T + 1)
    # prior mean c for every state: Q @ (c * 1)
    b[:] = c * (diag + np.r_[off, 0.0] + np.r_[0.0, off])
    diag[1:] += 1.0 / MIX_VARS[r]
    b[1:] += (ystar - MIX_MEANS[r]) / MIX_VARS[r]
    ab = np.zeros((2, T + 1))
    ab[0] = diag
    ab[1, :-1] = off
    chol = linalg.cholesky_banded(ab, lower=True)
    mean = linalg.cho_solve_banded((chol, True), b)
    upper = np.zeros((2, T + 1))
    upper[0, 1:] = chol[1, :-1]
    upper[1] = chol[0]
    z = linalg.solve_banded((0, 1), upper, rng.standard_normal(T + 1))
    return mean + z


def _log_rho_weight(rho, x0, sigma2, prior: SvPrior):
    if not -1.0 < rho < 1.0:
        return -np.inf
    u = (rho + 1.0) / 2.0
    lp = (prior.rho_a - 1.0) * math.log(u) + (prior.rho_b - 1.0) * math.log1p(-u)
    return lp + 0.5 * math.log(1.0 - rho**2) - 0.5 * x0**2 * (1.0 - rho**2) / sigma2


def _centered_update(h_all, c, rho, sigma2, prior: SvPrior, rng):
    T = len(h_all) - 1
    # unconditional mean
    d = h_all[1:] - rho * h_all[:-1]
    prec = (1.0 - rho**2) / sigma2 + T * (1.0 - rho) ** 2 / sigma2 + 1.0 / prior.c_var
    num = (1.0 - rho**2) * h_all[0] / sigma2 + (1.0 - rho) * d.sum() / sigma2 + prior.c_mean / prior.c_var
    c = num / prec + rng.standard_normal() / math.sqrt(prec)

    # persistence: independence proposal from the transition likelihood
    x = h_all - c
    sxx = float(x[:-1] @ x[:-1])
    prop = float(x[1:] @ x[:-1]) / sxx + math.sqrt(sigma2 / sxx) * rng.standard_normal()
    log_u = math.log(rng.random())
    if log_u < _log_rho_weight(prop, x[0], sigma2, prior) - _log_rho_weight(rho, x[0], sigma2, prior):
        rho = prop

    # innovation variance: inverse-gamma proposal from the likelihood, prior as weight
    ssr = float(np.sum((x[1:] - rho * x[:-1]) ** 2)) + x[0] ** 2 * (1.0 - rho**2)
    shape = (T + 1) / 2.0 - 1.0
    prop = (ssr / 2.0) / rng.gamma(shape)
    log_u = math.log(rng.random())

    def log_prior(s2):
        return (prior.sigma2_shape - 1.0) * math.log(s2) - prior.sigma2_rate * s2

    if log_u < log_prior(prop) - log_prior(sigma2):
        sigma2 = prop
    return c, rho, sigma2


def _noncentered_update(ystar, r, h_all, c, sigma2, prior: SvPrior, rng):
    sigma = math.sqrt(sigma2)
    htilde = (h_all - c) / sigma
    v = MIX_VARS[r]
    target = ystar - MIX_MEANS[r]
    D = np.column_stack([np.ones(len(ystar)), htilde[1:]])
    P = D.T @ (D / v[:, None])
    # sigma2 ~ Gamma(1/2, rate 1/(2B)) is the same as +-sigma ~ N(0, B)
    B_sigma = 1.0 / (2.0 * prior.sigma2_rate)
    P[0, 0] += 1.0 / prior.c_var
    P[1, 1] += 1.0 / B_sigma
    rhs = D.T @ (target / v)
    rhs[0] += prior.c_mean / prior.c_var
    L = np.linalg.cholesky(P)
    mean = linalg.cho_solve((L, True), rhs)
    draw = mean + linalg.solve_triangular(L.T, rng.standard_normal(2), lower=False)
    c_new, sigma_new = float(draw[0]), float(draw[1])
    if sigma_new < 0:
        sigma_new = -sigma_new
        htilde = -htilde
    return c_new + sigma_new * htilde, c_new, sigma_new**2


def sample_sv(resid, state: SvState, prior: SvPrior, rng: np.random.Generator) -> SvState:
    """One Gibbs update of the log-volatility path and its AR(1) parameters."""
    resid = np.asarray(resid, dtype=float)
    if not np.all(np.isfinite(resid)):
        raise ValueError("residuals must be finite")
    ystar = np.log(resid**2 + LOG_OFFSET)
    r = _draw_indicators(ystar, state.h, rng)
    h_all = _draw_states(ystar, r, state.c, state.rho, state.sigma2_h, rng)
    c, rho, sigma2 = _centered_update(h_all, state.c, state.rho, state.sigma2_h, prior, rng)
    h_all, c, sigma2 = _noncentered_update(ystar, r, h_all, c, sigma2, prior, rng)
    return SvState(h=h_all[1:], c=c, rho=rho, sigma2_h=sigma2, h0=float(h_all[0]))


def _log_c_target(c, ssq, T, prior: SvPrior):
    return -0.5 * (c - prior.c_mean) ** 2 / prior.c_var - 0.5 * T * c - 0.5 * ssq * math.exp(-c)


def sample_constant_variance(resid, state: SvState, prior: SvPrior, rng: np.random.Generator) -> SvState:
    """Homoscedastic update: h_t = c for all t, c drawn by independence MH
    around the Laplace approximation of its conditional."""
    resid = np.asarray(resid, dtype=float)
    T = len(resid)
    ssq = float(resid @ resid) + LOG_OFFSET
    c = math.log(ssq / T)
    for _ in range(50):
        g = -(c - prior.c_mean) / prior.c_var - 0.5 * T + 0.5 * ssq * math.exp(-c)
        H = -1.0 / prior.c_var - 0.5 * ssq * math.exp(-c)
        step = g / H
        c -= step
        if abs(step) < 1e-12:
            break
    H = -1.0 / prior.c_var - 0.5 * ssq * math.exp(-c)
    scale = 1.5 / math.sqrt(-H)

    def log_q(x):
        return -0.5 * ((x - c) / scale) ** 2

    prop = c + scale * rng.standard_normal()
    cur = state.c
    log_alpha = (_log_c_target(prop, ssq, T, prior) - log_q(prop)) - (_log_c_target(cur, ssq, T, prior) - log_q(cur))
    if math.log(rng.random()) < log_alpha:
        cur = prop
    return SvState(h=np.full(T, cur), c=cur, rho=0.0, sigma2_h=0.0, h0=cur)


def forecast_volatility(state: SvState, horizon: int, rng: np.random.Generator, h_last: float | None = None) -> np.ndarray:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    h = state.h[-1] if h_last is None else h_last
    sigma = math.sqrt(state.sigma2_h)
    out = np.empty(horizon)
    z = rng.standard_normal(horizon)
    for s in range(horizon):
        h = state.c + state.rho * (h - state.c) + sigma * z[s]
        out[s] = h
    return out


def log_likelihood(resid, h) -> float:
    resid = np.asarray(resid, dtype=float)
    return float(-0.5 * np.sum(np.log(2 * np.pi) + h + resid**2 * np.exp(-h)))
