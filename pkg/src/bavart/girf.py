"""Generalized impulse responses with optional pinned (zero-lower-bound) paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .forecast import _lag_matrix, evaluate_forests
from .sampler import PosteriorDraws

QUANTILES = (0.16, 0.25, 0.50, 0.75, 0.84)


@dataclass(frozen=True)
class GirfSpec:
    """Shock ``shock`` (index into the fitted variable order) of size one
    structural standard deviation (``size="sd"``) or one (``size="unit"``).

    ``restricted`` variables are held at ``pin_path[s][i]`` (default 0) in
    both the shocked and the baseline path.  ``history_end`` is the number of
    in-sample observations to condition on (default: all).  With
    ``future_shocks="simulate"`` both paths share simulated structural shocks
    after impact; with ``"none"`` all other shocks are zero.
    """

    shock: int
    size: str = "sd"
    horizon: int = 24
    restricted: tuple[int, ...] = ()
    history_end: int | None = None
    future_shocks: str = "none"
    pin_path: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "restricted", tuple(int(r) for r in self.restricted))
        if self.size not in ("sd", "unit"):
            raise ConfigError("girf.size", f"size must be 'sd' or 'unit', got {self.size!r}")
        if self.horizon < 1:
            raise ConfigError("girf.horizon", "horizon must be >= 1")
        if self.future_shocks not in ("none", "simulate"):
            raise ConfigError("girf.future_shocks", "future_shocks must be 'none' or 'simulate'")
        if self.shock in self.restricted:
            raise ConfigError("girf.shock", "the shocked variable cannot also be restricted")
        if self.pin_path is not None:
            pins = tuple(tuple(float(v) for v in row) for row in self.pin_path)
            if len(pins) != self.horizon or any(len(row) != len(self.restricted) for row in pins):
                raise ConfigError("girf.pin_path", "pin_path needs one value per horizon and restricted variable")
            object.__setattr__(self, "pin_path", pins)

    def validate(self, M: int, T: int) -> None:
        if not 0 <= self.shock < M:
            raise ConfigError("girf.shock", f"shock index {self.shock} outside 0..{M - 1}")
        if any(not 0 <= r < M for r in self.restricted):
            raise ConfigError("girf.restricted", f"restricted indices must lie in 0..{M - 1}")
        if self.history_end is not None and not 1 <= self.history_end <= T:
            raise ConfigError("girf.history_end", f"history_end must lie in 1..{T}")


@dataclass(frozen=True)
class GirfResult:
    """``responses[d, s, j]``: shocked minus baseline for variable j at
    horizon s (s = 0 is impact)."""

    responses: np.ndarray
    names: tuple[str, ...]
    spec: GirfSpec

    def quantiles(self, q=QUANTILES) -> np.ndarray:
        return np.quantile(self.responses, q, axis=0)

    def table(self, q=QUANTILES) -> list[dict]:
        qs = self.quantiles(q)
        rows = []
        for s in range(self.responses.shape[1]):
            for j, name in enumerate(self.names):
                row = {"horizon": s, "variable": name}
                for k, level in enumerate(q):
                    row[f"q{round(level * 100):02d}"] = float(qs[k, s, j])
                rows.append(row)
        return rows


def shock_size(draws: PosteriorDraws, spec: GirfSpec) -> np.ndarray:
    if spec.size == "unit":
        return np.ones(draws.n_draws)
    return np.exp(0.5 * draws.c[:, spec.shock])


def girf(draws: PosteriorDraws, spec: GirfSpec, rng: np.random.Generator | None = None,
         threads: int = 1) -> GirfResult:
    """Shocked minus baseline paths with H fixed at its unconditional mean."""
    values = draws.data.values
    D, M, P = draws.n_draws, draws.M, draws.P
    spec.validate(M, len(values))
    end = spec.history_end or len(values)
    if end < P:
        raise ConfigError("girf.history_end", f"history needs at least {P} observations")
    A0 = draws.A0()
    delta = shock_size(draws, spec)
    if spec.future_shocks == "simulate":
        if rng is None:
            raise ValueError("simulated future shocks need an rng")
        e = np.exp(0.5 * draws.c)[None] * rng.standard_normal((spec.horizon, D, M))
    else:
        e = np.zeros((spec.horizon, D, M))
    restricted = list(spec.restricted)
    pins = np.zeros((spec.horizon, len(restricted))) if spec.pin_path is None else np.asarray(spec.pin_path)
    hist = np.broadcast_to(values[end - P:end], (D, P, M)).copy()
    hist_s, hist_b = hist, hist.copy()
    out = np.empty((D, spec.horizon, M))
    for s in range(spec.horizon):
        F_s = evaluate_forests(draws, _lag_matrix(hist_s, P), threads)
        F_b = evaluate_forests(draws, _lag_matrix(hist_b, P), threads)
        e_s = e[s].copy()
        if s == 0:
            e_s[:, spec.shock] += delta
        y_s = F_s + np.einsum("dij,dj->di", A0, e_s)
        y_b = F_b + np.einsum("dij,dj->di", A0, e[s])
        if restricted:
            y_s[:, restricted] = pins[s]
            y_b[:, restricted] = pins[s]
        out[:, s] = y_s - y_b
        hist_s = np.concatenate([hist_s[:, 1:], y_s[:, None]], axis=1)
        hist_b = np.concatenate([hist_b[:, 1:], y_b[:, None]], axis=1)
    return GirfResult(out, tuple(draws.names), spec)


def analytic_var_irf(Phi: np.ndarray, A0: np.ndarray, shock: int, delta: float, horizon: int) -> np.ndarray:
    """Impulse response of a linear VAR(1): Phi^s A0 e_shock delta, s = 0..horizon-1."""
    out = np.empty((horizon, A0.shape[0]))
    v = A0[:, shock] * delta
    for s in range(horizon):
        out[s] = v
        v = Phi @ v
    return out
