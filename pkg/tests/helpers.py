"""Hand-built posterior draws with known trees and parameters."""

from __future__ import annotations

import numpy as np

from bavart.data import TimeSeriesMatrix
from bavart.sampler import CompactForest, ModelConfig, PosteriorDraws
from bavart.tree import DecisionTree


def forest_from_trees(trees) -> CompactForest:
    """``trees[d][j][k]`` is a DecisionTree (thresholds set) or a float (stump value)."""
    D, M, N = len(trees), len(trees[0]), len(trees[0][0])
    cols = {k: [] for k in ("draw", "equation", "tree", "node_id", "var", "threshold", "value")}
    for d in range(D):
        for j in range(M):
            for k in range(N):
                t = trees[d][j][k]
                if not isinstance(t, DecisionTree):
                    t = DecisionTree.stump(1, float(t))
                for i in np.flatnonzero(t.var != -2):
                    leaf = t.var[i] < 0
                    for key, val in (("draw", d), ("equation", j), ("tree", k), ("node_id", i),
                                     ("var", -1 if leaf else t.var[i]),
                                     ("threshold", np.nan if leaf else t.threshold[i]),
                                     ("value", t.mu[i] if leaf else np.nan)):
                        cols[key].append(val)
    arr = {k: np.asarray(v) for k, v in cols.items()}
    return CompactForest.from_nodes(arr["draw"], arr["equation"], arr["tree"], arr["node_id"], arr["var"],
                                    arr["threshold"], arr["value"], (D, M, N))


def make_draws(Y, trees, a=None, c=None, rho=None, sigma2_h=None, h_last=None, lags: int = 1) -> PosteriorDraws:
    """Draws with fixed parameters; every array argument has a leading draw axis."""
    if not isinstance(Y, TimeSeriesMatrix):
        Y = TimeSeriesMatrix(np.asarray(Y, float), tuple(f"y{j + 1}" for j in range(np.shape(Y)[1])))
    D, M, N = len(trees), len(trees[0]), len(trees[0][0])
    n = Y.T - lags
    a = np.zeros((D, M * (M - 1) // 2)) if a is None else np.asarray(a, float)
    c = np.zeros((D, M)) if c is None else np.asarray(c, float)
    rho = np.zeros((D, M)) if rho is None else np.asarray(rho, float)
    sigma2_h = np.zeros((D, M)) if sigma2_h is None else np.asarray(sigma2_h, float)
    h = np.repeat(c[:, :, None], n, axis=2)
    if h_last is not None:
        h[:, :, -1] = h_last
    cfg = ModelConfig(lags=lags, n_trees=N, sweeps=D + 1, burn_in=1)
    return PosteriorDraws(config=cfg, data=Y, forest=forest_from_trees(trees), a=a, c=c, rho=rho,
                          sigma2_h=sigma2_h, h=h, tau2=np.ones_like(a), lam2=np.ones(D), loglik=np.zeros(D + 1),
                          leaf_variance=np.ones(M), move_counts=np.zeros((M, 4, 2), dtype=np.int64))


def tile_draws(draws: PosteriorDraws, reps: int) -> PosteriorDraws:
    """Repeat every draw ``reps`` times (for Monte Carlo moments of a fixed parameter)."""
    f = draws.forest
    n = len(f.var)
    shift = (np.arange(reps) * n)[:, None]
    roots = (f.roots[None] + shift[:, :, None, None]).reshape((-1,) + f.roots.shape[1:])

    def links(arr):
        out = np.tile(arr, reps)
        return np.where(out >= 0, out + np.repeat(np.arange(reps) * n, n), -1)

    forest = CompactForest(np.tile(f.var, reps), np.tile(f.threshold, reps), np.tile(f.value, reps),
                           links(f.left), links(f.right), np.tile(f.node_id, reps), roots)

    def rep(x):
        return np.tile(x, (reps,) + (1,) * (x.ndim - 1))

    D = draws.n_draws * reps
    return PosteriorDraws(config=draws.config, data=draws.data, forest=forest, a=rep(draws.a), c=rep(draws.c),
                          rho=rep(draws.rho), sigma2_h=rep(draws.sigma2_h), h=rep(draws.h), tau2=rep(draws.tau2),
                          lam2=rep(draws.lam2), loglik=np.zeros(D + 1), leaf_variance=draws.leaf_variance,
                          move_counts=draws.move_counts)
