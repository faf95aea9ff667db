"""Gibbs sampler for the sum-of-trees VAR in structural form.

Each equation j is

    y_j = f_j(X) + sum_{l<j} a_jl eps_l + e_j,    e_j ~ N(0, exp(h_j)),

with eps_l = y_l - f_l(X) the reduced-form residuals of earlier equations.
Hence eps = A eps + e with A strictly lower triangular, A0 = (I - A)^-1 and
Sigma_t = A0 H_t A0'.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .data import LagDesign, TimeSeriesMatrix, build_lag_design
from .errors import ConfigError
from .shrinkage import HorseshoeState, sample_covariance_row, update_scales
from .sv import SvPrior, SvState, log_likelihood, sample_constant_variance, sample_sv
from .tree import SplitGrid, TreePriorConfig, leaf_scale

MIN_EFFECTIVE_OBS = 20

# Modelling choices the estimator makes on its own; copied into every manifest.
DECISIONS = {
    "a0_convention": "eps = A eps + e, A strictly lower, A0 = inv(I - A)",
    "cut_points": "observed distinct covariate values at the node, maximum excluded",
    "covariate_choice": "uniform over covariates with >= 2 distinct values at the node",
    "horseshoe_global_scale": "shared across all equations",
    "horseshoe_update_order": "a_j within each equation, scales once after all equations",
    "leaf_variance": "(range / (2 s_tilde sqrt(N)))^2 if leaf_scale_is_stddev else range / (2 s_tilde sqrt(N))",
    "move_probabilities": "grow 0.25, prune 0.25, swap 0.4, change 0.1, renormalised over valid moves",
    "response_scaling": "none",
    "rng_streams": "SeedSequence(seed, spawn_key=(sweep, j)); key (sweep, M) for horseshoe scales",
    "sv_log_offset": "1e-10",
    "sv_mixture": "10-component log chi-square(1) normal mixture",
    "swap_move": "between an internal node and an internal child",
}


@dataclass(frozen=True)
class ModelConfig:
    lags: int = 1
    n_trees: int = 250
    sweeps: int = 5000
    burn_in: int = 2500
    thin: int = 1
    seed: int = 0
    alpha: float = 0.95
    beta: float = 2.0
    s_tilde: float = 2.0
    min_leaf_size: int = 5
    max_depth: int = 8
    sv: bool = True
    ordering: tuple[str, ...] | None = None
    leaf_scale_is_stddev: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.ordering is not None:
            object.__setattr__(self, "ordering", tuple(str(v) for v in self.ordering))
        checks = [
            ("config.sweeps", self.sweeps > self.burn_in, "sweeps must exceed burn_in"),
            ("config.burn_in", self.burn_in >= 0, "burn_in must be >= 0"),
            ("config.thin", self.thin >= 1, "thin must be >= 1"),
            ("config.thin", self.thin >= 1 and (self.sweeps - self.burn_in) % self.thin == 0,
             "sweeps - burn_in must be a multiple of thin"),
            ("config.n_trees", self.n_trees >= 1, "n_trees must be >= 1"),
            ("config.lags", self.lags >= 1, "lags must be >= 1"),
            ("config.alpha", 0 < self.alpha < 1, "alpha must lie in (0, 1)"),
            ("config.beta", self.beta >= 0, "beta must be >= 0"),
            ("config.s_tilde", self.s_tilde > 0, "s_tilde must be positive"),
            ("config.min_leaf_size", self.min_leaf_size >= 1, "min_leaf_size must be >= 1"),
            ("config.max_depth", 1 <= self.max_depth <= 16, "max_depth must be in [1, 16]"),
            ("config.threads", self.threads >= 1, "threads must be >= 1"),
            ("config.seed", self.seed >= 0, "seed must be a non-negative integer"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)

    @property
    def n_draws(self) -> int:
        return (self.sweeps - self.burn_in) // self.thin

    def tree_prior(self, leaf_variance: float = 1.0) -> TreePriorConfig:
        return TreePriorConfig(self.alpha, self.beta, leaf_variance, self.min_leaf_size, self.max_depth)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ordering"] = list(self.ordering) if self.ordering is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("ordering") is not None:
            d["ordering"] = tuple(d["ordering"])
        return cls(**d)


def config_hash(obj) -> str:
    """sha256 of the canonical JSON form of a config mapping."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class EquationState:
    var: np.ndarray
    cut: np.ndarray
    mu: np.ndarray
    leaf_of: np.ndarray
    fit: np.ndarray
    a: np.ndarray
    sv: SvState
    leaf_variance: float
    move_counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 2), dtype=np.int64))

    def tree_fit(self, k: int) -> np.ndarray:
        return self.mu[k, self.leaf_of[k]]


@dataclass
class ModelState:
    design: LagDesign
    grid: SplitGrid
    equations: list
    eps: np.ndarray
    horseshoe: HorseshoeState
    sweep: int = 0

    @property
    def M(self) -> int:
        return len(self.equations)

    @property
    def fitted(self) -> np.ndarray:
        return np.column_stack([eq.fit for eq in self.equations])

    def A0(self) -> np.ndarray:
        return a0_from_rows([eq.a for eq in self.equations])


def a0_from_rows(rows) -> np.ndarray:
    M = len(rows)
    A = np.zeros((M, M))
    for j, a in enumerate(rows):
        A[j, :j] = a
    return np.linalg.inv(np.eye(M) - A)


def a0_from_free(a_free: np.ndarray, M: int) -> np.ndarray:
    """A0 from the stacked free coefficients; works on (..., M(M-1)/2)."""
    a_free = np.asarray(a_free, dtype=float)
    A = np.zeros(a_free.shape[:-1] + (M, M))
    rows, cols = np.tril_indices(M, -1)
    A[..., rows, cols] = a_free
    return np.linalg.inv(np.eye(M) - A)


def _ols_log_variance(design: LagDesign, j: int) -> float:
    Z = np.column_stack([np.ones(len(design.Y)), design.X])
    coef, *_ = np.linalg.lstsq(Z, design.Y[:, j], rcond=None)
    r = design.Y[:, j] - Z @ coef
    dof = max(len(r) - Z.shape[1], 1)
    return math.log(max(float(r @ r) / dof, 1e-12))


def initial_state(design: LagDesign, cfg: ModelConfig) -> ModelState:
    n, M = design.Y.shape
    grid = SplitGrid.from_design(design.X)
    n_nodes = cfg.tree_prior().n_nodes
    equations = []
    for j in range(M):
        spread = float(np.ptp(design.Y[:, j]))
        s = leaf_scale(spread, cfg.s_tilde, cfg.n_trees)
        var = np.full((cfg.n_trees, n_nodes), K.ABSENT, dtype=np.int64)
        var[:, 0] = K.LEAF
        log_var = _ols_log_variance(design, j)
        equations.append(EquationState(
            var=var,
            cut=np.full((cfg.n_trees, n_nodes), -1, dtype=np.int64),
            mu=np.zeros((cfg.n_trees, n_nodes)),
            leaf_of=np.zeros((cfg.n_trees, n), dtype=np.int64),
            fit=np.zeros(n),
            a=np.zeros(j),
            sv=SvState.constant(n, log_var, rho=0.9 if cfg.sv else 0.0, sigma2_h=0.1 if cfg.sv else 0.0),
            leaf_variance=s * s if cfg.leaf_scale_is_stddev else s,
        ))
    return ModelState(design, grid, equations, design.Y.copy(), HorseshoeState.initial(M))


def partial_residuals(j: int, k: int, state: ModelState) -> np.ndarray:
    """Target of tree k in equation j: everything except that tree's own fit."""
    eq = state.equations[j]
    cov = state.eps[:, :j] @ eq.a if j > 0 else 0.0
    return state.design.Y[:, j] - cov - (eq.fit - eq.tree_fit(k))


def gibbs_sweep(state: ModelState, cfg: ModelConfig, sv_prior: SvPrior | None = None) -> ModelState:
    """One full sweep, updating ``state`` in place and returning it."""
    sv_prior = sv_prior or SvPrior()
    Y = state.design.Y
    prior = cfg.tree_prior()
    for j, eq in enumerate(state.equations):
        rng = rng_stream(cfg.seed, state.sweep, j)
        Z = state.eps[:, :j]
        target = Y[:, j] - Z @ eq.a
        resid = target - eq.fit
        w = np.exp(eq.sv.h)
        K.update_forest(eq.var, eq.cut, eq.mu, eq.leaf_of, state.grid.ranks, state.grid.n_unique_max,
                        resid, w, eq.leaf_variance, prior.alpha, prior.beta, prior.min_leaf_size,
                        prior.max_depth, rng, eq.move_counts)
        K.forest_fit(eq.mu, eq.leaf_of, eq.fit)
        eps_j = Y[:, j] - eq.fit
        state.eps[:, j] = eps_j
        if j > 0:
            eq.a = sample_covariance_row(eps_j, Z, w, state.horseshoe.prior_variances(j), rng)
        ortho = eps_j - Z @ eq.a
        if cfg.sv:
            eq.sv = sample_sv(ortho, eq.sv, sv_prior, rng)
        else:
            eq.sv = sample_constant_variance(ortho, eq.sv, sv_prior, rng)
    if state.M > 1:
        state.horseshoe = update_scales([eq.a for eq in state.equations], state.horseshoe,
                                        rng_stream(cfg.seed, state.sweep, state.M))
    state.sweep += 1
    return state


def structural_log_likelihood(state: ModelState) -> float:
    total = 0.0
    for j, eq in enumerate(state.equations):
        ortho = state.eps[:, j] - state.eps[:, :j] @ eq.a
        total += log_likelihood(ortho, eq.sv.h)
    return total


@dataclass
class CompactForest:
    """Flat node arrays for many trees; ``roots[d, j, k]`` indexes tree k of
    equation j in retained draw d.  ``node_id`` is the heap position of the
    node in its tree (children of i are 2i+1 and 2i+2, the first one taken
    when ``x[var] <= threshold``)."""

    var: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    node_id: np.ndarray
    roots: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.roots.shape

    @classmethod
    def from_nodes(cls, draw, equation, tree, node_id, var, threshold, value, shape) -> "CompactForest":
        """Rebuild child links from heap ids; rows must be grouped by tree."""
        n = len(node_id)
        roots = np.full(shape, -1, dtype=np.int64)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        key = (np.asarray(draw) * shape[1] + np.asarray(equation)) * shape[2] + np.asarray(tree)
        bounds = np.flatnonzero(np.r_[True, key[1:] != key[:-1], True])
        for s, e in zip(bounds[:-1], bounds[1:]):
            ids = node_id[s:e]
            pos = {int(i): s + p for p, i in enumerate(ids)}
            if 0 not in pos:
                raise ValueError(f"tree {tuple(int(v) for v in (draw[s], equation[s], tree[s]))} has no root")
            roots[draw[s], equation[s], tree[s]] = pos[0]
            for p in range(s, e):
                if var[p] >= 0:
                    i = int(node_id[p])
                    try:
                        left[p] = pos[2 * i + 1]
                        right[p] = pos[2 * i + 2]
                    except KeyError:
                        raise ValueError(f"internal node {i} is missing a child") from None
        if np.any(roots < 0):
            raise ValueError("forest file does not cover every (draw, equation, tree)")
        return cls(np.asarray(var, dtype=np.int64), np.asarray(threshold, dtype=float),
                   np.asarray(value, dtype=float), left, right, np.asarray(node_id, dtype=np.int64), roots)

    def parents(self) -> np.ndarray:
        return np.where(self.node_id > 0, (self.node_id - 1) // 2, -1)

    def locate(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(draw, equation, tree) of every node."""
        D, M, N = self.roots.shape
        owner = np.empty(len(self.var), dtype=np.int64)
        flat_roots = self.roots.reshape(-1)
        order = np.argsort(flat_roots)
        starts = flat_roots[order]
        idx = np.searchsorted(starts, np.arange(len(self.var)), side="right") - 1
        owner[:] = order[idx]
        d, rem = np.divmod(owner, M * N)
        j, k = np.divmod(rem, N)
        return d, j, k


class _CompactBuilder:
    def __init__(self, grid: SplitGrid, D: int, M: int, N: int):
        U = grid.n_unique_max
        self.thr_table = np.full((grid.K, U), np.nan)
        for k, v in enumerate(grid.values):
            self.thr_table[k, : len(v)] = v
        self.roots = np.empty((D, M, N), dtype=np.int64)
        self.chunks = []
        self.offset = 0

    def add(self, d: int, j: int, eq: EquationState):
        n = K.count_active(eq.var)
        arrays = (np.empty(n, dtype=np.int64), np.empty(n), np.empty(n),
                  np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64))
        end = K.compact_forest(eq.var, eq.cut, eq.mu, self.thr_table, 0, self.roots[d, j], *arrays)
        assert end == n
        self.roots[d, j] += self.offset
        for arr in (arrays[3], arrays[4]):
            arr[arr >= 0] += self.offset
        self.offset += n
        self.chunks.append(arrays)

    def build(self) -> CompactForest:
        cols = list(zip(*self.chunks)) if self.chunks else [[np.empty(0)]] * 6
        var, thr, val, left, right, node_id = (np.concatenate(c) for c in cols)
        return CompactForest(var.astype(np.int64), thr, val, left.astype(np.int64), right.astype(np.int64),
                             node_id.astype(np.int64), self.roots)


@dataclass
class PosteriorDraws:
    config: ModelConfig
    data: TimeSeriesMatrix
    forest: CompactForest
    a: np.ndarray
    c: np.ndarray
    rho: np.ndarray
    sigma2_h: np.ndarray
    h: np.ndarray
    tau2: np.ndarray
    lam2: np.ndarray
    loglik: np.ndarray
    leaf_variance: np.ndarray
    move_counts: np.ndarray
    decisions: dict = field(default_factory=lambda: dict(DECISIONS))
    fitted: np.ndarray | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return self.data.names

    @property
    def n_draws(self) -> int:
        return self.a.shape[0]

    @property
    def M(self) -> int:
        return self.data.M

    @property
    def P(self) -> int:
        return self.config.lags

    def design(self) -> LagDesign:
        return build_lag_design(self.data, self.P)

    def A0(self) -> np.ndarray:
        """(draws, M, M) impact matrices."""
        return a0_from_free(self.a, self.M)

    def covariance(self, t: int = -1) -> np.ndarray:
        """(draws, M, M) reduced-form covariance A0 H_t A0' at in-sample period t."""
        A0 = self.A0()
        H = np.exp(self.h[:, :, t])
        return np.einsum("dij,dj,dkj->dik", A0, H, A0)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Forests of every draw evaluated at the rows of X: (draws, rows, M)."""
        X = np.ascontiguousarray(X, dtype=float)
        D, M, _ = self.forest.roots.shape
        out = np.empty((D, X.shape[0], M))
        f = self.forest
        K.eval_design(f.roots, f.var, f.threshold, f.value, f.left, f.right, X, out)
        return out

    def fitted_values(self) -> np.ndarray:
        if self.fitted is None:
            self.fitted = self.evaluate(self.design().X)
        return self.fitted

    def splitting_counts(self) -> np.ndarray:
        """(draws, K, M) count of internal nodes splitting on each covariate."""
        D, M, _ = self.forest.roots.shape
        Kc = self.M * self.P
        d, j, _ = self.forest.locate()
        internal = self.forest.var >= 0
        out = np.zeros((D, Kc, M), dtype=np.int64)
        np.add.at(out, (d[internal], self.forest.var[internal], j[internal]), 1)
        return out

    def metadata(self) -> dict:
        cfg = self.config.to_dict()
        hashed = {k: v for k, v in cfg.items() if k != "threads"}
        return {
            "config": cfg,
            "config_hash": config_hash(hashed),
            "decisions": dict(self.decisions),
            "names": list(self.names),
            "n_draws": self.n_draws,
            "leaf_variance": [float(v) for v in self.leaf_variance],
            "move_counts": self.move_counts.tolist(),
        }


def _prepare(Y: TimeSeriesMatrix, cfg: ModelConfig) -> TimeSeriesMatrix:
    if cfg.ordering is not None:
        try:
            Y = Y.reorder(cfg.ordering)
        except ValueError as exc:
            raise ConfigError("config.ordering", str(exc)) from None
    if Y.T - cfg.lags <= MIN_EFFECTIVE_OBS:
        raise ConfigError("config.lags", f"need more than {MIN_EFFECTIVE_OBS} observations after "
                                         f"lagging, have {Y.T - cfg.lags}")
    for j, name in enumerate(Y.names):
        if np.ptp(Y.values[cfg.lags:, j]) == 0:
            raise ValueError(f"series {name!r} is constant")
    return Y


def estimate(Y: TimeSeriesMatrix, cfg: ModelConfig, sv_prior: SvPrior | None = None,
             progress: Callable[[int, int], None] | None = None) -> PosteriorDraws:
    """Run the sampler and keep every ``thin``-th sweep after burn-in."""
    Y = _prepare(Y, cfg)
    design = build_lag_design(Y, cfg.lags)
    state = initial_state(design, cfg)
    n, M = design.Y.shape
    D = cfg.n_draws
    builder = _CompactBuilder(state.grid, D, M, cfg.n_trees)
    n_free = M * (M - 1) // 2
    a = np.empty((D, n_free))
    c = np.empty((D, M))
    rho = np.empty((D, M))
    s2 = np.empty((D, M))
    h = np.empty((D, M, n))
    tau2 = np.empty((D, n_free))
    lam2 = np.empty(D)
    fitted = np.empty((D, n, M))
    loglik = np.empty(cfg.sweeps)
    d = 0
    for s in range(cfg.sweeps):
        gibbs_sweep(state, cfg, sv_prior)
        loglik[s] = structural_log_likelihood(state)
        if s >= cfg.burn_in and (s - cfg.burn_in) % cfg.thin == 0:
            for j, eq in enumerate(state.equations):
                builder.add(d, j, eq)
                c[d, j] = eq.sv.c
                rho[d, j] = eq.sv.rho
                s2[d, j] = eq.sv.sigma2_h
                h[d, j] = eq.sv.h
            a[d] = np.concatenate([eq.a for eq in state.equations]) if n_free else a[d]
            tau2[d] = state.horseshoe.flat()[0]
            lam2[d] = state.horseshoe.lam2
            fitted[d] = state.fitted
            d += 1
        if progress is not None:
            progress(s + 1, cfg.sweeps)
    return PosteriorDraws(
        config=cfg, data=Y, forest=builder.build(), a=a, c=c, rho=rho, sigma2_h=s2, h=h,
        tau2=tau2, lam2=lam2, loglik=loglik,
        leaf_variance=np.array([eq.leaf_variance for eq in state.equations]),
        move_counts=np.stack([eq.move_counts for eq in state.equations]),
        fitted=fitted,
    )
