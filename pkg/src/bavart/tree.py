"""Regression trees: structure, prior, integrated likelihood and MH moves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

LEAF = K.LEAF
ABSENT = K.ABSENT
MOVES = ("grow", "prune", "swap", "change")


@dataclass(frozen=True)
class TreePriorConfig:
    alpha: float = 0.95
    beta: float = 2.0
    leaf_variance: float = 1.0
    min_leaf_size: int = 5
    max_depth: int = 8

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.leaf_variance >= 0:
            raise ValueError("leaf_variance must be >= 0")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if not 1 <= self.max_depth <= 16:
            raise ValueError("max_depth must be in [1, 16]")

    @property
    def n_nodes(self) -> int:
        return 2 ** (self.max_depth + 1) - 1


@dataclass(frozen=True)
class SplitGrid:
    """Observed split points of a design matrix.

    ``ranks[t, k]`` is the position of ``X[t, k]`` among the sorted distinct
    values ``values[k]`` of column k; a rule ``x_k <= values[k][r]`` is stored
    as the integer r while sampling.
    """

    ranks: np.ndarray
    values: tuple[np.ndarray, ...]

    @classmethod
    def from_design(cls, X) -> "SplitGrid":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("design must be a non-empty 2-D array")
        ranks = np.empty(X.shape, dtype=np.int64)
        values = []
        for k in range(X.shape[1]):
            u, inv = np.unique(X[:, k], return_inverse=True)
            ranks[:, k] = inv
            values.append(u)
        return cls(ranks=ranks, values=tuple(values))

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    @property
    def K(self) -> int:
        return self.ranks.shape[1]

    @property
    def n_unique_max(self) -> int:
        return max(len(v) for v in self.values)

    def threshold(self, k: int, r: int) -> float:
        return float(self.values[k][r])


@dataclass
class DecisionTree:
    """Heap-indexed binary tree.

    Node i has children 2i+1 (rule ``x[var] <= threshold`` holds) and 2i+2.
    ``cut`` carries the rank of the threshold on a :class:`SplitGrid` when the
    tree was grown on one, else -1.
    """

    var: np.ndarray
    cut: np.ndarray
    threshold: np.ndarray
    mu: np.ndarray

    @classmethod
    def stump(cls, max_depth: int = 8, mu: float = 0.0) -> "DecisionTree":
        n_nodes = 2 ** (max_depth + 1) - 1
        var = np.full(n_nodes, ABSENT, dtype=np.int64)
        var[0] = LEAF
        tree = cls(var, np.full(n_nodes, -1, dtype=np.int64), np.full(n_nodes, np.nan), np.zeros(n_nodes))
        tree.mu[0] = mu
        return tree

    @classmethod
    def from_nested(cls, spec, max_depth: int = 8) -> "DecisionTree":
        """Build from nested tuples: a leaf is a float, an internal node is
        ``(covariate, threshold, yes_subtree, no_subtree)``."""
        tree = cls.stump(max_depth)

        def fill(i, node):
            if i >= len(tree.var):
                raise ValueError("tree deeper than max_depth")
            if isinstance(node, tuple):
                k, c, yes, no = node
                tree.var[i] = int(k)
                tree.threshold[i] = float(c)
                fill(2 * i + 1, yes)
                fill(2 * i + 2, no)
            else:
                tree.var[i] = LEAF
                tree.mu[i] = float(node)

        fill(0, spec)
        return tree

    @property
    def max_depth(self) -> int:
        return int(round(math.log2(len(self.var) + 1))) - 1

    def copy(self) -> "DecisionTree":
        return DecisionTree(self.var.copy(), self.cut.copy(), self.threshold.copy(), self.mu.copy())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.var == LEAF)

    def internal_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.var >= 0)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.var == LEAF))

    def depth(self) -> int:
        active = np.flatnonzero(self.var != ABSENT)
        return max(K.depth_of(int(i)) for i in active)

    def evaluate(self, x) -> float:
        return float(K.evaluate_heap(self.var, self.threshold, self.mu, np.asarray(x, dtype=float)))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([K.evaluate_heap(self.var, self.threshold, self.mu, x) for x in X])

    def sync_thresholds(self, grid: SplitGrid) -> None:
        for i in self.internal_nodes():
            self.threshold[i] = grid.threshold(int(self.var[i]), int(self.cut[i]))

    def leaf_assignment(self, grid: SplitGrid) -> np.ndarray:
        leaf_of = np.empty(grid.n, dtype=np.int64)
        K.assign_leaves(self.var, self.cut, grid.ranks, leaf_of)
        return leaf_of

    def structure(self) -> tuple:
        """Hashable description of the rules (leaf values ignored)."""
        return tuple((int(i), int(self.var[i]), int(self.cut[i])) for i in np.flatnonzero(self.var != ABSENT))


def evaluate(tree: DecisionTree, x) -> float:
    return tree.evaluate(x)


def split_probability(depth: int, cfg: TreePriorConfig) -> float:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return cfg.alpha * (1.0 + depth) ** (-cfg.beta)


def leaf_scale(value_range: float, s_tilde: float = 2.0, n_trees: int = 250) -> float:
    """Leaf prior scale R / (2 s sqrt(N)) for a response with range R."""
    if not value_range > 0:
        raise ValueError("response range must be positive (constant series?)")
    if n_trees < 1:
        raise ValueError("need at least one tree")
    return value_range / (2.0 * s_tilde * math.sqrt(n_trees))


def _leaf_groups(tree: DecisionTree, grid: SplitGrid):
    leaf_of = tree.leaf_assignment(grid)
    return {int(l): np.flatnonzero(leaf_of == l) for l in tree.leaves()}


def log_marginal_likelihood(tree: DecisionTree, R, w, leaf_variance: float, grid: SplitGrid | None = None,
                            min_leaf_size: int = 1) -> float:
    """Log density of residuals with every leaf mean integrated out.

    Each leaf contributes log N(R_leaf; 0, diag(w) + leaf_variance * 11').
    """
    R = np.asarray(R, dtype=float)
    w = np.asarray(w, dtype=float)
    if R.shape != w.shape:
        raise ValueError("R and w must have equal length")
    if np.any(w <= 0):
        raise ValueError("variances must be positive")
    if grid is None:
        if tree.n_leaves != 1:
            raise ValueError("a split grid is needed for trees with more than one leaf")
        groups = {0: np.arange(len(R))}
    else:
        groups = _leaf_groups(tree, grid)
    total = -0.5 * np.sum(np.log(2 * np.pi * w)) - 0.5 * np.sum(R * R / w)
    for idx in groups.values():
        if len(idx) < max(min_leaf_size, 1):
            raise ValueError("empty or undersized leaf")
        S = np.sum(R[idx] / w[idx])
        W = np.sum(1.0 / w[idx])
        total += K.leaf_score(S, W, leaf_variance)
    return float(total)


def log_tree_prior(tree: DecisionTree, grid: SplitGrid, cfg: TreePriorConfig) -> float:
    n = grid.n
    lp, _ = K.tree_scores(tree.var, tree.cut, grid.ranks, grid.n_unique_max, np.zeros(n), np.ones(n),
                          0.0, cfg.alpha, cfg.beta, cfg.min_leaf_size, cfg.max_depth)
    return float(lp)


def log_posterior_kernel(tree: DecisionTree, grid: SplitGrid, R, w, cfg: TreePriorConfig) -> float:
    """Log prior plus the tree-dependent part of the integrated likelihood."""
    lp, ll = K.tree_scores(tree.var, tree.cut, grid.ranks, grid.n_unique_max,
                           np.asarray(R, dtype=float), np.asarray(w, dtype=float),
                           cfg.leaf_variance, cfg.alpha, cfg.beta, cfg.min_leaf_size, cfg.max_depth)
    return float(lp + ll)


def propose_move(tree: DecisionTree, grid: SplitGrid, cfg: TreePriorConfig, rng: np.random.Generator):
    """Draw a candidate from the grow/prune/swap/change kernel.

    Returns ``(candidate, move, log_q_ratio)`` with
    log_q_ratio = log q(candidate -> tree) - log q(tree -> candidate).
    When no move applies the tree is returned unchanged with ratio 0.
    """
    cand = tree.copy()
    leaf_of = cand.leaf_assignment(grid)
    move, logq = K.propose(cand.var, cand.cut, cand.mu, leaf_of, grid.ranks, grid.n_unique_max,
                           cfg.max_depth, rng)
    cand.sync_thresholds(grid)
    return cand, (MOVES[move] if move >= 0 else None), float(logq)


def mh_accept(tree: DecisionTree, candidate: DecisionTree, log_q_ratio: float, R, w, grid: SplitGrid,
              cfg: TreePriorConfig, rng: np.random.Generator) -> DecisionTree:
    log_alpha = (log_q_ratio
                 + log_posterior_kernel(candidate, grid, R, w, cfg)
                 - log_posterior_kernel(tree, grid, R, w, cfg))
    if np.isnan(log_alpha):
        return tree
    if math.log(rng.random()) < log_alpha:
        return candidate
    return tree


def sample_leaf_params(tree: DecisionTree, R, w, leaf_variance: float, rng: np.random.Generator,
                       grid: SplitGrid | None = None) -> DecisionTree:
    R = np.asarray(R, dtype=float)
    w = np.asarray(w, dtype=float)
    out = tree.copy()
    if grid is None:
        if tree.n_leaves != 1:
            raise ValueError("a split grid is needed for trees with more than one leaf")
        leaf_of = np.zeros(len(R), dtype=np.int64)
    else:
        leaf_of = tree.leaf_assignment(grid)
    counts = np.bincount(leaf_of, minlength=len(tree.var))
    if np.any(counts[tree.leaves()] == 0):
        raise ValueError("empty leaf")
    n_nodes = len(tree.var)
    K.sample_leaves(out.var, out.mu, leaf_of, R, w, float(leaf_variance), rng, np.empty(n_nodes), np.empty(n_nodes))
    return out


def leaf_posterior(R, w, leaf_variance: float) -> tuple[float, float]:
    """Mean and variance of a leaf value given its residuals."""
    R = np.asarray(R, dtype=float)
    w = np.asarray(w, dtype=float)
    S = np.sum(R / w)
    W = np.sum(1.0 / w)
    denom = 1.0 + leaf_variance * W
    return float(leaf_variance * S / denom), float(leaf_variance / denom)


def sample_prior_tree(grid: SplitGrid, cfg: TreePriorConfig, rng: np.random.Generator,
                      eligible: np.ndarray | None = None, split: np.ndarray | None = None) -> DecisionTree:
    tree = DecisionTree.stump(cfg.max_depth)
    eligible = np.zeros(cfg.max_depth + 1, dtype=np.int64) if eligible is None else eligible
    split = np.zeros(cfg.max_depth + 1, dtype=np.int64) if split is None else split
    K.sample_prior_tree(tree.var, tree.cut, grid.ranks, grid.n_unique_max, cfg.alpha, cfg.beta,
                        cfg.max_depth, rng, eligible, split)
    tree.sync_thresholds(grid)
    return tree


def prior_split_frequencies(grid: SplitGrid, cfg: TreePriorConfig, n_trees: int, rng: np.random.Generator):
    """Empirical split frequency by depth over ``n_trees`` prior draws.

    Returns (frequency, eligible counts); frequency[d] is the share of nodes at
    depth d that split among those that had an admissible rule.
    """
    eligible = np.zeros(cfg.max_depth + 1, dtype=np.int64)
    split = np.zeros(cfg.max_depth + 1, dtype=np.int64)
    var = np.empty(cfg.n_nodes, dtype=np.int64)
    cut = np.empty(cfg.n_nodes, dtype=np.int64)
    for _ in range(n_trees):
        K.sample_prior_tree(var, cut, grid.ranks, grid.n_unique_max, cfg.alpha, cfg.beta,
                            cfg.max_depth, rng, eligible, split)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = split / eligible
    return freq, eligible


def _code_base(grid: SplitGrid) -> tuple[int, int]:
    n_cut_codes = grid.n_unique_max
    return 2 + grid.K * n_cut_codes, n_cut_codes


def structure_code(tree: DecisionTree, grid: SplitGrid) -> int:
    base, n_cut_codes = _code_base(grid)
    if base ** len(tree.var) >= 2 ** 62:
        raise ValueError("tree space too large for integer structure codes")
    return int(K.structure_code(tree.var, tree.cut, base, n_cut_codes))


def run_tree_chain(tree: DecisionTree, grid: SplitGrid, R, w, cfg: TreePriorConfig, n_steps: int,
                   rng: np.random.Generator):
    """Iterate the single-tree backfitting update on fixed residuals.

    Returns (structure codes per step, move counts as [proposed, accepted]
    rows in grow/prune/swap/change order).  Intended for small enumerable
    instances.
    """
    base, n_cut_codes = _code_base(grid)
    if base ** len(tree.var) >= 2 ** 62:
        raise ValueError("tree space too large for integer structure codes")
    var = tree.var[None, :].copy()
    cut = tree.cut[None, :].copy()
    mu = tree.mu[None, :].copy()
    leaf_of = tree.leaf_assignment(grid)[None, :].copy()
    return K.forest_chain(var, cut, mu, leaf_of, grid.ranks, grid.n_unique_max,
                          np.asarray(R, dtype=float), np.asarray(w, dtype=float), cfg.leaf_variance,
                          cfg.alpha, cfg.beta, cfg.min_leaf_size, cfg.max_depth, rng, n_steps,
                          base, n_cut_codes)


def splitting_rule_counts(forests, K_covariates: int) -> np.ndarray:
    """K x M matrix: internal nodes of equation j's forest that split on covariate k.

    ``forests`` is a sequence (one per equation) of sequences of DecisionTree
    or of rule-covariate arrays.
    """
    out = np.zeros((K_covariates, len(forests)), dtype=np.int64)
    for j, forest in enumerate(forests):
        for tree in forest:
            v = tree.var if isinstance(tree, DecisionTree) else np.asarray(tree)
            v = v[v >= 0]
            out[:, j] += np.bincount(v, minlength=K_covariates)[:K_covariates]
    return out
