import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from bavart.tree import (DecisionTree, SplitGrid, TreePriorConfig, leaf_posterior, leaf_scale, log_marginal_likelihood,
                         log_posterior_kernel, log_tree_prior, mh_accept, prior_split_frequencies, propose_move,
                         run_tree_chain, sample_leaf_params, sample_prior_tree, split_probability,
                         splitting_rule_counts, structure_code)

# four points on two covariates whose orderings disagree, so every rule
# induces a different partition
X4 = np.array([[1.0, 4.0], [2.0, 3.0], [3.0, 1.0], [4.0, 2.0]])
GRID4 = SplitGrid.from_design(X4)


def grid_tree(struct: dict, max_depth: int, grid: SplitGrid) -> DecisionTree:
    tree = DecisionTree.stump(max_depth)
    for i, v in struct.items():
        if v == oracles.LEAF:
            tree.var[i] = -1
        else:
            tree.var[i], tree.cut[i] = v
    tree.sync_thresholds(grid)
    return tree


def figure_tree(mu1=1.0, mu2=2.0, mu3=3.0):
    return DecisionTree.from_nested((0, 0.8, (1, 0.3, mu3, mu2), mu1))


# -- structure and evaluation ---------------------------------------------------

def test_two_split_tree_routes_observations():
    tree = figure_tree()
    assert tree.evaluate([0.9, 0.0]) == 1.0
    assert tree.evaluate([0.5, 0.1]) == 3.0
    assert tree.evaluate([0.5, 0.7]) == 2.0
    # thresholds are inclusive on the left
    assert tree.evaluate([0.8, 0.3]) == 3.0
    assert tree.n_leaves == 3
    assert tree.depth() == 2


def test_stump_is_constant():
    tree = DecisionTree.stump(mu=-0.25)
    X = np.random.default_rng(0).standard_normal((20, 3))
    np.testing.assert_array_equal(tree.predict(X), -0.25)


def test_from_nested_rejects_too_deep():
    with pytest.raises(ValueError):
        DecisionTree.from_nested((0, 0.0, (0, -1.0, 1.0, 2.0), 3.0), max_depth=1)


def test_split_probability_examples():
    cfg = TreePriorConfig(alpha=0.95, beta=2.0)
    assert split_probability(0, cfg) == pytest.approx(0.95)
    assert split_probability(1, cfg) == pytest.approx(0.2375)
    assert split_probability(2, cfg) == pytest.approx(0.95 / 9)
    flat = TreePriorConfig(alpha=0.5, beta=0.0)
    assert all(split_probability(d, flat) == 0.5 for d in range(6))
    with pytest.raises(ValueError):
        split_probability(-1, cfg)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=1.0), dict(beta=-1.0), dict(min_leaf_size=0),
                                dict(max_depth=0), dict(leaf_variance=-1.0)])
def test_prior_config_validation(kw):
    with pytest.raises(ValueError):
        TreePriorConfig(**kw)


def test_leaf_scale_examples():
    assert leaf_scale(10.0, 2.0, 250) == pytest.approx(10 / (4 * math.sqrt(250)))
    assert leaf_scale(4.0, 1.0, 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        leaf_scale(0.0)
    with pytest.raises(ValueError):
        leaf_scale(1.0, n_trees=0)


# -- integrated likelihood ------------------------------------------------------

def test_single_observation_zero_leaf_variance():
    tree = DecisionTree.stump()
    assert log_marginal_likelihood(tree, [0.0], [1.0], 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


def test_marginal_likelihood_matches_quadrature():
    rng = np.random.default_rng(11)
    tree = DecisionTree.stump()
    for _ in range(20):
        n = int(rng.integers(1, 12))
        R = rng.normal(rng.normal(0, 2), 1.0, n)
        w = rng.uniform(0.2, 3.0, n)
        s2 = rng.uniform(0.01, 4.0)
        assert log_marginal_likelihood(tree, R, w, s2) == pytest.approx(
            oracles.log_marginal_quadrature(R, w, s2), abs=1e-6)


def test_marginal_likelihood_is_additive_over_leaves():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((30, 2))
    grid = SplitGrid.from_design(X)
    R = rng.standard_normal(30)
    w = rng.uniform(0.5, 2.0, 30)
    tree = DecisionTree.stump(3)
    tree.var[0], tree.cut[0] = 1, 14
    tree.var[1] = tree.var[2] = -1
    tree.sync_thresholds(grid)
    left = X[:, 1] <= tree.threshold[0]
    stump = DecisionTree.stump()
    split = log_marginal_likelihood(tree, R, w, 0.7, grid)
    parts = (log_marginal_likelihood(stump, R[left], w[left], 0.7)
             + log_marginal_likelihood(stump, R[~left], w[~left], 0.7))
    assert split == pytest.approx(parts, abs=1e-10)
    assert split == pytest.approx(oracles.tree_log_likelihood(
        {0: (1, 14), 1: -1, 2: -1}, grid.ranks, R, w, 0.7), abs=1e-9)


def test_marginal_likelihood_rejects_undersized_leaf():
    grid = SplitGrid.from_design(X4)
    tree = grid_tree({0: (0, 0), 1: -1, 2: -1}, 2, grid)
    with pytest.raises(ValueError):
        log_marginal_likelihood(tree, np.zeros(4), np.ones(4), 1.0, grid, min_leaf_size=2)
    with pytest.raises(ValueError):
        log_marginal_likelihood(DecisionTree.stump(), [1.0], [0.0], 1.0)


# -- prior ----------------------------------------------------------------------

def test_tree_prior_matches_enumeration():
    cfg = TreePriorConfig(alpha=0.9, beta=1.0, min_leaf_size=1, max_depth=2)
    trees = oracles.enumerate_trees(GRID4.ranks, 2, 0.9, 1.0)
    assert math.isclose(sum(math.exp(lp) for _, lp in trees), 1.0, rel_tol=1e-12)
    for struct, lp in trees:
        assert log_tree_prior(grid_tree(struct, 2, GRID4), GRID4, cfg) == pytest.approx(lp, abs=1e-12)


def test_tree_prior_rejects_invalid_rules():
    cfg = TreePriorConfig(min_leaf_size=1, max_depth=2)
    # cut at the largest rank sends everything left
    assert log_tree_prior(grid_tree({0: (0, 3), 1: -1, 2: -1}, 2, GRID4), GRID4, cfg) == -math.inf
    cfg2 = TreePriorConfig(min_leaf_size=2, max_depth=2)
    assert log_tree_prior(grid_tree({0: (0, 0), 1: -1, 2: -1}, 2, GRID4), GRID4, cfg2) == -math.inf
    assert math.isfinite(log_tree_prior(grid_tree({0: (0, 1), 1: -1, 2: -1}, 2, GRID4), GRID4, cfg2))


def test_prior_split_frequency_by_depth():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((500, 3))
    grid = SplitGrid.from_design(X)
    cfg = TreePriorConfig(alpha=0.95, beta=2.0, max_depth=8)
    freq, eligible = prior_split_frequencies(grid, cfg, 20000, rng)
    for d in range(3):
        p = split_probability(d, cfg)
        assert abs(freq[d] - p) <= 4 * math.sqrt(p * (1 - p) / eligible[d])


def test_prior_draws_respect_depth_cap():
    rng = np.random.default_rng(6)
    grid = SplitGrid.from_design(rng.standard_normal((200, 2)))
    cfg = TreePriorConfig(alpha=0.99, beta=0.0, max_depth=3)
    for _ in range(50):
        tree = sample_prior_tree(grid, cfg, rng)
        assert tree.depth() <= 3
        assert len(tree.leaves()) == len(tree.internal_nodes()) + 1


# -- proposals ------------------------------------------------------------------

def test_stump_only_grows():
    cfg = TreePriorConfig(min_leaf_size=1, max_depth=2)
    rng = np.random.default_rng(0)
    stump = grid_tree({0: -1}, 2, GRID4)
    moves = {propose_move(stump, GRID4, cfg, rng)[1] for _ in range(200)}
    assert moves == {"grow"}


def test_grow_then_prune_ratios_are_opposite():
    cfg = TreePriorConfig(min_leaf_size=1, max_depth=2)
    rng = np.random.default_rng(1)
    stump = grid_tree({0: -1}, 2, GRID4)
    grown, move, logq_grow = propose_move(stump, GRID4, cfg, rng)
    assert move == "grow"
    for _ in range(500):
        back, move, logq_prune = propose_move(grown, GRID4, cfg, rng)
        if move == "prune":
            break
    assert back.structure() == stump.structure()
    assert logq_prune == pytest.approx(-logq_grow, abs=1e-12)
    # stump: grow prob 1 * 1/2 covariates * 1/3 cuts; split tree at depth 1:
    # prune prob 0.25 / (0.25 + 0.25 + 0.1)
    assert logq_grow == pytest.approx(math.log(0.25 / 0.6) - math.log(1 / 6), abs=1e-12)


@pytest.mark.parametrize("struct", [
    {0: (0, 1), 1: -1, 2: -1},
    {0: (0, 2), 1: (1, 2), 2: -1, 3: -1, 4: -1},
    {0: (1, 1), 1: (0, 1), 2: (0, 2), 3: -1, 4: -1, 5: -1, 6: -1},
])
def test_proposal_frequencies_match_enumerated_kernel(struct):
    cfg = TreePriorConfig(min_leaf_size=1, max_depth=2)
    rng = np.random.default_rng(42)
    tree = grid_tree(struct, 2, GRID4)
    exact = oracles.proposal_kernel(struct, GRID4.ranks, 2)
    assert sum(exact.values()) == pytest.approx(1.0)
    n = 100_000
    seen = Counter(propose_move(tree, GRID4, cfg, rng)[0].structure() for _ in range(n))
    assert set(seen) <= set(exact)
    for k, p in exact.items():
        assert abs(seen[k] - n * p) <= 3 * math.sqrt(n * p * (1 - p)) + 1e-9, k


def test_proposal_log_ratios_match_enumerated_kernel():
    cfg = TreePriorConfig(min_leaf_size=1, max_depth=2)
    rng = np.random.default_rng(8)
    struct = {0: (0, 2), 1: (1, 2), 2: -1, 3: -1, 4: -1}
    tree = grid_tree(struct, 2, GRID4)
    fwd = oracles.proposal_kernel(struct, GRID4.ranks, 2)
    for _ in range(300):
        cand, move, logq = propose_move(tree, GRID4, cfg, rng)
        cstruct = {i: (v if v < 0 else (v, c)) for i, v, c in cand.structure()}
        if log_tree_prior(cand, GRID4, cfg) == -math.inf or cand.structure() == tree.structure():
            continue
        rev = oracles.proposal_kernel(cstruct, GRID4.ranks, 2)
        expect = math.log(rev[tree.structure()]) - math.log(fwd[cand.structure()])
        assert logq == pytest.approx(expect, abs=1e-10), move


def test_mh_accept_examples():
    cfg = TreePriorConfig(min_leaf_size=1, max_depth=2)
    rng = np.random.default_rng(2)
    R, w = np.array([1.0, 1.1, -1.0, -0.9]), np.ones(4)
    tree = grid_tree({0: -1}, 2, GRID4)
    same = tree.copy()
    assert all(mh_accept(tree, same, 0.0, R, w, GRID4, cfg, rng) is same for _ in range(100))
    bad = grid_tree({0: (0, 3), 1: -1, 2: -1}, 2, GRID4)
    assert all(mh_accept(tree, bad, 0.0, R, w, GRID4, cfg, rng) is tree for _ in range(100))
    # the split (0, 1) separates the two clusters: accepted at the exact rate
    good = grid_tree({0: (0, 1), 1: -1, 2: -1}, 2, GRID4)
    ratio = math.exp(log_posterior_kernel(good, GRID4, R, w, cfg) - log_posterior_kernel(tree, GRID4, R, w, cfg))
    back_ratio = min(1.0, 1.0 / ratio)
    hits = sum(mh_accept(good, tree, 0.0, R, w, GRID4, cfg, rng) is tree for _ in range(20000))
    assert abs(hits / 20000 - back_ratio) <= 4 * math.sqrt(back_ratio * (1 - back_ratio) / 20000)


def test_chain_matches_enumerated_posterior():
    cfg = TreePriorConfig(alpha=0.95, beta=1.0, leaf_variance=1.0, min_leaf_size=1, max_depth=2)
    R = np.array([1.0, 1.3, -0.7, -1.2])
    w = np.array([0.5, 0.6, 0.4, 0.5])
    exact = oracles.enumerated_posterior(GRID4.ranks, R, w, 1.0, 2, 0.95, 1.0)
    codes, counts = run_tree_chain(grid_tree({0: -1}, 2, GRID4), GRID4, R, w, cfg, 400_000,
                                   np.random.default_rng(9))
    n_cut = GRID4.n_unique_max
    emp = Counter(codes.tolist())
    total = len(codes)
    tv = 0.0
    for k, p in exact.items():
        struct = {i: (-1 if v < 0 else (v, c)) for i, v, c in k}
        tv += abs(emp.pop(oracles.structure_code(struct, 7, 2, n_cut), 0) / total - p)
    tv = 0.5 * (tv + sum(emp.values()) / total)
    assert tv < 0.02
    assert np.all(counts[:, 1] <= counts[:, 0])
    assert counts[:, 1].sum() > 0


def test_structure_code_matches_reference_encoding():
    struct = {0: (1, 1), 1: (0, 1), 2: -1, 3: -1, 4: -1}
    tree = grid_tree(struct, 2, GRID4)
    assert structure_code(tree, GRID4) == oracles.structure_code(struct, 7, 2, GRID4.n_unique_max)


# -- leaf values ----------------------------------------------------------------

def test_leaf_posterior_matches_quadrature():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(1, 8))
        R, w, s2 = rng.normal(1.0, 1.0, n), rng.uniform(0.3, 2.0, n), rng.uniform(0.1, 3.0)
        m, v = leaf_posterior(R, w, s2)
        qm, qv = oracles.leaf_moments_quadrature(R, w, s2)
        assert m == pytest.approx(qm, abs=1e-8)
        assert v == pytest.approx(qv, rel=1e-7)


def test_leaf_posterior_limits():
    R = np.array([2.0, 4.0])
    w = np.array([1.0, 1.0])
    assert leaf_posterior(R, w, 0.0) == (0.0, 0.0)
    m, v = leaf_posterior(R, w, 1e12)
    assert m == pytest.approx(3.0, rel=1e-9)
    assert v == pytest.approx(0.5, rel=1e-9)


def test_leaf_draws_have_posterior_moments():
    rng = np.random.default_rng(10)
    R, w, s2 = np.array([0.5, 1.5, 1.0]), np.array([1.0, 0.5, 2.0]), 0.8
    m, v = leaf_posterior(R, w, s2)
    stump = DecisionTree.stump()
    draws = np.array([sample_leaf_params(stump, R, w, s2, rng).mu[0] for _ in range(100_000)])
    se = math.sqrt(v / len(draws))
    assert abs(draws.mean() - m) <= 4 * se
    assert abs(draws.var() / v - 1) <= 4 * math.sqrt(2 / len(draws))


def test_leaf_draws_collapse_without_prior_variance():
    rng = np.random.default_rng(0)
    out = sample_leaf_params(DecisionTree.stump(), [3.0, 5.0], [1.0, 1.0], 0.0, rng)
    assert out.mu[0] == 0.0


# -- variable importance --------------------------------------------------------

def test_splitting_rule_counts():
    stumps = [[DecisionTree.stump() for _ in range(5)]]
    np.testing.assert_array_equal(splitting_rule_counts(stumps, 3), np.zeros((3, 1)))
    forests = [[figure_tree(), figure_tree()], [DecisionTree.from_nested((2, 0.0, 1.0, 2.0))]]
    np.testing.assert_array_equal(splitting_rule_counts(forests, 3), [[2, 0], [2, 0], [0, 1]])
    total = splitting_rule_counts(forests, 3).sum(axis=0)
    assert list(total) == [sum(len(t.internal_nodes()) for t in f) for f in forests]


# -- properties -----------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), eps=st.floats(-0.049, 0.049))
def test_evaluation_is_piecewise_constant(seed, eps):
    rng = np.random.default_rng(seed)
    tree = figure_tree(*rng.standard_normal(3))
    x = rng.uniform(-1, 2, 2)
    # stay on the same side of both thresholds
    if min(abs(x[0] - 0.8), abs(x[1] - 0.3)) <= 0.05:
        return
    assert tree.evaluate(x + eps) == tree.evaluate(x)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_likelihood_invariant_to_observation_order(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 2))
    R, w = rng.standard_normal(25), rng.uniform(0.2, 2, 25)
    perm = rng.permutation(25)
    cfg = TreePriorConfig(alpha=0.95, beta=1.0, min_leaf_size=1, max_depth=3)
    g1, g2 = SplitGrid.from_design(X), SplitGrid.from_design(X[perm])
    t = sample_prior_tree(g1, cfg, rng)
    # same rules expressed on the permuted grid: ranks are unchanged
    assert log_marginal_likelihood(t, R, w, 0.5, g1) == pytest.approx(
        log_marginal_likelihood(t, R[perm], w[perm], 0.5, g2), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), min_leaf=st.integers(1, 4))
def test_mh_steps_keep_trees_valid(seed, min_leaf):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 3))
    grid = SplitGrid.from_design(X)
    R = np.sin(2 * X[:, 0]) + 0.3 * rng.standard_normal(40)
    w = np.full(40, 0.1)
    cfg = TreePriorConfig(alpha=0.95, beta=0.5, leaf_variance=0.5, min_leaf_size=min_leaf, max_depth=4)
    tree = DecisionTree.stump(4)
    for _ in range(60):
        cand, _, logq = propose_move(tree, grid, cfg, rng)
        tree = mh_accept(tree, cand, logq, R, w, grid, cfg, rng)
        internal, leaves = tree.internal_nodes(), tree.leaves()
        assert len(leaves) == len(internal) + 1
        counts = np.bincount(tree.leaf_assignment(grid), minlength=len(tree.var))
        assert np.all(counts[leaves] >= min_leaf)
        assert np.all(tree.cut[internal] < np.array([len(grid.values[k]) - 1 for k in tree.var[internal]]))
        assert math.isfinite(log_tree_prior(tree, grid, cfg))
