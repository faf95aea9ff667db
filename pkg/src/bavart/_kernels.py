"""Numba kernels for heap-indexed regression trees.

Node ``i`` has children ``2i+1`` (rule satisfied, ``x[var] <= cut``) and
``2i+2``.  ``var[i] >= 0`` marks an internal node, ``LEAF`` a terminal node
and ``ABSENT`` an unused slot.  During sampling thresholds are integer ranks
into the sorted distinct values of each covariate.
"""

import math

import numpy as np
from numba import njit

LEAF = -1
ABSENT = -2

GROW = 0
PRUNE = 1
SWAP = 2
CHANGE = 3
NO_MOVE = -1

MOVE_PROBS = np.array([0.25, 0.25, 0.4, 0.1])

_NEG_INF = -np.inf


@njit(cache=True)
def depth_of(i):
    d = 0
    i += 1
    while i > 1:
        i >>= 1
        d += 1
    return d


@njit(cache=True)
def is_descendant(leaf, node):
    dl = depth_of(leaf)
    dn = depth_of(node)
    if dl < dn:
        return False
    return ((leaf + 1) >> (dl - dn)) - 1 == node


@njit(cache=True)
def log_split_prob(d, alpha, beta):
    return math.log(alpha) - beta * math.log1p(d)


@njit(cache=True)
def log_stop_prob(d, alpha, beta):
    return math.log1p(-alpha * (1.0 + d) ** (-beta))


@njit(cache=True)
def route(var, cut, ranks, t, start):
    i = start
    while var[i] >= 0:
        if ranks[t, var[i]] <= cut[i]:
            i = 2 * i + 1
        else:
            i = 2 * i + 2
    return i


@njit(cache=True)
def assign_leaves(var, cut, ranks, leaf_of):
    for t in range(ranks.shape[0]):
        leaf_of[t] = route(var, cut, ranks, t, 0)


@njit(cache=True, nogil=True)
def evaluate_heap(var, thr, mu, x):
    i = 0
    while var[i] >= 0:
        if x[var[i]] <= thr[i]:
            i = 2 * i + 1
        else:
            i = 2 * i + 2
    return mu[i]


@njit(cache=True)
def splittable(ranks, obs, lo, hi):
    if hi - lo < 2:
        return False
    for k in range(ranks.shape[1]):
        first = ranks[obs[lo], k]
        for p in range(lo + 1, hi):
            if ranks[obs[p], k] != first:
                return True
    return False


@njit(cache=True)
def valid_covariates(ranks, obs, lo, hi, out):
    n_valid = 0
    for k in range(ranks.shape[1]):
        first = ranks[obs[lo], k]
        for p in range(lo + 1, hi):
            if ranks[obs[p], k] != first:
                out[n_valid] = k
                n_valid += 1
                break
    return n_valid


@njit(cache=True)
def rule_stats(ranks, obs, lo, hi, k, cut, mark, stamp):
    """Distinct-value count and max rank of covariate k at a node, and whether
    ``cut`` is one of the node's observed ranks."""
    stamp[0] += 1
    s = stamp[0]
    nd = 0
    mx = -1
    for p in range(lo, hi):
        r = ranks[obs[p], k]
        if mark[r] != s:
            mark[r] = s
            nd += 1
        if r > mx:
            mx = r
    present = cut >= 0 and cut < mark.shape[0] and mark[cut] == s
    return nd, mx, present


@njit(cache=True)
def draw_cut(ranks, obs, lo, hi, k, mark, stamp, buf, u):
    """Uniform draw among the node's distinct ranks of k, excluding the largest.
    Returns (cut, number of admissible cuts)."""
    stamp[0] += 1
    s = stamp[0]
    nd = 0
    for p in range(lo, hi):
        r = ranks[obs[p], k]
        if mark[r] != s:
            mark[r] = s
            buf[nd] = r
            nd += 1
    vals = np.sort(buf[:nd])
    n_cut = nd - 1
    j = int(u * n_cut)
    if j >= n_cut:
        j = n_cut - 1
    return vals[j], n_cut


@njit(cache=True)
def leaf_score(S, W, s2mu):
    """Tree-dependent part of a leaf's log marginal likelihood."""
    denom = 1.0 + s2mu * W
    return -0.5 * math.log(denom) + 0.5 * s2mu * S * S / denom


@njit(cache=True)
def subtree_scores(var, cut, ranks, root, obs, m, R, w, s2mu,
                   alpha, beta, min_leaf, max_depth, mark, stamp):
    """Log prior and tree-dependent log likelihood of the subtree at ``root``.

    ``obs[:m]`` holds the observations reaching ``root``; it is reordered.
    """
    lp = 0.0
    ll = 0.0
    stack_node = np.empty(2 * max_depth + 4, dtype=np.int64)
    stack_lo = np.empty(2 * max_depth + 4, dtype=np.int64)
    stack_hi = np.empty(2 * max_depth + 4, dtype=np.int64)
    top = 0
    stack_node[0] = root
    stack_lo[0] = 0
    stack_hi[0] = m
    top = 1
    covs = np.empty(ranks.shape[1], dtype=np.int64)
    while top > 0:
        top -= 1
        i = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        d = depth_of(i)
        k = var[i]
        if k >= 0:
            if d >= max_depth or hi - lo < 2:
                return _NEG_INF, 0.0
            nd, mx, present = rule_stats(ranks, obs, lo, hi, k, cut[i], mark, stamp)
            if not present or cut[i] >= mx:
                return _NEG_INF, 0.0
            kv = valid_covariates(ranks, obs, lo, hi, covs)
            lp += log_split_prob(d, alpha, beta) - math.log(kv) - math.log(nd - 1)
            c = cut[i]
            a = lo
            b = hi - 1
            while a <= b:
                if ranks[obs[a], k] <= c:
                    a += 1
                else:
                    tmp = obs[a]
                    obs[a] = obs[b]
                    obs[b] = tmp
                    b -= 1
            stack_node[top] = 2 * i + 1
            stack_lo[top] = lo
            stack_hi[top] = a
            top += 1
            stack_node[top] = 2 * i + 2
            stack_lo[top] = a
            stack_hi[top] = hi
            top += 1
        else:
            if hi - lo < min_leaf or hi == lo:
                return _NEG_INF, 0.0
            if d < max_depth and splittable(ranks, obs, lo, hi):
                lp += log_stop_prob(d, alpha, beta)
            S = 0.0
            W = 0.0
            for p in range(lo, hi):
                t = obs[p]
                S += R[t] / w[t]
                W += 1.0 / w[t]
            ll += leaf_score(S, W, s2mu)
    return lp, ll


@njit(cache=True)
def group_by_leaf(leaf_of, n_nodes, order, start):
    counts = np.zeros(n_nodes + 1, dtype=np.int64)
    for t in range(leaf_of.shape[0]):
        counts[leaf_of[t] + 1] += 1
    for i in range(n_nodes):
        counts[i + 1] += counts[i]
    start[:] = counts
    fill = counts[:n_nodes].copy()
    for t in range(leaf_of.shape[0]):
        l = leaf_of[t]
        order[fill[l]] = t
        fill[l] += 1


@njit(cache=True)
def tree_stats(var, ranks, leaf_of, max_depth, order, start, grow_list, nog_list, int_list):
    """Counts of growable leaves, prunable nodes, swappable pairs and internal nodes."""
    n_nodes = var.shape[0]
    group_by_leaf(leaf_of, n_nodes, order, start)
    n_grow = 0
    n_nog = 0
    n_int = 0
    n_swap = 0
    for i in range(n_nodes):
        k = var[i]
        if k == LEAF:
            if depth_of(i) < max_depth and splittable(ranks, order, start[i], start[i + 1]):
                grow_list[n_grow] = i
                n_grow += 1
        elif k >= 0:
            int_list[n_int] = i
            n_int += 1
            if i > 0:
                n_swap += 1
            if var[2 * i + 1] == LEAF and var[2 * i + 2] == LEAF:
                nog_list[n_nog] = i
                n_nog += 1
    return n_grow, n_nog, n_swap, n_int


@njit(cache=True)
def move_log_probs(n_grow, n_nog, n_swap, n_int):
    p = MOVE_PROBS.copy()
    if n_grow == 0:
        p[GROW] = 0.0
    if n_nog == 0:
        p[PRUNE] = 0.0
    if n_swap == 0:
        p[SWAP] = 0.0
    if n_int == 0:
        p[CHANGE] = 0.0
    total = p.sum()
    out = np.empty(4)
    for m in range(4):
        if p[m] > 0.0:
            out[m] = math.log(p[m] / total)
        else:
            out[m] = _NEG_INF
    return out


@njit(cache=True)
def _collect(leaf_of, node, buf):
    m = 0
    for t in range(leaf_of.shape[0]):
        if is_descendant(leaf_of[t], node):
            buf[m] = t
            m += 1
    return m


@njit(cache=True)
def _nth_internal_nonroot(int_list, n_int, j):
    c = 0
    for q in range(n_int):
        if int_list[q] > 0:
            if c == j:
                return int_list[q]
            c += 1
    return -1


@njit(cache=True)
def choose_move(var, cut, leaf_of, ranks, max_depth, rng, order, start,
                grow_list, nog_list, int_list, obs_buf, cov_buf, cut_buf, mark, stamp):
    """Draw a proposal without touching the tree.

    Returns (move, node, new covariate, new cut, log forward probability,
    reverse-move rule term, m) where ``obs_buf[:m]`` are the observations of
    the subtree the move rewrites.
    """
    n_grow, n_nog, n_swap, n_int = tree_stats(
        var, ranks, leaf_of, max_depth, order, start, grow_list, nog_list, int_list
    )
    lpm = move_log_probs(n_grow, n_nog, n_swap, n_int)
    u = rng.random()
    move = NO_MOVE
    acc = 0.0
    last = NO_MOVE
    for mv in range(4):
        if lpm[mv] > _NEG_INF:
            last = mv
            acc += math.exp(lpm[mv])
            if u < acc:
                move = mv
                break
    if move == NO_MOVE:
        move = last
    if move == NO_MOVE:
        return NO_MOVE, 0, -1, -1, 0.0, 0.0, 0

    if move == GROW:
        l = grow_list[min(int(rng.random() * n_grow), n_grow - 1)]
        m = start[l + 1] - start[l]
        obs_buf[:m] = order[start[l]:start[l + 1]]
        kv = valid_covariates(ranks, obs_buf, 0, m, cov_buf)
        k = cov_buf[min(int(rng.random() * kv), kv - 1)]
        c, n_cut = draw_cut(ranks, obs_buf, 0, m, k, mark, stamp, cut_buf, rng.random())
        logq = lpm[GROW] - math.log(n_grow) - math.log(kv) - math.log(n_cut)
        return GROW, l, k, c, logq, 0.0, m

    if move == PRUNE:
        i = nog_list[min(int(rng.random() * n_nog), n_nog - 1)]
        m = _collect(leaf_of, i, obs_buf)
        kv = valid_covariates(ranks, obs_buf, 0, m, cov_buf)
        nd, mx, present = rule_stats(ranks, obs_buf, 0, m, var[i], cut[i], mark, stamp)
        rev_rule = -math.log(kv) - math.log(nd - 1)
        return PRUNE, i, -1, -1, lpm[PRUNE] - math.log(n_nog), rev_rule, m

    if move == SWAP:
        child = _nth_internal_nonroot(int_list, n_int, min(int(rng.random() * n_swap), n_swap - 1))
        m = _collect(leaf_of, (child - 1) // 2, obs_buf)
        return SWAP, child, -1, -1, lpm[SWAP] - math.log(n_swap), 0.0, m

    i = int_list[min(int(rng.random() * n_int), n_int - 1)]
    m = _collect(leaf_of, i, obs_buf)
    kv = valid_covariates(ranks, obs_buf, 0, m, cov_buf)
    nd_old, mx, present = rule_stats(ranks, obs_buf, 0, m, var[i], cut[i], mark, stamp)
    k = cov_buf[min(int(rng.random() * kv), kv - 1)]
    c, n_cut = draw_cut(ranks, obs_buf, 0, m, k, mark, stamp, cut_buf, rng.random())
    logq = lpm[CHANGE] - math.log(n_int) - math.log(kv) - math.log(n_cut)
    rev_rule = -math.log(kv) - math.log(nd_old - 1)
    return CHANGE, i, k, c, logq, rev_rule, m


@njit(cache=True)
def subtree_root(move, node):
    if move == SWAP:
        return (node - 1) // 2
    return node


@njit(cache=True)
def _swap_rules(var, cut, a, b):
    vk = var[a]
    vc = cut[a]
    var[a] = var[b]
    cut[a] = cut[b]
    var[b] = vk
    cut[b] = vc


@njit(cache=True)
def apply_move(var, cut, mu, move, node, k, c, undo):
    undo[0] = var[node]
    undo[1] = cut[node]
    if move == GROW:
        var[node] = k
        cut[node] = c
        var[2 * node + 1] = LEAF
        var[2 * node + 2] = LEAF
        cut[2 * node + 1] = -1
        cut[2 * node + 2] = -1
        mu[2 * node + 1] = mu[node]
        mu[2 * node + 2] = mu[node]
    elif move == PRUNE:
        var[node] = LEAF
        cut[node] = -1
        var[2 * node + 1] = ABSENT
        var[2 * node + 2] = ABSENT
    elif move == SWAP:
        _swap_rules(var, cut, node, (node - 1) // 2)
    elif move == CHANGE:
        var[node] = k
        cut[node] = c


@njit(cache=True)
def revert_move(var, cut, move, node, undo):
    if move == GROW:
        var[node] = LEAF
        cut[node] = -1
        var[2 * node + 1] = ABSENT
        var[2 * node + 2] = ABSENT
    elif move == PRUNE:
        var[node] = undo[0]
        cut[node] = undo[1]
        var[2 * node + 1] = LEAF
        var[2 * node + 2] = LEAF
    elif move == SWAP:
        _swap_rules(var, cut, node, (node - 1) // 2)
    elif move == CHANGE:
        var[node] = undo[0]
        cut[node] = undo[1]


@njit(cache=True)
def reverse_log_q(move, var, ranks, leaf_of, max_depth, order, start,
                  grow_list, nog_list, int_list, rev_rule):
    n_grow, n_nog, n_swap, n_int = tree_stats(
        var, ranks, leaf_of, max_depth, order, start, grow_list, nog_list, int_list
    )
    lpm = move_log_probs(n_grow, n_nog, n_swap, n_int)
    if move == GROW:
        return lpm[PRUNE] - math.log(n_nog)
    if move == PRUNE:
        return lpm[GROW] - math.log(n_grow) + rev_rule
    if move == SWAP:
        return lpm[SWAP] - math.log(n_swap)
    return lpm[CHANGE] - math.log(n_int) + rev_rule


@njit(cache=True)
def reroute(var, cut, ranks, leaf_of, obs, m, root):
    for p in range(m):
        t = obs[p]
        leaf_of[t] = route(var, cut, ranks, t, root)


@njit(cache=True)
def mh_step(var, cut, mu, leaf_of, ranks, R, w, s2mu, alpha, beta, min_leaf, max_depth,
            rng, order, start, grow_list, nog_list, int_list,
            obs_buf, work, cov_buf, cut_buf, mark, stamp, undo):
    """One Metropolis-Hastings update of a tree structure with the leaf values
    integrated out.  Returns (move, accepted)."""
    move, node, k, c, logq_fwd, rev_rule, m = choose_move(
        var, cut, leaf_of, ranks, max_depth, rng, order, start,
        grow_list, nog_list, int_list, obs_buf, cov_buf, cut_buf, mark, stamp,
    )
    u = rng.random()
    if move == NO_MOVE:
        return NO_MOVE, False
    root = subtree_root(move, node)
    work[:m] = obs_buf[:m]
    lp_old, ll_old = subtree_scores(var, cut, ranks, root, work, m, R, w, s2mu,
                                    alpha, beta, min_leaf, max_depth, mark, stamp)
    apply_move(var, cut, mu, move, node, k, c, undo)
    work[:m] = obs_buf[:m]
    lp_new, ll_new = subtree_scores(var, cut, ranks, root, work, m, R, w, s2mu,
                                    alpha, beta, min_leaf, max_depth, mark, stamp)
    if lp_new == _NEG_INF:
        revert_move(var, cut, move, node, undo)
        return move, False
    reroute(var, cut, ranks, leaf_of, obs_buf, m, root)
    logq_rev = reverse_log_q(move, var, ranks, leaf_of, max_depth, order, start,
                             grow_list, nog_list, int_list, rev_rule)
    log_alpha = logq_rev - logq_fwd + (lp_new - lp_old) + (ll_new - ll_old)
    if math.log(u) < log_alpha:
        return move, True
    revert_move(var, cut, move, node, undo)
    reroute(var, cut, ranks, leaf_of, obs_buf, m, root)
    return move, False


@njit(cache=True)
def sample_leaves(var, mu, leaf_of, R, w, s2mu, rng, S_sum, W_sum):
    n_nodes = var.shape[0]
    S_sum[:] = 0.0
    W_sum[:] = 0.0
    for t in range(leaf_of.shape[0]):
        l = leaf_of[t]
        S_sum[l] += R[t] / w[t]
        W_sum[l] += 1.0 / w[t]
    for i in range(n_nodes):
        if var[i] == LEAF:
            denom = 1.0 + s2mu * W_sum[i]
            mu[i] = s2mu * S_sum[i] / denom + math.sqrt(s2mu / denom) * rng.standard_normal()


@njit(cache=True, nogil=True)
def update_forest(var, cut, mu, leaf_of, ranks, n_unique_max, resid, w, s2mu,
                  alpha, beta, min_leaf, max_depth, rng, move_counts):
    """Backfitting pass over every tree of one equation.

    ``resid`` enters as target minus the full forest fit and is kept current.
    ``move_counts[move]`` accumulates (proposed, accepted).
    """
    n_trees, n_nodes = var.shape
    n = resid.shape[0]
    R = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    start = np.empty(n_nodes + 1, dtype=np.int64)
    grow_list = np.empty(n_nodes, dtype=np.int64)
    nog_list = np.empty(n_nodes, dtype=np.int64)
    int_list = np.empty(n_nodes, dtype=np.int64)
    obs_buf = np.empty(n, dtype=np.int64)
    work = np.empty(n, dtype=np.int64)
    cov_buf = np.empty(ranks.shape[1], dtype=np.int64)
    cut_buf = np.empty(n, dtype=np.int64)
    mark = np.zeros(n_unique_max, dtype=np.int64)
    stamp = np.zeros(1, dtype=np.int64)
    undo = np.zeros(2, dtype=np.int64)
    S_sum = np.empty(n_nodes)
    W_sum = np.empty(n_nodes)
    for k in range(n_trees):
        vk = var[k]
        ck = cut[k]
        mk = mu[k]
        lk = leaf_of[k]
        for t in range(n):
            R[t] = resid[t] + mk[lk[t]]
        move, accepted = mh_step(vk, ck, mk, lk, ranks, R, w, s2mu, alpha, beta,
                                 min_leaf, max_depth, rng, order, start, grow_list,
                                 nog_list, int_list, obs_buf, work, cov_buf, cut_buf,
                                 mark, stamp, undo)
        if move >= 0:
            move_counts[move, 0] += 1
            if accepted:
                move_counts[move, 1] += 1
        sample_leaves(vk, mk, lk, R, w, s2mu, rng, S_sum, W_sum)
        for t in range(n):
            resid[t] = R[t] - mk[lk[t]]


@njit(cache=True)
def propose(var, cut, mu, leaf_of, ranks, n_unique_max, max_depth, rng):
    """Apply one proposal in place and return (move, log q(new->old)/q(old->new))."""
    n = ranks.shape[0]
    n_nodes = var.shape[0]
    order = np.empty(n, dtype=np.int64)
    start = np.empty(n_nodes + 1, dtype=np.int64)
    grow_list = np.empty(n_nodes, dtype=np.int64)
    nog_list = np.empty(n_nodes, dtype=np.int64)
    int_list = np.empty(n_nodes, dtype=np.int64)
    obs_buf = np.empty(n, dtype=np.int64)
    cov_buf = np.empty(ranks.shape[1], dtype=np.int64)
    cut_buf = np.empty(n, dtype=np.int64)
    mark = np.zeros(n_unique_max, dtype=np.int64)
    stamp = np.zeros(1, dtype=np.int64)
    undo = np.zeros(2, dtype=np.int64)
    move, node, k, c, logq_fwd, rev_rule, m = choose_move(
        var, cut, leaf_of, ranks, max_depth, rng, order, start,
        grow_list, nog_list, int_list, obs_buf, cov_buf, cut_buf, mark, stamp,
    )
    if move == NO_MOVE:
        return NO_MOVE, 0.0
    apply_move(var, cut, mu, move, node, k, c, undo)
    reroute(var, cut, ranks, leaf_of, obs_buf, m, subtree_root(move, node))
    logq_rev = reverse_log_q(move, var, ranks, leaf_of, max_depth, order, start,
                             grow_list, nog_list, int_list, rev_rule)
    return move, logq_rev - logq_fwd


@njit(cache=True)
def tree_scores(var, cut, ranks, n_unique_max, R, w, s2mu, alpha, beta, min_leaf, max_depth):
    n = ranks.shape[0]
    obs = np.arange(n)
    mark = np.zeros(n_unique_max, dtype=np.int64)
    stamp = np.zeros(1, dtype=np.int64)
    return subtree_scores(var, cut, ranks, 0, obs, n, R, w, s2mu,
                          alpha, beta, min_leaf, max_depth, mark, stamp)


@njit(cache=True)
def sample_prior_tree(var, cut, ranks, n_unique_max, alpha, beta, max_depth, rng,
                      eligible, split):
    """Draw a tree from the generative prior on the design's split grid.

    ``eligible[d]``/``split[d]`` count nodes at depth d that could split and did.
    """
    n = ranks.shape[0]
    var[:] = ABSENT
    cut[:] = -1
    var[0] = LEAF
    obs = np.arange(n)
    covs = np.empty(ranks.shape[1], dtype=np.int64)
    cut_buf = np.empty(n, dtype=np.int64)
    mark = np.zeros(n_unique_max, dtype=np.int64)
    stamp = np.zeros(1, dtype=np.int64)
    stack_node = np.empty(2 * max_depth + 4, dtype=np.int64)
    stack_lo = np.empty(2 * max_depth + 4, dtype=np.int64)
    stack_hi = np.empty(2 * max_depth + 4, dtype=np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    while top > 0:
        top -= 1
        i = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        d = depth_of(i)
        if d >= max_depth or not splittable(ranks, obs, lo, hi):
            continue
        eligible[d] += 1
        if rng.random() >= math.exp(log_split_prob(d, alpha, beta)):
            continue
        split[d] += 1
        kv = valid_covariates(ranks, obs, lo, hi, covs)
        k = covs[min(int(rng.random() * kv), kv - 1)]
        c, n_cut = draw_cut(ranks, obs, lo, hi, k, mark, stamp, cut_buf, rng.random())
        var[i] = k
        cut[i] = c
        var[2 * i + 1] = LEAF
        var[2 * i + 2] = LEAF
        a = lo
        b = hi - 1
        while a <= b:
            if ranks[obs[a], k] <= c:
                a += 1
            else:
                tmp = obs[a]
                obs[a] = obs[b]
                obs[b] = tmp
                b -= 1
        stack_node[top] = 2 * i + 1
        stack_lo[top] = lo
        stack_hi[top] = a
        top += 1
        stack_node[top] = 2 * i + 2
        stack_lo[top] = a
        stack_hi[top] = hi
        top += 1


@njit(cache=True)
def structure_code(var, cut, base, n_cut_codes):
    code = 0
    for i in range(var.shape[0]):
        if var[i] == ABSENT:
            digit = 0
        elif var[i] == LEAF:
            digit = 1
        else:
            digit = 2 + var[i] * n_cut_codes + cut[i]
        code = code * base + digit
    return code


@njit(cache=True)
def forest_chain(var, cut, mu, leaf_of, ranks, n_unique_max, target, w, s2mu,
                 alpha, beta, min_leaf, max_depth, rng, n_steps, base, n_cut_codes):
    """Run the single-tree backfitting sampler and record the structure visited
    after every step (trees are encoded with ``structure_code``)."""
    n = target.shape[0]
    codes = np.empty(n_steps, dtype=np.int64)
    resid = np.empty(n)
    counts = np.zeros((4, 2), dtype=np.int64)
    for s in range(n_steps):
        for t in range(n):
            resid[t] = target[t] - mu[0, leaf_of[0, t]]
        update_forest(var, cut, mu, leaf_of, ranks, n_unique_max, resid, w, s2mu,
                      alpha, beta, min_leaf, max_depth, rng, counts)
        codes[s] = structure_code(var[0], cut[0], base, n_cut_codes)
    return codes, counts


# -- compact forests (retained draws) ---------------------------------------
# Nodes of every stored tree live in flat arrays; ``left``/``right`` hold flat
# indices (-1 at leaves) and ``roots[...]`` the flat index of each root.


@njit(cache=True)
def forest_fit(mu, leaf_of, out):
    n_trees, n = leaf_of.shape
    for t in range(n):
        out[t] = 0.0
    for k in range(n_trees):
        for t in range(n):
            out[t] += mu[k, leaf_of[k, t]]


@njit(cache=True)
def count_active(var):
    c = 0
    for k in range(var.shape[0]):
        for i in range(var.shape[1]):
            if var[k, i] != ABSENT:
                c += 1
    return c


@njit(cache=True)
def compact_forest(var, cut, mu, thr_table, offset, roots, c_var, c_thr, c_val, c_left, c_right, c_id):
    """Append every tree of ``var`` to the flat arrays starting at ``offset``."""
    n_trees, n_nodes = var.shape
    pos = np.empty(n_nodes, dtype=np.int64)
    at = offset
    for k in range(n_trees):
        for i in range(n_nodes):
            if var[k, i] != ABSENT:
                pos[i] = at
                at += 1
        roots[k] = pos[0]
        for i in range(n_nodes):
            v = var[k, i]
            if v == ABSENT:
                continue
            p = pos[i]
            c_id[p] = i
            if v == LEAF:
                c_var[p] = LEAF
                c_thr[p] = np.nan
                c_val[p] = mu[k, i]
                c_left[p] = -1
                c_right[p] = -1
            else:
                c_var[p] = v
                c_thr[p] = thr_table[v, cut[k, i]]
                c_val[p] = np.nan
                c_left[p] = pos[2 * i + 1]
                c_right[p] = pos[2 * i + 2]
    return at


@njit(cache=True, nogil=True)
def eval_compact(roots, c_var, c_thr, c_val, c_left, c_right, x):
    s = 0.0
    for r in range(roots.shape[0]):
        p = roots[r]
        while c_var[p] >= 0:
            if x[c_var[p]] <= c_thr[p]:
                p = c_left[p]
            else:
                p = c_right[p]
        s += c_val[p]
    return s


@njit(cache=True, nogil=True)
def eval_draws(roots, c_var, c_thr, c_val, c_left, c_right, X, out):
    """out[d, j] = forest (d, j) evaluated at X[d]."""
    D, M = out.shape
    for d in range(D):
        for j in range(M):
            out[d, j] = eval_compact(roots[d, j], c_var, c_thr, c_val, c_left, c_right, X[d])


@njit(cache=True, nogil=True)
def eval_design(roots, c_var, c_thr, c_val, c_left, c_right, X, out):
    """out[d, t, j] = forest (d, j) evaluated at row t of a shared design."""
    D, n, M = out.shape
    for d in range(D):
        for j in range(M):
            for t in range(n):
                out[d, t, j] = eval_compact(roots[d, j], c_var, c_thr, c_val, c_left, c_right, X[t])
