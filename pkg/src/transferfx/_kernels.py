"""Numba kernels for the boosted-tree learner.

Layout conventions shared with gbrt.py:
  - Xt is the feature matrix transposed to (F, N) C-order so a split scan
    walks one small contiguous row per feature.
  - order0 holds, per feature, row indices sorted ascending by feature value
    (stable sort, so ties keep row order); trees partition a working copy.
  - a tree is flat arrays indexed by node id: feat (-1 for leaves), thr,
    left/right child ids (-1 for leaves), value (leaf mean, unscaled).

Split choice is exact greedy variance reduction evaluated only at boundaries
between distinct sorted values; ties in gain resolve to the lower feature
index and lower threshold because candidates are visited in that order and
only strictly larger gains replace the incumbent.
"""

import numpy as np
from numba import njit

NO_CHILD = -1


@njit(cache=True, nogil=True)
def _fit_tree(Xt, resid, order, n_active, max_depth, min_leaf, inv,
              feat, thr, left, right, value, tmp, row_side,
              leaf_node, leaf_start, leaf_end):
    n_feat = Xt.shape[0]
    n_nodes = 0
    n_leaves = 0
    cap = 2 * (max_depth + 2)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    st_d = np.empty(cap, np.int64)
    st_p = np.empty(cap, np.int64)
    st_l = np.empty(cap, np.int64)
    st_s[0] = 0
    st_e[0] = n_active
    st_d[0] = 0
    st_p[0] = -1
    st_l[0] = 0
    top = 1
    while top > 0:
        top -= 1
        s = st_s[top]
        e = st_e[top]
        d = st_d[top]
        parent = st_p[top]
        isleft = st_l[top]
        nn = e - s
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if isleft == 1:
                left[parent] = node
            else:
                right[parent] = node
        total = 0.0
        for k in range(s, e):
            total += resid[order[0, k]]
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        if d < max_depth and nn >= 2 * min_leaf:
            base_score = total * total * inv[nn]
            for f in range(n_feat):
                row = Xt[f]
                sum_l = 0.0
                for k in range(nn - 1):
                    i = order[f, s + k]
                    sum_l += resid[i]
                    xv = row[i]
                    if xv >= row[order[f, s + k + 1]]:
                        continue
                    nl = k + 1
                    if nl < min_leaf or nn - nl < min_leaf:
                        continue
                    sum_r = total - sum_l
                    gain = sum_l * sum_l * inv[nl] + sum_r * sum_r * inv[nn - nl] - base_score
                    if gain > best_gain:
                        best_gain = gain
                        best_feat = f
                        best_thr = xv
        if best_feat < 0:
            feat[node] = -1
            thr[node] = 0.0
            value[node] = total * inv[nn]
            left[node] = NO_CHILD
            right[node] = NO_CHILD
            leaf_node[n_leaves] = node
            leaf_start[n_leaves] = s
            leaf_end[n_leaves] = e
            n_leaves += 1
        else:
            feat[node] = best_feat
            thr[node] = best_thr
            value[node] = 0.0
            n_left = 0
            rowb = Xt[best_feat]
            for k in range(s, e):
                i = order[0, k]
                if rowb[i] <= best_thr:
                    row_side[i] = 1
                    n_left += 1
                else:
                    row_side[i] = 0
            # stable partition of every feature's slice around the split
            for f in range(n_feat):
                a = 0
                b = n_left
                for k in range(s, e):
                    i = order[f, k]
                    if row_side[i] == 1:
                        tmp[a] = i
                        a += 1
                    else:
                        tmp[b] = i
                        b += 1
                for k in range(nn):
                    order[f, s + k] = tmp[k]
            st_s[top] = s
            st_e[top] = s + n_left
            st_d[top] = d + 1
            st_p[top] = node
            st_l[top] = 1
            top += 1
            st_s[top] = s + n_left
            st_e[top] = e
            st_d[top] = d + 1
            st_p[top] = node
            st_l[top] = 0
            top += 1
    return n_nodes, n_leaves


@njit(cache=True, nogil=True)
def _route_value(x_row, feat, thr, left, right, value):
    node = 0
    while feat[node] >= 0:
        if x_row[feat[node]] <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@njit(cache=True, nogil=True)
def _fit_ensemble(Xt, order0, y, n_rounds, lr, max_depth, min_leaf,
                  sub_idx, use_subsample):
    n_feat, n = Xt.shape
    inv = np.empty(n + 1)
    inv[0] = 0.0
    for i in range(1, n + 1):
        inv[i] = 1.0 / i
    base = 0.0
    for i in range(n):
        base += y[i]
    base /= n
    resid = np.empty(n)
    for i in range(n):
        resid[i] = y[i] - base
    max_nodes = 2 ** (max_depth + 1) - 1
    max_leaves = 2 ** max_depth
    all_feat = np.full((n_rounds, max_nodes), -1, np.int32)
    all_thr = np.zeros((n_rounds, max_nodes))
    all_left = np.full((n_rounds, max_nodes), NO_CHILD, np.int32)
    all_right = np.full((n_rounds, max_nodes), NO_CHILD, np.int32)
    all_value = np.zeros((n_rounds, max_nodes))
    n_nodes = np.zeros(n_rounds, np.int32)
    order = np.empty_like(order0)
    tmp = np.empty(n, np.int32)
    row_side = np.empty(n, np.int8)
    in_sample = np.empty(n, np.int8)
    leaf_node = np.empty(max_leaves, np.int32)
    leaf_start = np.empty(max_leaves, np.int64)
    leaf_end = np.empty(max_leaves, np.int64)
    mse = np.empty(n_rounds)
    x_buf = np.empty(n_feat)
    for m in range(n_rounds):
        if use_subsample:
            n_active = sub_idx.shape[1]
            for i in range(n):
                in_sample[i] = 0
            for k in range(n_active):
                in_sample[sub_idx[m, k]] = 1
            for f in range(n_feat):
                a = 0
                for k in range(n):
                    i = order0[f, k]
                    if in_sample[i] == 1:
                        order[f, a] = i
                        a += 1
        else:
            n_active = n
            order[:] = order0
        nc, n_leaves = _fit_tree(Xt, resid, order, n_active, max_depth, min_leaf,
                                 inv, all_feat[m], all_thr[m], all_left[m],
                                 all_right[m], all_value[m], tmp, row_side,
                                 leaf_node, leaf_start, leaf_end)
        n_nodes[m] = nc
        for li in range(n_leaves):
            v = lr * all_value[m][leaf_node[li]]
            for k in range(leaf_start[li], leaf_end[li]):
                resid[order[0, k]] -= v
        if use_subsample:
            for i in range(n):
                if in_sample[i] == 0:
                    for f in range(n_feat):
                        x_buf[f] = Xt[f, i]
                    resid[i] -= lr * _route_value(x_buf, all_feat[m], all_thr[m],
                                                  all_left[m], all_right[m],
                                                  all_value[m])
        sse = 0.0
        for i in range(n):
            sse += resid[i] * resid[i]
        mse[m] = sse / n
    return base, all_feat, all_thr, all_left, all_right, all_value, n_nodes, mse


@njit(cache=True, nogil=True)
def _predict_batch(X, base, lr, all_feat, all_thr, all_left, all_right,
                   all_value, out):
    n_rows = X.shape[0]
    n_trees = all_feat.shape[0]
    for i in range(n_rows):
        acc = base
        for m in range(n_trees):
            acc += lr * _route_value(X[i], all_feat[m], all_thr[m],
                                     all_left[m], all_right[m], all_value[m])
        out[i] = acc
    return out
