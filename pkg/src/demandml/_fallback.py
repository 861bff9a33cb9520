"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Tree growth reproduces the compiled trees exactly: node weights are integer
bootstrap counts (exact in float64), the split score is evaluated with the
same operation order, and the per-node column sampler is the same
splitmix64 stream.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
LEFT_SALT = 0xA5A5A5A5A5A5A5A5
RIGHT_SALT = 0x5A5A5A5A5A5A5A5A


def _splitmix(state: int) -> tuple[int, int]:
    state = (state + GOLDEN) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def mix64(x: int) -> int:
    return _splitmix(x & MASK)[1]


def _best_split_for_column(codes_f, cuts_f, w, wy, W, P):
    nd = len(cuts_f)
    cw = np.bincount(codes_f, weights=w, minlength=nd)
    cp = np.bincount(codes_f, weights=wy, minlength=nd)
    present = np.flatnonzero(cw > 0.0)
    if len(present) < 2:
        return None
    WL = np.cumsum(cw[present])[:-1]
    PL = np.cumsum(cp[present])[:-1]
    WR = W - WL
    PR = P - PL
    S = PL * PL / WL + PR * PR / WR
    k = int(np.argmax(S))
    lo, hi = cuts_f[present[k]], cuts_f[present[k + 1]]
    mid = (lo + hi) * 0.5
    if mid == hi:
        mid = lo
    return float(S[k]), int(present[k]), float(mid)


def grow_tree(codes, cut_values, cut_offsets, y, weight, mtry, min_leaf, seed):
    p, n = codes.shape
    mtry = max(1, min(int(mtry), p))
    idx = np.flatnonzero(weight > 0)
    max_nodes = 2 * len(idx) + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)
    nweight = np.zeros(max_nodes)
    decrease = np.zeros(max_nodes)
    feat = list(range(p))
    stack = [(0, idx, int(seed) & MASK)]
    n_nodes = 1
    while stack:
        node, rows, key = stack.pop()
        w = weight[rows]
        wy = w * y[rows]
        W = float(np.sum(w))
        P = float(np.sum(wy))
        value[node] = P / W
        nweight[node] = W
        if W <= min_leaf or P == 0.0 or P == W:
            continue
        rng = key
        swaps = []
        for t in range(mtry):
            rng, z = _splitmix(rng)
            m = t + z % (p - t)
            swaps.append(m)
            feat[t], feat[m] = feat[m], feat[t]
        sampled = feat[:mtry]
        for t in range(mtry - 1, -1, -1):
            m = swaps[t]
            feat[t], feat[m] = feat[m], feat[t]

        best = None
        for f in sampled:
            lo, hi = cut_offsets[f], cut_offsets[f + 1]
            if hi - lo < 2:
                continue
            res = _best_split_for_column(codes[f, rows], cut_values[lo:hi], w, wy, W, P)
            if res is None:
                continue
            S, code, thr = res
            if best is None or S > best[0] or (S == best[0] and f < best[1]):
                best = (S, f, code, thr)
        if best is None:
            continue
        S, f, code, thr = best
        go_left = codes[f, rows] <= code
        parent = P * P / W
        feature[node] = f
        threshold[node] = thr
        decrease[node] = 2.0 * (S - parent) if S > parent else 0.0
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack.append((n_nodes + 1, rows[~go_left], mix64(key ^ RIGHT_SALT)))
        stack.append((n_nodes, rows[go_left], mix64(key ^ LEFT_SALT)))
        n_nodes += 2
    k = n_nodes
    return (feature[:k], threshold[:k], left[:k], right[:k], value[:k], nweight[:k], decrease[:k])


def _descend_all(X, base, feature, threshold, left, right, nweight, min_leaf, override=None):
    n = X.shape[0]
    node = np.full(n, base, dtype=np.int64)
    rows = np.arange(n)
    while True:
        f = feature[node]
        active = (f >= 0) & (nweight[node] > min_leaf)
        if not active.any():
            return node
        a = np.flatnonzero(active)
        fa = f[a]
        x = X[rows[a], fa]
        if override is not None:
            of, ov = override
            sel = fa == of
            x = np.where(sel, ov[a], x)
        go_left = x <= threshold[node[a]]
        node[a] = base + np.where(go_left, left[node[a]], right[node[a]])


def predict_forest(X, feature, threshold, left, right, value, nweight, offsets, min_leaf):
    out = np.zeros(X.shape[0])
    T = len(offsets) - 1
    for t in range(T):
        out += value[_descend_all(X, offsets[t], feature, threshold, left, right, nweight, min_leaf)]
    return out / T


def oob_sums(X, feature, threshold, left, right, value, nweight, offsets, min_leafs, inbag):
    n = X.shape[0]
    T = len(offsets) - 1
    sums = np.zeros((len(min_leafs), n))
    counts = np.zeros(n, dtype=np.int64)
    for t in range(T):
        oob = np.flatnonzero(inbag[t] == 0)
        if len(oob) == 0:
            continue
        counts[oob] += 1
        Xo = X[oob]
        for li, ml in enumerate(min_leafs):
            sums[li, oob] += value[_descend_all(Xo, offsets[t], feature, threshold, left, right, nweight, ml)]
    return sums, counts


def _seqsum(a):
    # left-to-right accumulation, matching the compiled loop
    return float(np.cumsum(a)[-1])


def permutation_increase(X, y, feature, threshold, left, right, value, nweight, oob_rows, features_used, seed):
    n = len(oob_rows)
    out = np.zeros(len(features_used))
    if n == 0:
        return out
    Xo = X[oob_rows]
    yo = y[oob_rows]
    base = _seqsum((yo - value[_descend_all(Xo, 0, feature, threshold, left, right, nweight, 0.0)]) ** 2) / n
    for q, f in enumerate(features_used):
        perm = list(range(n))
        rng = mix64(int(seed) ^ (((int(f) + 1) * GOLDEN) & MASK))
        for i in range(n - 1, 0, -1):
            rng, z = _splitmix(rng)
            m = z % (i + 1)
            perm[i], perm[m] = perm[m], perm[i]
        override = (int(f), Xo[np.array(perm), f])
        pred = value[_descend_all(Xo, 0, feature, threshold, left, right, nweight, 0.0, override)]
        out[q] = _seqsum((yo - pred) ** 2) / n - base
    return out


def cd_wls_lasso(X, w, r, beta, b0, xwx, lam, tol, max_sweeps):
    n, p = X.shape
    inv_n = 1.0 / n
    sw = float(np.sum(w))
    active = np.zeros(p, dtype=bool)
    full = True
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        dlx = 0.0
        cols = range(p) if full else np.flatnonzero(active)
        for j in cols:
            if xwx[j] <= 0.0:
                continue
            u = float(X[:, j] @ r) * inv_n + xwx[j] * beta[j]
            if u > lam:
                new = (u - lam) / xwx[j]
            elif u < -lam:
                new = (u + lam) / xwx[j]
            else:
                new = 0.0
            d = new - beta[j]
            if d != 0.0:
                beta[j] = new
                r -= d * w * X[:, j]
                dlx = max(dlx, xwx[j] * d * d)
                if new != 0.0:
                    active[j] = True
        d = float(np.sum(r)) / sw
        if d != 0.0:
            b0[0] += d
            r -= w * d
            dlx = max(dlx, sw * inv_n * d * d)
        if dlx < tol:
            if full:
                break
            full = True
        else:
            full = False
    return sweeps
