# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled inner loops: Gini tree growth, forest traversal, lasso coordinate descent.

Must stay bit-for-bit in step with ``_fallback.py``.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint64_t
from libc.math cimport fabs
from libcpp.algorithm cimport sort as cpp_sort
from libcpp.vector cimport vector

cnp.import_array()

ctypedef const cnp.uint8_t[:, ::1] uint8_t_2d

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t LEFT_SALT = 0xA5A5A5A5A5A5A5A5ULL
cdef uint64_t RIGHT_SALT = 0x5A5A5A5A5A5A5A5AULL


cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + GOLDEN
    z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    cdef uint64_t s = x
    return _splitmix(&s)


def mix64(uint64_t x):
    return _mix(x)


def grow_tree(const int32_t[:, ::1] codes,
              const double[::1] cut_values,
              const int64_t[::1] cut_offsets,
              const double[::1] y,
              const double[::1] weight,
              int mtry,
              double min_leaf,
              uint64_t seed):
    """Grow one Gini tree on the rows with positive ``weight``.

    ``codes[f, r]`` is the dense rank of row r's value in column f and
    ``cut_values[cut_offsets[f] + code]`` maps it back to the value.
    """
    cdef Py_ssize_t p = codes.shape[0]
    cdef Py_ssize_t n = codes.shape[1]
    cdef Py_ssize_t r, k, t, f, c, a, s, e, lo, hi, nd, pos, m
    cdef int32_t tmp32

    cdef vector[int32_t] idx
    for r in range(n):
        if weight[r] > 0:
            idx.push_back(<int32_t>r)
    cdef Py_ssize_t n_in = idx.size()
    cdef Py_ssize_t max_nodes = 2 * n_in + 1
    if mtry > p:
        mtry = <int>p
    if mtry < 1:
        mtry = 1

    feature_a = np.full(max_nodes, -1, dtype=np.int32)
    threshold_a = np.zeros(max_nodes, dtype=np.float64)
    left_a = np.full(max_nodes, -1, dtype=np.int32)
    right_a = np.full(max_nodes, -1, dtype=np.int32)
    value_a = np.zeros(max_nodes, dtype=np.float64)
    nw_a = np.zeros(max_nodes, dtype=np.float64)
    dec_a = np.zeros(max_nodes, dtype=np.float64)
    cdef int32_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int32_t[::1] left = left_a
    cdef int32_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef double[::1] nweight = nw_a
    cdef double[::1] decrease = dec_a

    cdef Py_ssize_t max_nd = 1
    for f in range(p):
        if cut_offsets[f + 1] - cut_offsets[f] > max_nd:
            max_nd = cut_offsets[f + 1] - cut_offsets[f]
    cdef vector[double] cnt_w
    cdef vector[double] cnt_p
    cnt_w.resize(max_nd, 0.0)
    cnt_p.resize(max_nd, 0.0)
    cdef vector[uint64_t] keys
    keys.resize(n_in + 1)
    cdef vector[int32_t] feat
    feat.resize(p)
    for f in range(p):
        feat[f] = <int32_t>f
    cdef vector[Py_ssize_t] swaps
    swaps.resize(mtry)

    # explicit DFS stack: node id, start, end, key
    cdef vector[int64_t] st_node, st_s, st_e
    cdef vector[uint64_t] st_key
    st_node.push_back(0); st_s.push_back(0); st_e.push_back(n_in); st_key.push_back(seed)
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t node
    cdef uint64_t key, rng
    cdef double W, P, wr, gp, WL, PL, WR, PR, S, parent, best_S, best_thr, col_S, col_thr, u_lo, u_hi, mid
    cdef Py_ssize_t best_f, best_code, col_code, prev
    cdef bint found, col_found
    cdef int32_t code

    with nogil:
        while st_node.size() > 0:
            node = st_node.back(); st_node.pop_back()
            s = st_s.back(); st_s.pop_back()
            e = st_e.back(); st_e.pop_back()
            key = st_key.back(); st_key.pop_back()

            W = 0.0
            P = 0.0
            for k in range(s, e):
                r = idx[k]
                W += weight[r]
                P += weight[r] * y[r]
            value[node] = P / W
            nweight[node] = W
            if W <= min_leaf or P == 0.0 or P == W:
                continue

            rng = key
            for t in range(mtry):
                m = t + <Py_ssize_t>(_splitmix(&rng) % <uint64_t>(p - t))
                swaps[t] = m
                tmp32 = feat[t]; feat[t] = feat[m]; feat[m] = tmp32

            found = False
            best_S = 0.0
            best_f = -1
            best_code = -1
            best_thr = 0.0
            for t in range(mtry):
                f = feat[t]
                nd = cut_offsets[f + 1] - cut_offsets[f]
                if nd < 2:
                    continue
                col_found = False
                col_S = 0.0
                col_code = -1
                col_thr = 0.0
                WL = 0.0
                PL = 0.0
                prev = -1
                if nd <= 4 * (e - s):
                    for k in range(s, e):
                        r = idx[k]
                        code = codes[f, r]
                        cnt_w[code] += weight[r]
                        cnt_p[code] += weight[r] * y[r]
                    for c in range(nd):
                        if cnt_w[c] > 0.0:
                            if prev >= 0:
                                WR = W - WL
                                PR = P - PL
                                S = PL * PL / WL + PR * PR / WR
                                if (not col_found) or S > col_S:
                                    col_found = True
                                    col_S = S
                                    col_code = prev
                                    u_lo = cut_values[cut_offsets[f] + prev]
                                    u_hi = cut_values[cut_offsets[f] + c]
                                    mid = (u_lo + u_hi) * 0.5
                                    if mid == u_hi:
                                        mid = u_lo
                                    col_thr = mid
                            WL += cnt_w[c]
                            PL += cnt_p[c]
                            prev = c
                            cnt_w[c] = 0.0
                            cnt_p[c] = 0.0
                else:
                    for k in range(s, e):
                        keys[k - s] = ((<uint64_t>codes[f, idx[k]]) << 32) | <uint64_t>(k - s)
                    cpp_sort(keys.begin(), keys.begin() + (e - s))
                    pos = 0
                    while pos < e - s:
                        c = <Py_ssize_t>(keys[pos] >> 32)
                        wr = 0.0
                        gp = 0.0
                        while pos < e - s and <Py_ssize_t>(keys[pos] >> 32) == c:
                            r = idx[s + <Py_ssize_t>(keys[pos] & 0xFFFFFFFFULL)]
                            wr += weight[r]
                            gp += weight[r] * y[r]
                            pos += 1
                        if prev >= 0:
                            WR = W - WL
                            PR = P - PL
                            S = PL * PL / WL + PR * PR / WR
                            if (not col_found) or S > col_S:
                                col_found = True
                                col_S = S
                                col_code = prev
                                u_lo = cut_values[cut_offsets[f] + prev]
                                u_hi = cut_values[cut_offsets[f] + c]
                                mid = (u_lo + u_hi) * 0.5
                                if mid == u_hi:
                                    mid = u_lo
                                col_thr = mid
                        WL += wr
                        PL += gp
                        prev = c
                if col_found:
                    if (not found) or col_S > best_S or (col_S == best_S and f < best_f):
                        found = True
                        best_S = col_S
                        best_f = f
                        best_code = col_code
                        best_thr = col_thr

            t = mtry - 1
            while t >= 0:
                m = swaps[t]
                tmp32 = feat[t]; feat[t] = feat[m]; feat[m] = tmp32
                t -= 1

            if not found:
                continue

            lo = s
            hi = e - 1
            while lo <= hi:
                if codes[best_f, idx[lo]] <= best_code:
                    lo += 1
                else:
                    tmp32 = idx[lo]; idx[lo] = idx[hi]; idx[hi] = tmp32
                    hi -= 1

            parent = P * P / W
            feature[node] = <int32_t>best_f
            threshold[node] = best_thr
            decrease[node] = 2.0 * (best_S - parent) if best_S > parent else 0.0
            left[node] = <int32_t>n_nodes
            right[node] = <int32_t>(n_nodes + 1)
            st_node.push_back(n_nodes + 1); st_s.push_back(lo); st_e.push_back(e); st_key.push_back(_mix(key ^ RIGHT_SALT))
            st_node.push_back(n_nodes); st_s.push_back(s); st_e.push_back(lo); st_key.push_back(_mix(key ^ LEFT_SALT))
            n_nodes += 2

    return (feature_a[:n_nodes].copy(), threshold_a[:n_nodes].copy(), left_a[:n_nodes].copy(),
            right_a[:n_nodes].copy(), value_a[:n_nodes].copy(), nw_a[:n_nodes].copy(),
            dec_a[:n_nodes].copy())


cdef inline Py_ssize_t _descend(const double[:, ::1] X, Py_ssize_t i, Py_ssize_t base,
                                const int32_t[::1] feature, const double[::1] threshold,
                                const int32_t[::1] left, const int32_t[::1] right,
                                const double[::1] nweight, double min_leaf,
                                Py_ssize_t override_f, double override_v) noexcept nogil:
    cdef Py_ssize_t node = base
    cdef Py_ssize_t f
    cdef double x
    while feature[node] >= 0 and nweight[node] > min_leaf:
        f = feature[node]
        x = override_v if f == override_f else X[i, f]
        if x <= threshold[node]:
            node = base + left[node]
        else:
            node = base + right[node]
    return node


def predict_forest(const double[:, ::1] X,
                   const int32_t[::1] feature, const double[::1] threshold,
                   const int32_t[::1] left, const int32_t[::1] right,
                   const double[::1] value, const double[::1] nweight,
                   const int64_t[::1] offsets, double min_leaf):
    """Mean leaf value over trees for every row of X."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t T = offsets.shape[0] - 1
    out_a = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, t
    with nogil:
        for t in range(T):
            for i in range(n):
                out[i] += value[_descend(X, i, offsets[t], feature, threshold, left, right, nweight, min_leaf, -1, 0.0)]
        for i in range(n):
            out[i] = out[i] / T
    return out_a


def oob_sums(const double[:, ::1] X,
             const int32_t[::1] feature, const double[::1] threshold,
             const int32_t[::1] left, const int32_t[::1] right,
             const double[::1] value, const double[::1] nweight,
             const int64_t[::1] offsets, const double[::1] min_leafs,
             const uint8_t_2d inbag):
    """Per-row sums of out-of-bag tree predictions for each ``min_leafs`` entry."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t T = offsets.shape[0] - 1
    cdef Py_ssize_t L = min_leafs.shape[0]
    sums_a = np.zeros((L, n), dtype=np.float64)
    counts_a = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] sums = sums_a
    cdef int64_t[::1] counts = counts_a
    cdef Py_ssize_t i, t, l
    with nogil:
        for t in range(T):
            for i in range(n):
                if inbag[t, i]:
                    continue
                counts[i] += 1
                for l in range(L):
                    sums[l, i] += value[_descend(X, i, offsets[t], feature, threshold, left, right, nweight,
                                                 min_leafs[l], -1, 0.0)]
    return sums_a, counts_a


def permutation_increase(const double[:, ::1] X, const double[::1] y,
                         const int32_t[::1] feature, const double[::1] threshold,
                         const int32_t[::1] left, const int32_t[::1] right,
                         const double[::1] value, const double[::1] nweight,
                         const int32_t[::1] oob_rows, const int32_t[::1] features_used,
                         uint64_t seed):
    """Increase in one tree's OOB squared error after permuting each used column."""
    cdef Py_ssize_t n = oob_rows.shape[0]
    cdef Py_ssize_t nf = features_used.shape[0]
    out_a = np.zeros(nf, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef vector[int32_t] perm
    perm.resize(n)
    cdef Py_ssize_t i, q, f, m
    cdef int32_t tmp
    cdef uint64_t rng
    cdef double base = 0.0, err, d
    if n == 0:
        return out_a
    with nogil:
        for i in range(n):
            d = y[oob_rows[i]] - value[_descend(X, oob_rows[i], 0, feature, threshold, left, right, nweight, 0.0, -1, 0.0)]
            base += d * d
        base = base / n
        for q in range(nf):
            f = features_used[q]
            for i in range(n):
                perm[i] = <int32_t>i
            rng = _mix(seed ^ ((<uint64_t>(f + 1)) * GOLDEN))
            i = n - 1
            while i > 0:
                m = <Py_ssize_t>(_splitmix(&rng) % <uint64_t>(i + 1))
                tmp = perm[i]; perm[i] = perm[m]; perm[m] = tmp
                i -= 1
            err = 0.0
            for i in range(n):
                d = y[oob_rows[i]] - value[_descend(X, oob_rows[i], 0, feature, threshold, left, right, nweight, 0.0,
                                                    f, X[oob_rows[perm[i]], f])]
                err += d * d
            out[q] = err / n - base
    return out_a


def cd_wls_lasso(const double[::1, :] X, const double[::1] w, double[::1] r,
                 double[::1] beta, double[::1] b0, const double[::1] xwx,
                 double lam, double tol, int max_sweeps):
    """Coordinate descent for one weighted least-squares lasso subproblem.

    Minimises (1/2n) sum w_i (z_i - b0 - x_i beta)^2 + lam * |beta|_1 where
    ``r`` holds the weighted residual w * (z - b0 - X beta) and is updated
    in place, as are ``beta`` and ``b0``.  Returns the number of sweeps.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t i, j, sweeps = 0
    cdef double g, u, new, d, dlx, sw = 0.0, sr, inv_n = 1.0 / n
    cdef bint full = True
    cdef vector[char] active
    active.resize(p, 0)
    for i in range(n):
        sw += w[i]
    with nogil:
        while sweeps < max_sweeps:
            sweeps += 1
            dlx = 0.0
            for j in range(p):
                if not full and not active[j]:
                    continue
                if xwx[j] <= 0.0:
                    continue
                g = 0.0
                for i in range(n):
                    g += X[i, j] * r[i]
                u = g * inv_n + xwx[j] * beta[j]
                if u > lam:
                    new = (u - lam) / xwx[j]
                elif u < -lam:
                    new = (u + lam) / xwx[j]
                else:
                    new = 0.0
                d = new - beta[j]
                if d != 0.0:
                    beta[j] = new
                    for i in range(n):
                        r[i] -= d * w[i] * X[i, j]
                    if xwx[j] * d * d > dlx:
                        dlx = xwx[j] * d * d
                    if new != 0.0:
                        active[j] = 1
            sr = 0.0
            for i in range(n):
                sr += r[i]
            d = sr / sw
            if d != 0.0:
                b0[0] += d
                for i in range(n):
                    r[i] -= w[i] * d
                if sw * inv_n * d * d > dlx:
                    dlx = sw * inv_n * d * d
            if dlx < tol:
                if full:
                    break
                full = True
            else:
                full = False
    return sweeps
