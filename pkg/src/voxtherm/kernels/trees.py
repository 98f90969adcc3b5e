"""Tree growing and forest traversal kernels.

``grow_numba`` and ``grow_numpy`` build identical trees: nodes are numbered in
pre-order, random draws happen in the same order, sums are accumulated
sequentially in sample order and partitions are stable.

Split modes: ``RANDOM`` draws one uniform threshold per candidate feature
(extremely randomized trees); ``BEST`` scans every midpoint of the candidate
feature (classic CART / random forest).
"""
import numpy as np

from .._accel import njit
from ..rng import CounterRNG, nb_randint, nb_uniform

RANDOM = 0
BEST = 1

_INF = np.inf


def _better_py(score, f, t, best, bf, bt):
    return score > best or (score == best and (f < bf or (f == bf and t < bt)))


@njit(cache=True, nogil=True)
def _better(score, f, t, best, bf, bt):
    if score > best:
        return True
    if score == best:
        if f < bf:
            return True
        if f == bf and t < bt:
            return True
    return False


@njit(cache=True, nogil=True)
def grow_numba(X, y, samples, mode, k, min_leaf, max_depth, key):
    n = samples.shape[0]
    F = X.shape[1]
    cap = 2 * (n // min_leaf) + 3
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    nsamp = np.zeros(cap, np.int64)
    importance = np.zeros(F)

    idx = samples.copy()
    buf = np.empty(n, np.int64)
    state = np.zeros(1, np.uint64)

    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_parent = np.empty(cap, np.int64)
    st_isleft = np.empty(cap, np.bool_)
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_parent[0] = -1
    st_isleft[0] = False
    sp = 1

    feats = np.empty(F, np.int64)
    fmin = np.empty(F)
    fmax = np.empty(F)
    cand_f = np.empty(F, np.int64)
    cand_t = np.empty(F)
    sl = np.empty(F)
    nl = np.empty(F, np.int64)
    vals = np.empty(n)
    node_count = 0

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        parent = st_parent[sp]
        node = node_count
        node_count += 1
        if parent >= 0:
            if st_isleft[sp]:
                left[parent] = node
            else:
                right[parent] = node
        nn = end - start
        s = 0.0
        ymin = _INF
        ymax = -_INF
        for i in range(start, end):
            v = y[idx[i]]
            s += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = s / nn
        nsamp[node] = nn
        if nn < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or ymin == ymax:
            continue

        for f in range(F):
            fmin[f] = _INF
            fmax[f] = -_INF
            feats[f] = f
        for i in range(start, end):
            r = idx[i]
            for f in range(F):
                v = X[r, f]
                fmin[f] = min(fmin[f], v)
                fmax[f] = max(fmax[f], v)
        nc = 0
        j = 0
        while j < F and nc < k:
            rr = j + nb_randint(key, state, F - j)
            tmp = feats[j]
            feats[j] = feats[rr]
            feats[rr] = tmp
            f = feats[j]
            j += 1
            if fmax[f] <= fmin[f]:
                continue
            cand_f[nc] = f
            if mode == RANDOM:
                u = nb_uniform(key, state)
                t = fmin[f] + u * (fmax[f] - fmin[f])
                if t >= fmax[f]:
                    t = fmin[f]
                cand_t[nc] = t
            nc += 1

        best = -_INF
        bf = -1
        bt = 0.0
        if nc == 0:
            continue
        if mode == RANDOM:
            for c in range(nc):
                sl[c] = 0.0
                nl[c] = 0
            for i in range(start, end):
                r = idx[i]
                yv = y[r]
                for c in range(nc):
                    if X[r, cand_f[c]] <= cand_t[c]:
                        sl[c] += yv
                        nl[c] += 1
            for c in range(nc):
                nL = nl[c]
                nR = nn - nL
                if nL < min_leaf or nR < min_leaf:
                    continue
                sR = s - sl[c]
                score = sl[c] * sl[c] / nL + sR * sR / nR
                if _better(score, cand_f[c], cand_t[c], best, bf, bt):
                    best = score
                    bf = cand_f[c]
                    bt = cand_t[c]
        else:
            for c in range(nc):
                f = cand_f[c]
                for i in range(nn):
                    vals[i] = X[idx[start + i], f]
                order = np.argsort(vals[:nn], kind="mergesort")
                cs = 0.0
                for p in range(nn - 1):
                    cs += y[idx[start + order[p]]]
                    nL = p + 1
                    nR = nn - nL
                    if nR < min_leaf:
                        break
                    if nL < min_leaf:
                        continue
                    v0 = vals[order[p]]
                    v1 = vals[order[p + 1]]
                    if v1 <= v0:
                        continue
                    t = (v0 + v1) / 2.0
                    if t >= v1:
                        t = v0
                    sR = s - cs
                    score = cs * cs / nL + sR * sR / nR
                    if _better(score, f, t, best, bf, bt):
                        best = score
                        bf = f
                        bt = t
        if bf < 0:
            continue

        gain = best - s * s / nn
        if gain > 0.0:
            importance[bf] += gain
        nleft = 0
        nright = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, bf] <= bt:
                idx[start + nleft] = r
                nleft += 1
            else:
                buf[nright] = r
                nright += 1
        for i in range(nright):
            idx[start + nleft + i] = buf[i]
        feature[node] = bf
        threshold[node] = bt
        # right pushed first so the left child is numbered next (pre-order)
        st_start[sp] = start + nleft
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_parent[sp] = node
        st_isleft[sp] = False
        sp += 1
        st_start[sp] = start
        st_end[sp] = start + nleft
        st_depth[sp] = depth + 1
        st_parent[sp] = node
        st_isleft[sp] = True
        sp += 1

    m = node_count
    return (feature[:m].copy(), threshold[:m].copy(), left[:m].copy(), right[:m].copy(),
            value[:m].copy(), nsamp[:m].copy(), importance)


def grow_numpy(X, y, samples, mode, k, min_leaf, max_depth, key):
    n = samples.shape[0]
    F = X.shape[1]
    rng = CounterRNG(key)
    feature, threshold, left, right, value, nsamp = [], [], [], [], [], []
    importance = np.zeros(F)
    idx = samples.copy()
    stack = [(0, n, 0, -1, False)]
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        sub = idx[start:end]
        ys = y[sub]
        nn = end - start
        s = np.cumsum(ys)[-1]
        value.append(s / nn)
        nsamp.append(nn)
        if nn < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or ys.min() == ys.max():
            continue
        Xn = X[sub]
        fmin = Xn.min(axis=0)
        fmax = Xn.max(axis=0)
        feats = list(range(F))
        cands = []
        j = 0
        while j < F and len(cands) < k:
            rr = j + rng.randint(F - j)
            feats[j], feats[rr] = feats[rr], feats[j]
            f = feats[j]
            j += 1
            if fmax[f] <= fmin[f]:
                continue
            if mode == RANDOM:
                u = rng.uniform()
                t = fmin[f] + u * (fmax[f] - fmin[f])
                if t >= fmax[f]:
                    t = fmin[f]
                cands.append((f, t))
            else:
                cands.append((f, 0.0))
        if not cands:
            continue

        best, bf, bt = -np.inf, -1, 0.0
        if mode == RANDOM:
            cf = np.array([c[0] for c in cands])
            ct = np.array([c[1] for c in cands])
            mask = Xn[:, cf] <= ct
            slv = np.cumsum(ys[:, None] * mask, axis=0)[-1]
            nlv = mask.sum(axis=0)
            for c, (f, t) in enumerate(cands):
                nL = int(nlv[c])
                nR = nn - nL
                if nL < min_leaf or nR < min_leaf:
                    continue
                sR = s - slv[c]
                score = slv[c] * slv[c] / nL + sR * sR / nR
                if _better_py(score, f, t, best, bf, bt):
                    best, bf, bt = score, f, t
        else:
            for f, _ in cands:
                vals = Xn[:, f]
                order = np.argsort(vals, kind="stable")
                v = vals[order]
                cs = np.cumsum(ys[order])[:-1]
                nL = np.arange(1, nn)
                nR = nn - nL
                ok = (nL >= min_leaf) & (nR >= min_leaf) & (v[1:] > v[:-1])
                if not ok.any():
                    continue
                t = (v[:-1] + v[1:]) / 2.0
                t = np.where(t >= v[1:], v[:-1], t)
                sR = s - cs
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = cs * cs / nL + sR * sR / nR
                score = np.where(ok, score, -np.inf)
                p = int(np.argmax(score))
                if _better_py(score[p], f, t[p], best, bf, bt):
                    best, bf, bt = score[p], f, t[p]
        if bf < 0:
            continue
        gain = best - s * s / nn
        if gain > 0.0:
            importance[bf] += gain
        go_left = Xn[:, bf] <= bt
        lsub, rsub = sub[go_left], sub[~go_left]
        idx[start:start + len(lsub)] = lsub
        idx[start + len(lsub):end] = rsub
        feature[node] = bf
        threshold[node] = bt
        stack.append((start + len(lsub), end, depth + 1, node, False))
        stack.append((start, start + len(lsub), depth + 1, node, True))
    return (np.array(feature, np.int64), np.array(threshold, np.float64), np.array(left, np.int64),
            np.array(right, np.int64), np.array(value, np.float64), np.array(nsamp, np.int64), importance)


@njit(cache=True, nogil=True)
def predict_numba(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    n_trees = roots.shape[0]
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for tr in range(n_trees):
            node = roots[tr]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


def predict_numpy(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    acc = np.zeros(n)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        live = feature[node] >= 0
        while live.any():
            r = rows[live]
            nd = node[live]
            go_left = X[r, feature[nd]] <= threshold[nd]
            node[live] = np.where(go_left, left[nd], right[nd])
            live = feature[node] >= 0
        acc += value[node]
    return acc / len(roots)
