"""Numba kernels for HNSW graph construction and search.

Pure-Python traversal is far too slow at corpus scale, so the graph lives in
flat int32/float32 arrays and the hot loops are jitted.  Layout: node i owns
a contiguous block of adjacency slots starting at offsets[i]; level 0 gets
2*M slots, every level above gets M.  cnt[i, l] is the live neighbor count.

Distances are 1 - dot(a, b); vectors are expected unit length, so this is
cosine distance.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _dot(vectors, i, q):
    s = 0.0
    for j in range(q.shape[0]):
        s += vectors[i, j] * q[j]
    return s


@njit(cache=True)
def _adj_base(offsets, m, node, level):
    if level == 0:
        return offsets[node]
    return offsets[node] + 2 * m + m * (level - 1)


@njit(cache=True)
def _hpush(hd, hi, size, d, i):
    # min-heap ordered by hd
    hd[size] = d
    hi[size] = i
    k = size
    while k > 0:
        parent = (k - 1) >> 1
        if hd[parent] <= hd[k]:
            break
        hd[parent], hd[k] = hd[k], hd[parent]
        hi[parent], hi[k] = hi[k], hi[parent]
        k = parent
    return size + 1


@njit(cache=True)
def _hpop(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    k = 0
    while True:
        left = 2 * k + 1
        if left >= size:
            break
        smallest = left
        right = left + 1
        if right < size and hd[right] < hd[left]:
            smallest = right
        if hd[k] <= hd[smallest]:
            break
        hd[k], hd[smallest] = hd[smallest], hd[k]
        hi[k], hi[smallest] = hi[smallest], hi[k]
        k = smallest
    return size


@njit(cache=True)
def _greedy(vectors, adj, offsets, cnt, m, q, entry, level):
    cur = entry
    cur_d = 1.0 - _dot(vectors, cur, q)
    improved = True
    while improved:
        improved = False
        base = _adj_base(offsets, m, cur, level)
        for t in range(cnt[cur, level]):
            nb = adj[base + t]
            d = 1.0 - _dot(vectors, nb, q)
            if d < cur_d:
                cur_d = d
                cur = nb
                improved = True
    return cur


@njit(cache=True)
def _search_layer(vectors, adj, offsets, cnt, m, q, entry, ef, level, visited, epoch):
    # min-heap of candidates to expand
    cand_d = np.empty(1024, np.float64)
    cand_i = np.empty(1024, np.int64)
    n_cand = 0
    # best-ef results kept as a max-heap via negated distances
    res_d = np.empty(ef + 1, np.float64)
    res_i = np.empty(ef + 1, np.int64)
    n_res = 0

    d0 = 1.0 - _dot(vectors, entry, q)
    visited[entry] = epoch
    n_cand = _hpush(cand_d, cand_i, n_cand, d0, entry)
    n_res = _hpush(res_d, res_i, n_res, -d0, entry)

    while n_cand > 0:
        d = cand_d[0]
        c = cand_i[0]
        n_cand = _hpop(cand_d, cand_i, n_cand)
        if n_res >= ef and d > -res_d[0]:
            break
        base = _adj_base(offsets, m, c, level)
        for t in range(cnt[c, level]):
            nb = adj[base + t]
            if visited[nb] == epoch:
                continue
            visited[nb] = epoch
            dn = 1.0 - _dot(vectors, nb, q)
            if n_res < ef or dn < -res_d[0]:
                if n_cand >= cand_d.shape[0]:
                    new_d = np.empty(cand_d.shape[0] * 2, np.float64)
                    new_i = np.empty(cand_i.shape[0] * 2, np.int64)
                    new_d[:n_cand] = cand_d[:n_cand]
                    new_i[:n_cand] = cand_i[:n_cand]
                    cand_d = new_d
                    cand_i = new_i
                n_cand = _hpush(cand_d, cand_i, n_cand, dn, nb)
                n_res = _hpush(res_d, res_i, n_res, -dn, nb)
                if n_res > ef:
                    n_res = _hpop(res_d, res_i, n_res)

    out_d = np.empty(n_res, np.float64)
    out_i = np.empty(n_res, np.int64)
    for t in range(n_res):
        out_d[t] = -res_d[t]
        out_i[t] = res_i[t]
    return out_d, out_i


@njit(cache=True)
def _connect(vectors, adj, offsets, cnt, m, node, new, level, cap):
    c = cnt[node, level]
    base = _adj_base(offsets, m, node, level)
    if c < cap:
        adj[base + c] = new
        cnt[node, level] = c + 1
        return
    # keep the cap closest among the existing neighbors plus the new one
    dists = np.empty(c + 1, np.float64)
    ids = np.empty(c + 1, np.int64)
    for t in range(c):
        ids[t] = adj[base + t]
        dists[t] = 1.0 - _dot(vectors, adj[base + t], vectors[node])
    ids[c] = new
    dists[c] = 1.0 - _dot(vectors, new, vectors[node])
    order = np.argsort(dists)
    for t in range(cap):
        adj[base + t] = ids[order[t]]
    cnt[node, level] = cap


@njit(cache=True)
def build_graph(vectors, node_levels, offsets, cnt, adj, m, ef_construction):
    """Insert all nodes in index order; returns (entry_point, max_level)."""
    n = vectors.shape[0]
    visited = np.zeros(n, np.int64)
    epoch = 0
    entry = -1
    max_level = -1
    for i in range(n):
        li = node_levels[i]
        if entry == -1:
            entry = i
            max_level = li
            continue
        q = vectors[i]
        cur = entry
        level = max_level
        while level > li:
            cur = _greedy(vectors, adj, offsets, cnt, m, q, cur, level)
            level -= 1
        level = min(li, max_level)
        while level >= 0:
            epoch += 1
            res_d, res_i = _search_layer(
                vectors, adj, offsets, cnt, m, q, cur, ef_construction,
                level, visited, epoch,
            )
            order = np.argsort(res_d)
            n_conn = min(m, res_i.shape[0])
            cap = 2 * m if level == 0 else m
            base = _adj_base(offsets, m, i, level)
            for t in range(n_conn):
                adj[base + t] = res_i[order[t]]
            cnt[i, level] = n_conn
            for t in range(n_conn):
                _connect(vectors, adj, offsets, cnt, m, res_i[order[t]], i, level, cap)
            cur = res_i[order[0]]
            level -= 1
        if li > max_level:
            max_level = li
            entry = i
    return entry, max_level


@njit(cache=True)
def search_graph(vectors, offsets, cnt, adj, m, entry, max_level, q, k, ef):
    """Descend greedily to level 0, then beam-search; returns ids and
    distances sorted ascending by distance."""
    cur = entry
    for level in range(max_level, 0, -1):
        cur = _greedy(vectors, adj, offsets, cnt, m, q, cur, level)
    visited = np.zeros(vectors.shape[0], np.int64)
    beam = ef if ef > k else k
    res_d, res_i = _search_layer(
        vectors, adj, offsets, cnt, m, q, cur, beam, 0, visited, 1
    )
    order = np.argsort(res_d)
    n_out = min(k, res_i.shape[0])
    out_i = np.empty(n_out, np.int64)
    out_d = np.empty(n_out, np.float64)
    for t in range(n_out):
        out_i[t] = res_i[order[t]]
        out_d[t] = res_d[order[t]]
    return out_i, out_d
