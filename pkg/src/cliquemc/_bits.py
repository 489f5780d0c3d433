"""Bitset primitives and depth-first clique enumeration kernels (numba).

Adjacency rows are packed little-endian into ``uint64`` words: vertex ``v`` is
bit ``v & 63`` of word ``v >> 6``.  Every enumeration kernel extends a clique
only by common neighbours of higher index, so each clique (including the empty
one) is visited exactly once, in lexicographic order of its sorted vertex list.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_ONE = np.uint64(1)
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def pack_rows(adj: np.ndarray) -> np.ndarray:
    """Pack a boolean ``(n, n)`` matrix into ``(n, ceil(n/64))`` uint64 words."""
    n = adj.shape[0]
    n_words = max(1, (n + 63) // 64)
    packed = np.packbits(adj.astype(bool), axis=1, bitorder="little")
    padded = np.zeros((n, n_words * 8), dtype=np.uint8)
    padded[:, : packed.shape[1]] = packed
    return padded.view("<u8").astype(np.uint64).reshape(n, n_words)


def pack_vector(flags: np.ndarray) -> np.ndarray:
    return pack_rows(np.asarray(flags, dtype=bool)[None, :])[0]


@njit(cache=True, inline="always")
def popcount64(x):
    x = x - ((x >> _ONE) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return np.int64((x * _H01) >> np.uint64(56))


@njit(cache=True)
def popcount_words(words):
    total = 0
    for w in range(words.shape[0]):
        total += popcount64(words[w])
    return total


@njit(cache=True, inline="always")
def _pop_lowest(rem, d):
    """Remove and return the lowest set vertex of ``rem[d]``; -1 if empty."""
    for w in range(rem.shape[1]):
        x = rem[d, w]
        if x != 0:
            low = x & (~x + _ONE)
            rem[d, w] = x ^ low
            return w * 64 + popcount64(low - _ONE)
    return -1


@njit(cache=True)
def census_kernel(adj, planted, n, max_size, budget):
    """Count cliques by (size, planted overlap) up to ``max_size``.

    Returns ``(table, nodes, complete)``; ``complete`` is False when more than
    ``budget`` cliques would be visited, in which case ``table`` is partial.
    """
    n_words = adj.shape[1]
    table = np.zeros((max_size + 1, max_size + 1), dtype=np.int64)
    table[0, 0] = 1
    nodes = 1
    if max_size == 0 or n == 0:
        return table, nodes, True
    rem = np.zeros((max_size + 1, n_words), dtype=np.uint64)
    over = np.zeros(max_size + 1, dtype=np.int64)
    for v in range(n):
        rem[0, v >> 6] |= _ONE << np.uint64(v & 63)
    d = 0
    while d >= 0:
        v = _pop_lowest(rem, d)
        if v < 0:
            d -= 1
            continue
        s = d + 1
        r = over[d] + planted[v]
        table[s, r] += 1
        nodes += 1
        if nodes > budget:
            return table, nodes, False
        if s < max_size:
            nonempty = False
            for w in range(n_words):
                x = rem[d, w] & adj[v, w]
                rem[s, w] = x
                if x != 0:
                    nonempty = True
            if nonempty:
                over[s] = r
                d = s
    return table, nodes, True


@njit(cache=True)
def enumerate_kernel(adj1, n, max_size, budget):
    """Enumerate clique bitmasks (n <= 64, one word per row) in DFS order.

    Returns ``(masks, complete)``.
    """
    cap = 1024
    out = np.zeros(cap, dtype=np.uint64)
    count = 1
    if max_size == 0 or n == 0:
        return out[:1].copy(), True
    rem = np.zeros((max_size + 1, 1), dtype=np.uint64)
    cur = np.zeros(max_size + 1, dtype=np.uint64)
    for v in range(n):
        rem[0, 0] |= _ONE << np.uint64(v)
    d = 0
    while d >= 0:
        v = _pop_lowest(rem, d)
        if v < 0:
            d -= 1
            continue
        s = d + 1
        mask = cur[d] | (_ONE << np.uint64(v))
        if count >= budget:
            return out[:count].copy(), False
        if count == cap:
            bigger = np.zeros(cap * 2, dtype=np.uint64)
            bigger[:cap] = out
            out = bigger
            cap *= 2
        out[count] = mask
        count += 1
        if s < max_size:
            x = rem[d, 0] & adj1[v]
            if x != 0:
                rem[s, 0] = x
                cur[s] = mask
                d = s
    return out[:count].copy(), True


@njit(cache=True)
def expansion_kernel(adj, n, max_size, budget, max_violations, store_cap):
    """Exhaustively test ``|A(C)| * 20 * 2^|C| >= n`` over cliques with
    ``|C| <= max_size``.

    Returns ``(nodes, n_violations, stored, stored_sizes, min_a, min_size,
    complete)``.  ``stored`` holds up to ``store_cap`` violating cliques as
    -1-padded rows of vertex indices.  The minimum observed ratio is
    ``min_a * 2**min_size / n``.  The search stops after ``max_violations``
    violations (<= 0: never) and reports ``complete=False``.
    """
    n_words = adj.shape[1]
    stored = -np.ones((store_cap, max_size + 1), dtype=np.int64)
    stored_sizes = np.zeros(store_cap, dtype=np.int64)
    n_viol = 0
    nodes = 1
    # the empty clique: |A| = n, ratio 1
    best_num = n
    best_size = 0
    if max_size == 0 or n == 0:
        return nodes, n_viol, stored, stored_sizes, best_num, best_size, True
    rem = np.zeros((max_size + 1, n_words), dtype=np.uint64)
    comm = np.zeros((max_size + 1, n_words), dtype=np.uint64)
    verts = np.zeros(max_size + 1, dtype=np.int64)
    for v in range(n):
        rem[0, v >> 6] |= _ONE << np.uint64(v & 63)
        comm[0, v >> 6] |= _ONE << np.uint64(v & 63)
    d = 0
    while d >= 0:
        v = _pop_lowest(rem, d)
        if v < 0:
            d -= 1
            continue
        s = d + 1
        verts[d] = v
        a_size = 0
        for w in range(n_words):
            c = comm[d, w] & adj[v, w]
            comm[s, w] = c
            a_size += popcount64(c)
        nodes += 1
        # compare a_size * 2^s / n against best_num * 2^best_size / n
        if s >= best_size:
            if a_size << (s - best_size) < best_num:
                best_num = a_size
                best_size = s
        else:
            if a_size < best_num << (best_size - s):
                best_num = a_size
                best_size = s
        if a_size * 20 * (1 << s) < n:
            if n_viol < store_cap:
                for i in range(s):
                    stored[n_viol, i] = verts[i]
                stored_sizes[n_viol] = s
            n_viol += 1
            if max_violations > 0 and n_viol >= max_violations:
                return nodes, n_viol, stored, stored_sizes, best_num, best_size, False
        if nodes >= budget:
            return nodes, n_viol, stored, stored_sizes, best_num, best_size, False
        if s < max_size:
            nonempty = False
            for w in range(n_words):
                x = rem[d, w] & adj[v, w]
                rem[s, w] = x
                if x != 0:
                    nonempty = True
            if nonempty:
                d = s
    return nodes, n_viol, stored, stored_sizes, best_num, best_size, True


@njit(cache=True)
def common_neighbor_words(adj, members, size, n):
    """AND of the adjacency rows of ``members[:size]`` (all vertices if empty)."""
    n_words = adj.shape[1]
    out = np.zeros(n_words, dtype=np.uint64)
    if size == 0:
        for v in range(n):
            out[v >> 6] |= _ONE << np.uint64(v & 63)
        return out
    for w in range(n_words):
        out[w] = adj[members[0], w]
    for i in range(1, size):
        u = members[i]
        for w in range(n_words):
            out[w] &= adj[u, w]
    return out
