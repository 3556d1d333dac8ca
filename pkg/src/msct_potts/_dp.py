"""Compiled kernels for the exact vector-valued 1D Potts problem.

The kernels minimise ``||u - g||^2 + gamma * #jumps(u)`` for data ``g`` of
shape ``(C, L)``, where a jump is counted once per position regardless of
how many channels change there.
"""
import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is often too old; prefer OpenMP and fall back to the workqueue
numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]


@njit(cache=True)
def solve_line(g, gamma, out, prune=True):
    """Solve one line in place; returns the optimal energy.

    Segment deviations come from cumulative first and second moments of the
    (channel-wise centred) data.  Ties in the Bellman recursion go to the
    largest start index.
    """
    C, L = g.shape
    shift = np.empty(C)
    for c in range(C):
        acc = 0.0
        for i in range(L):
            acc += g[c, i]
        shift[c] = acc / L
    m1 = np.zeros((C, L + 1))
    m2 = np.zeros((C, L + 1))
    for c in range(C):
        for i in range(L):
            x = g[c, i] - shift[c]
            m1[c, i + 1] = m1[c, i] + x
            m2[c, i + 1] = m2[c, i] + x * x

    best_val = np.empty(L + 1)
    start = np.empty(L + 1, dtype=np.int64)
    best_val[0] = -gamma
    start[0] = 0
    for r in range(1, L + 1):
        best = np.inf
        arg = r
        for l in range(r, 0, -1):
            n = r - l + 1
            dev = 0.0
            for c in range(C):
                s1 = m1[c, r] - m1[c, l - 1]
                s2 = m2[c, r] - m2[c, l - 1]
                dev += s2 - s1 * s1 / n
            if dev < 0.0:
                dev = 0.0
            # every earlier start costs at least dev(l:r) since best_val[k] + gamma >= 0
            if prune and dev > best:
                break
            cand = best_val[l - 1] + gamma + dev
            if cand < best:
                best = cand
                arg = l
        best_val[r] = best
        start[r] = arg

    r = L
    while r > 0:
        l = start[r]
        n = r - l + 1
        for c in range(C):
            # direct sum relative to the first sample: exact on constant segments
            base = g[c, l - 1]
            acc = 0.0
            for i in range(l - 1, r):
                acc += g[c, i] - base
            mu = base + acc / n
            for i in range(l - 1, r):
                out[c, i] = mu
        r = l - 1
    return best_val[L]


@njit(parallel=True, cache=True)
def solve_lines(data, offsets, gamma, out):
    """Solve every line ``data[:, offsets[k]:offsets[k+1]]`` independently."""
    nlines = offsets.size - 1
    for k in prange(nlines):
        a = offsets[k]
        b = offsets[k + 1]
        if b - a == 1:
            for c in range(data.shape[0]):
                out[c, a] = data[c, a]
        else:
            solve_line(data[:, a:b], gamma, out[:, a:b], True)
