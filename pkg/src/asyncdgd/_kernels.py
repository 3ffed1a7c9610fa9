"""Integer kernels behind the delay analytics.

Each kernel exists twice: a loop version compiled with numba when it is
importable, and a vectorised numpy version.  ``ASYNCDGD_NUMBA=0`` forces the
numpy path.  Both return identical integers.

Schedule layout shared by all kernels: ``active[k]`` is the node updating at
iteration ``k``; its stale neighbour reads are ``stale[ptr[k]:ptr[k+1]]``.
"""
import os

import numpy as np

_BIG = 2 ** 62

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("ASYNCDGD_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# loop kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _nb_info_floor(n, active, ptr, stale):
    K = active.shape[0]
    info = np.full(n, -1, dtype=np.int64)
    g = np.empty(K, dtype=np.int64)
    for t in range(K):
        v = t
        for p in range(ptr[t], ptr[t + 1]):
            if stale[p] < v:
                v = stale[p]
        info[active[t]] = v
        m = info[0]
        for i in range(1, n):
            if info[i] < m:
                m = info[i]
        g[t] = m
    return g


@njit(cache=True)
def _nb_epoch_starts(g):
    K = g.shape[0]
    sm = np.empty(K + 1, dtype=np.int64)
    sm[K] = _BIG
    for t in range(K - 1, -1, -1):
        sm[t] = g[t] if g[t] < sm[t + 1] else sm[t + 1]
    out = np.empty(K + 1, dtype=np.int64)
    out[0] = 0
    count = 1
    cur = 0
    p = 0
    while True:
        while p < K and sm[p] < cur:
            p += 1
        nxt = p + 1
        if nxt > K:
            break
        out[count] = nxt
        count += 1
        cur = nxt
    return out[:count]


@njit(cache=True)
def _nb_gap_bound(n, active):
    K = active.shape[0]
    last = np.full(n, -1, dtype=np.int64)
    gap = np.zeros(n, dtype=np.int64)
    for k in range(K):
        i = active[k]
        # first activation: window starting at 0 must reach k
        d = k - last[i] - 1 if last[i] >= 0 else k
        if d > gap[i]:
            gap[i] = d
        last[i] = k
    for i in range(n):
        if last[i] < 0:
            gap[i] = -1
        else:
            d = K - 1 - last[i]
            if d > gap[i]:
                gap[i] = d
    return gap


@njit(cache=True)
def _nb_max_delay(active, ptr, stale):
    K = active.shape[0]
    best = 0
    for k in range(K):
        for p in range(ptr[k], ptr[k + 1]):
            d = k - stale[p]
            if d > best:
                best = d
    return best


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------

def _np_read_floor(active, ptr, stale):
    """``min(k, min stale reads at k)`` for every iteration."""
    K = active.shape[0]
    floor = np.arange(K, dtype=np.int64)
    if stale.size:
        counts = np.diff(ptr)
        nonempty = counts > 0
        starts = ptr[:-1][nonempty]
        floor[nonempty] = np.minimum(floor[nonempty], np.minimum.reduceat(stale, starts))
    return floor


def _np_info_floor(n, active, ptr, stale):
    K = active.shape[0]
    if K == 0:
        return np.empty(0, dtype=np.int64)
    floor = _np_read_floor(active, ptr, stale)
    # last activation of each node at or before t, forward filled
    pos = np.full((n, K), -1, dtype=np.int64)
    pos[active, np.arange(K)] = np.arange(K)
    np.maximum.accumulate(pos, axis=1, out=pos)
    info = np.where(pos >= 0, floor[np.maximum(pos, 0)], -1)
    return info.min(axis=0)


def _np_epoch_starts(g):
    K = g.shape[0]
    sm = np.empty(K + 1, dtype=np.int64)
    sm[K] = _BIG
    if K:
        sm[:K] = np.minimum.accumulate(g[::-1])[::-1]
    starts = [0]
    cur = 0
    while True:
        # sm is nondecreasing, so the first index reaching cur is a binary search
        p = int(np.searchsorted(sm, cur, side="left"))
        if p + 1 > K:
            break
        cur = p + 1
        starts.append(cur)
    return np.asarray(starts, dtype=np.int64)


def _np_gap_bound(n, active):
    K = active.shape[0]
    gap = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        ks = np.flatnonzero(active == i)
        if ks.size == 0:
            continue
        cand = [ks[0], K - 1 - ks[-1]]
        if ks.size > 1:
            cand.append(int(np.max(np.diff(ks))) - 1)
        gap[i] = max(cand)
    return gap


def _np_max_delay(active, ptr, stale):
    if stale.size == 0:
        return 0
    k_of = np.repeat(np.arange(active.shape[0], dtype=np.int64), np.diff(ptr))
    return int(max(0, np.max(k_of - stale)))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def info_floor(n, active, ptr, stale, jit=None):
    """Oldest index feeding any block of ``x^{t+1}``; ``-1`` while some block is still initial."""
    jit = numba_enabled() if jit is None else jit
    fn = _nb_info_floor if jit else _np_info_floor
    return fn(int(n), _i64(active), _i64(ptr), _i64(stale))


def epoch_starts(g, jit=None):
    """Epoch boundaries ``k^0 = 0 < k^1 < ...`` that do not exceed ``len(g)``."""
    jit = numba_enabled() if jit is None else jit
    fn = _nb_epoch_starts if jit else _np_epoch_starts
    return fn(_i64(g))


def gap_bound(n, active, jit=None):
    """Per-node smallest window slack; ``-1`` for nodes that never update."""
    jit = numba_enabled() if jit is None else jit
    fn = _nb_gap_bound if jit else _np_gap_bound
    return fn(int(n), _i64(active))


def max_delay(active, ptr, stale, jit=None):
    jit = numba_enabled() if jit is None else jit
    fn = _nb_max_delay if jit else _np_max_delay
    return int(fn(_i64(active), _i64(ptr), _i64(stale)))
