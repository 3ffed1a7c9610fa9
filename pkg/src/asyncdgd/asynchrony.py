"""Execution schedules, schedule generators and delay analytics.

Indexing: exactly one node updates per global iteration.  The update at
iteration ``k`` turns ``x^k`` into ``x^{k+1}``.  A stale index ``s`` with
``0 <= s <= k`` names the iterate ``x^s``, so node ``j``'s block read through
``s`` is the value ``j`` held after ``s`` global updates.  The reading node
always uses its own current block (its self index is ``k``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ParameterError, ScheduleError
from .mixing import Graph, complete_graph


class Schedule:
    """Active node and stale neighbour indices for each iteration ``0..K-1``.

    ``stale[ptr[k]:ptr[k+1]]`` holds the indices read from the neighbours of
    ``active[k]`` in ascending node order.
    """

    def __init__(self, neighbors, active, ptr, stale, round_length: int | None = None):
        self.neighbors = tuple(tuple(int(j) for j in nb) for nb in neighbors)
        self.n = len(self.neighbors)
        self.active = np.ascontiguousarray(active, dtype=np.int64)
        self.ptr = np.ascontiguousarray(ptr, dtype=np.int64)
        self.stale = np.ascontiguousarray(stale, dtype=np.int64)
        self.round_length = round_length
        self._validate()
        for a in (self.active, self.ptr, self.stale):
            a.setflags(write=False)

    def _validate(self):
        K = self.active.size
        if self.ptr.shape != (K + 1,) or self.ptr[0] != 0 or self.ptr[-1] != self.stale.size:
            raise ScheduleError("malformed stale-index offsets")
        if K and (self.active.min() < 0 or self.active.max() >= self.n):
            raise ScheduleError("active node out of range")
        deg = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)
        if K and not np.array_equal(np.diff(self.ptr), deg[self.active]):
            raise ScheduleError("each iteration must record one stale index per neighbour")
        if self.stale.size:
            k_of = np.repeat(np.arange(K, dtype=np.int64), np.diff(self.ptr))
            if self.stale.min() < 0 or np.any(self.stale > k_of):
                raise ScheduleError("stale indices must satisfy 0 <= s <= k")

    @classmethod
    def from_rows(cls, neighbors, rows, round_length=None) -> "Schedule":
        """Build from ``(node, [stale...])`` pairs."""
        active = [int(i) for i, _ in rows]
        lens = [len(s) for _, s in rows]
        ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lens, out=ptr[1:])
        stale = np.fromiter((int(v) for _, s in rows for v in s), dtype=np.int64, count=int(ptr[-1]))
        return cls(neighbors, active, ptr, stale, round_length)

    @property
    def K(self) -> int:
        return int(self.active.size)

    def __len__(self):
        return self.K

    def reads(self, k: int) -> np.ndarray:
        return self.stale[self.ptr[k]:self.ptr[k + 1]]

    def row(self, k: int):
        return int(self.active[k]), self.reads(k)

    def activations(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.active == i)

    def coverage(self) -> np.ndarray:
        """Number of updates per node."""
        return np.bincount(self.active, minlength=self.n)

    def delays(self) -> np.ndarray:
        k_of = np.repeat(np.arange(self.K, dtype=np.int64), np.diff(self.ptr))
        return k_of - self.stale

    def prefix(self, K: int) -> "Schedule":
        K = int(K)
        return Schedule(self.neighbors, self.active[:K], self.ptr[:K + 1],
                        self.stale[:self.ptr[K]], self.round_length)

    def __eq__(self, other):
        return (isinstance(other, Schedule) and self.neighbors == other.neighbors
                and np.array_equal(self.active, other.active) and np.array_equal(self.ptr, other.ptr)
                and np.array_equal(self.stale, other.stale) and self.round_length == other.round_length)

    def __repr__(self):
        return f"Schedule(n={self.n}, K={self.K})"

    # text form -----------------------------------------------------------
    def to_text(self) -> str:
        out = ["# asyncdgd schedule", f"# n {self.n}", f"# K {self.K}"]
        if self.round_length is not None:
            out.append(f"# round_length {self.round_length}")
        for i, nb in enumerate(self.neighbors):
            out.append(f"# neighbors {i} " + " ".join(map(str, nb)))
        active = self.active.tolist()
        stale = self.stale.tolist()
        ptr = self.ptr.tolist()
        for k in range(self.K):
            out.append(" ".join(map(str, [k, active[k], *stale[ptr[k]:ptr[k + 1]]])))
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Schedule":
        n = None
        round_length = None
        nbrs = {}
        rows = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if not parts:
                    continue
                if parts[0] == "n":
                    n = int(parts[1])
                elif parts[0] == "round_length":
                    round_length = int(parts[1])
                elif parts[0] == "neighbors":
                    nbrs[int(parts[1])] = tuple(int(v) for v in parts[2:])
                continue
            vals = [int(v) for v in line.split()]
            if vals[0] != len(rows):
                raise ScheduleError(f"schedule rows out of order at k={vals[0]}")
            rows.append((vals[1], vals[2:]))
        if n is None or len(nbrs) != n:
            raise ScheduleError("schedule header must give n and every neighbour list")
        return cls.from_rows([nbrs[i] for i in range(n)], rows, round_length)

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Schedule":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _neighbors_of(graph, n):
    if graph is None:
        graph = complete_graph(n)
    if isinstance(graph, Graph):
        if graph.n != n:
            raise ParameterError(f"graph has {graph.n} nodes, expected {n}")
        return graph.neighbors
    return tuple(tuple(sorted(nb)) for nb in graph)


def _check_B(n, B):
    if B < n - 1:
        raise ParameterError(
            f"B={B} < n-1={n - 1}: with one update per global iteration a window of B+1 "
            f"iterations cannot contain an update of each of the {n} nodes")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_synchronous(n: int, K: int, graph=None) -> Schedule:
    """Round-robin rounds of ``n`` updates; every read points at the round start."""
    if K % n:
        raise ParameterError(f"horizon K={K} must be a multiple of n={n}")
    nbrs = _neighbors_of(graph, n)
    rows = []
    for k in range(K):
        i = k % n
        start = k - i
        rows.append((i, [start] * len(nbrs[i])))
    return Schedule.from_rows(nbrs, rows, round_length=n)


class _Deadlines:
    """Earliest-deadline bookkeeping for the window clause.

    ``due[i]`` is the last iteration at which node ``i`` may next update.
    Choosing a node at iteration ``k`` keeps the rest schedulable exactly
    when the node's deadline does not exceed the first tight deadline in
    sorted order (a deadline ``d`` at rank ``r`` is tight if ``d == k + r``).
    """

    def __init__(self, n, first_due, K):
        self.n = n
        self.K = K
        self.due = [int(first_due)] * n

    def feasible(self, k):
        order = sorted(range(self.n), key=lambda i: self.due[i])
        limit = None
        for r, i in enumerate(order):
            d = self.due[i]
            if d >= self.K:
                break
            if d < k + r:
                raise ScheduleError("window clause became infeasible")
            if d == k + r:
                limit = d
                break
        if limit is None:
            return list(range(self.n))
        return [i for i in range(self.n) if self.due[i] <= limit]

    def update(self, i, k, slack):
        self.due[i] = k + slack + 1


def gen_partial_async(n: int, graph, B: int, D: int, K: int, seed=None) -> Schedule:
    """Random schedule meeting the window clause ``B`` and delay clause ``D``.

    Nodes whose deadline is binding are forced; otherwise the active node is
    drawn uniformly.  Stale indices are uniform on ``[max(0, k-D), k]``.
    """
    if B < 0 or D < 0:
        raise ParameterError("B and D must be nonnegative")
    _check_B(n, B)
    nbrs = _neighbors_of(graph, n)
    rng = np.random.default_rng(seed)
    dl = _Deadlines(n, B, K)
    rows = []
    for k in range(K):
        cand = dl.feasible(k)
        i = cand[int(rng.integers(len(cand)))]
        dl.update(i, k, B)
        lo = max(0, k - D)
        rows.append((i, rng.integers(lo, k + 1, size=len(nbrs[i])).tolist()))
    return Schedule.from_rows(nbrs, rows)


def total_async_window(k: int, n: int, growth: float) -> int:
    """Window length ``ceil(growth (1 + log(1 + k))) * n`` at iteration ``k``."""
    return max(1, math.ceil(growth * (1.0 + math.log1p(k)))) * n


def gen_total_async(n: int, K: int, growth: float = 1.0, seed=None, graph=None) -> Schedule:
    """Schedule with slowly growing update gaps and delays.

    Every node updates within each window of ``total_async_window(k)``
    iterations; the delay at ``k`` is uniform on ``[0, total_async_window(k))``,
    so delays are unbounded over an infinite horizon but ``s -> infinity``.
    """
    if not growth > 0:
        raise ParameterError("growth must be positive")
    nbrs = _neighbors_of(graph, n)
    rng = np.random.default_rng(seed)
    dl = _Deadlines(n, total_async_window(0, n, growth) - 1, K)
    rows = []
    for k in range(K):
        win = total_async_window(k, n, growth)
        cand = dl.feasible(k)
        i = cand[int(rng.integers(len(cand)))]
        dl.update(i, k, win - 1)
        delay = np.floor(rng.random(len(nbrs[i])) * win).astype(np.int64)
        rows.append((i, np.maximum(0, k - delay).tolist()))
    return Schedule.from_rows(nbrs, rows)


def _slow_slots(start, D, B):
    """Slots in ``(start, start + D]`` for the slow node, ending at ``start + D``.

    Consecutive slow updates are at most ``B + 1`` apart and spread evenly.
    """
    if D <= 0:
        return []
    q = -(-D // (B + 1))
    return [start + (D * r) // q for r in range(1, q + 1)]


def gen_worst_case(n: int, graph, B: int, D: int, K: int) -> Schedule:
    """Slowest admissible progress for given ``(B, D)``.

    Node ``n-1`` is the slow node: it closes an epoch with an update whose
    reads are all ``D`` old, and its next update comes ``B + 1`` iterations
    after an update that still carried pre-epoch information.  All reads
    have delay ``D`` (clipped at 0).  The other nodes are served
    least-recently-updated first.

    For ``D = 0`` the epochs are ``k^m = m (B + 1)``.  For ``D > 0`` the first
    epoch cannot be longer than ``B + 1`` (every node must update by
    iteration ``B``); after it the epochs are spaced ``B + D + 1`` apart.
    """
    if B < 0 or D < 0:
        raise ParameterError("B and D must be nonnegative")
    _check_B(n, B)
    if B == n - 1 and D % n:
        raise ParameterError(
            f"with B = n-1 every window of n iterations holds each node once, so the slow "
            f"node's updates are exactly n apart and D={D} must be a multiple of n")
    nbrs = _neighbors_of(graph, n)
    slow = n - 1
    owner = np.full(K, -1, dtype=np.int64)
    close = B
    while close < K:
        owner[close] = slow
        for t in _slow_slots(close, D, B):
            if t < K:
                owner[t] = slow
        close += B + D + 1
    last = {i: -1 for i in range(n - 1)}
    rows = []
    for k in range(K):
        if owner[k] == slow:
            i = slow
        else:
            i = min(last, key=lambda j: (last[j], j))
            last[i] = k
        rows.append((i, [max(0, k - D)] * len(nbrs[i])))
    return Schedule.from_rows(nbrs, rows)


def gen_best_case(n: int, graph, B: int, D: int, K: int) -> Schedule:
    """``B`` and ``D`` are each attained once; otherwise cyclic with fresh reads.

    Node 0 updates at iteration 0 and next at ``B + 1`` while the others
    cycle in between.  One read at iteration ``max(D, B + 1)`` is ``D`` old.
    """
    if B < 0 or D < 0:
        raise ParameterError("B and D must be nonnegative")
    _check_B(n, B)
    nbrs = _neighbors_of(graph, n)
    order = []
    if K:
        order.append(0)
    others = list(range(1, n))
    c = 0
    while len(order) < min(K, B + 1):
        order.append(others[c % (n - 1)])
        c += 1
    # cyclic phase keeps the others' relative order and inserts node 0 each pass
    cycle = [0] + [others[(c + r) % (n - 1)] for r in range(n - 1)]
    r = 0
    while len(order) < K:
        order.append(cycle[r % n])
        r += 1
    kD = max(D, B + 1)
    rows = []
    for k, i in enumerate(order):
        s = [k] * len(nbrs[i])
        if k == kD and s:
            s[0] = k - D
        rows.append((i, s))
    return Schedule.from_rows(nbrs, rows)


def worst_case_mk(k, B, D):
    """Lower bound ``floor(k / (B + D + 1))`` on the epoch count."""
    return np.asarray(k) // (B + D + 1)


def best_case_mk(k, B, D, n):
    """Best-case line ``(k - (B + D + 1)) / n``."""
    return (np.asarray(k, dtype=float) - (B + D + 1)) / n


# ---------------------------------------------------------------------------
# analytics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartialAsyncReport:
    holds: bool
    B_min: int | None
    D_min: int

    def __iter__(self):
        return iter((self.holds, self.B_min, self.D_min))


def verify_partial_async(s: Schedule, B: int | None = None, D: int | None = None,
                         jit=None) -> PartialAsyncReport:
    """Smallest ``(B, D)`` the finite schedule satisfies.

    Windows are only checked where they fit inside the horizon.  ``holds``
    is false when some node never updates, or when ``B``/``D`` are given and
    exceeded.
    """
    gaps = _kernels.gap_bound(s.n, s.active, jit=jit)
    D_min = _kernels.max_delay(s.active, s.ptr, s.stale, jit=jit)
    if s.K == 0 or np.any(gaps < 0):
        return PartialAsyncReport(False, None, D_min)
    B_min = int(gaps.max())
    holds = (B is None or B_min <= B) and (D is None or D_min <= D)
    return PartialAsyncReport(bool(holds), B_min, D_min)


@dataclass(frozen=True)
class DelayMetrics:
    tau: np.ndarray          # (K,) maximum information age used for x^{k+1}
    info: np.ndarray         # (K,) k - tau^k, -1 while a block is still initial
    k_seq: np.ndarray        # epoch starts k^0 < k^1 < ... <= K
    m_k: np.ndarray          # (K+1,) epochs completed by iteration k
    observed_B: int | None
    observed_D: int
    delays: np.ndarray = field(repr=False)

    def histogram(self, width: int = 1):
        """Counts of read delays in buckets ``[b*width, (b+1)*width)``."""
        if width < 1:
            raise ParameterError("bucket width must be positive")
        if self.delays.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.bincount(self.delays // width)

    @property
    def total_reads(self) -> int:
        return int(self.delays.size)


def delay_metrics(s: Schedule, jit=None) -> DelayMetrics:
    info = _kernels.info_floor(s.n, s.active, s.ptr, s.stale, jit=jit)
    k_seq = _kernels.epoch_starts(info, jit=jit)
    m_k = np.searchsorted(k_seq, np.arange(s.K + 1), side="right") - 1
    rep = verify_partial_async(s, jit=jit)
    tau = np.arange(s.K, dtype=np.int64) - info
    return DelayMetrics(tau, info, k_seq, m_k.astype(np.int64), rep.B_min, rep.D_min, s.delays())
