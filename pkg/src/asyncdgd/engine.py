"""Schedule-driven simulator, synchronous runner and a threaded message-passing runtime."""
from __future__ import annotations

import threading
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asynchrony import Schedule
from .errors import ParameterError, ProtocolError, ScheduleError
from .operators import AlgorithmSpec, apply_T_full
from .problem import block_max_norm, consensus_error, eval_F

_PRUNE_EVERY = 1024


@dataclass
class RunTrace:
    """History of one execution.

    ``blocks[k]`` is the block written by the update at iteration ``k``, so
    ``x^{k+1}`` is ``x^k`` with row ``schedule.active[k]`` replaced.  For
    synchronous runs ``blocks`` is ``None`` and every ``x^k`` is a snapshot.
    """

    mode: str
    spec: dict
    x0: np.ndarray
    schedule: Schedule | None
    blocks: np.ndarray | None
    snapshot_k: np.ndarray
    snapshots: np.ndarray
    metric_k: np.ndarray
    F_values: np.ndarray
    consensus_errors: np.ndarray
    distance: np.ndarray | None = None
    timestamps_ns: np.ndarray | None = None
    failure: str | None = None
    x_final: np.ndarray = field(default=None, repr=False)

    @property
    def K(self) -> int:
        if self.blocks is not None:
            return int(self.blocks.shape[0])
        return int(self.snapshot_k[-1])

    def iterate(self, k: int) -> np.ndarray:
        """Reconstruct ``x^k``."""
        if self.blocks is None:
            pos = np.searchsorted(self.snapshot_k, k)
            if pos == self.snapshot_k.size or self.snapshot_k[pos] != k:
                raise ParameterError(f"iterate {k} was not retained")
            return self.snapshots[pos].copy()
        x = np.array(self.x0, dtype=float)
        for t in range(k):
            x[self.schedule.active[t]] = self.blocks[t]
        return x

    def iterates(self):
        """Yield ``x^0, x^1, ..., x^K``."""
        if self.blocks is None:
            yield from (s.copy() for s in self.snapshots)
            return
        x = np.array(self.x0, dtype=float)
        yield x.copy()
        for t in range(self.blocks.shape[0]):
            x[self.schedule.active[t]] = self.blocks[t]
            yield x.copy()

    def to_csv(self, path=None, watermark: bool = False) -> str:
        """Per-metric-point table; ``active_node`` is the node whose update produced ``x^k``."""
        cols = ["k", "active_node", "distance_to_fixed_point", "F_value", "consensus_error"]
        if self.timestamps_ns is not None:
            cols.append("time_ns")
        if watermark:
            cols.append("stepsize_override")
        lines = [",".join(cols)]
        for r, k in enumerate(self.metric_k.tolist()):
            node = "" if k == 0 or self.schedule is None else str(int(self.schedule.active[k - 1]))
            dist = "" if self.distance is None else repr(float(self.distance[k]))
            row = [str(k), node, dist, repr(float(self.F_values[r])), repr(float(self.consensus_errors[r]))]
            if self.timestamps_ns is not None:
                row.append("0" if k == 0 else str(int(self.timestamps_ns[k - 1])))
            if watermark:
                row.append("1")
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _metric_points(K, stride):
    if stride < 1:
        raise ParameterError("stride must be positive")
    pts = list(range(0, K + 1, stride))
    if pts[-1] != K:
        pts.append(K)
    return np.asarray(pts, dtype=np.int64)


def _initial_messages(spec, x0):
    return [spec.message(j, x0[j].copy()) for j in range(spec.n)]


def _trace_from_blocks(spec, mode, x0, schedule, blocks, x_star, stride, timestamps=None, failure=None):
    """Recompute snapshots and metrics from a block record."""
    K = blocks.shape[0]
    pts = _metric_points(K, stride)
    p = spec.problem
    x = np.array(x0, dtype=float)
    snaps, F, cons = [], [], []
    dist = None
    if x_star is not None:
        x_star = p.check_shape(x_star)
        bd = np.linalg.norm(x - x_star, axis=1)
        dist = np.empty(K + 1)
        dist[0] = bd.max()
    nxt = 0
    for k in range(K + 1):
        if k > 0:
            i = schedule.active[k - 1]
            x[i] = blocks[k - 1]
            if dist is not None:
                bd[i] = np.linalg.norm(x[i] - x_star[i])
                dist[k] = bd.max()
        if nxt < pts.size and pts[nxt] == k:
            snaps.append(x.copy())
            F.append(eval_F(p, x))
            cons.append(consensus_error(x))
            nxt += 1
    return RunTrace(mode, spec.summary(), np.array(x0, dtype=float), schedule, blocks, pts,
                    np.asarray(snaps), pts.copy(), np.asarray(F), np.asarray(cons), dist,
                    timestamps, failure, x.copy())


# ---------------------------------------------------------------------------
# deterministic simulator
# ---------------------------------------------------------------------------

def simulate(spec: AlgorithmSpec, schedule: Schedule, x0, x_star=None, stride: int = 1) -> RunTrace:
    """Replay ``schedule`` against ``spec``.

    Each node keeps the values it has broadcast (iterates for Prox-DGD,
    adapted messages for DGD-ATC) tagged with the global index from which
    they are current.  A read through stale index ``s`` returns the newest
    value with tag ``<= s``.  Values no future read can reach are pruned.
    """
    p = spec.problem
    x = np.array(p.check_shape(x0), dtype=float)
    if schedule.n != spec.n:
        raise ScheduleError(f"schedule has {schedule.n} nodes, spec has {spec.n}")
    for i in range(spec.n):
        if schedule.neighbors[i] != spec.W.graph.neighbors[i]:
            raise ScheduleError(f"schedule neighbour list of node {i} does not match the graph")
    K = schedule.K
    tags = [[0] for _ in range(spec.n)]
    vals = [[m] for m in _initial_messages(spec, x)]
    # smallest index any read at or after k may request
    if schedule.stale.size:
        floor = np.arange(K, dtype=np.int64)
        counts = np.diff(schedule.ptr)
        ne = counts > 0
        floor[ne] = np.minimum(floor[ne], np.minimum.reduceat(schedule.stale, schedule.ptr[:-1][ne]))
        reach = np.minimum.accumulate(floor[::-1])[::-1]
    else:
        reach = np.arange(K, dtype=np.int64)
    blocks = np.empty((K, spec.d))
    active = schedule.active.tolist()
    ptr = schedule.ptr.tolist()
    stale = schedule.stale.tolist()
    for k in range(K):
        i = active[k]
        reads = stale[ptr[k]:ptr[k + 1]]
        msgs = []
        r = 0
        for j in spec.closed[i]:
            if j == i:
                msgs.append(vals[i][-1])
                continue
            s = reads[r]
            r += 1
            pos = bisect_right(tags[j], s) - 1
            if pos < 0:
                raise ScheduleError(f"iteration {k}: node {i} reads a pruned value of node {j} at index {s}")
            msgs.append(vals[j][pos])
        new = spec.block_update(i, msgs, x[i])
        x[i] = new
        blocks[k] = new
        tags[i].append(k + 1)
        vals[i].append(spec.message(i, x[i].copy()))
        if k % _PRUNE_EVERY == _PRUNE_EVERY - 1 and k + 1 < K:
            lo = int(reach[k + 1])
            for j in range(spec.n):
                cut = bisect_right(tags[j], lo) - 1
                if cut > 0:
                    del tags[j][:cut]
                    del vals[j][:cut]
    return _trace_from_blocks(spec, "simulate", x0, schedule, blocks, x_star, stride)


# ---------------------------------------------------------------------------
# synchronous runner
# ---------------------------------------------------------------------------

def run_synchronous(spec: AlgorithmSpec, iterations: int, x0, x_star=None, stride: int = 1) -> RunTrace:
    """Iterate the synchronous operator; ``k`` counts full rounds."""
    p = spec.problem
    x = np.array(p.check_shape(x0), dtype=float)
    pts = _metric_points(int(iterations), stride)
    snaps, F, cons = [], [], []
    dist = None
    if x_star is not None:
        dist = np.empty(int(iterations) + 1)
        dist[0] = block_max_norm(x, x_star)
    nxt = 0
    for k in range(int(iterations) + 1):
        if k > 0:
            x = apply_T_full(spec, x)
            if dist is not None:
                dist[k] = block_max_norm(x, x_star)
        if nxt < pts.size and pts[nxt] == k:
            snaps.append(x.copy())
            F.append(eval_F(p, x))
            cons.append(consensus_error(x))
            nxt += 1
    return RunTrace("synchronous", spec.summary(), np.array(x0, dtype=float), None, None, pts,
                    np.asarray(snaps), pts.copy(), np.asarray(F), np.asarray(cons), dist,
                    None, None, x.copy())


# ---------------------------------------------------------------------------
# concurrent runtime
# ---------------------------------------------------------------------------

class _Sequencer:
    """Assigns global iteration numbers in update-completion order."""

    def __init__(self, budget, deadline_ns):
        self.lock = threading.Lock()
        self.k = 0
        self.budget = budget
        self.deadline_ns = deadline_ns
        self.rows = []
        self.blocks = []
        self.times = []
        self.t0 = time.perf_counter_ns()
        self.stop = threading.Event()
        self.failure = None

    def commit(self, i, reads, block):
        """Record an update; returns its index or ``None`` once the run is over."""
        with self.lock:
            now = time.perf_counter_ns() - self.t0
            if self.stop.is_set() or self.k >= self.budget or (self.deadline_ns and now > self.deadline_ns):
                self.stop.set()
                return None
            k = self.k
            for s in reads:
                if s > k:
                    raise ProtocolError(f"read index {s} is ahead of iteration {k}")
            self.rows.append((i, reads))
            self.blocks.append(block)
            self.times.append(now)
            self.k += 1
            if self.k >= self.budget:
                self.stop.set()
            return k

    def fail(self, msg):
        with self.lock:
            if self.failure is None:
                self.failure = msg
        self.stop.set()


class NodeState:
    """Worker-local state: iterate, message buffer and last value seen per neighbour."""

    def __init__(self, i, spec, x0_i, threshold):
        self.i = i
        self.neighbors = spec.W.graph.neighbors[i]
        self.x = np.array(x0_i, dtype=float)
        self.threshold = threshold
        self.cond = threading.Condition()
        self.buffer = {}            # neighbour -> (index, message), newest wins
        self.cache = {}             # neighbour -> (index, message) last consumed
        self.seen_initial = set()
        self.own_msg = None

    def deliver(self, j, index, msg):
        with self.cond:
            old = self.buffer.get(j)
            # per-sender FIFO: never replace a newer value
            if old is None or old[0] <= index:
                self.buffer[j] = (index, msg)
            self.cond.notify()

    def ready(self):
        if len(self.cache) + len(set(self.buffer).difference(self.cache)) < len(self.neighbors):
            return False
        return len(self.buffer) >= self.threshold


def run_concurrent(spec: AlgorithmSpec, x0, updates: int | None = None, duration: float | None = None,
                   activation_threshold: int | None = None, x_star=None, stride: int = 1,
                   poll: float = 0.05) -> RunTrace:
    """Run one worker thread per node exchanging messages through buffers.

    A node waits for an initial message from every neighbour, then updates
    whenever its buffer holds at least ``activation_threshold`` messages
    (default ``max(|N_i| - 1, 1)``).  The buffer is emptied at each update
    and missing neighbours fall back to the last value received.  Completed
    updates are numbered by a global sequencer, which records the index of
    every value consumed; the resulting schedule replays bitwise through
    :func:`simulate`.
    """
    if updates is None and duration is None:
        raise ParameterError("give an update budget, a duration, or both")
    p = spec.problem
    x0 = np.array(p.check_shape(x0), dtype=float)
    budget = int(updates) if updates is not None else np.iinfo(np.int64).max
    seq = _Sequencer(budget, int(duration * 1e9) if duration else 0)
    nodes = []
    for i in range(spec.n):
        deg = len(spec.W.graph.neighbors[i])
        thr = max(deg - 1, 1) if activation_threshold is None else int(activation_threshold)
        if not 1 <= thr <= deg:
            raise ParameterError(f"activation threshold {thr} outside 1..{deg} for node {i}")
        nodes.append(NodeState(i, spec, x0[i], thr))

    def broadcast(i, index, msg):
        for j in nodes[i].neighbors:
            nodes[j].deliver(i, index, msg)

    def worker(i):
        me = nodes[i]
        try:
            me.own_msg = spec.message(i, me.x.copy())
            me.own_msg.setflags(write=False)
            broadcast(i, 0, me.own_msg)
            while not seq.stop.is_set():
                with me.cond:
                    while not me.ready():
                        if seq.stop.is_set():
                            return
                        me.cond.wait(poll)
                    fresh = me.buffer
                    me.buffer = {}
                me.cache.update(fresh)
                reads = []
                msgs = []
                for j in spec.closed[i]:
                    if j == i:
                        msgs.append(me.own_msg)
                    else:
                        idx, m = me.cache[j]
                        reads.append(idx)
                        msgs.append(m)
                new = spec.block_update(i, msgs, me.x)
                k = seq.commit(i, reads, new.copy())
                if k is None:
                    return
                me.x = new
                me.own_msg = spec.message(i, new.copy())
                me.own_msg.setflags(write=False)
                broadcast(i, k + 1, me.own_msg)
        except Exception as exc:  # noqa: BLE001 - any worker fault ends the run
            seq.fail(f"node {i}: {type(exc).__name__}: {exc}")
        finally:
            for nd in nodes:
                with nd.cond:
                    nd.cond.notify_all()

    threads = [threading.Thread(target=worker, args=(i,), name=f"node-{i}", daemon=True)
               for i in range(spec.n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    schedule = Schedule.from_rows(spec.W.graph.neighbors, seq.rows)
    blocks = np.asarray(seq.blocks, dtype=float).reshape(len(seq.blocks), spec.d)
    return _trace_from_blocks(spec, "runtime", x0, schedule, blocks, x_star, stride,
                              np.asarray(seq.times, dtype=np.int64), seq.failure)
