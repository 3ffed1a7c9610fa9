"""Undirected graphs and symmetric averaging matrices."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, TopologyError

_ROW_TOL = 1e-12


class Graph:
    """Undirected simple graph on nodes ``0..n-1``."""

    def __init__(self, n: int, edges):
        if n < 2:
            raise TopologyError("a network needs at least two nodes")
        canon = set()
        for e in edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise TopologyError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise TopologyError(f"edge ({i}, {j}) outside 0..{n - 1}")
            pair = (min(i, j), max(i, j))
            if pair in canon:
                raise TopologyError(f"duplicate edge {pair}")
            canon.add(pair)
        self.n = int(n)
        self.edges = tuple(sorted(canon))
        nbrs = [[] for _ in range(n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        self.neighbors = tuple(tuple(sorted(a)) for a in nbrs)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.neighbors])

    def is_connected(self) -> bool:
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return bool(seen.all())

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    def __repr__(self):
        return f"Graph(n={self.n}, edges={len(self.edges)})"

    # edge-list text ------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"# n {self.n}"]
        lines += [f"{i} {j}" for i, j in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, n: int | None = None) -> "Graph":
        edges = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "n" and n is None:
                    n = int(parts[1])
                continue
            a, b = line.split()[:2]
            edges.append((int(a), int(b)))
        if n is None:
            n = 1 + max(max(e) for e in edges) if edges else 0
        return cls(n, edges)

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path, n: int | None = None) -> "Graph":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), n)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def line_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def ring_graph(n: int) -> Graph:
    if n < 3:
        return line_graph(n)
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(n: int) -> Graph:
    return Graph(n, [(0, i) for i in range(1, n)])


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_connected_graph(n: int, m_edges: int, seed=None) -> Graph:
    """Random spanning tree plus ``m_edges - (n-1)`` uniformly drawn extra edges."""
    if n < 2:
        raise ParameterError("need at least two nodes")
    max_edges = n * (n - 1) // 2
    if not (n - 1 <= m_edges <= max_edges):
        raise ParameterError(f"edge count {m_edges} infeasible for n={n} (need {n - 1}..{max_edges})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = set()
    # random recursive tree over a random labelling
    for pos in range(1, n):
        parent = order[rng.integers(pos)]
        u, v = int(order[pos]), int(parent)
        edges.add((min(u, v), max(u, v)))
    rest = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
    extra = m_edges - (n - 1)
    if extra:
        pick = rng.choice(len(rest), size=extra, replace=False)
        edges.update(rest[p] for p in sorted(pick))
    return Graph(n, edges)


def make_graph(kind: str, n: int, m_edges: int | None = None, seed=None) -> Graph:
    kind = kind.lower()
    if kind == "line":
        return line_graph(n)
    if kind == "ring":
        return ring_graph(n)
    if kind == "star":
        return star_graph(n)
    if kind == "complete":
        return complete_graph(n)
    if kind in ("random", "random_connected"):
        if m_edges is None:
            raise ParameterError("random_connected needs an edge count")
        return random_connected_graph(n, m_edges, seed)
    raise ParameterError(f"unknown graph kind {kind!r}")


# ---------------------------------------------------------------------------
# mixing matrices
# ---------------------------------------------------------------------------

def spectral_beta(W) -> float:
    """Second largest eigenvalue modulus ``max(|lam_2|, |lam_n|)``."""
    W = getattr(W, "W", W)
    eig = np.linalg.eigvalsh(np.asarray(W, dtype=float))
    if eig.size < 2:
        raise TopologyError("spectral gap needs at least two nodes")
    beta = float(max(abs(eig[-2]), abs(eig[0])))
    if beta >= 1 - 1e-12:
        raise TopologyError(f"beta = {beta:.15g}: graph disconnected or matrix not averaging")
    return beta


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Validated symmetric doubly stochastic matrix with graph sparsity."""

    W: np.ndarray
    graph: Graph

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        n = self.graph.n
        if W.shape != (n, n):
            raise TopologyError(f"matrix shape {W.shape} does not match n={n}")
        if not np.array_equal(W, W.T):
            raise TopologyError("averaging matrix must be symmetric")
        if np.any(W < 0):
            raise TopologyError("averaging matrix must be entrywise nonnegative")
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > _ROW_TOL:
            raise TopologyError("rows of the averaging matrix must sum to one")
        mask = np.zeros((n, n), dtype=bool)
        for i, j in self.graph.edges:
            mask[i, j] = mask[j, i] = True
        off = ~np.eye(n, dtype=bool)
        if np.any((W[off] > 0) != mask[off]):
            raise TopologyError("off-diagonal sparsity must match the edge set exactly")
        if np.any(np.diag(W) <= 0):
            raise TopologyError("self weights must be positive")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        eig = np.linalg.eigvalsh(W)
        eig.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "beta", spectral_beta(W))

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def self_weights(self) -> np.ndarray:
        return np.diag(self.W).copy()

    @property
    def positive_definite(self) -> bool:
        return bool(self.eigenvalues[0] > 0)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    def to_csv(self) -> str:
        n = self.n
        rows = [",".join(f"node{j}" for j in range(n))]
        rows += [",".join(repr(float(v)) for v in self.W[i]) for i in range(n)]
        return "\n".join(rows) + "\n"

    def save_csv(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def metropolis_weights(g: Graph) -> MixingMatrix:
    """``w_ij = 1/(max(deg_i, deg_j) + 1)`` on edges, diagonal completes rows."""
    if not g.is_connected():
        raise TopologyError("Metropolis weights require a connected graph")
    deg = g.degrees
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = 1.0 / (max(deg[i], deg[j]) + 1)
    for i in range(g.n):
        # subtract in ascending neighbour order so the diagonal is reproducible
        w = 1.0
        for j in g.neighbors[i]:
            w -= W[i, j]
        W[i, i] = w
    return MixingMatrix(W, g)


def lazy_transform(M: MixingMatrix) -> MixingMatrix:
    """``(W + I)/2``; eigenvalues map to ``(lam + 1)/2`` so the result is positive definite."""
    W = 0.5 * (np.asarray(M.W) + np.eye(M.n))
    return MixingMatrix(W, M.graph)
