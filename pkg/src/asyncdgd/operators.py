"""Synchronous operators of Prox-DGD and DGD-ATC, step-size rules and contraction factors.

Both engines funnel every block update through :meth:`AlgorithmSpec.block_update`,
which sums the weighted inputs in ascending node order.  Keeping one
arithmetic path is what makes replay of a recorded schedule bitwise exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, ParameterError, PreconditionError, ProtocolError
from .mixing import MixingMatrix
from .problem import ConsensusProblem, block_max_norm

KINDS = ("prox_dgd", "dgd_atc")
SAFETY = 0.99


def max_stepsize(kind: str, problem: ConsensusProblem, W: MixingMatrix) -> float:
    """Exclusive upper bound on the step-size.

    ``2 min_i w_ii / L_i`` for Prox-DGD and ``2 / max_i L_i`` for DGD-ATC.
    Nodes with ``L_i = 0`` impose no constraint.
    """
    L = problem.L
    if kind == "prox_dgd":
        w = W.self_weights
        pos = L > 0
        return float(np.min(2.0 * w[pos] / L[pos])) if pos.any() else np.inf
    if kind == "dgd_atc":
        Lmax = float(np.max(L))
        return 2.0 / Lmax if Lmax > 0 else np.inf
    raise ParameterError(f"unknown algorithm kind {kind!r}")


def resolve_stepsize(rule: str, kind: str, problem: ConsensusProblem, W: MixingMatrix,
                     value: float | None = None) -> float:
    """Turn a step-size rule into a number.

    ``max``           SAFETY times the exclusive bound
    ``conservative``  ``min w_ii / max L`` (Prox-DGD) or ``1 / max L`` (DGD-ATC)
    ``fraction``      ``value`` times the bound
    ``explicit``      ``value`` as given
    """
    rule = rule.lower()
    bound = max_stepsize(kind, problem, W)
    if rule == "max":
        if not np.isfinite(bound):
            raise ParameterError("no finite step-size bound; give an explicit step-size")
        return SAFETY * bound
    if rule == "conservative":
        Lmax = float(np.max(problem.L))
        if Lmax <= 0:
            raise ParameterError("no finite step-size bound; give an explicit step-size")
        if kind == "prox_dgd":
            return float(np.min(W.self_weights)) / Lmax
        return 1.0 / Lmax
    if value is None:
        raise ParameterError(f"step-size rule {rule!r} needs a value")
    if rule == "fraction":
        if not np.isfinite(bound):
            raise ParameterError("no finite step-size bound to take a fraction of")
        return float(value) * bound
    if rule == "explicit":
        return float(value)
    raise ParameterError(f"unknown step-size rule {rule!r}")


class AlgorithmSpec:
    """Algorithm kind, problem, averaging matrix and step-size.

    Construction validates the delay-free step-size condition; pass
    ``override=True`` to run outside it (the spec is then marked).
    """

    def __init__(self, kind: str, problem: ConsensusProblem, W: MixingMatrix, alpha: float,
                 override: bool = False):
        if kind not in KINDS:
            raise ParameterError(f"unknown algorithm kind {kind!r}")
        if W.n != problem.n:
            raise DimensionError(f"averaging matrix has {W.n} nodes, problem has {problem.n}")
        alpha = float(alpha)
        if not alpha > 0:
            raise ConfigError(f"step-size must be positive, got {alpha}")
        bound = max_stepsize(kind, problem, W)
        self.stepsize_valid = alpha < bound
        if not self.stepsize_valid and not override:
            raise ConfigError(f"step-size {alpha:.6g} violates the {kind} bound {bound:.6g}")
        if kind == "dgd_atc":
            if not problem.is_smooth:
                raise ConfigError("DGD-ATC requires every nonsmooth term to be zero")
            if not W.positive_definite and not override:
                raise ConfigError("DGD-ATC requires a positive definite averaging matrix")
        self.kind = kind
        self.problem = problem
        self.W = W
        self.alpha = alpha
        self.override = bool(override)
        self.bound = bound
        g = W.graph
        self.closed = tuple(tuple(sorted((*g.neighbors[i], i))) for i in range(g.n))
        self.weights = tuple(tuple(float(W.W[i, j]) for j in self.closed[i]) for i in range(g.n))

    @property
    def n(self):
        return self.problem.n

    @property
    def d(self):
        return self.problem.d

    def message(self, j: int, x_j) -> np.ndarray:
        """Value node ``j`` broadcasts after holding ``x_j``."""
        if self.kind == "prox_dgd":
            return x_j
        return x_j - self.alpha * self.problem.smooth[j].gradient(x_j)

    def block_update(self, i: int, msgs, self_x) -> np.ndarray:
        """New block ``i`` from messages ordered like ``self.closed[i]``."""
        w = self.weights[i]
        acc = w[0] * msgs[0]
        for t in range(1, len(w)):
            acc = acc + w[t] * msgs[t]
        if self.kind == "dgd_atc":
            return acc
        v = acc - self.alpha * self.problem.smooth[i].gradient(self_x)
        return self.problem.prox[i].prox(v, self.alpha)

    def summary(self) -> dict:
        return {
            "algorithm": self.kind,
            "n": self.n,
            "d": self.d,
            "alpha": self.alpha,
            "stepsize_bound": self.bound,
            "override": self.override,
        }

    def __repr__(self):
        return f"AlgorithmSpec({self.kind}, n={self.n}, d={self.d}, alpha={self.alpha:.6g})"


def apply_T_block(spec: AlgorithmSpec, i: int, inputs: dict, self_x) -> np.ndarray:
    """One block update of node ``i``.

    ``inputs`` maps node ids in ``N_i`` (optionally ``i`` too) to iterates for
    Prox-DGD or adapted messages ``y_j`` for DGD-ATC.  A missing self entry is
    filled from ``self_x``.
    """
    closed = spec.closed[i]
    keys = set(inputs)
    extra = keys.difference(closed)
    if extra:
        raise ProtocolError(f"node {i} received inputs from non-neighbours {sorted(extra)}")
    missing = [j for j in closed if j != i and j not in keys]
    if missing:
        raise ProtocolError(f"node {i} is missing inputs from {missing}")
    self_x = np.asarray(self_x, dtype=float)
    msgs = []
    for j in closed:
        if j in inputs:
            msgs.append(np.asarray(inputs[j], dtype=float))
        else:
            msgs.append(spec.message(i, self_x))
    return spec.block_update(i, msgs, self_x)


def apply_T_full(spec: AlgorithmSpec, x) -> np.ndarray:
    """Synchronous step: every node updates from fresh inputs."""
    x = spec.problem.check_shape(x)
    if spec.kind == "prox_dgd":
        msgs = x
    else:
        msgs = np.stack([spec.message(j, x[j]) for j in range(spec.n)])
    out = np.empty_like(x)
    for i in range(spec.n):
        out[i] = spec.block_update(i, [msgs[j] for j in spec.closed[i]], x[i])
    return out


def fixed_point_residual(spec: AlgorithmSpec, x) -> float:
    return block_max_norm(apply_T_full(spec, x), x)


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionReport:
    kind: str
    factor: float
    per_node: np.ndarray
    valid: bool

    @property
    def rho(self):
        return self.factor


def _factors(alpha, mu, L, w):
    inner = 1.0 - alpha * mu * (2.0 - alpha * L / w)
    return np.sqrt(np.clip(inner, 0.0, None))


def contraction_factor(spec: AlgorithmSpec, kind: str | None = None) -> ContractionReport:
    """Linear rate of the block-max pseudo-contraction.

    Prox-DGD: ``sqrt(1 - alpha min_i mu_i (2 - alpha L_i / w_ii))``;
    DGD-ATC uses the same expression with ``w_ii`` replaced by 1.  ``kind``
    evaluates the other algorithm's factor at the same step-size.
    """
    kind = kind or spec.kind
    p = spec.problem
    mu, L = p.mu, p.L
    w = spec.W.self_weights if kind == "prox_dgd" else np.ones(p.n)
    per = _factors(spec.alpha, mu, L, w)
    valid = bool(np.all(mu > 0) and spec.stepsize_valid)
    if not valid:
        return ContractionReport(kind, 1.0, per, False)
    return ContractionReport(kind, float(np.max(per)), per, True)


def measure_pseudo_contraction(spec: AlgorithmSpec, x_star, samples: int = 200, seed=None,
                               tol: float = 1e-10) -> float:
    """Largest observed ``||T(x) - x*|| / ||x - x*||`` in the block-max norm.

    Points are drawn around ``x*`` with per-block scales spread over several
    decades so that both the dominant and the dominated blocks are exercised.
    """
    x_star = spec.problem.check_shape(x_star)
    res = fixed_point_residual(spec, x_star)
    if res > tol:
        raise PreconditionError(f"x_star is not a fixed point (residual {res:.3e} > {tol:.1e})")
    rng = np.random.default_rng(seed)
    n, d = x_star.shape
    worst = 0.0
    for s in range(samples):
        dirs = rng.standard_normal((n, d))
        if s % 4 == 1:
            # consensus perturbation
            dirs = np.broadcast_to(dirs[0], (n, d)).copy()
        scales = 10.0 ** rng.uniform(-3, 1, size=(n, 1))
        if s % 4 == 2:
            # one dominant block, the rest tiny
            scales = np.full((n, 1), 1e-6)
            scales[rng.integers(n)] = 1.0
        x = x_star + dirs * scales * 10.0 ** rng.uniform(-2, 2)
        den = block_max_norm(x, x_star)
        if den == 0:
            continue
        worst = max(worst, block_max_norm(apply_T_full(spec, x), x_star) / den)
    return worst
