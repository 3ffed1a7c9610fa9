"""Fixed points, centralized reference solutions, optimality-gap bounds and rate envelopes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asynchrony import DelayMetrics
from .errors import ParameterError, PreconditionError
from .operators import AlgorithmSpec, apply_T_full, fixed_point_residual
from .problem import ConsensusProblem, ProxOracle, QuadraticOracle, block_max_norm, eval_F, soft_threshold


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

@dataclass
class FixedPointResult:
    x_star: np.ndarray
    residual: float
    method: str
    iterations: int = 0
    converged: bool = True

    @property
    def mean(self) -> np.ndarray:
        """Network average of the blocks."""
        return self.x_star.mean(axis=0)

    @property
    def mean_stacked(self) -> np.ndarray:
        return np.broadcast_to(self.mean, self.x_star.shape).copy()


def fixed_point(spec: AlgorithmSpec, tol: float = 1e-12, max_iters: int = 200_000, x0=None) -> FixedPointResult:
    """Iterate the synchronous operator until the block-max step is at most ``tol``.

    Starting from zero, quadratic problems converge to the minimum-norm fixed point.
    """
    x = np.zeros((spec.n, spec.d)) if x0 is None else np.array(spec.problem.check_shape(x0), dtype=float)
    step = np.inf
    for it in range(max_iters):
        y = apply_T_full(spec, x)
        step = block_max_norm(y, x)
        if step <= tol:
            return FixedPointResult(x, step, "iterate", it, True)
        if not np.isfinite(step):
            # diverging iteration, e.g. an overridden step-size
            return FixedPointResult(x, np.inf, "iterate", it, False)
        x = y
    return FixedPointResult(x, fixed_point_residual(spec, x), "iterate", max_iters, False)


def _stacked_quadratic(problem: ConsensusProblem):
    if not all(isinstance(o, QuadraticOracle) for o in problem.smooth):
        raise ParameterError("direct solve needs quadratic losses on every node")
    if not problem.is_smooth:
        raise ParameterError("direct solve needs every nonsmooth term to be zero")
    n, d = problem.n, problem.d
    H = np.zeros((n * d, n * d))
    rhs = np.empty(n * d)
    for i, o in enumerate(problem.smooth):
        sl = slice(i * d, (i + 1) * d)
        H[sl, sl] = 2.0 * (o.A.T @ o.A)
        rhs[sl] = 2.0 * (o.A.T @ o.b)
    return H, rhs


def fixed_point_quadratic_direct(spec: AlgorithmSpec) -> FixedPointResult:
    """Solve the optimality system of the penalised problem directly.

    ``(blockdiag(2 A_i^T A_i) + ((I - W) kron I_d) / alpha) x = stack(2 A_i^T b_i)``,
    via an eigendecomposition pseudo-inverse so that singular systems give
    the minimum-norm solution.
    """
    if spec.kind != "prox_dgd":
        raise ParameterError("direct solve applies to Prox-DGD fixed points")
    n, d = spec.n, spec.d
    H, rhs = _stacked_quadratic(spec.problem)
    M = H + np.kron(np.eye(n) - spec.W.W, np.eye(d)) / spec.alpha
    M = 0.5 * (M + M.T)
    lam, V = np.linalg.eigh(M)
    cut = 1e-12 * max(abs(lam[-1]), 1.0)
    inv = np.where(np.abs(lam) > cut, 1.0 / np.where(np.abs(lam) > cut, lam, 1.0), 0.0)
    x = (V @ (inv * (V.T @ rhs))).reshape(n, d)
    return FixedPointResult(x, fixed_point_residual(spec, x), "quadratic_direct")


# ---------------------------------------------------------------------------
# centralized reference
# ---------------------------------------------------------------------------

def combined_prox(terms, d: int):
    """Prox of ``sum_i h_i`` for the closed-form combinations.

    Sums of l1 and box terms are separable per coordinate, so the prox is a
    clip of a soft-threshold.  A ball is supported on its own (alongside
    zero terms) or repeated identically.
    """
    lam1 = 0.0
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    balls = []
    for t in terms:
        if t.kind == "zero":
            continue
        if t.kind == "l1":
            lam1 += float(t.params[0])
        elif t.kind == "box":
            blo, bhi = t._box()
            lo = np.maximum(lo, blo)
            hi = np.minimum(hi, bhi)
        else:
            balls.append(t)
    if np.any(lo > hi):
        raise ParameterError("box constraints have an empty intersection")
    if balls:
        if lam1 > 0 or np.any(np.isfinite(lo)) or np.any(np.isfinite(hi)):
            raise ParameterError("no closed-form prox for a ball combined with other terms")
        if any(b.params != balls[0].params for b in balls):
            raise ParameterError("no closed-form prox for distinct balls")
        ball = balls[0]
        return (lambda v, a: ball.prox(v, a)), (lambda y: ball.value(y))
    has_box = bool(np.any(np.isfinite(lo)) or np.any(np.isfinite(hi)))
    box = ProxOracle(d, "box", (tuple(lo), tuple(hi))) if has_box else None

    def prox(v, a):
        out = soft_threshold(v, a * lam1) if lam1 > 0 else np.asarray(v, dtype=float)
        return np.clip(out, lo, hi) if has_box else out

    def value(y):
        h = lam1 * float(np.sum(np.abs(y)))
        return h + (box.value(y) if box is not None else 0.0)

    return prox, value


@dataclass
class CentralResult:
    x_opt: np.ndarray
    F_opt: float
    residual: float
    iterations: int
    converged: bool


def central_solve(p: ConsensusProblem, tol: float = 1e-10, max_iters: int = 200_000,
                  x0=None) -> CentralResult:
    """Accelerated proximal gradient on ``sum_i f_i(y) + h_i(y)`` over ``y in R^d``.

    Backtracking on the smoothness estimate, adaptive restart, and a stop once
    the proximal-gradient mapping has norm at most ``tol``.
    """
    d = p.d
    prox, hval = combined_prox(p.prox, d)

    def f(y):
        return sum(o.value(y) for o in p.smooth)

    def g(y):
        return sum(o.gradient(y) for o in p.smooth)

    L = max(float(np.sum(p.L)), 1e-12)
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    x = prox(x, 1.0 / L)
    y = x.copy()
    t = 1.0
    res = np.inf
    for it in range(1, max_iters + 1):
        gy = g(y)
        fy = f(y)
        while True:
            z = prox(y - gy / L, 1.0 / L)
            dz = z - y
            if f(z) <= fy + gy @ dz + 0.5 * L * (dz @ dz) + 1e-14 * max(1.0, abs(fy)):
                break
            L *= 2.0
        # gradient mapping at z measured with a plain step
        gz = g(z)
        res = float(np.linalg.norm(z - prox(z - gz / L, 1.0 / L)) * L)
        if res <= tol:
            x = z
            break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if (y - z) @ (z - x) > 0 or f(z) + hval(z) > f(x) + hval(x):
            # restart momentum
            t_next = 1.0
            y = z.copy()
        else:
            y = z + ((t - 1.0) / t_next) * (z - x)
        x = z
        t = t_next
    else:
        it = max_iters
    F = float(f(x) + hval(x))
    return CentralResult(x, F, res, it, res <= tol)


def stacked_lower_bound(p: ConsensusProblem, tol: float = 1e-12):
    """``min_x F(x)`` with independent blocks, i.e. ``sum_i min (f_i + h_i)``.

    Returns ``(value, note)``; ``value`` is ``None`` when some node is weakly
    convex and not quadratic.
    """
    total = 0.0
    for i, (o, h) in enumerate(zip(p.smooth, p.prox)):
        if isinstance(o, QuadraticOracle) and h.is_zero:
            total += o.minimum()
            continue
        if o.mu <= 0:
            return None, f"node {i}: weakly convex non-quadratic loss, no exact per-node minimum"
        local = ConsensusProblem([o], [h])
        total += central_solve(local, tol=tol).F_opt
    return float(total), "exact"


# ---------------------------------------------------------------------------
# optimality gaps
# ---------------------------------------------------------------------------

_CASES = ("general", "lipschitz_h", "identical_h", "atc_smooth")


@dataclass
class GapReport:
    case: str
    alpha: float
    beta: float
    consensus_error: float           # max_i ||x_i* - xbar*||
    consensus_error_stacked: float   # ||x* - 1 kron xbar*||
    F_xstar: float
    F_opt: float
    F_xbar: float
    lower_bound_minF: float | None = None
    bounds: dict = field(default_factory=dict)
    satisfied: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.satisfied.values())

    def to_text(self) -> str:
        lines = [
            f"case={self.case}",
            f"alpha={self.alpha!r}",
            f"beta={self.beta!r}",
            f"consensus_error={self.consensus_error!r}",
            f"consensus_error_stacked={self.consensus_error_stacked!r}",
            f"F_xstar={self.F_xstar!r}",
            f"F_opt={self.F_opt!r}",
            f"F_xbar={self.F_xbar!r}",
            f"lower_bound_minF={self.lower_bound_minF!r}",
        ]
        lines += [f"bound_{k}={v!r}" for k, v in self.bounds.items()]
        lines += [f"satisfied_{k}={int(v)}" for k, v in self.satisfied.items()]
        lines += [f"note={n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def lipschitz_constant(p: ConsensusProblem):
    """Lipschitz constant of ``F`` on the stacked space, ``sqrt(sum_i G_i^2)``, or ``None``."""
    total = 0.0
    for o, h in zip(p.smooth, p.prox):
        if o.lipschitz_G is None or h.lipschitz is None:
            return None
        total += (o.lipschitz_G + h.lipschitz) ** 2
    return float(np.sqrt(total))


def gap_report(p: ConsensusProblem, W, alpha: float, x_star, F_opt: float,
               lower_bound_minF: float | None = None, case: str = "general",
               G: float | None = None, tol: float = 1e-9) -> GapReport:
    """Measure the consensus error of a fixed point against the explicit gap bounds.

    ``general``      ``sqrt(2 alpha (F_opt - min F) / (1 - beta))`` (needs the lower bound)
    ``lipschitz_h``  ``alpha G / (1 - beta)`` with ``G`` the Lipschitz constant of ``F``
    ``identical_h``  ``alpha ||grad f(x*)|| / (1 - beta)`` and the bound on ``F(xbar*)``
    ``atc_smooth``   as ``identical_h`` for DGD-ATC fixed points (``h = 0``)

    The consensus-error bounds are checked on the stacked norm, which
    dominates every block.  ``F(x*) <= F_opt`` is always checked.
    """
    if case not in _CASES:
        raise ParameterError(f"unknown gap case {case!r}")
    x_star = p.check_shape(x_star)
    beta = float(W.beta)
    xbar = np.broadcast_to(x_star.mean(axis=0), x_star.shape)
    diff = x_star - xbar
    cons = float(np.sqrt(np.max(np.sum(diff * diff, axis=1))))
    cons_st = float(np.linalg.norm(diff))
    F_x = eval_F(p, x_star)
    F_bar = eval_F(p, xbar)
    rep = GapReport(case, float(alpha), beta, cons, cons_st, F_x, float(F_opt), F_bar, lower_bound_minF)
    rep.satisfied["F_xstar_le_F_opt"] = F_x <= F_opt + tol
    if lower_bound_minF is not None:
        b1 = float(np.sqrt(max(2.0 * alpha * (F_opt - lower_bound_minF), 0.0) / (1.0 - beta)))
        rep.bounds["general"] = b1
        rep.satisfied["general"] = cons_st <= b1 + tol
    elif case == "general":
        raise ParameterError("general needs the stacked lower bound min F")
    if case == "lipschitz_h":
        if G is None:
            G = lipschitz_constant(p)
        if G is None:
            raise ParameterError("lipschitz_h needs the Lipschitz constant G of F")
        b2 = float(alpha) * G / (1.0 - beta)
        rep.bounds["first_order"] = b2
        rep.satisfied["first_order"] = cons_st <= b2 + tol
    elif case in ("identical_h", "atc_smooth"):
        if not p.identical_h:
            raise ParameterError(f"{case} needs identical nonsmooth terms")
        if case == "atc_smooth" and not p.is_smooth:
            raise ParameterError("atc_smooth needs a smooth problem")
        gnorm = float(np.linalg.norm(p.grad(x_star)))
        b2 = float(alpha) * gnorm / (1.0 - beta)
        Lmax = float(np.max(p.L))
        c = alpha / (1.0 - beta) + Lmax * alpha ** 2 / (2.0 * (1.0 - beta) ** 2)
        rep.bounds["first_order"] = b2
        rep.bounds["F_xbar"] = F_opt + c * gnorm ** 2
        rep.satisfied["first_order"] = cons_st <= b2 + tol
        rep.satisfied["F_xbar"] = F_bar <= rep.bounds["F_xbar"] + tol
    return rep


def loglog_slope(alphas, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(alpha)``."""
    a = np.log(np.asarray(alphas, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(a, e, 1)[0])


# ---------------------------------------------------------------------------
# rate envelopes
# ---------------------------------------------------------------------------

@dataclass
class EnvelopeReport:
    rho: float
    B: int
    D: int
    initial_distance: float
    holds_partial: bool
    holds_adaptive: bool
    adaptive_dominates: bool
    first_violation_partial: int | None
    first_violation_adaptive: int | None
    max_excess_partial: float
    max_excess_adaptive: float

    @property
    def ok(self) -> bool:
        return self.holds_partial and self.holds_adaptive and self.adaptive_dominates

    def to_text(self) -> str:
        keys = ["rho", "B", "D", "initial_distance", "holds_partial", "holds_adaptive",
                "adaptive_dominates", "first_violation_partial", "first_violation_adaptive",
                "max_excess_partial", "max_excess_adaptive"]
        out = []
        for k in keys:
            v = getattr(self, k)
            out.append(f"{k}={int(v) if isinstance(v, bool) else (repr(v) if isinstance(v, float) else v)}")
        return "\n".join(out) + "\n"


def _first_violation(dist, env):
    bad = np.flatnonzero(dist > env)
    return (int(bad[0]) if bad.size else None), float(np.max(dist - env))


def envelope_check(trace, x_star, rho: float, metrics: DelayMetrics | None = None,
                   B: int | None = None, D: int | None = None, tol: float = 1e-9) -> EnvelopeReport:
    """Check both linear-rate envelopes at every iteration.

    ``||x^k - x*|| <= rho^floor(k / (B + D + 1)) ||x^0 - x*|| + tol`` with the
    schedule's observed ``(B, D)`` unless given, and the delay-adaptive
    ``rho^{m^k} ||x^0 - x*|| + tol``.  Synchronous traces count rounds, so
    both reduce to ``rho^k``.
    """
    if x_star is None:
        raise PreconditionError("envelope check needs a fixed point")
    if trace.distance is not None:
        dist = trace.distance
    else:
        dist = np.array([block_max_norm(x, x_star) for x in trace.iterates()])
    K = dist.size - 1
    k = np.arange(K + 1)
    d0 = float(dist[0])
    if trace.schedule is None:
        B = D = 0
        m_k = k
    else:
        if metrics is None:
            from .asynchrony import delay_metrics
            metrics = delay_metrics(trace.schedule)
        B = metrics.observed_B if B is None else B
        D = metrics.observed_D if D is None else D
        if B is None:
            raise PreconditionError("schedule does not satisfy the window clause; no (B, D) envelope")
        m_k = metrics.m_k
    floor = k // (B + D + 1)
    env_p = rho ** floor * d0 + tol
    env_a = rho ** m_k * d0 + tol
    vp, ep = _first_violation(dist, env_p)
    va, ea = _first_violation(dist, env_a)
    return EnvelopeReport(float(rho), int(B), int(D), d0, vp is None, va is None,
                          bool(np.all(m_k >= floor)), vp, va, ep, ea)
