"""Consensus problems, per-node function oracles and block-vector helpers.

A stacked iterate is stored as a float ``(n, d)`` array: row ``i`` is the
local copy held by node ``i`` and ``x.ravel()`` is the stacked vector whose
block ``i`` occupies scalars ``[i*d, (i+1)*d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionError, ParameterError

# Membership slack for indicator domains; projections land on the boundary
# only up to rounding.
_DOMAIN_TOL = 1e-12


# ---------------------------------------------------------------------------
# block vectors
# ---------------------------------------------------------------------------

def block_vector(data, n: int, d: int) -> np.ndarray:
    """Return ``data`` viewed as an ``(n, d)`` block array.

    ``data`` may be flat of length ``n*d`` or already shaped ``(n, d)``.
    A view is returned whenever numpy allows one.
    """
    arr = np.asarray(data, dtype=float)
    if arr.size != n * d:
        raise DimensionError(f"expected {n * d} scalars for n={n}, d={d}, got {arr.size}")
    if arr.ndim == 2 and arr.shape == (n, d):
        return arr
    return arr.reshape(n, d)


def block_max_norm(x, y=None) -> float:
    """Block-wise maximum norm ``max_i ||x_i - y_i||``.

    With ``y=None`` the norm of ``x`` itself is returned.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"block vector must be 2-D (n, d), got shape {x.shape}")
    if y is None:
        diff = x
    else:
        y = np.asarray(y, dtype=float)
        if y.shape != x.shape:
            raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
        diff = x - y
    if diff.shape[0] == 0:
        return 0.0
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff))))


def consensus_error(x) -> float:
    """``max_i ||x_i - mean(x)||``."""
    x = np.asarray(x, dtype=float)
    return block_max_norm(x, np.broadcast_to(x.mean(axis=0), x.shape))


# ---------------------------------------------------------------------------
# smooth oracles
# ---------------------------------------------------------------------------

class SmoothOracle:
    """A convex, ``L``-smooth local loss ``f_i: R^d -> R``.

    Subclasses implement :meth:`value` and :meth:`gradient`.  ``mu`` is the
    strong-convexity modulus; ``0`` marks a weakly convex function.
    ``lipschitz_G`` is the Lipschitz constant of ``f`` itself, or ``None``
    when ``f`` is not globally Lipschitz.
    """

    kind = "custom"

    def __init__(self, d: int, L: float, mu: float = 0.0, lipschitz_G: float | None = None):
        if d < 1:
            raise ParameterError("dimension must be positive")
        L = float(L)
        mu = float(mu)
        if L < 0 or mu < 0:
            raise ParameterError(f"smoothness and strong convexity must be nonnegative (L={L}, mu={mu})")
        if mu > L * (1 + 1e-12):
            raise ParameterError(f"strong convexity {mu} exceeds smoothness {L}")
        self.d = int(d)
        self.L = L
        self.mu = min(mu, L)
        self.lipschitz_G = None if lipschitz_G is None else float(lipschitz_G)

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, L={self.L:.6g}, mu={self.mu:.6g})"


class FunctionOracle(SmoothOracle):
    """Smooth oracle backed by plain callables."""

    def __init__(self, d, value: Callable, gradient: Callable, L, mu=0.0, lipschitz_G=None):
        super().__init__(d, L, mu, lipschitz_G)
        self._value = value
        self._gradient = gradient

    def value(self, x):
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x):
        return np.asarray(self._gradient(np.asarray(x, dtype=float)), dtype=float)


class QuadraticOracle(SmoothOracle):
    """``f(x) = ||A x - b||^2``."""

    kind = "quadratic"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        eig = np.linalg.eigvalsh(A.T @ A)
        lmax = max(float(eig[-1]), 0.0)
        lmin = float(eig[0])
        # rank deficiency shows up as a rounding-level eigenvalue
        if lmin <= 1e-12 * max(lmax, 1.0):
            lmin = 0.0
        super().__init__(A.shape[1], 2.0 * lmax, 2.0 * lmin)
        self.A = A
        self.b = b
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def hessian(self) -> np.ndarray:
        return 2.0 * (self.A.T @ self.A)

    def value(self, x):
        r = self.A @ x - self.b
        return float(r @ r)

    def gradient(self, x):
        return 2.0 * (self.A.T @ (self.A @ x - self.b))

    def minimum(self) -> float:
        """``min_y ||A y - b||^2`` via least squares."""
        y, *_ = np.linalg.lstsq(self.A, self.b, rcond=None)
        return self.value(y)


class LogisticOracle(SmoothOracle):
    """Mean logistic loss with a ridge term.

    ``f(x) = (1/m) sum_j [log(1 + exp(-b_j a_j^T x)) + (lam2/2)||x||^2]``.
    """

    kind = "logistic"

    def __init__(self, features, labels, ridge: float = 0.0):
        A = np.atleast_2d(np.asarray(features, dtype=float))
        y = np.asarray(labels, dtype=float).reshape(-1)
        if A.shape[0] == 0 or y.size == 0:
            raise ParameterError("logistic oracle needs at least one sample")
        if A.shape[0] != y.size:
            raise DimensionError(f"{A.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ParameterError("labels must be -1 or +1")
        if ridge < 0:
            raise ParameterError("ridge weight must be nonnegative")
        m = A.shape[0]
        # logistic curvature is at most 1/4
        curv = float(np.linalg.eigvalsh(A.T @ A / m)[-1]) / 4.0
        G = float(np.mean(np.linalg.norm(A, axis=1))) if ridge == 0 else None
        super().__init__(A.shape[1], max(curv, 0.0) + ridge, ridge, G)
        self.features = A
        self.labels = y
        self.ridge = float(ridge)
        self._signed = A * y[:, None]
        for arr in (self.features, self.labels, self._signed):
            arr.setflags(write=False)

    def value(self, x):
        z = self._signed @ x
        return float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * self.ridge * (x @ x))

    def gradient(self, x):
        z = self._signed @ x
        w = expit(-z)
        return -(self._signed.T @ w) / self.labels.size + self.ridge * x


def make_quadratic_oracle(A, b) -> QuadraticOracle:
    return QuadraticOracle(A, b)


def make_logistic_oracle(features, labels, ridge: float = 0.0) -> LogisticOracle:
    return LogisticOracle(features, labels, ridge)


class ZeroOracle(SmoothOracle):
    """``f = 0``; useful for pure consensus runs."""

    kind = "zero"

    def __init__(self, d):
        super().__init__(d, 0.0, 0.0, 0.0)

    def value(self, x):
        return 0.0

    def gradient(self, x):
        return np.zeros(self.d)


# ---------------------------------------------------------------------------
# proximal oracles
# ---------------------------------------------------------------------------

def soft_threshold(v, threshold):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def prox_l1(v, scale: float) -> np.ndarray:
    """Soft-thresholding, the prox of ``scale * ||.||_1``."""
    if not scale > 0:
        raise ParameterError(f"prox scale must be positive, got {scale}")
    return soft_threshold(v, scale)


@dataclass(frozen=True)
class ProxOracle:
    """Nonsmooth term ``h_i`` with a closed-form proximal map.

    ``kind`` is one of ``zero``, ``l1``, ``box`` or ``ball``; ``params`` holds
    the parameters as plain tuples so oracles compare by value.
    """

    d: int
    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "box", "ball"):
            raise ParameterError(f"unknown prox kind {self.kind!r}")
        if self.kind == "l1" and self.params[0] < 0:
            raise ParameterError("l1 weight must be nonnegative")
        if self.kind == "box":
            lo, hi = self._box()
            if np.any(lo > hi):
                raise ParameterError("box lower bound exceeds upper bound")
        if self.kind == "ball" and self.params[1] < 0:
            raise ParameterError("ball radius must be nonnegative")

    # parameter views -----------------------------------------------------
    def _box(self):
        lo, hi = self.params
        return (np.broadcast_to(np.asarray(lo, dtype=float), (self.d,)),
                np.broadcast_to(np.asarray(hi, dtype=float), (self.d,)))

    def _ball(self):
        center, radius = self.params
        return np.broadcast_to(np.asarray(center, dtype=float), (self.d,)), float(radius)

    @property
    def lam1(self) -> float:
        return float(self.params[0]) if self.kind == "l1" else 0.0

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "l1" and self.params[0] == 0)

    # oracle --------------------------------------------------------------
    def prox(self, v, alpha: float) -> np.ndarray:
        """``argmin_y alpha*h(y) + 0.5*||y - v||^2``."""
        if not alpha > 0:
            raise ParameterError(f"prox step must be positive, got {alpha}")
        v = np.asarray(v, dtype=float)
        if self.kind == "zero":
            return v
        if self.kind == "l1":
            if self.params[0] == 0:
                return v
            return soft_threshold(v, alpha * self.params[0])
        if self.kind == "box":
            lo, hi = self._box()
            return np.clip(v, lo, hi)
        center, radius = self._ball()
        off = v - center
        nrm = np.sqrt(off @ off)
        if nrm <= radius:
            return v
        return center + off * (radius / nrm)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return float(self.params[0] * np.sum(np.abs(x)))
        if self.kind == "box":
            lo, hi = self._box()
            span = np.maximum(np.abs(lo), np.abs(hi))
            slack = _DOMAIN_TOL * (1.0 + np.where(np.isfinite(span), span, 0.0))
            inside = np.all(x >= lo - slack) and np.all(x <= hi + slack)
            return 0.0 if inside else np.inf
        center, radius = self._ball()
        dist = np.linalg.norm(x - center)
        return 0.0 if dist <= radius * (1 + _DOMAIN_TOL) + _DOMAIN_TOL else np.inf

    @property
    def lipschitz(self) -> float | None:
        """Lipschitz constant of ``h`` on ``R^d``; ``None`` for indicators."""
        if self.kind == "l1":
            return float(self.params[0]) * np.sqrt(self.d)
        if self.kind == "zero":
            return 0.0
        return None

    @property
    def lower_bound(self) -> float:
        return 0.0


def zero_prox(d) -> ProxOracle:
    return ProxOracle(d, "zero", ())


def l1_prox(d, lam1: float) -> ProxOracle:
    return ProxOracle(d, "l1", (float(lam1),))


def _as_param(v):
    arr = np.asarray(v, dtype=float)
    return float(arr) if arr.ndim == 0 else tuple(float(t) for t in arr)


def box_prox(d, lo, hi) -> ProxOracle:
    return ProxOracle(d, "box", (_as_param(lo), _as_param(hi)))


def ball_prox(d, center, radius: float) -> ProxOracle:
    return ProxOracle(d, "ball", (_as_param(center), float(radius)))


# ---------------------------------------------------------------------------
# consensus problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsensusProblem:
    """``minimize_x sum_i f_i(x) + h_i(x)`` over a network of ``n`` nodes."""

    smooth: tuple
    prox: tuple
    n: int = field(init=False)
    d: int = field(init=False)

    def __init__(self, smooth: Sequence[SmoothOracle], prox: Sequence[ProxOracle] | None = None):
        smooth = tuple(smooth)
        if not smooth:
            raise ParameterError("a consensus problem needs at least one node")
        d = smooth[0].d
        if prox is None:
            prox = tuple(zero_prox(d) for _ in smooth)
        prox = tuple(prox)
        if len(prox) != len(smooth):
            raise DimensionError(f"{len(smooth)} smooth oracles but {len(prox)} prox oracles")
        for o in (*smooth, *prox):
            if o.d != d:
                raise DimensionError(f"oracle dimension {o.d} differs from {d}")
        object.__setattr__(self, "smooth", smooth)
        object.__setattr__(self, "prox", prox)
        object.__setattr__(self, "n", len(smooth))
        object.__setattr__(self, "d", d)

    @property
    def identical_h(self) -> bool:
        first = self.prox[0]
        return all(p.kind == first.kind and p.params == first.params for p in self.prox)

    @property
    def is_smooth(self) -> bool:
        return all(p.is_zero for p in self.prox)

    @property
    def L(self) -> np.ndarray:
        return np.array([o.L for o in self.smooth])

    @property
    def mu(self) -> np.ndarray:
        return np.array([o.mu for o in self.smooth])

    @property
    def strongly_convex(self) -> bool:
        return bool(np.all(self.mu > 0))

    def check_shape(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n, self.d):
            raise DimensionError(f"expected block vector of shape {(self.n, self.d)}, got {x.shape}")
        return x

    def grad(self, x) -> np.ndarray:
        """Stacked gradient of ``f(x) = sum_i f_i(x_i)``."""
        x = self.check_shape(x)
        return np.stack([o.gradient(x[i]) for i, o in enumerate(self.smooth)])

    def f_value(self, x) -> float:
        x = self.check_shape(x)
        return float(sum(o.value(x[i]) for i, o in enumerate(self.smooth)))

    def consensus_value(self, y) -> float:
        """Objective of the consensus problem at a common point ``y``."""
        y = np.asarray(y, dtype=float)
        return eval_F(self, np.broadcast_to(y, (self.n, self.d)))


def eval_F(problem: ConsensusProblem, x) -> float:
    """``sum_i f_i(x_i) + h_i(x_i)``; ``inf`` outside ``dom h``."""
    x = problem.check_shape(x)
    total = 0.0
    for i in range(problem.n):
        hv = problem.prox[i].value(x[i])
        if not np.isfinite(hv):
            return np.inf
        total += problem.smooth[i].value(x[i]) + hv
    return float(total)
