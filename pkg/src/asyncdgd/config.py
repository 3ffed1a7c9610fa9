"""Experiment configuration: INI-style ``[section]`` / ``key = value`` text.

Building an experiment from a config is deterministic: every random draw is
seeded from a config field.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mixing import Graph, lazy_transform, make_graph, metropolis_weights
from .operators import AlgorithmSpec, resolve_stepsize
from .problem import (ConsensusProblem, LogisticOracle, QuadraticOracle, ball_prox, box_prox,
                      l1_prox, zero_prox)

LOSSES = ("logistic", "quadratic")
PROX_KINDS = ("auto", "zero", "l1", "box", "ball")
GRAPH_KINDS = ("line", "ring", "star", "complete", "random_connected", "file")
WEIGHTS = ("auto", "metropolis", "lazy_metropolis")
REGIMES = ("partial_async", "synchronous", "total_async", "worst_case", "best_case")
INITIAL = ("zeros", "random", "fixed_point")


@dataclass
class ProblemSection:
    loss: str = "logistic"
    d: int = 5
    samples: int = 50
    data_seed: int = 0
    data_csv: str = ""
    lambda1: float = 0.0
    lambda2: float = 0.1
    prox: str = "auto"
    box_lo: float = -1.0
    box_hi: float = 1.0
    ball_radius: float = 1.0
    noise: float = 0.1


@dataclass
class GraphSection:
    kind: str = "random_connected"
    n: int = 16
    edges: int = 20
    seed: int = 0
    edge_file: str = ""
    weights: str = "auto"


@dataclass
class AlgorithmSection:
    kind: str = "prox_dgd"
    stepsize: str = "conservative"


@dataclass
class ScheduleSection:
    regime: str = "partial_async"
    B: int = -1
    D: int = 0
    growth: float = 1.0
    horizon: int = 1000
    seed: int = 0


@dataclass
class RuntimeSection:
    updates: int = 2000
    duration: float = 0.0
    activation_threshold: int = 0


@dataclass
class OutputSection:
    dir: str = "out"
    stride: int = 1
    initial: str = "random"
    initial_seed: int = 0


@dataclass
class ExperimentConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    graph: GraphSection = field(default_factory=GraphSection)
    algorithm: AlgorithmSection = field(default_factory=AlgorithmSection)
    schedule: ScheduleSection | None = field(default_factory=ScheduleSection)
    runtime: RuntimeSection | None = None
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def mode(self) -> str:
        return "runtime" if self.runtime is not None else "simulate"

    # serialization -------------------------------------------------------
    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name in ("problem", "graph", "algorithm", "schedule", "runtime", "output"):
            sec = getattr(self, name)
            if sec is None:
                continue
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        known = {"problem", "graph", "algorithm", "schedule", "runtime", "output"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if cp.has_section("schedule") and cp.has_section("runtime"):
            raise ConfigError("give either a [schedule] or a [runtime] section, not both")
        cfg = cls(
            problem=_section(cp, "problem", ProblemSection),
            graph=_section(cp, "graph", GraphSection),
            algorithm=_section(cp, "algorithm", AlgorithmSection),
            schedule=None,
            runtime=None,
            output=_section(cp, "output", OutputSection),
        )
        if cp.has_section("runtime"):
            cfg.runtime = _section(cp, "runtime", RuntimeSection)
        else:
            cfg.schedule = _section(cp, "schedule", ScheduleSection)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def validate(self):
        p, g, a, o = self.problem, self.graph, self.algorithm, self.output
        _choice("problem.loss", p.loss, LOSSES)
        _choice("problem.prox", p.prox, PROX_KINDS)
        _positive("problem.d", p.d)
        _positive("problem.samples", p.samples)
        _nonneg("problem.lambda1", p.lambda1)
        _nonneg("problem.lambda2", p.lambda2)
        _nonneg("problem.noise", p.noise)
        if p.box_lo > p.box_hi:
            raise ConfigError("problem.box_lo: must not exceed problem.box_hi")
        _nonneg("problem.ball_radius", p.ball_radius)
        _choice("graph.kind", g.kind, GRAPH_KINDS)
        _choice("graph.weights", g.weights, WEIGHTS)
        if g.n < 2:
            raise ConfigError("graph.n: need at least two nodes")
        if g.kind == "file" and not g.edge_file:
            raise ConfigError("graph.edge_file: required when graph.kind = file")
        _choice("algorithm.kind", a.kind, ("prox_dgd", "dgd_atc"))
        parse_stepsize(a.stepsize)
        if self.schedule is not None:
            s = self.schedule
            _choice("schedule.regime", s.regime, REGIMES)
            _positive("schedule.horizon", s.horizon)
            _nonneg("schedule.D", s.D)
            if s.growth <= 0:
                raise ConfigError("schedule.growth: must be positive")
        if self.runtime is not None:
            r = self.runtime
            if r.updates <= 0 and r.duration <= 0:
                raise ConfigError("runtime.updates: give a positive update budget or runtime.duration")
            _nonneg("runtime.activation_threshold", r.activation_threshold)
        _positive("output.stride", o.stride)
        _choice("output.initial", o.initial, INITIAL)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _section(cp, name, cls):
    obj = cls()
    if not cp.has_section(name):
        return obj
    valid = {f.name: f for f in fields(cls)}
    for key, raw in cp[name].items():
        if key not in valid:
            raise ConfigError(f"{name}.{key}: unknown key (expected one of {sorted(valid)})")
        default = getattr(obj, key)
        try:
            if isinstance(default, bool):
                val = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                val = int(raw)
            elif isinstance(default, float):
                val = float(raw)
            else:
                val = raw.strip()
        except ValueError:
            raise ConfigError(f"{name}.{key}: cannot parse {raw!r} as {type(default).__name__}") from None
        setattr(obj, key, val)
    return obj


def _choice(name, v, options):
    if v not in options:
        raise ConfigError(f"{name}: {v!r} is not one of {list(options)}")


def _positive(name, v):
    if not v > 0:
        raise ConfigError(f"{name}: must be positive, got {v}")


def _nonneg(name, v):
    if v < 0:
        raise ConfigError(f"{name}: must be nonnegative, got {v}")


def parse_stepsize(text: str):
    """``conservative`` | ``max`` | ``fraction:<f>`` | ``<number>`` -> ``(rule, value)``."""
    t = text.strip().lower()
    if t in ("conservative", "max"):
        return t, None
    if t.startswith("fraction:"):
        try:
            f = float(t.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"algorithm.stepsize: bad fraction in {text!r}") from None
        if not f > 0:
            raise ConfigError("algorithm.stepsize: fraction must be positive")
        return "fraction", f
    try:
        v = float(t)
    except ValueError:
        raise ConfigError(f"algorithm.stepsize: expected conservative, max, fraction:<f> or a number, got {text!r}") from None
    if not v > 0:
        raise ConfigError("algorithm.stepsize: must be positive")
    return "explicit", v


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------

@dataclass
class Experiment:
    config: ExperimentConfig
    problem: ConsensusProblem
    graph: Graph
    spec: AlgorithmSpec
    x0: np.ndarray

    @property
    def override(self) -> bool:
        return self.spec.override


def build_graph(cfg: ExperimentConfig, base: Path | None = None) -> Graph:
    g = cfg.graph
    if g.kind == "file":
        path = Path(g.edge_file)
        if base is not None and not path.is_absolute():
            path = base / path
        graph = Graph.load(path, g.n)
    else:
        graph = make_graph(g.kind, g.n, g.edges, g.seed)
    if not graph.is_connected():
        raise ConfigError("graph: the communication graph must be connected")
    return graph


def _load_csv_data(path, n, d):
    """Rows ``node,target,f0..f{d-1}`` with a header."""
    try:
        raw = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"problem.data_csv: cannot read {path}: {exc}") from None
    if not np.all(np.isfinite(raw)):
        raise ConfigError("problem.data_csv: every cell must be a finite number")
    if raw.shape[1] != d + 2:
        raise ConfigError(f"problem.data_csv: expected {d + 2} columns (node, target, {d} features)")
    out = []
    for i in range(n):
        rows = raw[raw[:, 0] == i]
        if rows.shape[0] == 0:
            raise ConfigError(f"problem.data_csv: node {i} has no rows")
        out.append((rows[:, 2:], rows[:, 1]))
    return out


def build_problem(cfg: ExperimentConfig, n: int, base: Path | None = None) -> ConsensusProblem:
    p = cfg.problem
    d = p.d
    if p.data_csv:
        path = Path(p.data_csv)
        if base is not None and not path.is_absolute():
            path = base / path
        data = _load_csv_data(path, n, d)
    else:
        rng = np.random.default_rng(p.data_seed)
        truth = rng.standard_normal(d)
        data = []
        for _ in range(n):
            A = rng.standard_normal((p.samples, d))
            if p.loss == "logistic":
                z = A @ truth + p.noise * rng.standard_normal(p.samples)
                y = np.where(z >= 0, 1.0, -1.0)
            else:
                y = A @ truth + p.noise * rng.standard_normal(p.samples)
            data.append((A, y))
    if p.loss == "logistic":
        smooth = [LogisticOracle(A, y, p.lambda2) for A, y in data]
    else:
        smooth = [QuadraticOracle(A, y) for A, y in data]
    kind = p.prox
    if kind == "auto":
        kind = "l1" if p.lambda1 > 0 else "zero"
    if kind == "zero":
        prox = [zero_prox(d) for _ in range(n)]
    elif kind == "l1":
        prox = [l1_prox(d, p.lambda1) for _ in range(n)]
    elif kind == "box":
        prox = [box_prox(d, p.box_lo, p.box_hi) for _ in range(n)]
    else:
        prox = [ball_prox(d, 0.0, p.ball_radius) for _ in range(n)]
    return ConsensusProblem(smooth, prox)


def build(cfg: ExperimentConfig, override: bool = False, base: Path | None = None) -> Experiment:
    graph = build_graph(cfg, base)
    problem = build_problem(cfg, graph.n, base)
    W = metropolis_weights(graph)
    weights = cfg.graph.weights
    if weights == "lazy_metropolis" or (weights == "auto" and cfg.algorithm.kind == "dgd_atc"):
        W = lazy_transform(W)
    rule, value = parse_stepsize(cfg.algorithm.stepsize)
    alpha = resolve_stepsize(rule, cfg.algorithm.kind, problem, W, value)
    try:
        spec = AlgorithmSpec(cfg.algorithm.kind, problem, W, alpha, override=override)
    except ConfigError as exc:
        raise ConfigError(f"algorithm.stepsize: {exc}; pass --override-stepsize to run anyway") from None
    o = cfg.output
    if o.initial == "zeros":
        x0 = np.zeros((graph.n, problem.d))
    else:
        x0 = np.random.default_rng(o.initial_seed).standard_normal((graph.n, problem.d))
    return Experiment(cfg, problem, graph, spec, x0)


def with_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None or cfg.schedule is None:
        return cfg
    return replace(cfg, schedule=replace(cfg.schedule, seed=int(seed)))
