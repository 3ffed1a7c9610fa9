"""Asynchronous decentralized proximal gradient methods with delay analytics."""
from .analysis import (central_solve, envelope_check, fixed_point, fixed_point_quadratic_direct,
                       gap_report, loglog_slope)
from .asynchrony import (Schedule, delay_metrics, gen_best_case, gen_partial_async,
                         gen_synchronous, gen_total_async, gen_worst_case, verify_partial_async)
from .engine import RunTrace, run_concurrent, run_synchronous, simulate
from .errors import (AsyncDGDError, ConfigError, DimensionError, ParameterError,
                     PreconditionError, ProtocolError, ScheduleError, TopologyError)
from .mixing import Graph, MixingMatrix, lazy_transform, make_graph, metropolis_weights
from .operators import (AlgorithmSpec, apply_T_block, apply_T_full, contraction_factor,
                        measure_pseudo_contraction)
from .problem import (ConsensusProblem, LogisticOracle, QuadraticOracle, ball_prox,
                      block_max_norm, box_prox, l1_prox, zero_prox)

__version__ = "0.1.0"

__all__ = [
    "central_solve",
    "envelope_check",
    "fixed_point",
    "fixed_point_quadratic_direct",
    "gap_report",
    "loglog_slope",
    "Schedule",
    "delay_metrics",
    "gen_best_case",
    "gen_partial_async",
    "gen_synchronous",
    "gen_total_async",
    "gen_worst_case",
    "verify_partial_async",
    "RunTrace",
    "run_concurrent",
    "run_synchronous",
    "simulate",
    "AsyncDGDError",
    "ConfigError",
    "DimensionError",
    "ParameterError",
    "PreconditionError",
    "ProtocolError",
    "ScheduleError",
    "TopologyError",
    "Graph",
    "MixingMatrix",
    "lazy_transform",
    "make_graph",
    "metropolis_weights",
    "AlgorithmSpec",
    "apply_T_block",
    "apply_T_full",
    "contraction_factor",
    "measure_pseudo_contraction",
    "ConsensusProblem",
    "LogisticOracle",
    "QuadraticOracle",
    "ball_prox",
    "block_max_norm",
    "box_prox",
    "l1_prox",
    "zero_prox",
]
