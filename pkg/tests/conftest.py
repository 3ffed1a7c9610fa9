import numpy as np
import pytest
from hypothesis import settings

from asyncdgd import (AlgorithmSpec, ConsensusProblem, QuadraticOracle, l1_prox, make_graph,
                      metropolis_weights)
from asyncdgd.operators import resolve_stepsize

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_quadratic_problem(rng, n, d, rows=None, rank=None, prox=None):
    """Per-node least squares; ``rank`` < d makes every A_i rank deficient."""
    rows = rows or d + 3
    smooth = []
    for _ in range(n):
        A = rng.standard_normal((rows, d))
        if rank is not None:
            A = A[:, :rank] @ rng.standard_normal((rank, d))
        smooth.append(QuadraticOracle(A, rng.standard_normal(rows)))
    return ConsensusProblem(smooth, prox)


def quadratic_spec(seed, n=5, d=3, kind="prox_dgd", rule="conservative", edges=None, lazy=None, **kw):
    from asyncdgd import lazy_transform
    rng = np.random.default_rng(seed)
    g = make_graph("random_connected", n, edges if edges is not None else n + 1, seed)
    W = metropolis_weights(g)
    if lazy or (lazy is None and kind == "dgd_atc"):
        W = lazy_transform(W)
    p = random_quadratic_problem(rng, n, d, **kw)
    alpha = resolve_stepsize(rule, kind, p, W)
    return AlgorithmSpec(kind, p, W, alpha), g


@pytest.fixture
def small_spec():
    spec, g = quadratic_spec(0, n=4, d=2)
    return spec


@pytest.fixture
def l1_spec():
    rng = np.random.default_rng(3)
    n, d = 5, 3
    p = random_quadratic_problem(rng, n, d, prox=[l1_prox(d, 0.2) for _ in range(n)])
    g = make_graph("ring", n)
    W = metropolis_weights(g)
    return AlgorithmSpec("prox_dgd", p, W, resolve_stepsize("conservative", "prox_dgd", p, W))


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def record(criterion: str, ok: bool, detail: str = ""):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}" + (f"  {detail}" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
