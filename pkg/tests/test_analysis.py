import numpy as np
import pytest

from asyncdgd.analysis import (central_solve, combined_prox, envelope_check, fixed_point,
                               fixed_point_quadratic_direct, gap_report, lipschitz_constant,
                               loglog_slope, stacked_lower_bound)
from asyncdgd.asynchrony import gen_partial_async
from asyncdgd.engine import run_synchronous, simulate
from asyncdgd.errors import ParameterError
from asyncdgd.mixing import line_graph, metropolis_weights
from asyncdgd.operators import AlgorithmSpec, contraction_factor
from asyncdgd.problem import ConsensusProblem, QuadraticOracle, box_prox, l1_prox

from conftest import quadratic_spec, random_quadratic_problem


def test_direct_fixed_point_hand_value():
    # two scalar nodes f_i = (x - t_i)^2, W = [[1/2,1/2],[1/2,1/2]]
    from asyncdgd.mixing import Graph
    g = Graph(2, [(0, 1)])
    W = metropolis_weights(g)
    p = ConsensusProblem([QuadraticOracle(np.eye(1), np.array([t])) for t in (1.0, -1.0)])
    a = 0.25
    spec = AlgorithmSpec("prox_dgd", p, W, a)
    # stationarity 2(x_i - t_i) + ((I - W) x)_i / a = 0 -> x = (1/3, -1/3)
    xs = fixed_point_quadratic_direct(spec).x_star
    np.testing.assert_allclose(xs.ravel(), [1 / 3, -1 / 3], atol=1e-14)
    np.testing.assert_allclose(fixed_point(spec).x_star, xs, atol=1e-11)


@pytest.mark.parametrize("rank", [None, 1])
def test_direct_and_iterated_fixed_points_agree(rank):
    spec, _ = quadratic_spec(11, n=6, d=3, rank=rank)
    a = fixed_point_quadratic_direct(spec)
    b = fixed_point(spec, tol=1e-13)
    assert a.residual < 1e-10 and b.converged
    assert np.max(np.linalg.norm(a.x_star - b.x_star, axis=1)) <= 1e-7


def test_central_solve_matches_least_squares():
    rng = np.random.default_rng(2)
    p = random_quadratic_problem(rng, 4, 3)
    A = np.vstack([o.A for o in p.smooth])
    b = np.concatenate([o.b for o in p.smooth])
    x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    res = central_solve(p, tol=1e-11)
    np.testing.assert_allclose(res.x_opt, x_ls, atol=1e-9)
    assert res.F_opt == pytest.approx(np.sum((A @ x_ls - b) ** 2), rel=1e-12)


def test_central_solve_l1_optimality_conditions():
    rng = np.random.default_rng(5)
    lam = 0.8
    n, d = 4, 5
    p = random_quadratic_problem(rng, n, d, prox=[l1_prox(d, lam) for _ in range(n)])
    x = central_solve(p, tol=1e-11).x_opt
    grad = sum(o.gradient(x) for o in p.smooth)
    tot = n * lam
    on = np.abs(x) > 1e-9
    np.testing.assert_allclose(grad[on], -tot * np.sign(x[on]), atol=1e-7)
    assert np.all(np.abs(grad[~on]) <= tot + 1e-7)


def test_combined_prox_box_and_l1():
    prox, hval = combined_prox([l1_prox(2, 0.5), box_prox(2, -1, 1)], 2)
    np.testing.assert_allclose(prox(np.array([3.0, -0.2]), 1.0), [1.0, 0.0])
    assert hval(np.array([2.0, 0.0])) == np.inf


def test_gap_report_quadratic_bounds():
    spec, _ = quadratic_spec(3, n=6, d=3)
    p = spec.problem
    xs = fixed_point_quadratic_direct(spec).x_star
    F_opt = central_solve(p).F_opt
    lb, _ = stacked_lower_bound(p)
    rep = gap_report(p, spec.W, spec.alpha, xs, F_opt, lb, "identical_h")
    assert rep.ok
    assert rep.F_xstar <= F_opt + 1e-9
    assert set(rep.bounds) == {"general", "first_order", "F_xbar"}
    assert "consensus_error_stacked=" in rep.to_text()


def test_gap_report_nonidentical_lipschitz():
    rng = np.random.default_rng(4)
    n, d = 5, 2
    p = random_quadratic_problem(rng, n, d, prox=[l1_prox(d, 0.1 * (i + 1)) for i in range(n)])
    W = metropolis_weights(line_graph(n))
    from asyncdgd.operators import resolve_stepsize
    spec = AlgorithmSpec("prox_dgd", p, W, resolve_stepsize("conservative", "prox_dgd", p, W))
    xs = fixed_point(spec, tol=1e-13).x_star
    # quadratics are not globally Lipschitz, so an explicit G on the visited region is supplied
    G = float(np.sqrt(sum((np.linalg.norm(p.smooth[i].gradient(xs[i])) + p.prox[i].lipschitz) ** 2
                          for i in range(n))))
    with pytest.raises(ParameterError):
        gap_report(p, W, spec.alpha, xs, 0.0, None, "identical_h")
    rep = gap_report(p, W, spec.alpha, xs, central_solve(p).F_opt, None, "lipschitz_h", G=G * 10)
    assert rep.satisfied["F_xstar_le_F_opt"]
    assert lipschitz_constant(p) is None


def test_loglog_slope_power_law():
    a = np.logspace(-3, -2, 5)
    assert loglog_slope(a, 3 * a ** 0.5) == pytest.approx(0.5)


def test_envelope_check_partial_async():
    spec, g = quadratic_spec(6, n=5, d=2, rule="max")
    xs = fixed_point(spec, tol=1e-14).x_star
    rho = contraction_factor(spec).factor
    s = gen_partial_async(5, g, 8, 5, 14 * 20, seed=1)
    tr = simulate(spec, s, np.zeros((5, 2)), x_star=xs, stride=50)
    env = envelope_check(tr, xs, rho, B=8, D=5)
    assert env.ok and env.first_violation_partial is None


def test_envelope_check_synchronous_run():
    spec, _ = quadratic_spec(6, n=5, d=2)
    xs = fixed_point(spec, tol=1e-14).x_star
    tr = run_synchronous(spec, 50, np.ones((5, 2)), x_star=xs)
    env = envelope_check(tr, xs, contraction_factor(spec).factor)
    assert env.ok and (env.B, env.D) == (0, 0)


def test_envelope_check_detects_violation():
    spec, g = quadratic_spec(6, n=5, d=2)
    xs = fixed_point(spec, tol=1e-14).x_star
    s = gen_partial_async(5, g, 8, 5, 200, seed=1)
    tr = simulate(spec, s, np.zeros((5, 2)), x_star=xs)
    env = envelope_check(tr, xs, 0.1, B=8, D=5)
    assert not env.holds_partial and env.first_violation_partial is not None
