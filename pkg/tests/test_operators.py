import numpy as np
import pytest

from asyncdgd.errors import ConfigError, PreconditionError, ProtocolError
from asyncdgd.mixing import lazy_transform, line_graph, metropolis_weights
from asyncdgd.operators import (AlgorithmSpec, apply_T_block, apply_T_full, contraction_factor,
                                fixed_point_residual, max_stepsize, measure_pseudo_contraction,
                                resolve_stepsize)
from asyncdgd.problem import ConsensusProblem, QuadraticOracle, l1_prox
from asyncdgd.analysis import fixed_point

from conftest import quadratic_spec


def _line3_problem(prox=None):
    # f_i(x) = c_i (x - t_i)^2 in one dimension: L_i = mu_i = 2 c_i
    c = [1.0, 2.0, 0.5]
    t = [1.0, -1.0, 2.0]
    smooth = [QuadraticOracle(np.array([[np.sqrt(ci)]]), np.array([np.sqrt(ci) * ti])) for ci, ti in zip(c, t)]
    return ConsensusProblem(smooth, prox)


def test_stepsize_bounds_hand_values():
    p = _line3_problem()
    W = metropolis_weights(line_graph(3))
    # w_ii = 2/3, 1/3, 2/3 ; L = 2, 4, 1 -> 2 min(w_ii / L_i) = 2 * (1/12)
    assert max_stepsize("prox_dgd", p, W) == pytest.approx(1 / 6)
    assert max_stepsize("dgd_atc", p, lazy_transform(W)) == pytest.approx(0.5)
    # conservative rule: min w_ii / max L
    assert resolve_stepsize("conservative", "prox_dgd", p, W) == pytest.approx((1 / 3) / 4)
    assert resolve_stepsize("conservative", "dgd_atc", p, W) == pytest.approx(0.25)
    assert resolve_stepsize("max", "prox_dgd", p, W) == pytest.approx(0.99 / 6)


def test_contraction_factor_hand_value():
    p = _line3_problem()
    W = metropolis_weights(line_graph(3))
    a = 0.05
    spec = AlgorithmSpec("prox_dgd", p, W, a)
    w = np.array([2 / 3, 1 / 3, 2 / 3])
    L = np.array([2.0, 4.0, 1.0])
    rho = np.sqrt(1 - a * np.min(L * (2 - a * L / w)))
    rho_hat = np.sqrt(1 - a * np.min(L * (2 - a * L)))
    assert contraction_factor(spec).factor == pytest.approx(rho, rel=1e-14)
    assert contraction_factor(spec, "dgd_atc").factor == pytest.approx(rho_hat, rel=1e-14)
    assert contraction_factor(spec, "dgd_atc").factor <= contraction_factor(spec).factor


def test_invalid_stepsize_refused_unless_override():
    p = _line3_problem()
    W = metropolis_weights(line_graph(3))
    with pytest.raises(ConfigError):
        AlgorithmSpec("prox_dgd", p, W, 1.0)
    spec = AlgorithmSpec("prox_dgd", p, W, 1.0, override=True)
    assert not spec.stepsize_valid and not contraction_factor(spec).valid


def test_atc_needs_smooth_and_pd():
    W = metropolis_weights(line_graph(3))
    with pytest.raises(ConfigError):
        AlgorithmSpec("dgd_atc", _line3_problem([l1_prox(1, 0.1)] * 3), lazy_transform(W), 0.1)
    p = _line3_problem()
    if not W.positive_definite:
        with pytest.raises(ConfigError):
            AlgorithmSpec("dgd_atc", p, W, 0.1)


def test_block_update_formula_prox_dgd():
    p = _line3_problem([l1_prox(1, 0.3)] * 3)
    W = metropolis_weights(line_graph(3))
    spec = AlgorithmSpec("prox_dgd", p, W, 0.05)
    x = np.array([[0.4], [-0.2], [1.5]])
    v = W.W[1] @ x - 0.05 * p.smooth[1].gradient(x[1])
    expected = np.sign(v) * np.maximum(np.abs(v) - 0.05 * 0.3, 0)
    np.testing.assert_allclose(apply_T_block(spec, 1, {0: x[0], 2: x[2]}, x[1]), expected, atol=1e-15)
    np.testing.assert_allclose(apply_T_full(spec, x)[1], expected, atol=1e-15)


def test_block_update_formula_atc():
    p = _line3_problem()
    W = lazy_transform(metropolis_weights(line_graph(3)))
    spec = AlgorithmSpec("dgd_atc", p, W, 0.1)
    x = np.array([[0.4], [-0.2], [1.5]])
    y = np.stack([x[j] - 0.1 * p.smooth[j].gradient(x[j]) for j in range(3)])
    np.testing.assert_allclose(apply_T_full(spec, x), W.W @ y, atol=1e-15)


def test_apply_T_block_protocol_errors():
    p = _line3_problem()
    spec = AlgorithmSpec("prox_dgd", p, metropolis_weights(line_graph(3)), 0.05)
    with pytest.raises(ProtocolError):
        apply_T_block(spec, 0, {2: np.zeros(1)}, np.zeros(1))
    with pytest.raises(ProtocolError):
        apply_T_block(spec, 1, {0: np.zeros(1)}, np.zeros(1))


@pytest.mark.parametrize("kind", ["prox_dgd", "dgd_atc"])
def test_pseudo_contraction_below_factor(kind):
    spec, _ = quadratic_spec(4, n=5, d=3, kind=kind, rule="max")
    xs = fixed_point(spec).x_star
    assert fixed_point_residual(spec, xs) < 1e-10
    ratio = measure_pseudo_contraction(spec, xs, samples=100, seed=0)
    assert ratio <= contraction_factor(spec).factor + 1e-9


def test_pseudo_contraction_needs_fixed_point(small_spec):
    with pytest.raises(PreconditionError):
        measure_pseudo_contraction(small_spec, np.ones((4, 2)) * 50)
