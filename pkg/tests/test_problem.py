import numpy as np
import pytest

from asyncdgd.errors import DimensionError, ParameterError
from asyncdgd.problem import (ConsensusProblem, LogisticOracle, QuadraticOracle, ZeroOracle,
                              ball_prox, block_max_norm, block_vector, box_prox, consensus_error,
                              eval_F, l1_prox, prox_l1, soft_threshold, zero_prox)


def test_block_max_norm_hand_value():
    x = np.array([[3.0, 4.0], [1.0, 0.0]])
    assert block_max_norm(x) == 5.0
    assert block_max_norm(x, np.zeros((2, 2))) == 5.0


def test_block_vector_shape_checked():
    assert block_vector(np.arange(6.0), 3, 2).shape == (3, 2)
    with pytest.raises(DimensionError):
        block_vector(np.arange(5.0), 3, 2)


def test_consensus_error_zero_on_consensus():
    x = np.tile([1.0, -2.0], (4, 1))
    assert consensus_error(x) == 0.0


def test_soft_threshold_values():
    v = np.array([-3.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_array_equal(soft_threshold(v, 1.0), [-2.0, 0.0, 0.0, 0.0, 1.0])
    with pytest.raises(ParameterError):
        prox_l1(v, 0.0)


def test_quadratic_oracle_constants_and_gradient():
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([1.0, 1.0])
    f = QuadraticOracle(A, b)
    # f(x) = (x0-1)^2 + (2 x1-1)^2, Hessian diag(2, 8)
    assert f.L == pytest.approx(8.0)
    assert f.mu == pytest.approx(2.0)
    x = np.array([0.3, -0.4])
    np.testing.assert_allclose(f.gradient(x), [2 * (x[0] - 1), 4 * (2 * x[1] - 1)])
    assert f.value(np.array([1.0, 0.5])) == pytest.approx(0.0)


def test_quadratic_rank_deficient_mu_zero():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    f = QuadraticOracle(A, np.ones(2))
    assert f.mu == 0.0


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 4))
    y = np.sign(rng.standard_normal(20))
    f = LogisticOracle(A, y, 0.1)
    x = rng.standard_normal(4)
    h = 1e-6
    fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(4)])
    np.testing.assert_allclose(f.gradient(x), fd, atol=1e-7)
    assert f.mu == pytest.approx(0.1)


def test_logistic_large_margins_are_finite():
    A = np.array([[1000.0], [-1000.0]])
    f = LogisticOracle(A, np.array([1.0, 1.0]))
    assert np.isfinite(f.value(np.array([5.0])))
    assert np.all(np.isfinite(f.gradient(np.array([5.0]))))


def test_prox_operators():
    v = np.array([2.0, -0.1, 0.5])
    np.testing.assert_allclose(l1_prox(3, 0.5).prox(v, 0.4), [1.8, 0.0, 0.3])
    np.testing.assert_array_equal(zero_prox(3).prox(v, 1.0), v)
    np.testing.assert_array_equal(box_prox(3, -1, 1).prox(v * 2, 1.0), [1.0, -0.2, 1.0])
    out = ball_prox(3, 0.0, 1.0).prox(np.array([3.0, 4.0, 0.0]), 1.0)
    np.testing.assert_allclose(out, [0.6, 0.8, 0.0])


def test_prox_values_and_indicator():
    assert l1_prox(2, 0.5).value(np.array([1.0, -2.0])) == pytest.approx(1.5)
    assert box_prox(2, 0, 1).value(np.array([2.0, 0.5])) == np.inf
    assert ball_prox(2, 0, 1).value(np.array([0.6, 0.8])) == 0.0
    assert box_prox(2, 0, 1).lipschitz is None
    assert l1_prox(4, 0.5).lipschitz == pytest.approx(1.0)


def test_consensus_problem_checks():
    f = [ZeroOracle(2), ZeroOracle(3)]
    with pytest.raises(DimensionError):
        ConsensusProblem(f)
    p = ConsensusProblem([ZeroOracle(2)] * 3, [l1_prox(2, 1.0)] * 3)
    assert p.identical_h and not p.is_smooth
    assert eval_F(p, np.ones((3, 2))) == pytest.approx(6.0)
    with pytest.raises(DimensionError):
        p.check_shape(np.ones((2, 2)))
