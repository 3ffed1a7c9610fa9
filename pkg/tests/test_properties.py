import numpy as np
from hypothesis import assume, given, strategies as st

from asyncdgd import _kernels
from asyncdgd.analysis import fixed_point
from asyncdgd.asynchrony import (Schedule, delay_metrics, gen_partial_async, gen_total_async,
                                 verify_partial_async)
from asyncdgd.config import ExperimentConfig
from asyncdgd.mixing import lazy_transform, make_graph, metropolis_weights
from asyncdgd.operators import AlgorithmSpec, apply_T_full, contraction_factor, max_stepsize
from asyncdgd.problem import ball_prox, block_max_norm, box_prox, l1_prox

from conftest import random_quadratic_problem

seeds = st.integers(0, 2 ** 31 - 1)


@st.composite
def graphs(draw, n_min=2, n_max=9):
    n = draw(st.integers(n_min, n_max))
    m = draw(st.integers(n - 1, n * (n - 1) // 2))
    return make_graph("random_connected", n, m, draw(seeds))


@given(graphs())
def test_metropolis_is_valid_mixing(g):
    M = metropolis_weights(g)
    W = M.W
    assert np.array_equal(W, W.T)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(W >= 0) and 0 <= M.beta < 1
    assert lazy_transform(M).positive_definite


@given(graphs(), st.integers(0, 12), st.integers(0, 15), seeds)
def test_partial_async_generator_satisfies_clauses(g, extra, D, seed):
    n = g.n
    B = n - 1 + extra
    s = gen_partial_async(n, g, B, D, 40 * n, seed)
    rep = verify_partial_async(s, B, D)
    assert rep.holds and rep.B_min <= B and rep.D_min <= D
    k = np.arange(s.K + 1)
    mk = delay_metrics(s).m_k
    # epoch count sits between the worst-case floor and the every-node-updates ceiling
    assert np.all(mk >= k // (B + D + 1))
    assert np.all(mk * n <= k)


@given(graphs(), seeds, st.floats(0.3, 3.0))
def test_schedule_text_roundtrip_and_kernels(g, seed, growth):
    s = gen_total_async(g.n, 30 * g.n, growth, seed, g)
    assert Schedule.from_text(s.to_text()) == s
    args = (s.n, s.active, s.ptr, s.stale)
    g_np = _kernels.info_floor(*args, jit=False)
    if _kernels.HAVE_NUMBA:
        np.testing.assert_array_equal(_kernels.info_floor(*args, jit=True), g_np)
        np.testing.assert_array_equal(_kernels.gap_bound(s.n, s.active, jit=True),
                                      _kernels.gap_bound(s.n, s.active, jit=False))
        np.testing.assert_array_equal(_kernels.epoch_starts(g_np, jit=True),
                                      _kernels.epoch_starts(g_np, jit=False))


vecs = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


@given(vecs, vecs, st.floats(0.01, 2.0), st.sampled_from(["l1", "box", "ball"]))
def test_prox_is_nonexpansive_and_minimizes(u, v, alpha, kind):
    h = {"l1": l1_prox(3, 0.7), "box": box_prox(3, -1.0, 2.0), "ball": ball_prox(3, 0.5, 1.5)}[kind]
    pu, pv = h.prox(u, alpha), h.prox(v, alpha)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12

    def obj(z):
        return h.value(z) + np.sum((z - u) ** 2) / (2 * alpha)

    rng = np.random.default_rng(0)
    base = obj(pu)
    for _ in range(20):
        z = pu + 0.1 * rng.standard_normal(3)
        assert base <= obj(z) + 1e-10


@given(seeds, st.integers(2, 7), st.integers(1, 4), st.floats(0.05, 0.99))
def test_atc_factor_not_above_prox_dgd(seed, n, d, frac):
    rng = np.random.default_rng(seed)
    g = make_graph("random_connected", n, min(n, n * (n - 1) // 2), seed)
    W = lazy_transform(metropolis_weights(g))
    p = random_quadratic_problem(rng, n, d, rows=d + 2)
    a = frac * max_stepsize("prox_dgd", p, W)
    spec = AlgorithmSpec("prox_dgd", p, W, a)
    assert contraction_factor(spec, "dgd_atc").factor <= contraction_factor(spec).factor


@given(seeds, st.sampled_from(["prox_dgd", "dgd_atc"]))
def test_synchronous_step_contracts_towards_fixed_point(seed, kind):
    rng = np.random.default_rng(seed)
    n, d = 4, 2
    g = make_graph("random_connected", n, 4, seed)
    W = lazy_transform(metropolis_weights(g))
    p = random_quadratic_problem(rng, n, d, rows=4)
    spec = AlgorithmSpec(kind, p, W, 0.9 * max_stepsize(kind, p, W))
    fp = fixed_point(spec, tol=1e-13)
    assume(fp.converged)
    rho = contraction_factor(spec).factor
    x = fp.x_star + rng.standard_normal((n, d)) * rng.uniform(0.01, 10)
    assert block_max_norm(apply_T_full(spec, x), fp.x_star) <= rho * block_max_norm(x, fp.x_star) + 1e-9


@given(st.integers(1, 20), st.integers(2, 30), st.floats(0.0, 1.0), st.integers(0, 50),
       st.sampled_from(["partial_async", "worst_case", "best_case"]))
def test_config_roundtrip(d, n, lam, D, regime):
    text = f"[problem]\nd = {d}\nlambda1 = {lam!r}\n[graph]\nn = {n}\nedges = {n}\n" \
           f"[schedule]\nregime = {regime}\nD = {D}\n"
    cfg = ExperimentConfig.from_text(text)
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg
