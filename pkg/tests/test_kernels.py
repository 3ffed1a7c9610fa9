import numpy as np
import pytest

from asyncdgd import _kernels
from asyncdgd.asynchrony import gen_partial_async, gen_total_async, gen_worst_case
from asyncdgd.mixing import make_graph

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def _schedules():
    g = make_graph("random_connected", 6, 8, seed=1)
    yield gen_partial_async(6, g, 9, 7, 800, seed=2)
    yield gen_total_async(6, 800, 1.0, seed=3, graph=g)
    yield gen_worst_case(6, g, 8, 4, 500)


@needs_numba
@pytest.mark.parametrize("idx", range(3))
def test_numba_and_numpy_agree(idx):
    s = list(_schedules())[idx]
    for fn, args in [
        (_kernels.info_floor, (s.n, s.active, s.ptr, s.stale)),
        (_kernels.gap_bound, (s.n, s.active)),
    ]:
        np.testing.assert_array_equal(fn(*args, jit=True), fn(*args, jit=False))
    assert _kernels.max_delay(s.active, s.ptr, s.stale, jit=True) == \
        _kernels.max_delay(s.active, s.ptr, s.stale, jit=False)
    g = _kernels.info_floor(s.n, s.active, s.ptr, s.stale, jit=False)
    np.testing.assert_array_equal(_kernels.epoch_starts(g, jit=True), _kernels.epoch_starts(g, jit=False))


def test_gap_bound_hand_case():
    # node 0 at 0,3 ; node 1 at 1,2 ; node 2 never ; K = 4
    active = np.array([0, 1, 1, 0], dtype=np.int64)
    out = _kernels.gap_bound(3, active, jit=False)
    # node 0: first 0, gap 2, tail 0 ; node 1: first 1, gap 0, tail 1
    np.testing.assert_array_equal(out, [2, 1, -1])


def test_epoch_starts_hand_case():
    # g(t) for updates t = 0..5, so K = 6
    g = np.array([-1, 0, 0, 2, 3, 5], dtype=np.int64)
    ks = _kernels.epoch_starts(g, jit=False)
    # suffix-min g >= 0 from t=1 -> k1=2; >= 2 from t=3 -> k2=4; >= 4 from t=5 -> k3=6 <= K
    np.testing.assert_array_equal(ks, [0, 2, 4, 6])
    np.testing.assert_array_equal(_kernels.epoch_starts(g[:5], jit=False), [0, 2, 4])


def test_env_flag(monkeypatch):
    monkeypatch.setenv("ASYNCDGD_NUMBA", "0")
    assert not _kernels.numba_enabled()


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--n", "5", "--K", "500", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "info_floor" in out and "max_delay" in out
