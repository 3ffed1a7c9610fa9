"""Time the delay-analytics kernels, numba loops against the numpy path.

    python3 benchmarks/bench_kernels.py --n 16 --K 200000
"""
import argparse
from timeit import repeat

import numpy as np

from asyncdgd import _kernels
from asyncdgd.asynchrony import gen_partial_async
from asyncdgd.mixing import make_graph


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--K", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    g = make_graph("random_connected", args.n, args.n + args.n // 4, seed=0)
    s = gen_partial_async(args.n, g, 3 * args.n, 2 * args.n, args.K, seed=0)
    info = _kernels.info_floor(s.n, s.active, s.ptr, s.stale, jit=False)
    cases = {
        "info_floor": lambda jit: _kernels.info_floor(s.n, s.active, s.ptr, s.stale, jit=jit),
        "epoch_starts": lambda jit: _kernels.epoch_starts(info, jit=jit),
        "gap_bound": lambda jit: _kernels.gap_bound(s.n, s.active, jit=jit),
        "max_delay": lambda jit: _kernels.max_delay(s.active, s.ptr, s.stale, jit=jit),
    }
    modes = [False] + ([True] if _kernels.HAVE_NUMBA else [])
    print(f"n={args.n} K={args.K} reads={s.stale.size} numba={'yes' if _kernels.HAVE_NUMBA else 'no'}")
    print(f"{'kernel':<14}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, fn in cases.items():
        t = {}
        for jit in modes:
            fn(jit)  # compile / warm caches
            t[jit] = min(repeat(lambda: fn(jit), number=1, repeat=args.repeat)) * 1e3
        if True in t:
            assert np.array_equal(np.asarray(fn(True)), np.asarray(fn(False)))
            print(f"{name:<14}{t[False]:>10.2f}{t[True]:>10.2f}{t[False] / t[True]:>8.1f}x")
        else:
            print(f"{name:<14}{t[False]:>10.2f}{'-':>10}{'-':>9}")


if __name__ == "__main__":
    main()
