"""Compare the compiled kernels with the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--vehicles N] [--repeat R]

Times each hot kernel on a synthetic road snapshot with both backends, then
a short end-to-end simulation per backend (the pure-Python run happens in a
subprocess with ZMERGE_PURE_PYTHON=1 so the import-time selection is used).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from zmerge import _kernels as K

IDM = (32.0, 1.0, 2.6, 4.5, 2.0, 4.0, -4.5, 2.8)


def snapshot(n, seed=0):
    rng = np.random.default_rng(seed)
    lane = rng.integers(-1, 2, n).astype(np.int64)
    pos = np.sort(rng.uniform(0, 320, n))
    speed = rng.uniform(0, 32, n)
    length = np.full(n, 5.0)
    ys = (lane + 0.5) * 3.5
    ids = np.arange(n, dtype=np.int64)
    return lane, pos, speed, length, ys, ids


def cases(mod, n):
    lane, pos, speed, length, ys, ids = snapshot(n)
    acc = np.zeros(n)
    gaps = np.full(n, 30.0)
    return {
        "lane_neighbors": lambda: mod.lane_neighbors(lane, pos),
        "leader_follower_at": lambda: mod.leader_follower_at(lane, pos, 0, 160.0, 3),
        "idm_batch": lambda: mod.idm_batch(speed, gaps, speed, *IDM),
        "euler_step": lambda: mod.euler_step(pos.copy(), speed.copy(), acc, 0.1, 32.0),
        "collision_pairs": lambda: mod.collision_pairs(lane, pos, length),
        "longest_slow_run": lambda: mod.longest_slow_run(pos, speed, 2.0, 20.0),
        "nearest_within": lambda: mod.nearest_within(pos, ys, ids, n // 2, 100.0, 6),
    }


SIM_SNIPPET = """
import time
from zmerge import BACKEND
from zmerge.config import SimConfig
from zmerge.env import MergeEnv
env = MergeEnv(SimConfig(), seed=0)
t = time.perf_counter()
for _ in range({ticks}):
    env.observe()
    env.step({{}})
print(BACKEND, (time.perf_counter() - t) / {ticks} * 1e3)
"""


def simulate(pure, ticks):
    env = dict(os.environ, ZMERGE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", SIM_SNIPPET.format(ticks=ticks)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vehicles", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--ticks", type=int, default=1500)
    args = ap.parse_args()

    if K.ckernels is None:
        sys.exit("compiled extension not built; install with `pip install -e .`")
    py, cy = cases(K.pykernels, args.vehicles), cases(K.ckernels, args.vehicles)
    print(f"{'kernel':<20} {'python us':>10} {'cython us':>10} {'speedup':>8}")
    for name in py:
        t_py = min(timeit.repeat(py[name], number=args.repeat, repeat=3)) / args.repeat * 1e6
        t_cy = min(timeit.repeat(cy[name], number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{name:<20} {t_py:>10.2f} {t_cy:>10.2f} {t_py / t_cy:>7.1f}x")
    print()
    for pure in (True, False):
        backend, ms = simulate(pure, args.ticks)
        print(f"end-to-end tick ({backend}): {ms:.3f} ms")


if __name__ == "__main__":
    main()
