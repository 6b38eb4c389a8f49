"""Compare the numba and numpy kernel backends.

Part 1 times each kernel pair in-process (both variants are always
importable). Part 2 runs a whole distributed simulation in two
subprocesses, one with ``PPCM_DISABLE_NUMBA=1``, and checks that the
iterates agree. The Laplacian and box kernels round identically in both
backends; the ball norm is summed in a different order, so it may differ
in the last bit.

    python3 benchmarks/bench_kernels.py --p 16 --n 200 --repeat 200
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ppcm import kernels
from ppcm._accel import HAVE_NUMBA
from ppcm.graph import adjacency_uniform, build_topology, laplacian

SIM_SNIPPET = """
import json, time
import numpy as np
from ppcm import kernels
from ppcm.problems import generate_lsq
from ppcm.runtime import SimulationConfig, simulate
_, cp = generate_lsq({m}, {n}, {p}, seed=0)
simulate(cp, SimulationConfig(tol=0.0, max_iters=2), record_states=False)  # warm-up / jit
t0 = time.perf_counter()
states, tr = simulate(cp, SimulationConfig(tol=0.0, max_iters={rounds}), record_states=False)
dt = time.perf_counter() - t0
x = np.array([a.x for a in states])
print(json.dumps({{"backend": kernels.BACKEND, "seconds": dt, "x": x.tobytes().hex()}}))
"""


def time_kernels(p, n, repeat):
    rng = np.random.default_rng(0)
    lap = laplacian(adjacency_uniform(build_topology("erdos_renyi", p, seed=0, prob=0.3)))
    X = rng.standard_normal((p, n))
    ids, w = lap.neighbor_weights(0)
    nbr = X[ids]
    v, lo, hi = rng.standard_normal(n), -0.5 * np.ones(n), 0.5 * np.ones(n)
    c = np.zeros(n)
    cases = {
        "laplacian_apply": lambda K: K["laplacian_apply"](lap.indptr, lap.indices, lap.data, X),
        "neighbor_laplacian": lambda K: K["neighbor_laplacian"](w, X[0], nbr),
        "project_box": lambda K: K["project_box"](v, lo, hi),
        "project_ball": lambda K: K["project_ball"](v, c, 0.3),
    }
    rows = []
    for name, call in cases.items():
        res = {}
        for label, table in (("numpy", kernels.NUMPY), ("numba", kernels.NUMBA)):
            out = call(table)  # first call compiles
            res[label] = (min(timeit.repeat(lambda: call(table), number=repeat, repeat=3)) / repeat, out)
        diff = float(np.max(np.abs(res["numpy"][1] - res["numba"][1])))
        rows.append((name, res["numpy"][0], res["numba"][0], diff))
    return rows


def time_simulation(m, n, p, rounds):
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PPCM_DISABLE_NUMBA=flag)
        code = SIM_SNIPPET.format(m=m, n=n, p=p, rounds=rounds)
        proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=16)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--rounds", type=int, default=100)
    args = ap.parse_args(argv)

    if not HAVE_NUMBA:
        print("numba is not installed; both columns time the numpy kernels")
    print(f"kernels (p={args.p}, n={args.n}), seconds per call")
    print(f"{'kernel':<20}{'numpy':>12}{'numba':>12}{'speedup':>9}  max|diff|")
    for name, t_np, t_nb, diff in time_kernels(args.p, args.n, args.repeat):
        print(f"{name:<20}{t_np:>12.3e}{t_nb:>12.3e}{t_np / t_nb:>8.1f}x  {diff:.1e}")

    sim = time_simulation(args.m, args.n, min(args.p, args.m // args.n), args.rounds)
    print(f"\nsimulate {args.rounds} PPCM rounds (m={args.m}, n={args.n})")
    for label in ("numpy", "numba"):
        print(f"  {label:<6} backend={sim[label]['backend']:<6} {sim[label]['seconds']:.3f}s")
    print(f"  iterates identical: {sim['numpy']['x'] == sim['numba']['x']}")


if __name__ == "__main__":
    main()
