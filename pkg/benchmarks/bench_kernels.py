"""Time the numba and numpy kernel variants, plus a full episode per backend.

    python3 benchmarks/bench_kernels.py [--repeat N]

The episode timing runs in subprocesses because the backend is fixed at
import time by ``ADVTRAIN_BACKEND``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from advtrain.sim import get_scenario, kernels

EPISODE_SNIPPET = """
import time, numpy as np
from advtrain.baselines import mc_controller
from advtrain.controllers import RouteFollower
from advtrain.harness.evaluate import evaluate
from advtrain.sim import get_scenario
sc = get_scenario("nsjcr")
evaluate(sc, mc_controller(sc), RouteFollower(), 2, 0)  # warm-up / jit
t = time.perf_counter()
evaluate(sc, mc_controller(sc), RouteFollower(), {n}, 0)
print((time.perf_counter() - t) / {n})
"""


def kernel_cases():
    sc = get_scenario("sjrt")
    pose = (1.0, 2.0, 0.3, 4.5, 2.0, 2.5, 1.0, -0.4, 4.5, 2.0)
    obs = (1.0, -30.0, 1.5, 8.0, -20.0, -1.7, 0.0, 5.0, 30.0, -1.7, 0.4, 50.0, 100.0, 15.0)
    return {
        "bicycle_step": ((0.0, 0.0, 0.2, 8.0, 0.5, 0.3, 0.1, 2.0, 0.5, 2.7, 15.0), kernels.bicycle_step_nb, kernels.bicycle_step_np),
        "sat_overlap": (pose, kernels.sat_overlap_nb, kernels.sat_overlap_np),
        "road_excess": ((3.0, -12.0, sc.straights, sc.arcs), kernels.road_excess_nb, kernels.road_excess_np),
        "encode_obs": (obs, kernels.encode_obs_nb, kernels.encode_obs_np),
        "route_progress": ((1.7, -3.0, sc.victim_route, sc.victim_route_cum), kernels.route_progress_nb, kernels.route_progress_np),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20000)
    ap.add_argument("--episodes", type=int, default=50)
    args = ap.parse_args()
    print(f"{'kernel':<16}{'numba us':>10}{'numpy us':>10}{'speedup':>9}")
    for name, (a, nb, npf) in kernel_cases().items():
        nb(*a)  # compile
        t_nb = min(timeit.repeat(lambda: nb(*a), number=args.repeat, repeat=3)) / args.repeat * 1e6
        t_np = min(timeit.repeat(lambda: npf(*a), number=args.repeat, repeat=3)) / args.repeat * 1e6
        np.testing.assert_allclose(np.asarray(nb(*a), float), np.asarray(npf(*a), float), atol=1e-9)
        print(f"{name:<16}{t_nb:>10.2f}{t_np:>10.2f}{t_np / t_nb:>8.1f}x")
    per_ep = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, ADVTRAIN_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET.format(n=args.episodes)],
                             env=env, capture_output=True, text=True, check=True)
        per_ep[backend] = float(out.stdout.strip().splitlines()[-1])
    print(f"episode (route followers): numba {per_ep['numba'] * 1e3:.1f} ms, numpy {per_ep['numpy'] * 1e3:.1f} ms, "
          f"speedup {per_ep['numpy'] / per_ep['numba']:.1f}x")


if __name__ == "__main__":
    main()
