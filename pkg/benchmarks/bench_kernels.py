"""Time the numba-compiled kernels against their plain-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both kernel sets are importable in one process regardless of
CTRLBENCH_NO_NUMBA, so the table compares them side by side.
"""
import argparse
import timeit

import numpy as np

from ctrlbench import _kernels as K
from ctrlbench.envs import make_env
from ctrlbench.neat import NeatConfig, _registry_for, initial_genome, mutate
from ctrlbench.net import MlpSpec, init_params


def cases():
    rng = np.random.default_rng(0)
    env = make_env("pendulum", 0)
    es = env.spec
    low, high = np.asarray(es.action_low, float), np.asarray(es.action_high, float)
    buf = np.empty((es.max_episode_steps, es.obs_dim))
    mean, std = np.zeros(3), np.ones(3)

    for hidden in (16, 64):
        spec = MlpSpec(3, hidden, 1)
        flat = init_params(spec, rng)
        yield (f"rollout_mlp pendulum h{hidden} (1 episode)", "rollout_mlp",
               lambda k, flat=flat, hidden=hidden: k(env.kind, flat, 3, hidden, 1, mean, std,
                                                     np.array([1.0, 0.0]), es.max_episode_steps,
                                                     low, high, buf))

    reg = _registry_for(3, 1)
    g = initial_genome(3, 1, rng, reg)
    for _ in range(30):
        mutate(g, rng, reg, NeatConfig(add_conn_prob=0.5, add_node_prob=0.5))
    net = g.compile()
    yield ("rollout_neat pendulum (1 episode)", "rollout_neat",
           lambda k: k(env.kind, net.n_in, net.ptr, net.src, net.w, net.out_pos, mean, std,
                       np.array([1.0, 0.0]), es.max_episode_steps, low, high, buf))

    n = 512
    r, v, vn = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    term, ends = np.zeros(n), (rng.random(n) < 0.01).astype(float)
    adv, deltas = np.empty(n), np.empty(n)
    yield ("gae (512 steps)", "gae", lambda k: k(r, v, vn, term, ends, 0.99, 0.97, adv, deltas))

    xs = rng.normal(size=(512, 8))
    yield ("welford_batch (512 x 8)", "welford_batch",
           lambda k: k(10, np.zeros(8), np.zeros(8), xs))

    state = np.array([1.0, 0.0])
    yield ("pendulum_step (1 step)", "pendulum_step", lambda k: k(state, 0.3))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<40} {'numba':>12} {'numpy':>12} {'speed-up':>9}")
    for label, name, call in cases():
        times = {}
        for backend, table in (("numba", K.KERNELS_JIT), ("numpy", K.KERNELS_NP)):
            fn = table[name]
            call(fn)  # compile / warm up
            timer = timeit.Timer(lambda: call(fn))
            number, _ = timer.autorange()
            times[backend] = min(timer.repeat(args.repeat, number)) / number
        print(f"{label:<40} {times['numba'] * 1e6:>10.1f}us {times['numpy'] * 1e6:>10.1f}us "
              f"{times['numpy'] / times['numba']:>8.1f}x")


if __name__ == "__main__":
    main()
