"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time for each backend and
the speedup.
"""

import argparse
import time

import numpy as np

from aawr import envs, kernels, nn, oracle
from aawr.pomdp import build_env_agent_mdp


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    tiger = envs.tiger().spec
    grid = envs.hidden_target_grid(4, 4, 1).spec
    mdp = build_env_agent_mdp(tiger, 4)
    mu = oracle.random_policy(mdp, rng)
    vis = oracle.discounted_visitation(mdp, mu)
    idx = rng.integers(0, 400, size=(256, 12)).astype(np.int64)
    val = np.ones((256, 12))
    W, b = rng.normal(size=(400, 64)), np.zeros(64)
    g = rng.normal(size=(256, 64))
    net = nn.mlp_init([400, 64, 64, 5], 0)
    grads = [rng.normal(size=a.shape) for a in net.arrays()]
    opt = nn.adam_init(net)
    target = net.copy()
    return {
        "enumerate_joint (grid 4x4, k=2)": lambda: build_env_agent_mdp(grid, 2),
        "q_iteration (tiger, k=4)": lambda: oracle.evaluate_privileged(mdp, mu),
        "sym_q_iteration (tiger, k=4)": lambda: oracle.symmetric_td_fixed_point(mdp, mu, visitation=vis),
        "sparse_affine_forward (256x12 -> 64)": lambda: kernels.sparse_affine_forward(idx, val, W, b),
        "sparse_affine_backward (256x12 -> 64)": lambda: kernels.sparse_affine_backward(idx, val, g, 400),
        "adam_step (30k params)": lambda: nn.adam_step(net, grads, opt, 1e-4),
        "polyak_update (30k params)": lambda: nn.polyak_update(target, net, 0.005),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':<40} {'compiled':>12} {'python':>12} {'speedup':>9}")
    for name, fn in cases().items():
        kernels.use("compiled")
        fn()
        t_c = best_of(fn, args.repeat)
        kernels.use("python")
        fn()
        t_p = best_of(fn, args.repeat)
        print(f"{name:<40} {t_c * 1e3:>10.3f}ms {t_p * 1e3:>10.3f}ms {t_p / t_c:>8.1f}x")
    kernels.use("compiled")


if __name__ == "__main__":
    main()
