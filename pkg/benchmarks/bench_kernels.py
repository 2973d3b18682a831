"""Benchmark the compiled policy kernels against the pure-numpy fallback.

Micro level: one token step (softmax over sparse features, inverse-CDF
sample, gradient accumulation). Macro level: full policy-vs-policy episodes
through the engine, forcing each backend in a subprocess.

Usage: python benchmarks/bench_kernels.py [--episodes 300]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def bench_token_step(kernels, n_tokens=17, n_features=28, iters=20000):
    rng = np.random.default_rng(0)
    weights = np.ascontiguousarray(rng.normal(size=(n_tokens, n_features)))
    grad = np.zeros_like(weights)
    idx = np.array([1, 5, 9, 20], dtype=np.int64)
    us = rng.random(iters)
    start = time.perf_counter()
    for i in range(iters):
        probs = kernels.softmax_probs(weights, idx)
        chosen = kernels.sample_index(probs, us[i])
        kernels.accumulate_grad(grad, probs, chosen, idx, 0.99)
    elapsed = time.perf_counter() - start
    return elapsed / iters * 1e6  # us per step


def bench_episodes(episodes):
    """Run inside a subprocess with the backend already pinned by env."""
    from todsim import kernels
    from todsim.agents import PolicyParameters
    from todsim.corpus import load_corpus, sample_goals
    from todsim.rl import RLConfig, run_episode

    bundle = load_corpus("toy")
    goals = sample_goals(bundle.ontology, bundle.db, 40, seed=100)
    sim = PolicyParameters.zeros("simulator", bundle.ontology)
    sys_params = PolicyParameters.zeros("system", bundle.ontology)
    cfg = RLConfig()
    start = time.perf_counter()
    for i in range(episodes):
        run_episode(sim, sys_params, goals[i % len(goals)], bundle.db, cfg, seed=i)
    elapsed = time.perf_counter() - start
    print(f"{kernels.BACKEND}: {episodes / elapsed:.0f} episodes/s "
          f"({elapsed / episodes * 1e3:.2f} ms/episode)")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--episodes", type=int, default=300)
    parser.add_argument("--_run-episodes", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args._run_episodes:
        bench_episodes(args.episodes)
        return

    import todsim._policy_kernels_py as py_kernels

    rows = [("python", bench_token_step(py_kernels))]
    try:
        import todsim._policy_kernels as c_kernels

        rows.append(("compiled", bench_token_step(c_kernels)))
    except ImportError:
        print("compiled kernels not built; showing the fallback only")

    print("token step (softmax + sample + grad):", flush=True)
    base = rows[0][1]
    for name, us in rows:
        print(f"  {name:9s} {us:8.2f} us/step   x{base / us:.1f}", flush=True)

    print("full episodes (subprocess per backend):", flush=True)
    for env_value in (None, "1"):
        env = dict(os.environ)
        env.pop("TODSIM_PURE_PYTHON", None)
        if env_value:
            env["TODSIM_PURE_PYTHON"] = env_value
        subprocess.run([sys.executable, __file__, "--_run-episodes",
                        "--episodes", str(args.episodes)], env=env, check=True)


if __name__ == "__main__":
    main()
