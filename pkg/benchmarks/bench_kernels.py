"""Time the compiled kernels against the pure-Python fallback.

Each mode runs in its own interpreter because ``HAMCOND_DISABLE_JIT`` is read
at import time. Usage::

    python3 benchmarks/bench_kernels.py [--n 5000] [--repeat 3]

Compiled timings exclude the first (compiling) call.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _cases(n: int):
    import numpy as np

    from hamcond.graph import BipartiteGraph
    from hamcond.hamilton import Policy, find_hamilton
    from hamcond.kernels import backtrack_kernel, hopcroft_karp_kernel, peel_kernel, subset_dp_kernel
    from hamcond.params import Parameters, threshold_m
    from hamcond.sampler import sample_simple_digraph

    rng = np.random.default_rng(1)
    m = threshold_m(n, 2.0)
    d, _ = sample_simple_digraph(n, m, rng)
    g = BipartiteGraph.from_arrays(n, d.tails, d.heads)
    sym_ptr, sym_adj = g.combined_csr()

    small, _ = sample_simple_digraph(18, 60, np.random.default_rng(2))
    bits = np.zeros(small.n, dtype=np.int64)
    for u, v in zip(small.tails.tolist(), small.heads.tolist()):
        bits[u] |= 1 << v

    mid, _ = sample_simple_digraph(60, 240, np.random.default_rng(3))

    return {
        "peel": lambda: peel_kernel(sym_ptr, sym_adj, 6),
        "hopcroft_karp": lambda: hopcroft_karp_kernel(n, n, g.a_ptr, g.a_adj),
        "subset_dp": lambda: subset_dp_kernel(small.n, bits),
        "backtrack": lambda: backtrack_kernel(mid.n, mid.out_ptr, mid.out_adj, mid.in_ptr, mid.in_adj, 10**6),
        "pipeline": lambda: find_hamilton(d, Parameters.desk(n, m), np.random.default_rng(4), Policy()),
    }


def _child(n: int, repeat: int) -> None:
    from hamcond._accel import NUMBA_ENABLED

    out = {"numba": NUMBA_ENABLED, "times": {}}
    for name, fn in _cases(n).items():
        fn()  # warm-up (compiles under numba)
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    print(json.dumps(out))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        _child(args.n, args.repeat)
        return
    results = {}
    for label, flag in (("numba", "0"), ("python", "1")):
        env = dict(os.environ, HAMCOND_DISABLE_JIT=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--child", "--n", str(args.n), "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True,
        )
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    print(f"{'kernel':<15}{'numba [s]':>12}{'python [s]':>12}{'speedup':>10}")
    for name, t_nb in results["numba"]["times"].items():
        t_py = results["python"]["times"][name]
        print(f"{name:<15}{t_nb:>12.4f}{t_py:>12.4f}{t_py / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
