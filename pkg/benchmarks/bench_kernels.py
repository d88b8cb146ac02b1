"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--rows 200000] [--repeat 5]

Each kernel runs on identical inputs under every available backend; the
script also checks that both backends return the same answer.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from aqcsim import _kernels
from aqcsim.codebook import alphabet_array
from aqcsim.protocol import ANALYZER_MATRICES


def make_inputs(rows, seed=0):
    rng = np.random.default_rng(seed)
    table = alphabet_array()
    states = table[rng.integers(0, 8, size=rows)].astype(complex)
    expected = table[rng.integers(0, 8, size=rows)].astype(complex)
    analyzers = rng.integers(0, 2, size=rows).astype(np.intp)
    uniforms = rng.random(rows)
    sites = table[rng.integers(0, 8, size=(32, 2))].astype(complex)
    return states, expected, analyzers, uniforms, sites


def cases(backend, inputs):
    states, expected, analyzers, uniforms, sites = inputs
    return {
        "measure_rows": lambda: backend.measure_rows(states, analyzers, ANALYZER_MATRICES, uniforms),
        "test_rows": lambda: backend.test_rows(expected, states, uniforms),
        "overlap_rows": lambda: backend.overlap_rows(expected, states),
        "product_gram": lambda: backend.product_gram(sites, sites, 3),
    }


def same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(x, y, atol=1e-12) for x, y in zip(a, b))


END_TO_END = """
import time
from aqcsim.analysis import MonteCarloConfig, monte_carlo, simulate_checks
t = time.perf_counter()
monte_carlo(MonteCarloConfig(trials={trials}, N=100, strategy="intercept-resend-uniform", seed=1))
a = time.perf_counter() - t
t = time.perf_counter()
simulate_checks("intercept-resend-uniform", "paper-analyzer", 100, 10_000, seed=1)
print(a, time.perf_counter() - t)
"""


def end_to_end(name, trials):
    # the backend is fixed at import time, so each one gets its own interpreter
    env = dict(os.environ, AQCSIM_KERNELS=name)
    out = subprocess.run(
        [sys.executable, "-c", END_TO_END.format(trials=trials)], env=env, capture_output=True, text=True, check=True
    )
    return [float(x) for x in out.stdout.split()]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trials", type=int, default=2000, help="protocol rounds for the end-to-end timing")
    args = ap.parse_args(argv)

    names = _kernels.available_backends()
    inputs = make_inputs(args.rows)
    timings = {}
    results = {}
    for name in names:
        for kernel, fn in cases(_kernels.load_backend(name), inputs).items():
            results[(name, kernel)] = fn()
            timings[(name, kernel)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    print(f"rows={args.rows}  default backend={_kernels.BACKEND}  available={', '.join(names)}")
    header = f"{'kernel':<14}" + "".join(f"{n + ' [ms]':>16}" for n in names)
    if len(names) > 1:
        header += f"{'speedup':>10}{'agree':>8}"
    print(header)
    for kernel in cases(_kernels.load_backend("python"), inputs):
        row = f"{kernel:<14}" + "".join(f"{1e3 * timings[(n, kernel)]:>16.2f}" for n in names)
        if len(names) > 1:
            speed = timings[("python", kernel)] / timings[("cython", kernel)]
            agree = same(results[("python", kernel)], results[("cython", kernel)])
            row += f"{speed:>9.1f}x{'yes' if agree else 'NO':>8}"
        print(row)

    print(f"\nend to end [s]: monte_carlo ({args.trials} rounds, N=100) and simulate_checks (10^6 checks)")
    for name in names:
        mc, checks = end_to_end(name, args.trials)
        print(f"{name:<14}{mc:>16.2f}{checks:>16.2f}")


if __name__ == "__main__":
    main()
