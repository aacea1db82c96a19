"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_backends.py [--repeat 5] [--json out.json]

Each kernel is timed on representative inputs (best of ``--repeat``), then a
full oracle solve on the default grid is timed under each backend.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from arcbandit import _backend
from arcbandit.oracle import GridSpec, _global_operator, _layer_operator, _layer_taps, \
    mc_draws, static_value, value_iterate


def kernel_cases(rng):
    k = 50
    nu = rng.dirichlet(np.ones(k))
    f = rng.normal(size=k)
    d, g = rng.uniform(0, 1, k), rng.normal(size=k)
    s = rng.uniform(0, 1, (k, k))
    x, sinv = rng.normal(size=(k, k)), rng.uniform(0, 1, k)
    a1 = rng.uniform(0, 150, 200)

    grid = GridSpec()
    m, _, _ = grid.m_axis()
    dd, _ = grid.d_axis()
    z = mc_draws(1000, rng)
    ops = []
    for dk in dd:
        offs, frac = _layer_taps(dk / np.sqrt(1 + dk), z, grid.m_step, m.shape[0])
        cols, data, _ = _layer_operator(offs, frac, m.shape[0])
        ops.append((cols, data, offs, frac))
    sweep = _global_operator(ops, m.shape[0], dd.shape[0], static_value(m, 0.1, 0.99), dd)
    values = rng.uniform(100, 130, dd.shape[0] * m.shape[0])
    m_nodes = np.tile(m, dd.shape[0])

    return {
        "lse_softmax (K=50)": lambda mod: mod.lse_softmax(f, 0.3),
        "info_premium (K=50)": lambda mod: mod.info_premium(nu, d, s, g, 0.3),
        "linear_premium (K=50)": lambda mod: mod.linear_premium(nu, x, sinv, 0.3),
        "select_index (K=50)": lambda mod: mod.select_index(nu, 0.77),
        "solve_layer (200 nodes)": lambda mod: mod.solve_layer(a1, 0.99, 0.1),
        "bellman_sweep (default grid)": lambda mod: mod.bellman_sweep(
            *sweep, m_nodes, values, 0.99, 0.1),
    }


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="also write the timings here")
    args = parser.parse_args(argv)

    try:
        compiled = _backend.load("compiled")
    except ImportError:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    python = _backend.load("python")

    results = {"kernels": {}, "oracle": {}}
    print(f"{'kernel':32s} {'python':>12s} {'compiled':>12s} {'speed-up':>9s}")
    for name, call in kernel_cases(np.random.default_rng(0)).items():
        tp = best_of(lambda: call(python), args.repeat)
        tc = best_of(lambda: call(compiled), args.repeat)
        results["kernels"][name] = {"python_s": tp, "compiled_s": tc}
        print(f"{name:32s} {tp * 1e6:10.1f}us {tc * 1e6:10.1f}us {tp / tc:8.1f}x")

    previous = _backend.BACKEND
    try:
        for name in ("python", "compiled"):
            _backend.use(name)
            t = best_of(lambda: value_iterate(GridSpec(), mc_samples=1000,
                                              rng=np.random.default_rng(1)), 1)
            results["oracle"][name] = t
    finally:
        _backend.use(previous)
    tp, tc = results["oracle"]["python"], results["oracle"]["compiled"]
    print(f"{'value_iterate (default grid)':32s} {tp:11.2f}s {tc:11.2f}s {tp / tc:8.1f}x")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
