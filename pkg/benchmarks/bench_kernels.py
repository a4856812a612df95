"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs under both backends; the script also
checks that the two return the same values.
"""
import argparse
import timeit

import numpy as np

from streamtune import _kernels_py

try:
    from streamtune import _kernels as _compiled
except ImportError:
    _compiled = None


def makespan_inputs(rng, tasks, partitions):
    t_in = rng.uniform(1e-6, 1e-4, tasks)
    t_comp = rng.uniform(1e-5, 1e-3, tasks)
    t_out = rng.uniform(1e-6, 1e-4, tasks)
    return t_in, t_comp, t_out, partitions


def smo_inputs(rng, n):
    X = rng.random((n, 10))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(n) > 0.5, 1.0, -1.0)
    K = np.exp(-np.sum((X[:, None] - X[None]) ** 2, axis=2))
    Q = y[:, None] * y[None, :] * K
    return Q, y, 1.0, 1e-3, 10_000_000


CASES = [
    ("makespan  t=85 p=17", "makespan", lambda rng: makespan_inputs(rng, 85, 17)),
    ("makespan  t=1024 p=16", "makespan", lambda rng: makespan_inputs(rng, 1024, 16)),
    ("smo_solve n=60", "smo_solve", lambda rng: smo_inputs(rng, 60)),
    ("smo_solve n=200", "smo_solve", lambda rng: smo_inputs(rng, 200)),
]


def time_call(fn, args, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; timing the pure-Python backend only")
    print(f"{'kernel':<24}{'python':>12}{'compiled':>12}{'speedup':>10}  match")
    for name, kernel, make in CASES:
        inputs = make(np.random.default_rng(0))
        py_fn = getattr(_kernels_py, kernel)
        t_py = time_call(py_fn, inputs, args.repeat)
        if _compiled is None:
            print(f"{name:<24}{t_py * 1e3:>10.3f}ms{'-':>12}{'-':>10}  -")
            continue
        c_fn = getattr(_compiled, kernel)
        t_c = time_call(c_fn, inputs, args.repeat)
        match = same(py_fn(*inputs), c_fn(*inputs))
        print(f"{name:<24}{t_py * 1e3:>10.3f}ms{t_c * 1e3:>10.3f}ms{t_py / t_c:>9.1f}x  {match}")


if __name__ == "__main__":
    main()
