"""Time the compiled kernels against the NumPy/SciPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under every importable backend; the table
reports the best-of-N wall time and the speedup of the compiled backend.
"""

import argparse
import timeit

import numpy as np

from calibmoo.kernels import available_backends


def workloads(rng):
    gt = rng.uniform(0, 800, size=(4000, 2))
    est = rng.uniform(0, 800, size=(2000, 2))
    pts = np.column_stack([rng.uniform(-20, 20, (120_000, 2)), rng.uniform(1, 40, 120_000)])
    rot = np.eye(3)
    depth = rng.uniform(2, 30, 120_000)
    objs = rng.random((200, 2))
    return {
        "kd-tree build + query (4000 / 2000)": lambda k: k.nearest_sq_dists(gt, est),
        "project 120k points": lambda k: k.project_points(pts, rot, np.zeros(3), 500, 500, 400, 150, 800, 300, 1e-6),
        "depth-gap flags (120k)": lambda k: k.depth_gap_mask(depth, 0.5, True),
        "pareto ranks (200 x 2)": lambda k: k.pareto_ranks(objs),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = available_backends()
    jobs = workloads(np.random.default_rng(0))
    names = list(backends)
    print(f"{'kernel':40s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if "compiled" in backends else ""))
    for label, fn in jobs.items():
        times = {}
        for name, mod in backends.items():
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            times[name] = min(timer.repeat(args.repeat, number)) / number
        row = f"{label:40s}" + "".join(f"{times[n] * 1e3:10.3f}ms" for n in names)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:11.1f}x"
        print(row)
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
