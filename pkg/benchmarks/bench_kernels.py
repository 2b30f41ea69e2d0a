"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row times one kernel on identical inputs with both backends and checks
that their outputs agree.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from dagforge import _kernels_py as py_backend
from dagforge.scoring import ScoreCache, ScoreConfig, batch_rewards
from dagforge.synth import REGULAR_RANGE, GraphSpec, SemSpec, gen_graph, simulate

try:
    from dagforge import _kernels as cy_backend
except ImportError:
    cy_backend = None


def _best(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(a, b))


def kernel_cases(rng):
    for d, B in ((10, 64), (30, 64), (100, 64)):
        Z = rng.standard_normal((B, d * (d + 1) // 2))
        yield f"vec_to_dag_batch d={d} B={B}", "vec_to_dag_batch", (Z, d)
        yield f"parent_masks_batch d={d} B={B}", "parent_masks_batch", (Z, d) if d <= 64 else None
        A = py_backend.vec_to_dag_batch(Z[:1], d)[0]
        yield f"is_acyclic d={d}", "is_acyclic", (A,)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if cy_backend is None:
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    for label, name, inputs in kernel_cases(rng):
        if inputs is None:
            continue
        f_py = getattr(py_backend, name)
        number = 20
        t_py = _best(lambda: f_py(*inputs), args.repeat, number)
        row = {"case": label, "python_s": t_py, "cython_s": None, "speedup": None, "agree": None}
        if cy_backend is not None:
            f_cy = getattr(cy_backend, name)
            t_cy = _best(lambda: f_cy(*inputs), args.repeat, number)
            row.update(cython_s=t_cy, speedup=t_py / t_cy, agree=_same(f_py(*inputs), f_cy(*inputs)))
        rows.append(row)

    # End to end: one policy step's worth of scoring on a warm cache.
    g = gen_graph(GraphSpec(10, "ER", 2), rng)
    data = simulate(g, SemSpec(n=1000, weight_range=REGULAR_RANGE), rng)
    Z = rng.standard_normal((64, 55))
    cache = ScoreCache()
    batch_rewards(data, Z, ScoreConfig(), cache)
    t = _best(lambda: batch_rewards(data, Z, ScoreConfig(), cache), args.repeat, 20)
    rows.append({"case": "batch_rewards d=10 B=64 (warm cache, active backend)", "python_s": None,
                 "cython_s": None, "speedup": None, "agree": None, "active_s": t})

    print(f"{'case':<52} {'numpy [us]':>11} {'cython [us]':>12} {'speedup':>8} agree")
    for r in rows:
        if "active_s" in r:
            print(f"{r['case']:<52} {r['active_s'] * 1e6:>11.1f}")
            continue
        cy = f"{r['cython_s'] * 1e6:12.1f}" if r["cython_s"] is not None else f"{'-':>12}"
        sp = f"{r['speedup']:8.1f}" if r["speedup"] is not None else f"{'-':>8}"
        print(f"{r['case']:<52} {r['python_s'] * 1e6:>11.1f} {cy} {sp} {r['agree']}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    return 0 if all(r["agree"] in (None, True) for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
