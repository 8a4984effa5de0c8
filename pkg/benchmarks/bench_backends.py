#!/usr/bin/env python3
"""Compare the compiled kernel backend against the pure numpy fallback.

Times the two hot kernels (neighbor aggregation, completion-bound refresh)
and an end-to-end policy decision (features + forward pass) across
instance sizes.  Writes a CSV when --out is given.

Usage: python benchmarks/bench_backends.py [--repeats 200] [--out results.csv]
"""

import argparse
import time

import numpy as np

from ginshop import env, graph, net
from ginshop._kernels import available_backends
from ginshop.instance import generate


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_size(J, M, repeats):
    inst = generate(J, M, seed=J * 1000 + M)
    g = graph.build(inst)
    h = graph.horizon(inst)
    s = env.reset(inst)
    # half-played state is more representative than reset
    params = net.init_params(0)
    batch = net.GraphBatch.from_graphs([g])
    x = graph.features(s, g, h)
    hdim = 64
    hmat = np.random.default_rng(0).normal(size=(g.num_nodes, hdim))
    out = np.zeros_like(hmat)
    clb_out = np.zeros((J, M), dtype=np.int64)

    rows = []
    for name, impl in available_backends().items():
        adj = g.in_adj

        def run_neighbor():
            out[:] = 0.0
            impl.neighbor_sum(hmat, adj.gather, adj.seg_ptr, adj.seg_nodes, out)

        def run_clb():
            impl.clb_fill(
                inst.machine, inst.duration, inst.pref, s.completion, s.job_next, s.machine_avail, clb_out
            )

        rows.append((f"{J}x{M}", name, "neighbor_sum", _median_time(run_neighbor, repeats)))
        rows.append((f"{J}x{M}", name, "clb_fill", _median_time(run_clb, repeats)))

    # end-to-end decision uses whatever backend is active for this process
    def run_decision():
        xx = graph.features(s, g, h)
        net.forward(batch, xx, params)

    rows.append((f"{J}x{M}", "active", "decision", _median_time(run_decision, max(repeats // 4, 5))))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--sizes", default="6x6,10x10,20x20,50x20,100x20")
    ap.add_argument("--out")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    if "c" not in backends:
        print("note: compiled backend missing; run pip install -e . --no-build-isolation")

    all_rows = []
    for token in args.sizes.split(","):
        J, M = (int(v) for v in token.split("x"))
        all_rows.extend(bench_size(J, M, args.repeats))

    print(f"{'size':>8} {'backend':>8} {'kernel':>14} {'median_us':>12}")
    for size, backend, kernel, seconds in all_rows:
        print(f"{size:>8} {backend:>8} {kernel:>14} {seconds * 1e6:12.2f}")

    # speedup summary per kernel/size
    by_key = {(s, k): {} for s, b, k, _ in all_rows for _ in [0]}
    for size, backend, kernel, seconds in all_rows:
        by_key.setdefault((size, kernel), {})[backend] = seconds
    print("\nspeedup (py / c):")
    for (size, kernel), d in sorted(by_key.items()):
        if "py" in d and "c" in d:
            print(f"{size:>8} {kernel:>14} {d['py'] / d['c']:8.2f}x")

    if args.out:
        lines = ["size,backend,kernel,median_seconds"]
        lines += [f"{s},{b},{k},{t!r}" for s, b, k, t in all_rows]
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
