"""Benchmark: compiled pair kernels vs the numpy fallback.

Times the two chunk primitives at several pair-list sizes and an
end-to-end mining+backward step, printing per-call times and speedups.
Runs fine when the extension is absent (compiled column shows n/a).
"""

import argparse
import time

import numpy as np

from hdc._kernels import pairs_np

try:
    from hdc._kernels import _pairs as pairs_cy
except ImportError:
    pairs_cy = None


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_primitives(n_rows, dim, n_pairs, repeats):
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(n_rows, dim))
    ii = rng.integers(0, n_rows, size=n_pairs).astype(np.int64)
    jj = (ii + 1 + rng.integers(0, n_rows - 1, size=n_pairs)) % n_rows
    scale = rng.normal(size=n_pairs)

    rows = []
    for name, fn_np, fn_cy in (
        (
            "pair_distances",
            lambda: pairs_np.pair_distances_chunk(emb, ii, jj),
            (lambda: pairs_cy.pair_distances_chunk(emb, ii, jj)) if pairs_cy else None,
        ),
        (
            "scatter_gradients",
            lambda: pairs_np.scatter_pair_gradients_chunk(
                emb, ii, jj, scale, np.zeros_like(emb)
            ),
            (
                lambda: pairs_cy.scatter_pair_gradients_chunk(
                    emb, ii, jj, scale, np.zeros_like(emb)
                )
            )
            if pairs_cy
            else None,
        ),
    ):
        t_np = time_call(fn_np, repeats)
        t_cy = time_call(fn_cy, repeats) if fn_cy else None
        rows.append((name, n_pairs, t_np, t_cy))
    return rows


def bench_training_step(repeats):
    from hdc.data import SamplerConfig, SynthConfig, sample_batch, synth_clusters
    from hdc.mining import backward_cascade, cascade_mine
    from hdc.model import default_config, init_model

    dataset = synth_clusters(SynthConfig(10, 50, 32, noise_sigma=0.4, seed=0))
    model = init_model(default_config(32))
    rng = np.random.default_rng(0)
    idx = sample_batch(dataset, SamplerConfig(10, 10), rng)
    x, labels = dataset.features[idx], dataset.labels[idx]

    def step():
        cache, selection, _ = cascade_mine(model, x, labels)
        backward_cascade(model, cache, selection)

    return time_call(step, repeats)


def fmt(t):
    return f"{t * 1e3:9.3f} ms" if t is not None else "      n/a"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    backend = "built" if pairs_cy is not None else "NOT built"
    print(f"compiled extension: {backend}\n")
    print(f"{'primitive':<20}{'pairs':>8}  {'numpy':>12}  {'compiled':>12}  {'speedup':>8}")
    for n_pairs in (1000, 9900, 100_000):
        for name, npairs, t_np, t_cy in bench_primitives(100, 16, n_pairs, args.repeats):
            ratio = f"{t_np / t_cy:7.1f}x" if t_cy else "     n/a"
            print(f"{name:<20}{npairs:>8}  {fmt(t_np)}  {fmt(t_cy)}  {ratio}")
    step = bench_training_step(args.repeats)
    print(f"\nfull mine+backward step (batch 100, 3 levels, active backend): {fmt(step)}")


if __name__ == "__main__":
    main()
