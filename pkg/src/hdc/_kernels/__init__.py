"""Pair-kernel dispatch: compiled backend when available, numpy otherwise.

The two primitives (per-pair Euclidean distance, pair-gradient scatter-add)
dominate training time, so they exist twice: a Cython extension built by
setup.py and a pure-numpy fallback with identical semantics.  Selection
happens once at import; `HDC_KERNEL_BACKEND=numpy|cython` overrides it.

All reductions use fixed-order chunked accumulation: pairs are split into
fixed-size chunks, each chunk is reduced sequentially, and chunk partials
are combined in chunk order.  Worker threads only change who computes a
chunk, never the combination order, so results are identical for any
`workers` value.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import pairs_np

_FORCED = os.environ.get("HDC_KERNEL_BACKEND", "").lower()

if _FORCED == "numpy":
    _impl = pairs_np
    BACKEND = "numpy"
else:
    try:
        from . import _pairs as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _FORCED == "cython":
            raise
        _impl = pairs_np
        BACKEND = "numpy"

CHUNK = 4096


def _chunk_bounds(n: int):
    return [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]


def _as_pair_arrays(ii, jj):
    ii = np.ascontiguousarray(ii, dtype=np.int64)
    jj = np.ascontiguousarray(jj, dtype=np.int64)
    return ii, jj


def pair_distances(emb: np.ndarray, ii, jj, workers: int = 1) -> np.ndarray:
    """Euclidean distances ||emb[ii[p]] - emb[jj[p]]|| for all pairs."""
    emb = np.ascontiguousarray(emb, dtype=np.float64)
    ii, jj = _as_pair_arrays(ii, jj)
    n = ii.shape[0]
    out = np.empty(n, dtype=np.float64)
    bounds = _chunk_bounds(n)

    def run(span):
        lo, hi = span
        out[lo:hi] = _impl.pair_distances_chunk(emb, ii[lo:hi], jj[lo:hi])

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, bounds))
    else:
        for span in bounds:
            run(span)
    return out


def scatter_pair_gradients(
    emb: np.ndarray, ii, jj, scale, out_shape, workers: int = 1
) -> np.ndarray:
    """Sum of scale[p] * (emb[ii[p]] - emb[jj[p]]) routed to rows ii[p] (+)
    and jj[p] (-); returns a fresh (out_shape) gradient array.

    Each chunk accumulates into a private buffer; buffers are added in
    chunk order, so the result does not depend on `workers`.
    """
    emb = np.ascontiguousarray(emb, dtype=np.float64)
    ii, jj = _as_pair_arrays(ii, jj)
    scale = np.ascontiguousarray(scale, dtype=np.float64)
    bounds = _chunk_bounds(ii.shape[0])
    out = np.zeros(out_shape, dtype=np.float64)
    if not bounds:
        return out

    def run(span):
        lo, hi = span
        buf = np.zeros(out_shape, dtype=np.float64)
        _impl.scatter_pair_gradients_chunk(emb, ii[lo:hi], jj[lo:hi], scale[lo:hi], buf)
        return buf

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            buffers = list(pool.map(run, bounds))
    else:
        buffers = [run(span) for span in bounds]
    for buf in buffers:
        out += buf
    return out


def chunked_sum(values: np.ndarray) -> float:
    """Fixed-order chunked reduction of a 1-D array to a float.

    Chunk partials come from np.sum (deterministic for a fixed array) and
    are combined with math.fsum (exactly rounded, order-independent).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    partials = [float(np.sum(values[lo:hi])) for lo, hi in _chunk_bounds(values.size)]
    return math.fsum(partials)
