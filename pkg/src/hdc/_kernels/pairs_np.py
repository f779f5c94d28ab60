"""Pure-numpy pair kernels: the fallback backend.

Both backends implement the same two chunk primitives; everything above
them (chunking, worker fan-out, reduction order) lives in `__init__.py`
so the numerics are backend-independent.
"""

import numpy as np


def pair_distances_chunk(emb: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    """Euclidean distance between rows emb[ii[p]] and emb[jj[p]]."""
    diff = emb[ii] - emb[jj]
    return np.sqrt(np.einsum("pd,pd->p", diff, diff))


def scatter_pair_gradients_chunk(
    emb: np.ndarray,
    ii: np.ndarray,
    jj: np.ndarray,
    scale: np.ndarray,
    out: np.ndarray,
) -> None:
    """Accumulate scale[p] * (emb[ii[p]] - emb[jj[p]]) into out[ii[p]] and
    the negation into out[jj[p]], processing pairs in order.

    `np.add.at` / `np.subtract.at` are unbuffered, so repeated row indices
    accumulate in pair order exactly like the compiled loop.
    """
    contrib = (emb[ii] - emb[jj]) * scale[:, None]
    np.add.at(out, ii, contrib)
    np.subtract.at(out, jj, contrib)
