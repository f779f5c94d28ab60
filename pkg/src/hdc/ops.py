"""Dense matrix primitives with hand-paired forward/backward rules.

Matrices are plain 2-D float64 numpy arrays.  Every operation is a pure
function of its inputs; backward rules take exactly the caches their
forward produced, so the pairing is explicit rather than recorded in a
graph.
"""

import numpy as np

from .errors import DegenerateRowError, DimensionError, PairIndexError
from . import _kernels

ROW_NORM_EPS = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {out.shape}")
    return out


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map y = x @ w + b for x (n, d), w (d, m), b (m,)."""
    x, w = as_matrix(x, "x"), as_matrix(w, "w")
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"x has {x.shape[1]} cols but w has {w.shape[0]} rows")
    if b.shape[0] != w.shape[1]:
        raise DimensionError(f"bias has {b.shape[0]} entries but w has {w.shape[1]} cols")
    return x @ w + b


def linear_backward(x: np.ndarray, w: np.ndarray, d_y: np.ndarray):
    """Gradients of the affine map: returns (dx, dw, db).

    dx = d_y @ w.T, dw = x.T @ d_y, db = column sums of d_y.
    """
    x, w, d_y = as_matrix(x, "x"), as_matrix(w, "w"), as_matrix(d_y, "d_y")
    if d_y.shape != (x.shape[0], w.shape[1]):
        raise DimensionError(
            f"d_y shape {d_y.shape} does not match forward output "
            f"({x.shape[0]}, {w.shape[1]})"
        )
    dx = d_y @ w.T
    dw = x.T @ d_y
    db = d_y.sum(axis=0)
    return dx, dw, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, d_y: np.ndarray) -> np.ndarray:
    """Pass gradient where the forward input was strictly positive."""
    x, d_y = np.asarray(x), as_matrix(d_y, "d_y")
    if x.shape != d_y.shape:
        raise DimensionError(f"cache shape {x.shape} != gradient shape {d_y.shape}")
    return np.where(x > 0.0, d_y, 0.0)


def l2_normalize_rows(x: np.ndarray):
    """Scale every row to unit Euclidean norm.

    Returns (normalized, norms); the norms are the cache for the backward
    rule.  Rows with norm <= 1e-12 are an error: a dead embedding should
    surface, not be clamped.
    """
    x = as_matrix(x, "x")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= ROW_NORM_EPS):
        bad = int(np.argmax(norms <= ROW_NORM_EPS))
        raise DegenerateRowError(f"row {bad} has norm {norms[bad]:.3e} <= {ROW_NORM_EPS}")
    return x / norms[:, None], norms


def l2_normalize_backward(y: np.ndarray, norms: np.ndarray, d_y: np.ndarray) -> np.ndarray:
    """Backward of row normalization: applies (I - y yT) / ||x|| per row."""
    y, d_y = as_matrix(y, "y"), as_matrix(d_y, "d_y")
    if y.shape != d_y.shape:
        raise DimensionError(f"y shape {y.shape} != gradient shape {d_y.shape}")
    inner = np.einsum("nd,nd->n", d_y, y)
    return (d_y - y * inner[:, None]) / np.asarray(norms, dtype=np.float64)[:, None]


def pair_distances(f: np.ndarray, pairs, workers: int = 1) -> np.ndarray:
    """Euclidean distance ||f[i] - f[j]|| for each (i, j) in pairs.

    `pairs` is an (n_pairs, 2) integer array; validates indices before
    handing off to the active kernel backend.
    """
    f = as_matrix(f, "f")
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        return np.empty(0, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DimensionError(f"pairs must be (n, 2), got {pairs.shape}")
    if pairs.min() < 0 or pairs.max() >= f.shape[0]:
        raise PairIndexError(
            f"pair indices must lie in [0, {f.shape[0]}), got "
            f"[{pairs.min()}, {pairs.max()}]"
        )
    return _kernels.pair_distances(f, pairs[:, 0], pairs[:, 1], workers=workers)
