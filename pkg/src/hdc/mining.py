"""Pair mining and the cascaded contrastive loss.

A mini-batch of n rows yields all n*n - n ordered pairs, split into
positives (same label) and negatives (different label).  Level k scores
the pairs that survived level k-1, keeps the top hard_fractions[k]
percent of each polarity by descending loss, and trains on exactly that
subset.  Gradients are routed so each head sees only its own level's
selected pairs while trunk blocks accumulate every level built on top of
them.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, ops
from .errors import (
    ConfigError,
    ConsistencyError,
    EmptySelectionError,
    NoNegativePairsError,
)
from .model import CascadeModel, ForwardCache, LinearParams, forward

PAIR_DISTANCE_EPS = 1e-12


@dataclass
class PairSet:
    """Ordered (i, j) index pairs split by polarity; arrays of shape (n, 2)."""

    positives: np.ndarray
    negatives: np.ndarray


@dataclass
class LevelLosses:
    """Per-pair contrastive losses of one level over its candidate pairs."""

    level: int
    positive_losses: np.ndarray
    negative_losses: np.ndarray


@dataclass
class LevelSelection:
    """Hard subset chosen by one level.

    positive_kept / negative_kept index into the previous level's pair
    lists (rank order, hardest first); `pairs` holds the same selection as
    absolute batch-row pairs.
    """

    pairs: PairSet
    positive_kept: np.ndarray
    negative_kept: np.ndarray


@dataclass
class CascadeSelection:
    """Nested hard sets for all levels of one batch."""

    base: PairSet
    levels: list
    batch_size: int


def enumerate_pairs(labels) -> PairSet:
    """All ordered pairs (i, j), i != j, of a label vector.

    Row-major order (i ascending, then j) so results are reproducible.
    """
    labels = np.asarray(labels).reshape(-1)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(labels.size, dtype=bool)
    pos_i, pos_j = np.nonzero(same & off_diag)
    neg_i, neg_j = np.nonzero(~same)
    if neg_i.size == 0:
        raise NoNegativePairsError(
            f"batch of {labels.size} rows has a single class; no negative pairs"
        )
    return PairSet(
        positives=np.stack([pos_i, pos_j], axis=1).astype(np.int64),
        negatives=np.stack([neg_i, neg_j], axis=1).astype(np.int64),
    )


def contrastive_losses(
    embeddings: np.ndarray, pairs: PairSet, margin: float, level: int = 0, workers: int = 1
) -> LevelLosses:
    """Positive loss = distance; negative loss = max(0, margin - distance)."""
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    d_pos = ops.pair_distances(embeddings, pairs.positives, workers=workers)
    d_neg = ops.pair_distances(embeddings, pairs.negatives, workers=workers)
    return LevelLosses(
        level=level,
        positive_losses=d_pos,
        negative_losses=np.maximum(0.0, margin - d_neg),
    )


def select_hard(losses, hard_percent: float) -> np.ndarray:
    """Indices of the top ceil(hard_percent * n / 100) losses, hardest first.

    Ties break by ascending original index (stable sort), so selection is
    deterministic.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise EmptySelectionError("cannot select hard examples from an empty loss list")
    if not 0.0 < hard_percent <= 100.0:
        raise ConfigError(f"hard_percent must lie in (0, 100], got {hard_percent}")
    count = min(losses.size, math.ceil(hard_percent * losses.size / 100.0))
    order = np.argsort(-losses, kind="stable")
    return order[:count]


def cascade_mine(
    model: CascadeModel,
    batch_x: np.ndarray,
    batch_labels,
    rank_by: str = "current",
    workers: int = 1,
    hard_fractions=None,
):
    """Forward a batch and build the nested hard sets for every level.

    rank_by="current" ranks the surviving pairs by the selecting level's
    own loss; rank_by="previous" ranks them by the level below (level 1
    has no level below and always uses its own loss).  `hard_fractions`
    overrides the model config (the trainer uses this for baseline modes).

    Returns (forward cache, CascadeSelection, [LevelLosses per level]).
    """
    if rank_by not in ("current", "previous"):
        raise ConfigError(f"rank_by must be 'current' or 'previous', got {rank_by!r}")
    cfg = model.config
    fractions = cfg.hard_fractions if hard_fractions is None else tuple(hard_fractions)
    if len(fractions) != cfg.levels:
        raise ConfigError("hard_fractions must have one entry per level")

    cache = forward(model, batch_x)
    base = enumerate_pairs(batch_labels)

    selections = []
    losses = []
    prev_pairs = base
    prev_losses = None
    prev_sel = None
    for k in range(cfg.levels):
        level_losses = contrastive_losses(
            cache.embeddings[k], prev_pairs, cfg.margin, level=k + 1, workers=workers
        )
        if rank_by == "previous" and k > 0:
            rank_pos = prev_losses.positive_losses[prev_sel.positive_kept]
            rank_neg = prev_losses.negative_losses[prev_sel.negative_kept]
        else:
            rank_pos = level_losses.positive_losses
            rank_neg = level_losses.negative_losses
        pos_kept = select_hard(rank_pos, fractions[k])
        neg_kept = select_hard(rank_neg, fractions[k])
        sel = LevelSelection(
            pairs=PairSet(prev_pairs.positives[pos_kept], prev_pairs.negatives[neg_kept]),
            positive_kept=pos_kept,
            negative_kept=neg_kept,
        )
        selections.append(sel)
        losses.append(level_losses)
        prev_pairs, prev_losses, prev_sel = sel.pairs, level_losses, sel
    return cache, CascadeSelection(base=base, levels=selections, batch_size=cache.batch_size), losses


def hdc_loss(level_losses, selection: CascadeSelection, level_weights) -> float:
    """Weighted sum over levels of the selected pair losses.

    Sums use fixed-order chunked accumulation, so the value is identical
    for any worker count.
    """
    if len(level_losses) != len(selection.levels) or len(level_weights) != len(level_losses):
        raise ConsistencyError("level_losses, selection and level_weights disagree on K")
    terms = []
    for losses, sel, weight in zip(level_losses, selection.levels, level_weights):
        pos = _kernels.chunked_sum(losses.positive_losses[sel.positive_kept])
        neg = _kernels.chunked_sum(losses.negative_losses[sel.negative_kept])
        terms.append(weight * (pos + neg))
    return math.fsum(terms)


@dataclass
class CascadeGradients:
    """Parameter gradients mirroring CascadeModel's layout."""

    blocks: list
    heads: list

    def named_gradients(self):
        out = []
        for k, block in enumerate(self.blocks):
            for i, layer in enumerate(block):
                out.append((f"blocks.{k}.{i}.weight", layer.weight))
                out.append((f"blocks.{k}.{i}.bias", layer.bias))
        for k, head in enumerate(self.heads):
            out.append((f"heads.{k}.weight", head.weight))
            out.append((f"heads.{k}.bias", head.bias))
        return out

    def arrays(self):
        return [arr for _, arr in self.named_gradients()]


def _check_backward_inputs(model, cache, selection, level_weights):
    cfg = model.config
    if len(cache.embeddings) != cfg.levels or len(selection.levels) != cfg.levels:
        raise ConsistencyError("cache/selection level count does not match the model")
    if len(level_weights) != cfg.levels:
        raise ConsistencyError("level_weights length does not match the model")
    if selection.batch_size != cache.batch_size:
        raise ConsistencyError(
            f"selection was built for batch size {selection.batch_size}, "
            f"cache holds {cache.batch_size}"
        )
    for k, sel in enumerate(selection.levels):
        for pairs in (sel.pairs.positives, sel.pairs.negatives):
            if pairs.size and pairs.max() >= cache.batch_size:
                raise ConsistencyError(f"level {k + 1} selection indexes beyond the batch")


def _embedding_gradient(embeddings, sel, margin, weight, workers):
    """dL/df for one level: the selected pairs' contrastive gradients.

    Positive pair (i, j): +w * (f_i - f_j) / d to row i, mirrored to j.
    Negative pair inside the margin: same expression with -w.  Pairs at
    zero distance get a zero subgradient; negatives at or beyond the
    margin contribute nothing.
    """
    pos, neg = sel.pairs.positives, sel.pairs.negatives
    d_pos = ops.pair_distances(embeddings, pos, workers=workers)
    d_neg = ops.pair_distances(embeddings, neg, workers=workers)
    scale_pos = np.where(d_pos > PAIR_DISTANCE_EPS, weight / np.maximum(d_pos, PAIR_DISTANCE_EPS), 0.0)
    active = (d_neg > PAIR_DISTANCE_EPS) & (d_neg < margin)
    scale_neg = np.where(active, -weight / np.maximum(d_neg, PAIR_DISTANCE_EPS), 0.0)
    ii = np.concatenate([pos[:, 0], neg[:, 0]])
    jj = np.concatenate([pos[:, 1], neg[:, 1]])
    scale = np.concatenate([scale_pos, scale_neg])
    return _kernels.scatter_pair_gradients(embeddings, ii, jj, scale, embeddings.shape, workers=workers)


def backward_cascade(
    model: CascadeModel,
    cache: ForwardCache,
    selection: CascadeSelection,
    level_weights=None,
    workers: int = 1,
) -> CascadeGradients:
    """Exact gradients of the weighted cascade loss with frozen selection.

    Head k's gradient comes only from level k's selected pairs; block k
    accumulates the trunk flow of every level at or above k.  The discrete
    selection is treated as constant (zero subgradient through ranking).
    """
    cfg = model.config
    weights = cfg.level_weights if level_weights is None else tuple(level_weights)
    _check_backward_inputs(model, cache, selection, weights)

    grads = CascadeGradients(
        blocks=[
            [LinearParams(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in block]
            for block in model.blocks
        ],
        heads=[LinearParams(np.zeros_like(h.weight), np.zeros_like(h.bias)) for h in model.heads],
    )

    # head contribution to each trunk output, all levels first
    d_block_out = []
    for k in range(cfg.levels):
        d_emb = _embedding_gradient(
            cache.embeddings[k], selection.levels[k], cfg.margin, weights[k], workers
        )
        d_pre = ops.l2_normalize_backward(cache.embeddings[k], cache.norms[k], d_emb)
        d_ok, dw_head, db_head = ops.linear_backward(
            cache.block_outputs[k], model.heads[k].weight, d_pre
        )
        grads.heads[k].weight[...] = dw_head
        grads.heads[k].bias[...] = db_head
        d_block_out.append(d_ok)

    # walk the trunk top-down, folding deeper levels into shallower blocks
    flow = None
    for k in range(cfg.levels - 1, -1, -1):
        g = d_block_out[k] if flow is None else d_block_out[k] + flow
        for i in range(len(model.blocks[k]) - 1, -1, -1):
            g = ops.relu_backward(cache.layer_preacts[k][i], g)
            g, dw, db = ops.linear_backward(
                cache.layer_inputs[k][i], model.blocks[k][i].weight, g
            )
            grads.blocks[k][i].weight[...] = dw
            grads.blocks[k][i].bias[...] = db
        flow = g
    return grads


def frozen_selection_loss(model: CascadeModel, batch_x, selection: CascadeSelection, level_weights=None) -> float:
    """Cascade loss recomputed on fixed pair sets (for gradient checking)."""
    cfg = model.config
    weights = cfg.level_weights if level_weights is None else tuple(level_weights)
    cache = forward(model, batch_x)
    terms = []
    for k in range(cfg.levels):
        sel = selection.levels[k]
        losses = contrastive_losses(cache.embeddings[k], sel.pairs, cfg.margin, level=k + 1)
        terms.append(
            weights[k]
            * (_kernels.chunked_sum(losses.positive_losses) + _kernels.chunked_sum(losses.negative_losses))
        )
    return math.fsum(terms)
