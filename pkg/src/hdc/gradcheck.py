"""Central finite-difference checking of analytic gradients."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateRowError, NumericError

REL_ERR_FLOOR = 1e-8

# minimum distance of any hinge/ReLU argument from its kink for a probe
# batch to be usable: +-step perturbations must not flip activations
KINK_CLEARANCE = 1e-3


@dataclass
class GradCheckReport:
    """Worst disagreement between an analytic gradient and finite differences."""

    max_relative_error: float
    worst_parameter_index: int
    analytic_value: float
    numeric_value: float


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(1e-8, |a| + |n|), the fixed comparison metric."""
    return abs(analytic - numeric) / max(REL_ERR_FLOOR, abs(analytic) + abs(numeric))


def finite_diff_check(loss_fn, params, grads, step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central differences of loss_fn.

    loss_fn takes the (mutated in place) params list and returns a scalar;
    every entry of every parameter array is perturbed by +-step.  The
    worst_parameter_index is flat across the concatenated parameter list.
    """
    if step <= 0:
        raise ConfigError(f"step must be positive, got {step}")
    if len(params) != len(grads):
        raise ConfigError("params and grads lists differ in length")
    if sum(p.size for p in params) == 0:
        raise ConfigError("nothing to check: parameter list is empty")

    worst = GradCheckReport(-1.0, -1, math.nan, math.nan)
    offset = 0
    for param, grad in zip(params, grads):
        if param.shape != grad.shape:
            raise ConfigError(f"param shape {param.shape} != grad shape {grad.shape}")
        flat_p = param.reshape(-1)
        flat_g = np.asarray(grad, dtype=np.float64).reshape(-1)
        for t in range(flat_p.size):
            saved = flat_p[t]
            flat_p[t] = saved + step
            loss_plus = float(loss_fn(params))
            flat_p[t] = saved - step
            loss_minus = float(loss_fn(params))
            flat_p[t] = saved
            if not (math.isfinite(loss_plus) and math.isfinite(loss_minus)):
                raise NumericError(f"non-finite loss at parameter entry {offset + t}")
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            err = relative_error(float(flat_g[t]), numeric)
            if err > worst.max_relative_error:
                worst = GradCheckReport(err, offset + t, float(flat_g[t]), numeric)
        offset += flat_p.size
    return worst


def _probe_is_kink_clear(model, cache, selection, clearance=KINK_CLEARANCE) -> bool:
    """True when no activation or selected pair sits near a kink.

    Central differences average across non-differentiable points, so a
    hinge within `clearance` of the margin (or a near-zero ReLU input, or
    a near-zero positive-pair distance) would inflate the reported error
    without the analytic gradient being wrong.
    """
    from . import ops

    for preacts in cache.layer_preacts:
        for z in preacts:
            if np.abs(z).min() < clearance:
                return False
    for norms in cache.norms:
        if norms.min() < clearance:
            return False
    margin = model.config.margin
    for k, sel in enumerate(selection.levels):
        emb = cache.embeddings[k]
        d_pos = ops.pair_distances(emb, sel.pairs.positives)
        d_neg = ops.pair_distances(emb, sel.pairs.negatives)
        if d_pos.size and d_pos.min() < clearance:
            return False
        if d_neg.size and (
            d_neg.min() < clearance  # distance kink at 0 (subgradient 0 there)
            or np.abs(d_neg - margin).min() < clearance
        ):
            return False
    return True


def cascade_gradcheck(
    config, seed: int = 0, batch_size: int = 12, classes: int = 3, step: float = 1e-5,
    max_attempts: int = 50,
) -> GradCheckReport:
    """End-to-end check of the cascade backward pass on a random batch.

    Builds a model from `config`, draws batches deterministically from
    `seed` until one is clear of activation/hinge kinks, freezes that
    batch's hard-set selection and compares the analytic gradients of the
    selected-pair loss against central differences over every parameter.
    """
    from . import mining
    from .model import init_model

    model = init_model(config)
    labels = np.arange(batch_size) % classes
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + 1000 * attempt)
        batch = rng.normal(size=(batch_size, config.input_dim))
        try:
            cache, selection, _ = mining.cascade_mine(model, batch, labels)
        except DegenerateRowError:
            continue
        if not _probe_is_kink_clear(model, cache, selection):
            continue
        grads = mining.backward_cascade(model, cache, selection)
        return finite_diff_check(
            lambda _p: mining.frozen_selection_loss(model, batch, selection),
            model.parameters(),
            grads.arrays(),
            step=step,
        )
    raise NumericError(
        f"no kink-clear probe batch found in {max_attempts} draws from seed {seed}"
    )
