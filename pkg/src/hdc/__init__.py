"""Cascaded metric-embedding trainer with per-level hard-pair mining.

The package trains a stack of embedding sub-models of increasing depth on
contrastive pair losses.  Every level re-ranks the pairs that survived the
level below it and keeps only the hardest fraction, so shallow levels
learn from everything while deep levels specialize on what is still hard.
Retrieval uses the concatenation of all per-level embeddings.
"""

from ._kernels import BACKEND as kernel_backend
from .data import Dataset, SamplerConfig, SynthConfig, load_csv, sample_batch, save_csv, synth_clusters
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import (
    EvalReport,
    HistogramStats,
    distance_histograms,
    evaluate_model,
    lda_score,
    mean_average_precision,
    recall_at_k,
)
from .gradcheck import GradCheckReport, finite_diff_check
from .mining import (
    CascadeSelection,
    LevelLosses,
    PairSet,
    backward_cascade,
    cascade_mine,
    contrastive_losses,
    enumerate_pairs,
    hdc_loss,
    select_hard,
)
from .model import CascadeConfig, CascadeModel, default_config, extract_descriptor, forward, init_model
from .training import TrainConfig, TrainLog, lr_at, sgd_step, train

__version__ = "0.1.0"
