"""The cascaded embedding network.

A model is a trunk of `levels` shared blocks applied in sequence; block k
feeds both the next block and a private linear head whose output is
row-normalized to give that level's embedding.  Each block is a stack of
linear+ReLU layers, so deeper levels are strictly more complex functions
of the input.  At retrieval time the per-level embeddings are concatenated
into a single descriptor.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class CascadeConfig:
    """Architecture plus the per-level training hyperparameters.

    block_layers[k] lists the hidden widths of trunk block k; embed_dims[k]
    is the width of level k's embedding; level_weights[k] scales level k's
    loss; hard_fractions[k] is the percentage of pairs kept when level k
    selects its hard set.
    """

    levels: int
    input_dim: int
    block_layers: tuple
    embed_dims: tuple
    level_weights: tuple
    hard_fractions: tuple
    margin: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        per_level = {
            "block_layers": self.block_layers,
            "embed_dims": self.embed_dims,
            "level_weights": self.level_weights,
            "hard_fractions": self.hard_fractions,
        }
        for name, seq in per_level.items():
            if len(seq) != self.levels:
                raise ConfigError(f"{name} must have {self.levels} entries, got {len(seq)}")
        object.__setattr__(
            self, "block_layers", tuple(tuple(int(w) for w in lvl) for lvl in self.block_layers)
        )
        object.__setattr__(self, "embed_dims", tuple(int(d) for d in self.embed_dims))
        object.__setattr__(self, "level_weights", tuple(float(w) for w in self.level_weights))
        object.__setattr__(self, "hard_fractions", tuple(float(h) for h in self.hard_fractions))
        for lvl in self.block_layers:
            if not lvl or any(w < 1 for w in lvl):
                raise ConfigError("every block needs at least one positive layer width")
        if any(d < 1 for d in self.embed_dims):
            raise ConfigError("embedding widths must be positive")
        if any(w < 0 for w in self.level_weights):
            raise ConfigError("level weights must be >= 0")
        if any(not 0.0 < h <= 100.0 for h in self.hard_fractions):
            raise ConfigError("hard fractions are percentages in (0, 100]")
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")

    @property
    def descriptor_dim(self) -> int:
        return sum(self.embed_dims)

    def block_input_dim(self, level: int) -> int:
        return self.input_dim if level == 0 else self.block_layers[level - 1][-1]


def default_config(input_dim: int, seed: int = 0) -> CascadeConfig:
    """Desk-scale defaults: 3 levels of one 64-wide layer, 16-d embeddings,
    unit level weights, 100/50/20 hard fractions, margin 1."""
    return CascadeConfig(
        levels=3,
        input_dim=input_dim,
        block_layers=((64,), (64,), (64,)),
        embed_dims=(16, 16, 16),
        level_weights=(1.0, 1.0, 1.0),
        hard_fractions=(100.0, 50.0, 20.0),
        margin=1.0,
        seed=seed,
    )


@dataclass
class LinearParams:
    """One affine layer: weight (d_in, d_out) and bias (d_out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def copy(self) -> "LinearParams":
        return LinearParams(self.weight.copy(), self.bias.copy())


@dataclass
class CascadeModel:
    """Parameters of the trunk blocks and the per-level heads."""

    config: CascadeConfig
    blocks: list  # blocks[k] -> list[LinearParams]
    heads: list   # heads[k] -> LinearParams

    def named_parameters(self):
        """(name, array) pairs in declaration order: all blocks, then heads."""
        out = []
        for k, block in enumerate(self.blocks):
            for i, layer in enumerate(block):
                out.append((f"blocks.{k}.{i}.weight", layer.weight))
                out.append((f"blocks.{k}.{i}.bias", layer.bias))
        for k, head in enumerate(self.heads):
            out.append((f"heads.{k}.weight", head.weight))
            out.append((f"heads.{k}.bias", head.bias))
        return out

    def parameters(self):
        return [arr for _, arr in self.named_parameters()]

    def copy(self) -> "CascadeModel":
        return CascadeModel(
            config=self.config,
            blocks=[[layer.copy() for layer in block] for block in self.blocks],
            heads=[head.copy() for head in self.heads],
        )


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward call."""

    inputs: np.ndarray
    layer_inputs: list = field(default_factory=list)   # [k][i] input to linear i of block k
    layer_preacts: list = field(default_factory=list)  # [k][i] pre-ReLU activations
    block_outputs: list = field(default_factory=list)  # o_k (post-ReLU)
    head_prenorm: list = field(default_factory=list)   # head linear output per level
    embeddings: list = field(default_factory=list)     # f_k, unit rows
    norms: list = field(default_factory=list)          # pre-normalization row norms

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


def _glorot_uniform(rng, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def init_model(config: CascadeConfig) -> CascadeModel:
    """Glorot-uniform weights, zero biases; identical for identical seeds."""
    rng = np.random.default_rng(config.seed)
    blocks = []
    for k in range(config.levels):
        layers = []
        d_in = config.block_input_dim(k)
        for width in config.block_layers[k]:
            layers.append(LinearParams(_glorot_uniform(rng, d_in, width), np.zeros(width)))
            d_in = width
        blocks.append(layers)
    heads = []
    for k in range(config.levels):
        d_in = config.block_layers[k][-1]
        d_out = config.embed_dims[k]
        heads.append(LinearParams(_glorot_uniform(rng, d_in, d_out), np.zeros(d_out)))
    return CascadeModel(config=config, blocks=blocks, heads=heads)


def forward(model: CascadeModel, x: np.ndarray) -> ForwardCache:
    """Run every level on the given rows, caching all intermediates.

    Level filtering happens downstream on pair lists; the trunk always
    computes all levels for the rows it is handed.
    """
    x = ops.as_matrix(x, "x")
    cfg = model.config
    if x.shape[1] != cfg.input_dim:
        raise DimensionError(f"input has {x.shape[1]} cols, model expects {cfg.input_dim}")
    cache = ForwardCache(inputs=x)
    current = x
    for k in range(cfg.levels):
        inputs_k, preacts_k = [], []
        for layer in model.blocks[k]:
            inputs_k.append(current)
            z = ops.linear_forward(current, layer.weight, layer.bias)
            preacts_k.append(z)
            current = ops.relu_forward(z)
        cache.layer_inputs.append(inputs_k)
        cache.layer_preacts.append(preacts_k)
        cache.block_outputs.append(current)
        pre = ops.linear_forward(current, model.heads[k].weight, model.heads[k].bias)
        emb, norms = ops.l2_normalize_rows(pre)
        cache.head_prenorm.append(pre)
        cache.embeddings.append(emb)
        cache.norms.append(norms)
    return cache


def extract_descriptor(model: CascadeModel, x: np.ndarray) -> np.ndarray:
    """Concatenate the per-level embeddings; no renormalization afterwards
    (retrieval ranking is invariant to the common sqrt(levels) scale)."""
    cache = forward(model, x)
    return np.hstack(cache.embeddings)
