"""Datasets: CSV ingestion, a synthetic cluster generator with a
controllable share of hard points, and the class-balanced batch sampler.

The CSV interchange format is header-free: one row per item,
``label,x_0,...,x_{d-1}``, integer labels, full-precision floats.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, SamplingError


@dataclass
class Dataset:
    """Feature matrix plus integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    class_index: dict = field(init=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ConfigError(
                f"{self.labels.shape[0]} labels for {self.features.shape[0]} rows"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ConfigError("labels must be non-negative")
        self.class_index = {
            int(c): np.flatnonzero(self.labels == c) for c in np.unique(self.labels)
        }

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_index)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.features[indices].copy(), self.labels[indices].copy())


@dataclass(frozen=True)
class SamplerConfig:
    """P classes per batch, Q rows per class.

    `seed` feeds make_rng() for standalone sampling; the trainer drives
    sampling from its own run seed so one value determines a whole run.
    """

    classes_per_batch: int
    images_per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.classes_per_batch < 2:
            raise ConfigError("need at least 2 classes per batch for negative pairs")
        if self.images_per_class < 2:
            raise ConfigError("need at least 2 rows per class for positive pairs")

    @property
    def batch_size(self) -> int:
        return self.classes_per_batch * self.images_per_class

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class SynthConfig:
    """Gaussian clusters with a fraction of points planted near foreign
    centroids (hard positives for their own class, hard negatives for the
    foreign one)."""

    num_classes: int
    per_class: int
    dim: int
    centroid_scale: float = 1.0
    noise_sigma: float = 0.1
    hard_fraction_mix: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.per_class, self.dim) < 1:
            raise ConfigError("num_classes, per_class and dim must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0.0 <= self.hard_fraction_mix < 1.0:
            raise ConfigError("hard_fraction_mix must lie in [0, 1)")


def load_csv(path) -> Dataset:
    """Parse `label,x_0,...,x_{d-1}` rows; errors carry 1-based line numbers."""
    features, labels = [], []
    width = None
    lineno = 0
    try:
        with open(path, "r", encoding="ascii") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) < 2:
                    raise ParseError(f"line {lineno}: need a label and at least one feature")
                if width is None:
                    width = len(parts) - 1
                elif len(parts) - 1 != width:
                    raise ParseError(
                        f"line {lineno}: {len(parts) - 1} features, expected {width}"
                    )
                try:
                    label = int(parts[0])
                    row = [float(v) for v in parts[1:]]
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: {exc}") from exc
                labels.append(label)
                features.append(row)
    except UnicodeDecodeError as exc:
        raise ParseError(f"near line {lineno + 1}: not an ASCII CSV file ({exc})") from exc
    if not features:
        raise ParseError(f"{path}: no data rows")
    return Dataset(np.array(features), np.array(labels))


def save_csv(dataset: Dataset, path) -> None:
    """Inverse of load_csv; floats use shortest round-trip repr."""
    with open(path, "w", encoding="ascii") as fh:
        for label, row in zip(dataset.labels, dataset.features):
            fh.write(str(int(label)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def synth_clusters(config: SynthConfig) -> Dataset:
    """Deterministic synthetic dataset.

    Centroids are uniform in +-centroid_scale per coordinate; each class
    contributes per_class points of centroid + N(0, noise_sigma).  Exactly
    floor(hard_fraction_mix * per_class) points per class are re-placed
    near a uniformly chosen foreign centroid while keeping their label.
    """
    rng = np.random.default_rng(config.seed)
    centroids = rng.uniform(
        -config.centroid_scale, config.centroid_scale, size=(config.num_classes, config.dim)
    )
    features = np.empty((config.num_classes * config.per_class, config.dim))
    labels = np.repeat(np.arange(config.num_classes), config.per_class)
    n_hard = int(config.hard_fraction_mix * config.per_class)
    for c in range(config.num_classes):
        block = centroids[c] + rng.normal(0.0, config.noise_sigma, size=(config.per_class, config.dim))
        if n_hard and config.num_classes > 1:
            which = rng.choice(config.per_class, size=n_hard, replace=False)
            foreign = rng.integers(0, config.num_classes - 1, size=n_hard)
            foreign = np.where(foreign >= c, foreign + 1, foreign)  # never the own class
            block[which] = centroids[foreign] + rng.normal(
                0.0, config.noise_sigma, size=(n_hard, config.dim)
            )
        features[c * config.per_class:(c + 1) * config.per_class] = block
    return Dataset(features, labels)


def sample_batch(dataset: Dataset, sampler: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Row indices for one batch: P distinct classes, Q rows each, all
    drawn without replacement.

    Classes are drawn uniformly among all classes; drawing a class with
    fewer than Q rows is an error rather than silently padded.
    """
    p, q = sampler.classes_per_batch, sampler.images_per_class
    class_ids = sorted(dataset.class_index)
    if len(class_ids) < p:
        raise SamplingError(f"dataset has {len(class_ids)} classes, batch needs {p}")
    chosen = rng.choice(len(class_ids), size=p, replace=False)
    indices = []
    for slot in chosen:
        rows = dataset.class_index[class_ids[slot]]
        if rows.size < q:
            raise SamplingError(
                f"class {class_ids[slot]} has {rows.size} rows, batch needs {q}"
            )
        picks = rng.choice(rows.size, size=q, replace=False)
        indices.append(rows[picks])
    return np.concatenate(indices)


def train_eval_split(dataset: Dataset, eval_per_class: int) -> tuple:
    """Deterministic per-class split: last `eval_per_class` rows of each
    class become the held-out set."""
    train_idx, eval_idx = [], []
    for c in sorted(dataset.class_index):
        rows = dataset.class_index[c]
        if rows.size <= eval_per_class:
            raise ConfigError(f"class {c} too small to hold out {eval_per_class} rows")
        train_idx.append(rows[:-eval_per_class])
        eval_idx.append(rows[-eval_per_class:])
    return dataset.subset(np.concatenate(train_idx)), dataset.subset(np.concatenate(eval_idx))
