import numpy as np
import pytest

from hdc.data import (
    Dataset,
    SamplerConfig,
    SynthConfig,
    load_csv,
    sample_batch,
    save_csv,
    synth_clusters,
    train_eval_split,
)
from hdc.errors import ConfigError, ParseError, SamplingError
from hdc.mining import enumerate_pairs


class TestCsv:
    def test_small_file(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("0,1.5,2.5\n1,3.0,4.0\n0,-1.0,0.25\n")
        ds = load_csv(path)
        assert ds.features.shape == (3, 2)
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])
        np.testing.assert_array_equal(ds.features[2], [-1.0, 0.25])

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1.0,2.0\n1,3.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_csv(path)

    def test_non_numeric_field_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1.0\noops,2.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            load_csv(path)

    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(20, 5)), rng.integers(0, 4, size=20))
        path = tmp_path / "roundtrip.csv"
        save_csv(ds, path)
        back = load_csv(path)
        np.testing.assert_array_equal(ds.features, back.features)
        np.testing.assert_array_equal(ds.labels, back.labels)


class TestSynth:
    def test_zero_noise_points_equal_centroids(self):
        ds = synth_clusters(SynthConfig(4, 6, 3, noise_sigma=0.0, seed=1))
        for c, rows in ds.class_index.items():
            block = ds.features[rows]
            assert np.all(block == block[0])
        # nearest-centroid retrieval is perfect: distinct centroids
        centroids = np.array([ds.features[rows[0]] for rows in ds.class_index.values()])
        assert np.unique(centroids, axis=0).shape[0] == 4

    def test_same_seed_identical(self):
        cfg = SynthConfig(5, 10, 4, noise_sigma=0.3, hard_fraction_mix=0.2, seed=7)
        a, b = synth_clusters(cfg), synth_clusters(cfg)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_hard_mix_count_is_exact(self):
        cfg = SynthConfig(3, 50, 8, centroid_scale=5.0, noise_sigma=0.01,
                          hard_fraction_mix=0.2, seed=3)
        ds = synth_clusters(cfg)
        # displaced points sit far from their own class centroid
        for c, rows in ds.class_index.items():
            own = np.median(ds.features[rows], axis=0)
            dist = np.linalg.norm(ds.features[rows] - own, axis=1)
            assert int(np.sum(dist > 1.0)) == 10  # floor(0.2 * 50)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            SynthConfig(0, 5, 2)
        with pytest.raises(ConfigError):
            SynthConfig(2, 5, 2, hard_fraction_mix=1.0)


class TestSampler:
    def test_ten_by_ten_batch(self):
        ds = synth_clusters(SynthConfig(12, 20, 4, seed=0))
        idx = sample_batch(ds, SamplerConfig(10, 10), np.random.default_rng(0))
        assert idx.size == 100
        labels = ds.labels[idx]
        values, counts = np.unique(labels, return_counts=True)
        assert values.size == 10
        assert np.all(counts == 10)

    def test_two_by_two(self):
        ds = synth_clusters(SynthConfig(2, 5, 3, seed=1))
        idx = sample_batch(ds, SamplerConfig(2, 2), np.random.default_rng(1))
        labels = ds.labels[idx]
        values, counts = np.unique(labels, return_counts=True)
        assert np.all(counts == 2) and values.size == 2

    def test_no_repeated_rows(self):
        ds = synth_clusters(SynthConfig(6, 12, 4, seed=2))
        idx = sample_batch(ds, SamplerConfig(4, 8), np.random.default_rng(2))
        assert np.unique(idx).size == idx.size

    def test_too_few_classes(self):
        ds = synth_clusters(SynthConfig(3, 10, 4, seed=3))
        with pytest.raises(SamplingError):
            sample_batch(ds, SamplerConfig(5, 2), np.random.default_rng(0))

    def test_small_class_is_error(self):
        ds = Dataset(np.ones((5, 2)), [0, 0, 0, 1, 1])
        with pytest.raises(SamplingError):
            sample_batch(ds, SamplerConfig(2, 3), np.random.default_rng(0))

    def test_batch_pair_counts_match_enumeration(self):
        ds = synth_clusters(SynthConfig(8, 15, 4, seed=4))
        rng = np.random.default_rng(5)
        p, q = 5, 6
        for _ in range(20):
            idx = sample_batch(ds, SamplerConfig(p, q), rng)
            pairs = enumerate_pairs(ds.labels[idx])
            assert len(pairs.positives) == p * q * (q - 1)
            assert len(pairs.negatives) == p * q * (p - 1) * q

    def test_class_frequency_fairness(self):
        # every class appears within 3 sigma of its binomial expectation
        ds = synth_clusters(SynthConfig(10, 8, 3, seed=6))
        rng = np.random.default_rng(7)
        draws = 2000
        p_classes = 3
        counts = np.zeros(10)
        for _ in range(draws):
            idx = sample_batch(ds, SamplerConfig(p_classes, 2), rng)
            for c in np.unique(ds.labels[idx]):
                counts[c] += 1
        prob = p_classes / 10
        expected = draws * prob
        sigma = np.sqrt(draws * prob * (1 - prob))
        assert np.all(np.abs(counts - expected) <= 3 * sigma)

    def test_deterministic_given_rng_state(self):
        ds = synth_clusters(SynthConfig(6, 10, 4, seed=8))
        a = sample_batch(ds, SamplerConfig(3, 4), np.random.default_rng(42))
        b = sample_batch(ds, SamplerConfig(3, 4), np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)


class TestSplit:
    def test_per_class_holdout(self):
        ds = synth_clusters(SynthConfig(4, 10, 3, seed=9))
        train, heldout = train_eval_split(ds, 2)
        assert len(train) == 32 and len(heldout) == 8
        for c in range(4):
            assert train.class_index[c].size == 8
            assert heldout.class_index[c].size == 2

    def test_rejects_oversized_holdout(self):
        ds = synth_clusters(SynthConfig(2, 3, 2, seed=10))
        with pytest.raises(ConfigError):
            train_eval_split(ds, 3)
