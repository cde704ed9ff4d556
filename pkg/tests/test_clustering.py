import numpy as np
import pytest

from ris_codebook import (
    ClusterSpec,
    PhaseGrid,
    SurfaceGeometry,
    SyntheticScenario,
    cluster_users,
    gain,
    generate_scenario,
    power_features,
    sensing_codebook,
)
from ris_codebook.clustering import load_assignment, save_assignment
from ris_codebook.errors import ConfigurationError


def two_cluster_dataset(seed=0, users_per=5):
    spec = SyntheticScenario(
        geometry=SurfaceGeometry.ula(16),
        clusters=(
            ClusterSpec(center_aoa=-0.9, angular_spread=0.01, num_users=users_per, num_paths=3),
            ClusterSpec(center_aoa=0.8, angular_spread=0.01, num_users=users_per, num_paths=3),
        ),
        seed=seed,
    )
    return generate_scenario(spec)


class TestSensingCodebook:
    def test_deterministic(self):
        g = PhaseGrid(3)
        a = sensing_codebook(8, 16, g, seed=4)
        b = sensing_codebook(8, 16, g, seed=4)
        assert np.array_equal(a.indices, b.indices)

    def test_single_beam_single_element(self):
        g = PhaseGrid(2)
        cb = sensing_codebook(1, 1, g, seed=0)
        assert cb.indices.shape == (1, 1)

    def test_mean_gain_concentrates_near_channel_power(self):
        # random beams harvest ~|c|^2/M on average over many beams
        g = PhaseGrid(3)
        rng = np.random.default_rng(5)
        m = 64
        c = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
        cb = sensing_codebook(m, 4000, g, seed=1)
        gains = [gain(c, beam) for beam in cb.beams]
        expected = np.abs(c) ** 2
        assert np.mean(gains) == pytest.approx(expected.sum() / m, rel=0.1)


class TestPowerFeatures:
    def test_identical_users_identical_rows(self):
        g = PhaseGrid(2)
        rng = np.random.default_rng(6)
        c = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        users = np.vstack([c, c])
        sensing = sensing_codebook(8, 10, g, seed=2)
        feats = power_features(users, sensing)
        assert np.array_equal(feats[0], feats[1])

    def test_zero_channel_zero_row(self):
        g = PhaseGrid(2)
        users = np.zeros((1, 4), dtype=complex)
        sensing = sensing_codebook(4, 6, g, seed=3)
        assert np.array_equal(power_features(users, sensing), np.zeros((1, 6)))

    def test_entries_match_gain(self):
        g = PhaseGrid(3)
        rng = np.random.default_rng(7)
        c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        sensing = sensing_codebook(6, 5, g, seed=4)
        feats = power_features(c[None, :], sensing)
        for s, beam in enumerate(sensing.beams):
            assert feats[0, s] == pytest.approx(gain(c, beam), rel=1e-12)

    def test_noise_is_multiplicative_and_seeded(self):
        g = PhaseGrid(2)
        rng = np.random.default_rng(8)
        users = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        sensing = sensing_codebook(4, 8, g, seed=5)
        clean = power_features(users, sensing)
        noisy1 = power_features(users, sensing, 0.1, np.random.default_rng(9))
        noisy2 = power_features(users, sensing, 0.1, np.random.default_rng(9))
        assert np.array_equal(noisy1, noisy2)
        assert np.all(noisy1 > 0)
        assert not np.array_equal(noisy1, clean)


class TestClusterUsers:
    def test_singleton_clusters(self):
        rng = np.random.default_rng(10)
        feats = rng.uniform(0.1, 1.0, (4, 6))
        out = cluster_users(feats, 4, seed=0)
        assert sorted(out.labels.tolist()) == [0, 1, 2, 3]

    def test_recovers_ground_truth_grouping(self):
        dataset = two_cluster_dataset(seed=3)
        g = PhaseGrid(3)
        sensing = sensing_codebook(16, 32, g, seed=6)
        feats = power_features(dataset.matrix(), sensing)
        out = cluster_users(feats, 2, seed=1)
        truth = dataset.cluster_labels
        same = np.array_equal(out.labels, truth)
        flipped = np.array_equal(out.labels, 1 - truth)
        assert same or flipped

    def test_duplicates_land_together(self):
        rng = np.random.default_rng(11)
        row_a = rng.uniform(0.1, 1.0, 8)
        row_b = rng.uniform(0.1, 1.0, 8) * 3.0
        feats = np.vstack([row_a, row_a, row_b, row_b])
        out = cluster_users(feats, 2, seed=2)
        assert out.labels[0] == out.labels[1]
        assert out.labels[2] == out.labels[3]

    def test_invariant_to_per_user_power_scaling(self):
        rng = np.random.default_rng(12)
        feats = rng.uniform(0.1, 1.0, (10, 6))
        scales = rng.uniform(0.5, 20.0, 10)[:, None]
        a = cluster_users(feats, 3, seed=3)
        b = cluster_users(feats * scales, 3, seed=3)
        assert np.array_equal(a.labels, b.labels)

    def test_wcss_non_increasing(self):
        rng = np.random.default_rng(13)
        feats = rng.uniform(0.0, 1.0, (40, 5))
        out = cluster_users(feats, 4, seed=4)
        hist = np.asarray(out.wcss_history)
        assert np.all(np.diff(hist) <= 1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        feats = rng.uniform(0.0, 1.0, (20, 5))
        a = cluster_users(feats, 3, seed=5)
        b = cluster_users(feats, 3, seed=5)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)

    def test_too_many_clusters_rejected(self):
        with pytest.raises(ConfigurationError):
            cluster_users(np.ones((3, 4)), 5, seed=0)


def test_assignment_roundtrip(tmp_path):
    rng = np.random.default_rng(15)
    feats = rng.uniform(0.0, 1.0, (12, 4))
    out = cluster_users(feats, 3, seed=6)
    csv_path = tmp_path / "assignment.csv"
    save_assignment(csv_path, out, tmp_path / "centroids.json", config_hash="deadbeef")
    labels = load_assignment(csv_path)
    assert np.array_equal(labels, out.labels)
    text = csv_path.read_text()
    assert text.startswith("# config_hash=deadbeef")
    # ids are 1-based on disk
    first_row = text.splitlines()[2]
    assert first_row.startswith("1,")
