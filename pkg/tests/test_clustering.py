import numpy as np
import pytest

from flowseg.clustering import (
    HdbscanParams,
    core_distances,
    extract_clusters,
    hdbscan,
    mutual_reachability_mst,
)
from flowseg.errors import TooFewPoints


def kruskal_mst_weight(weights: np.ndarray) -> float:
    """Brute-force MST total weight oracle."""
    n = weights.shape[0]
    edges = sorted((weights[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total, count = 0.0, 0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += w
            count += 1
    assert count == n - 1
    return total


def mreach_matrix(points: np.ndarray, core: np.ndarray) -> np.ndarray:
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    return np.maximum(d, np.maximum(core[:, None], core[None, :]))


def two_blobs(rng, n_per=20, spread=0.1, separation=10.0, d=2):
    a = rng.normal(0, spread, (n_per, d))
    b = rng.normal(0, spread, (n_per, d))
    b[:, 0] += separation
    return np.vstack([a, b])


class TestCoreDistances:
    def test_collinear_points(self):
        pts = np.array([[0.0], [1.0], [2.0]])
        assert core_distances(pts, 1).tolist() == [1.0, 1.0, 1.0]

    def test_min_samples_n_minus_1_is_farthest(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(0, 1, (10, 3))
        cd = core_distances(pts, 9)
        d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(2))
        assert cd == pytest.approx(d.max(axis=1))

    def test_matches_brute_force_knn(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(0, 1, (50, 2))
        cd = core_distances(pts, 7)
        d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(2))
        brute = np.sort(d, axis=1)[:, 7]  # sorted row includes self at index 0
        assert cd == pytest.approx(brute, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            core_distances(np.zeros((3, 2)), 3)


class TestMst:
    def test_two_points(self):
        pts = np.array([[0.0, 0.0], [3.0, 4.0]])
        core = np.array([6.0, 1.0])
        mst = mutual_reachability_mst(pts, core)
        assert mst.shape == (1, 3)
        assert mst[0, 2] == pytest.approx(max(6.0, 1.0, 5.0))

    def test_total_weight_matches_kruskal(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            n = int(rng.integers(2, 13))
            pts = rng.normal(0, 1, (n, 2))
            core = core_distances(pts, min(2, n - 1))
            mst = mutual_reachability_mst(pts, core)
            oracle = kruskal_mst_weight(mreach_matrix(pts, core))
            assert mst[:, 2].sum() == pytest.approx(oracle, abs=1e-9)

    def test_duplicates_dominated_by_core(self):
        pts = np.vstack([np.zeros((5, 2)), np.ones((5, 2))])
        core = core_distances(pts, 3)
        mst = mutual_reachability_mst(pts, core)
        for a, b, w in mst:
            assert w >= core[int(a)] - 1e-15 and w >= core[int(b)] - 1e-15


class TestExtractClusters:
    def test_two_blob_fixture(self):
        rng = np.random.default_rng(3)
        pts = two_blobs(rng)
        result = hdbscan(pts, HdbscanParams(min_cluster_size=5, min_samples=3))
        assert result.n_clusters == 2
        assert (result.labels >= 0).all()
        assert len(set(result.labels[:20])) == 1
        assert len(set(result.labels[20:])) == 1
        assert result.labels[0] != result.labels[20]

    def test_matches_sklearn_reference_on_blobs(self):
        sklearn_cluster = pytest.importorskip("sklearn.cluster")
        rng = np.random.default_rng(4)
        for seed in range(5):
            pts = two_blobs(np.random.default_rng(seed), n_per=25, spread=0.2, separation=8.0)
            ours = hdbscan(pts, HdbscanParams(min_cluster_size=6, min_samples=4))
            ref = sklearn_cluster.HDBSCAN(min_cluster_size=6, min_samples=4).fit(pts)
            # Same partition up to label permutation, no noise on either side.
            assert (ours.labels >= 0).all() and (ref.labels_ >= 0).all()
            pairs = {(int(a), int(b)) for a, b in zip(ours.labels, ref.labels_)}
            assert len(pairs) == 2

    def test_fewer_points_than_min_cluster_size_all_noise(self):
        rng = np.random.default_rng(5)
        result = hdbscan(rng.normal(0, 1, (4, 2)), HdbscanParams(min_cluster_size=5, min_samples=2))
        assert (result.labels == -1).all()
        assert result.n_clusters == 0

    def test_identical_points_one_cluster(self):
        result = hdbscan(np.zeros((12, 3)), HdbscanParams(min_cluster_size=5, min_samples=3))
        assert result.n_clusters == 1
        assert (result.labels == 0).all()

    def test_deterministic_given_order(self):
        rng = np.random.default_rng(6)
        pts = two_blobs(rng, n_per=15)
        a = hdbscan(pts, HdbscanParams(5, 3))
        b = hdbscan(pts, HdbscanParams(5, 3))
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.stabilities, b.stabilities)

    def test_scale_invariance_of_labels(self):
        rng = np.random.default_rng(7)
        pts = two_blobs(rng, n_per=18, spread=0.3, separation=12.0)
        base = hdbscan(pts, HdbscanParams(5, 3))
        scaled = hdbscan(pts * 37.5, HdbscanParams(5, 3))
        assert np.array_equal(base.labels, scaled.labels)

    def test_separated_components_recovered_exactly(self):
        # Two components farther apart than any intra-component mutual
        # reachability distance must come back exactly.
        rng = np.random.default_rng(8)
        a = rng.uniform(0, 1, (12, 2))
        b = rng.uniform(0, 1, (15, 2)) + 100.0
        pts = np.vstack([a, b])
        params = HdbscanParams(min_cluster_size=6, min_samples=3)
        core = core_distances(pts, params.min_samples)
        mst = mutual_reachability_mst(pts, core)
        result = extract_clusters(mst, params.min_cluster_size)
        assert result.n_clusters == 2
        assert len(set(result.labels[:12])) == 1
        assert len(set(result.labels[12:])) == 1

    def test_stabilities_nonnegative(self):
        rng = np.random.default_rng(9)
        result = hdbscan(two_blobs(rng), HdbscanParams(5, 3))
        assert (result.stabilities >= 0).all()
