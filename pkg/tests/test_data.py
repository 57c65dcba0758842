import numpy as np
import pytest

from halotrain.data import SbmSpec, generate_sbm, load_dataset, save_dataset
from halotrain.errors import DatasetError
from halotrain.plan import edge_cut
from halotrain.partition import Assignment
from tests.graph_fixtures import small_sbm


@pytest.fixture
def dataset_dir(tmp_path):
    save_dataset(small_sbm(size=20, dim=3), tmp_path)
    return tmp_path


class TestGenerateSbm:
    def test_disjoint_cliques(self):
        graph = generate_sbm(SbmSpec(blocks=2, nodes_per_block=3, p_in=1.0, p_out=0.0, feature_dim=2))
        assert graph.num_edges == 6
        assert graph.labels.tolist() == [0, 0, 0, 1, 1, 1]
        assert edge_cut(graph, Assignment(graph.labels, 2)) == 0

    def test_expected_edge_count(self):
        spec = SbmSpec(blocks=2, nodes_per_block=200, p_in=0.05, p_out=0.005)
        graph = generate_sbm(spec, seed=4)
        within_pairs = 2 * 200 * 199 / 2
        cross_pairs = 200 * 200
        sigma = np.sqrt(within_pairs * 0.05 * 0.95 + cross_pairs * 0.005 * 0.995)
        assert spec.expected_edges() == pytest.approx(2190.0)
        assert abs(graph.num_edges - spec.expected_edges()) <= 3 * sigma

    def test_split_sizes(self):
        graph = generate_sbm(SbmSpec(blocks=2, nodes_per_block=50))
        assert [int(m.sum()) for m in (graph.train_mask, graph.val_mask, graph.test_mask)] == [60, 20, 20]
        assert np.all(graph.train_mask | graph.val_mask | graph.test_mask)

    def test_deterministic(self):
        a, b = small_sbm(seed=3), small_sbm(seed=3)
        assert np.array_equal(a.edges(), b.edges())
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.features, small_sbm(seed=4).features)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SbmSpec(train_frac=0.5, val_frac=0.2, test_frac=0.2)

    def test_features_separate_blocks(self):
        graph = small_sbm(blocks=2, size=300, dim=4, mean_scale=3.0)
        means = [graph.features[graph.labels == k].mean(axis=0) for k in range(2)]
        assert np.linalg.norm(means[0] - means[1]) > 1.0


class TestDatasetFiles:
    def test_round_trip(self, dataset_dir):
        original = small_sbm(size=20, dim=3)
        loaded = load_dataset(dataset_dir)
        assert np.array_equal(loaded.edges(), original.edges())
        assert np.array_equal(loaded.features, original.features)
        assert np.array_equal(loaded.labels, original.labels)
        assert np.array_equal(loaded.val_mask, original.val_mask)

    def test_malformed_edge_line(self, dataset_dir):
        (dataset_dir / "edges.tsv").write_text("0\t1\n0 1 2\n")
        with pytest.raises(DatasetError, match="edges.tsv:2"):
            load_dataset(dataset_dir)

    def test_non_integer_node(self, dataset_dir):
        (dataset_dir / "edges.tsv").write_text("0\tx\n")
        with pytest.raises(DatasetError, match="non-integer"):
            load_dataset(dataset_dir)

    def test_edge_out_of_range(self, dataset_dir):
        (dataset_dir / "edges.tsv").write_text("0\t400\n")
        with pytest.raises(DatasetError, match="out of range"):
            load_dataset(dataset_dir)

    def test_label_count(self, dataset_dir):
        (dataset_dir / "labels.txt").write_text("0\n1\n")
        with pytest.raises(DatasetError, match="2 labels for 40 nodes"):
            load_dataset(dataset_dir)

    def test_extra_label_field(self, dataset_dir):
        lines = (dataset_dir / "labels.txt").read_text().splitlines()
        lines[2] = "0 1"
        (dataset_dir / "labels.txt").write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="labels.txt:3: expected one label"):
            load_dataset(dataset_dir)

    def test_extra_split_field(self, dataset_dir):
        lines = (dataset_dir / "split.txt").read_text().splitlines()
        lines[0] = "train val"
        (dataset_dir / "split.txt").write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="split.txt:1: expected one split name"):
            load_dataset(dataset_dir)

    def test_unknown_split(self, dataset_dir):
        lines = (dataset_dir / "split.txt").read_text().splitlines()
        lines[5] = "holdout"
        (dataset_dir / "split.txt").write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="split.txt:6"):
            load_dataset(dataset_dir)

    def test_missing_file(self, dataset_dir):
        (dataset_dir / "labels.txt").unlink()
        with pytest.raises(DatasetError, match="missing labels.txt"):
            load_dataset(dataset_dir)

    def test_non_numeric_features(self, dataset_dir):
        (dataset_dir / "features.csv").write_text("a,b,c\n" * 40)
        with pytest.raises(DatasetError, match="non-numeric"):
            load_dataset(dataset_dir)
