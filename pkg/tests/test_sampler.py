import numpy as np
import pytest

from halotrain.plan import build_plan
from halotrain.sampler import (boundary_edge_mask, drop_edge_global, halo_from_edges, sample_boundary,
                               sample_boundary_edges, sample_drop_edge, sample_partition_boundary)
from halotrain.types import SamplerKind
from tests.graph_fixtures import path4, path4_halves, random_assignment, random_graph, star6, star6_split


@pytest.fixture
def path_plan():
    return build_plan(path4(), path4_halves())


@pytest.fixture
def star_plan():
    return build_plan(star6(), star6_split())


class TestSampleBoundary:
    def test_keep_all(self, path_plan):
        sample = sample_boundary(path_plan, 1.0, epoch=0, seed=0)
        assert [u.tolist() for u in sample.selected] == [[2], [1]]
        assert sample.send[0][1].tolist() == [1]
        assert sample.send[1][0].tolist() == [2]
        assert sample.recv_set(0, 1).tolist() == [2]
        assert sample.rows == 2

    def test_keep_none(self, star_plan):
        sample = sample_boundary(star_plan, 0.0, epoch=3, seed=0)
        assert sample.rows == 0
        assert all(len(s) == 0 for row in sample.send for s in row)

    def test_send_lists_partition_selection(self):
        rng = np.random.default_rng(0)
        graph = random_graph(60, 150, rng)
        plan = build_plan(graph, random_assignment(60, 4, rng))
        sample = sample_boundary(plan, 0.4, epoch=1, seed=9)
        for j in range(4):
            assert set(sample.selected[j]) <= set(plan.boundary[j])
            union = np.sort(np.concatenate([sample.send[i][j] for i in range(4)]))
            assert np.array_equal(union, sample.selected[j])
            for i in range(4):
                assert np.isin(sample.send[i][j], plan.inner[i]).all()

    def test_deterministic(self, star_plan):
        a = sample_boundary(star_plan, 0.5, epoch=7, seed=3)
        b = sample_boundary(star_plan, 0.5, epoch=7, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a.selected, b.selected))

    def test_partition_local_matches_global(self, star_plan):
        sample = sample_boundary(star_plan, 0.5, epoch=4, seed=1)
        for part in range(2):
            local = sample_partition_boundary(star_plan, part, 0.5, epoch=4, seed=1)
            assert np.array_equal(local, sample.selected[part])

    def test_mean_size(self, star_plan):
        sizes = np.array([len(sample_boundary(star_plan, 0.5, e, seed=0).selected[0]) for e in range(10_000)])
        assert abs(sizes.mean() - 2.5) <= 3 * np.sqrt(5 * 0.25) / 100

    def test_coupled_rates_nested(self, star_plan):
        for epoch in range(50):
            low = set(sample_boundary(star_plan, 0.3, epoch, seed=2).selected[0])
            high = set(sample_boundary(star_plan, 0.7, epoch, seed=2).selected[0])
            assert low <= high

    def test_epochs_uncorrelated(self, star_plan):
        member = np.array([2 in sample_boundary(star_plan, 0.5, e, seed=4).selected[0] for e in range(10_000)],
                          dtype=float)
        r = np.corrcoef(member[:-1], member[1:])[0, 1]
        assert abs(r) < 0.05

    def test_rate_range(self, star_plan):
        with pytest.raises(ValueError):
            sample_boundary(star_plan, 1.5, 0, 0)


class TestEdgeSamplers:
    def test_bes_full_rate_matches_bns(self, star_plan):
        graph = star6()
        bes = sample_boundary_edges(graph, star_plan, 1.0, epoch=0, seed=0)
        bns = sample_boundary(star_plan, 1.0, epoch=0, seed=0)
        assert all(np.array_equal(a, b) for a, b in zip(bes.selected, bns.selected))
        assert bes.kind is SamplerKind.BES

    def test_bes_zero_rate(self, star_plan):
        sample = sample_boundary_edges(star6(), star_plan, 0.0, epoch=0, seed=0)
        assert sample.rows == 0

    def test_bes_keeps_inner_edges(self):
        rng = np.random.default_rng(3)
        graph = random_graph(40, 100, rng)
        plan = build_plan(graph, random_assignment(40, 3, rng))
        mask = boundary_edge_mask(graph, plan, 0.0, epoch=0, seed=0)
        inner = plan.owner[graph.entry_rows] == plan.owner[graph.csr_targets]
        assert np.array_equal(mask.keep, inner)

    def test_edges_dropped_symmetrically(self):
        graph = random_graph(30, 90, np.random.default_rng(4))
        mask = drop_edge_global(graph, 0.5, epoch=2, seed=0)
        adj = mask.adjacency(graph)
        assert (adj != adj.T).nnz == 0

    def test_star_center_probability(self, star_plan):
        graph = star6()
        hits = np.mean([0 in sample_boundary_edges(graph, star_plan, 0.5, e, seed=0).selected[1]
                        for e in range(10_000)])
        expected = 1 - 0.5 ** 5
        assert abs(hits - expected) <= 3 * np.sqrt(expected * (1 - expected) / 10_000)

    def test_drop_edge_extremes(self):
        graph = random_graph(20, 50, np.random.default_rng(5))
        assert drop_edge_global(graph, 1.0, 0, 0).num_kept_entries == len(graph.csr_targets)
        assert drop_edge_global(graph, 0.0, 0, 0).num_kept_entries == 0

    def test_reweighting(self):
        graph = random_graph(20, 50, np.random.default_rng(6))
        mask = drop_edge_global(graph, 0.25, 0, 0)
        assert np.all(mask.weight == 4.0)

    def test_halo_from_edges(self, path_plan):
        graph = path4()
        keep = np.ones(len(graph.csr_targets), dtype=bool)
        assert halo_from_edges(graph, path_plan, keep, 0).tolist() == [2]
        assert halo_from_edges(graph, path_plan, ~keep, 0).tolist() == []

    def test_drop_edge_plan(self, star_plan):
        sample = sample_drop_edge(star6(), star_plan, 1.0, epoch=0, seed=0)
        assert sample.rows == 6
        assert sample.kind is SamplerKind.DROPEDGE
