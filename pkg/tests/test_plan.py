import numpy as np
import pytest

from halotrain.partition import Assignment, partition_random
from halotrain.plan import (boundary_inner_ratios, build_plan, comm_volume, edge_cut, edgewise_volume,
                            layer_memory_scalars, memory_estimate)
from tests.graph_fixtures import path4, path4_halves, random_assignment, random_graph, star6, star6_split


@pytest.fixture
def path_plan():
    return build_plan(path4(), path4_halves())


class TestBuildPlan:
    def test_path(self, path_plan):
        assert [b.tolist() for b in path_plan.boundary] == [[2], [1]]
        assert path_plan.demand[0][1].tolist() == [2]
        assert path_plan.demand[1][0].tolist() == [1]
        assert path_plan.send_set(0, 1).tolist() == [1]

    def test_single_partition(self):
        plan = build_plan(path4(), Assignment(np.zeros(4, dtype=int), 1))
        assert plan.boundary_sizes.tolist() == [0]

    def test_star(self):
        plan = build_plan(star6(), star6_split())
        assert plan.boundary[0].tolist() == [1, 2, 3, 4, 5]
        assert plan.boundary[1].tolist() == [0]

    def test_invariants_on_random_graphs(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            graph = random_graph(40, 80, rng)
            assignment = random_assignment(40, 4, rng)
            plan = build_plan(graph, assignment)
            for i in range(plan.num_parts):
                b = plan.boundary[i]
                assert not np.isin(b, plan.inner[i]).any()
                for node in b:
                    assert np.isin(graph.neighbors(node), plan.inner[i]).any()
                demand = np.concatenate(plan.demand[i])
                assert np.array_equal(np.sort(demand), b)
                assert len(np.unique(demand)) == len(demand)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            build_plan(path4(), Assignment(np.array([0, 1]), 2))


class TestCommVolume:
    def test_path(self, path_plan):
        volume = comm_volume(path_plan)
        assert volume.total == 2
        assert volume.per_partition == [1, 1]

    def test_single_partition(self):
        assert comm_volume(build_plan(path4(), Assignment(np.zeros(4, dtype=int), 1))).total == 0

    def test_star(self):
        volume = comm_volume(build_plan(star6(), star6_split()))
        assert volume.total == 6
        assert sum(volume.per_partition) == 6

    def test_boundary_sets_match_edgewise_count(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(5, 60))
            graph = random_graph(n, int(rng.integers(0, 3 * n)), rng)
            assignment = random_assignment(n, int(rng.integers(1, min(n, 6) + 1)), rng)
            plan = build_plan(graph, assignment)
            volume = comm_volume(plan)
            assert volume.total == edgewise_volume(graph, assignment)
            assert sum(volume.per_partition) == volume.total

    def test_refinement_never_decreases_volume(self):
        rng = np.random.default_rng(2)
        graph = random_graph(50, 120, rng)
        coarse = partition_random(graph, 2, seed=0)
        fine_parts = coarse.part_of.copy()
        members = coarse.members(1)
        fine_parts[members[: len(members) // 2]] = 2
        fine = Assignment(fine_parts, 3)
        assert comm_volume(build_plan(graph, fine)).total >= comm_volume(build_plan(graph, coarse)).total

    def test_edge_cut(self):
        assert edge_cut(path4(), path4_halves()) == 1
        assert edge_cut(star6(), star6_split()) == 5


class TestMemoryEstimate:
    def test_reference_counts(self):
        assert layer_memory_scalars(15000, 86000, 256) == 33_536_000

    def test_no_boundary(self):
        assert layer_memory_scalars(10, 0, 1) == 30

    def test_path_plan(self, path_plan):
        estimate = memory_estimate(path_plan, [4])
        assert estimate.per_layer[0].tolist() == [28.0]
        assert estimate.total == 56.0
        assert estimate.imbalance == 1.0

    def test_sampling_rate_scales_boundary(self, path_plan):
        estimate = memory_estimate(path_plan, [4, 2], p=0.5)
        assert estimate.per_layer[0].tolist() == [(6 + 0.5) * 4, (6 + 0.5) * 2]

    def test_non_positive_dims(self, path_plan):
        with pytest.raises(ValueError):
            memory_estimate(path_plan, [4, 0])

    def test_to_dict(self, path_plan):
        result = memory_estimate(path_plan, [4]).to_dict()
        assert result["max"] == 28.0
        assert result["per_partition"] == [28.0, 28.0]


class TestRatios:
    def test_path(self, path_plan):
        stats = boundary_inner_ratios(path_plan)
        assert stats.ratios == [0.5, 0.5]
        assert stats.max == stats.min == 0.5

    def test_single_partition(self):
        stats = boundary_inner_ratios(build_plan(path4(), Assignment(np.zeros(4, dtype=int), 1)))
        assert stats.ratios == [0.0]

    def test_straggler(self):
        stats = boundary_inner_ratios(build_plan(star6(), star6_split()))
        assert stats.ratios == [5.0, 0.2]
        assert stats.straggler == 0
