import numpy as np
import pytest

from Step1_Topology_Clustering.clustering import (Candidate, ClusterAssignment, GridPartition,
                                                  assign_members, clusters_from_dodag, collect_hello,
                                                  elect_cluster_head, elect_heads, election_scores,
                                                  needs_rotation, reachable_from_root, rotate_cluster_head,
                                                  shortlist_candidates)
from Step1_Topology_Clustering.core_model import Position, SimConfig, build_topology
from Step1_Topology_Clustering.dodag import build_dodag
from tests.conftest import make_thing


def _cross():
    # four things exactly 20 m from the root
    return [make_thing(0, 50.0, 50.0), make_thing(1, 70.0, 50.0), make_thing(2, 30.0, 50.0),
            make_thing(3, 50.0, 70.0), make_thing(4, 50.0, 30.0)]


def test_hello_round_skips_dead_and_flags_unreachable(thing):
    nodes = [thing(0, 0, 0), thing(1, 10, 0), thing(2, 100, 0), thing(3, 5, 0, consumed=0.5)]
    ledger = collect_hello(nodes, SimConfig(tx_range=60.0))
    assert set(ledger.entries) == {1}
    assert ledger.unreachable == frozenset({2})
    assert set(ledger.debits) == {1, 2}
    assert ledger.entries[1].e_residual == 0.5


def test_reachability_goes_through_relays(line_nodes):
    assert reachable_from_root(line_nodes, 12.0) == frozenset(range(5))
    assert reachable_from_root(line_nodes, 12.0, excluded=[2]) == frozenset({0, 1})


def test_equal_energies_shortlist_lowest_ids():
    nodes = _cross()
    ledger = collect_hello(nodes, SimConfig(n_nodes=5, area_width=100.0, area_height=100.0))
    shortlist = shortlist_candidates(ledger, GridPartition(1, 100.0, 100.0), 3)
    assert [c.node for c in shortlist[0]] == [1, 2, 3]


def test_shortlist_keeps_the_highest_energies():
    nodes = [make_thing(0, 50.0, 50.0)]
    nodes += [make_thing(i, 50.0 + i, 40.0, consumed=0.01 * (10 - i)) for i in range(1, 11)]
    ledger = collect_hello(nodes, SimConfig(n_nodes=11, area_width=100.0, area_height=100.0))
    shortlist = shortlist_candidates(ledger, GridPartition(1, 100.0, 100.0), 3)
    assert [c.node for c in shortlist[0]] == [10, 9, 8]


def test_lone_thing_is_the_only_candidate():
    nodes = [make_thing(0, 50.0, 50.0), make_thing(1, 10.0, 10.0), make_thing(2, 90.0, 90.0)]
    ledger = collect_hello(nodes, SimConfig(n_nodes=3, area_width=100.0, area_height=100.0))
    shortlist = shortlist_candidates(ledger, GridPartition(2, 100.0, 100.0), 3)
    assert {cell: [c.node for c in cands] for cell, cands in shortlist.items()} == {0: [1], 3: [2]}


def test_shortlist_of_empty_ledger_fails():
    ledger = collect_hello([make_thing(0, 0, 0), make_thing(1, 500, 500)], SimConfig())
    with pytest.raises(ValueError):
        shortlist_candidates(ledger, GridPartition(1, 300.0, 300.0), 3)


def test_election_by_hand():
    cands = [Candidate(1, 1.0, 30.0, -40.0), Candidate(2, 0.8, 50.0, -35.0), Candidate(3, 0.9, 20.0, -45.0)]
    scores = election_scores(cands)
    assert list(scores) == pytest.approx([0.3889, 0.0, 0.1667], abs=1e-4)
    assert elect_cluster_head(cands) == 1


def test_single_candidate_is_elected():
    assert elect_cluster_head([Candidate(7, 0.1, 0.0, -60.0)]) == 7


def test_identical_candidates_tie_to_lowest_id():
    assert elect_cluster_head([Candidate(9, 0.5, 10.0, -50.0), Candidate(4, 0.5, 10.0, -50.0)]) == 4


def test_empty_candidate_list_fails():
    with pytest.raises(ValueError):
        elect_cluster_head([])


def test_dominant_candidate_wins_under_any_weights():
    rng = np.random.default_rng(0)
    for _ in range(300):
        k = int(rng.integers(1, 6))
        cands = [Candidate(i + 2, float(rng.uniform(0.1, 0.5)), float(rng.uniform(10, 100)),
                           float(rng.uniform(-80, -40))) for i in range(k)]
        best = Candidate(1, 0.6, 5.0, -30.0)
        cands.insert(int(rng.integers(0, k + 1)), best)
        weights = tuple(rng.uniform(0.01, 1.0, size=3))
        assert elect_cluster_head(cands, weights) == 1


def test_election_is_scale_invariant_in_energy():
    rng = np.random.default_rng(1)
    for _ in range(200):
        cands = [Candidate(i, float(rng.uniform(0.1, 0.5)), float(rng.uniform(10, 100)),
                           float(rng.uniform(-80, -40))) for i in range(1, 6)]
        scale = 2.0 ** int(rng.integers(-4, 5))
        scaled = [Candidate(c.node, c.e_residual * scale, c.sum_distance, c.mean_rssi) for c in cands]
        assert elect_cluster_head(scaled) == elect_cluster_head(cands)


def test_grid_cells_are_row_major_and_clamped():
    grid = GridPartition(2, 100.0, 100.0)
    assert grid.cells == 4
    assert grid.cell_of(Position(10, 10)) == 0
    assert grid.cell_of(Position(90, 10)) == 1
    assert grid.cell_of(Position(10, 90)) == 2
    assert grid.cell_of(Position(100, 100)) == 3


def test_grid_size_follows_density():
    assert GridPartition.from_config(SimConfig(n_nodes=100)).g == 2
    assert GridPartition.from_config(SimConfig(n_nodes=500)).g == 5
    assert GridPartition.from_config(SimConfig(n_nodes=5)).g == 1
    assert GridPartition.from_config(SimConfig(grid_size=3)).g == 3


def test_clusters_partition_the_reachable_things():
    cfg = SimConfig(n_nodes=100, rng_seed=2)
    nodes = build_topology(cfg)
    ledger = collect_hello(nodes, cfg)
    heads = elect_heads(ledger, cfg)
    clusters = assign_members(heads, ledger, GridPartition.from_config(cfg))
    covered = [c.head for c in clusters] + [m for c in clusters for m in c.members]
    assert len(covered) == len(set(covered))
    assert set(covered) == set(ledger.entries)
    assert 1 <= len(heads) <= GridPartition.from_config(cfg).cells


def _states(*things):
    return {t.node_id: t for t in things}


def test_head_above_floor_keeps_its_role():
    cluster = ClusterAssignment(1, frozenset({2, 3}))
    states = _states(make_thing(1, 0, 0, consumed=0.1), make_thing(2, 5, 0), make_thing(3, 0, 5))
    assert not needs_rotation(cluster, states, SimConfig())
    assert rotate_cluster_head(cluster, states, SimConfig()) is cluster


def test_low_head_hands_over_to_the_richest_member():
    cluster = ClusterAssignment(1, frozenset({2, 3}), area_index=2)
    states = _states(make_thing(1, 0, 0, consumed=0.475),
                     make_thing(2, 5, 0, consumed=0.2), make_thing(3, 0, 5, consumed=0.1))
    rotated = rotate_cluster_head(cluster, states, SimConfig())
    assert rotated == ClusterAssignment(3, frozenset({1, 2}), area_index=2)


def test_dead_head_hands_over_to_its_last_member():
    cluster = ClusterAssignment(1, frozenset({2}))
    states = _states(make_thing(1, 0, 0, consumed=0.5), make_thing(2, 5, 0, consumed=0.3))
    assert rotate_cluster_head(cluster, states, SimConfig()) == ClusterAssignment(2, frozenset())


def test_rotation_skips_detained_members():
    cluster = ClusterAssignment(1, frozenset({2, 3}))
    states = _states(make_thing(1, 0, 0, consumed=0.49),
                     make_thing(2, 5, 0, consumed=0.2), make_thing(3, 0, 5, consumed=0.1))
    rotated = rotate_cluster_head(cluster, states, SimConfig(), ineligible=frozenset({3}))
    assert rotated.head == 2


def test_rotation_prefers_lower_rank_on_equal_energy():
    cluster = ClusterAssignment(1, frozenset({2, 3}))
    states = _states(make_thing(1, 0, 0, consumed=0.49),
                     make_thing(2, 5, 0, rank=3), make_thing(3, 0, 5, rank=2))
    assert rotate_cluster_head(cluster, states, SimConfig()).head == 3


def test_cluster_without_live_things_dissolves():
    cluster = ClusterAssignment(1, frozenset({2}))
    states = _states(make_thing(1, 0, 0, consumed=0.5), make_thing(2, 5, 0, consumed=0.5))
    assert rotate_cluster_head(cluster, states, SimConfig()) is None


def test_head_cannot_be_its_own_member():
    with pytest.raises(ValueError):
        ClusterAssignment(1, frozenset({1, 2}))


def test_clusters_follow_the_dodag(line_nodes):
    dodag = build_dodag([1], line_nodes, 12.0)
    clusters = clusters_from_dodag(dodag, {1: 0})
    assert clusters == [ClusterAssignment(1, frozenset({2, 3, 4}), 0)]
