import json

import numpy as np
import pytest

from ppcm.errors import DisconnectedTopology, ShapeMismatch
from ppcm.graph import (
    Topology,
    WeightedGraph,
    adjacency_uniform,
    algebraic_connectivity,
    apply_A,
    build_topology,
    laplacian,
)


def edge_set(t):
    return {frozenset(e) for e in t.edges}


def test_complete_two_nodes():
    assert edge_set(build_topology("complete", 2, seed=9)) == {frozenset((0, 1))}


def test_ring_four():
    t = build_topology("ring", 4)
    assert edge_set(t) == {frozenset(e) for e in [(0, 1), (1, 2), (2, 3), (3, 0)]}


def test_star_five():
    t = build_topology("star", 5)
    assert len(t.edges) == 4
    assert all(0 in e for e in t.edges)
    assert algebraic_connectivity(laplacian(adjacency_uniform(t))) > 0


def test_erdos_renyi_is_deterministic_and_connected():
    a = build_topology("erdos_renyi", 20, seed=11, prob=0.2)
    b = build_topology("erdos_renyi", 20, seed=11, prob=0.2)
    assert a.edges == b.edges
    assert a.is_connected()


def test_erdos_renyi_gives_up_when_always_disconnected():
    with pytest.raises(DisconnectedTopology):
        build_topology("erdos_renyi", 40, seed=0, prob=1e-4)


def test_topology_rejects_self_loops():
    with pytest.raises(ValueError):
        Topology(3, ((0, 0),))


def test_uniform_weights():
    W = adjacency_uniform(build_topology("complete", 2)).weights
    assert W[0, 1] == W[1, 0] == 0.25
    W4 = adjacency_uniform(build_topology("complete", 4)).weights
    off = W4[~np.eye(4, dtype=bool)]
    assert np.all(off == 1 / 8)
    Wr = adjacency_uniform(build_topology("ring", 4)).weights
    assert np.count_nonzero(Wr) == 8 and set(Wr[Wr > 0]) == {1 / 8}


def test_weights_must_match_edges():
    t = build_topology("ring", 4)
    with pytest.raises(ValueError):
        WeightedGraph(t, np.ones((4, 4)) - np.eye(4))


def test_laplacian_two_nodes():
    L = laplacian(adjacency_uniform(build_topology("complete", 2)))
    np.testing.assert_array_equal(L.entries, [[0.25, -0.25], [-0.25, 0.25]])
    assert L.norm_bound == 1.0
    np.testing.assert_allclose(np.linalg.eigvalsh(L.entries), [0.0, 0.5], atol=1e-15)
    assert algebraic_connectivity(L) == pytest.approx(0.5)


def test_algebraic_connectivity_values():
    assert algebraic_connectivity(np.zeros((2, 2))) == 0.0
    L4 = laplacian(adjacency_uniform(build_topology("complete", 4)))
    assert algebraic_connectivity(L4) == pytest.approx(0.5, abs=1e-12)


def test_gershgorin_bound_for_custom_weights():
    t = build_topology("star", 4)
    W = np.zeros((4, 4))
    for i, j in t.edges:
        W[i, j] = W[j, i] = 2.0
    L = laplacian(WeightedGraph(t, W))
    assert L.norm_bound == pytest.approx((2 * 6.0) ** 2)
    assert np.linalg.eigvalsh(L.entries)[-1] ** 2 <= L.norm_bound


def test_apply_A_examples():
    L = laplacian(adjacency_uniform(build_topology("complete", 2)))
    np.testing.assert_allclose(apply_A(L, np.array([[1.0, 0.0], [0.0, 0.0]])), [[0.25, 0], [-0.25, 0]])
    once = apply_A(L, np.array([[1.0], [-1.0]]))
    np.testing.assert_allclose(once, [[0.5], [-0.5]])
    np.testing.assert_allclose(apply_A(L, once), [[0.25], [-0.25]])
    flat = apply_A(L, np.array([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(flat, [0.25, 0, -0.25, 0])


def test_apply_A_consensus_is_null():
    L = laplacian(adjacency_uniform(build_topology("ring", 7)))
    x = np.tile(np.arange(5.0), (7, 1))
    assert np.linalg.norm(apply_A(L, x)) <= 1e-12


def test_apply_A_shape_mismatch():
    L = laplacian(adjacency_uniform(build_topology("ring", 3)))
    with pytest.raises(ShapeMismatch):
        apply_A(L, np.zeros((4, 2)))
    with pytest.raises(ShapeMismatch):
        apply_A(L, np.zeros(7))


def test_topology_json_roundtrip():
    t = build_topology("erdos_renyi", 8, seed=2, prob=0.5)
    again = Topology.from_json(json.loads(json.dumps(t.to_json())))
    assert again == t
