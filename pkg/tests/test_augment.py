import numpy as np
import pytest

from polygcl.augment import AugmentConfig, make_views
from polygcl.graphdata import normalize_adjacency, normalized_from_edges, ring_graph


@pytest.fixture()
def graph():
    return ring_graph(num_nodes=10, num_features=8, seed=2)


def kept_edges(adj):
    # normalized adjacency stores 2E + N nonzeros
    return (adj.values.size - adj.num_nodes) // 2


def test_zero_probabilities_identity(graph):
    adj = normalize_adjacency(graph)
    cfg = AugmentConfig(0.0, 0.0, 0.0, 0.0, seed=1)
    (a1, x1), (a2, x2) = make_views(graph, adj, cfg, epoch=0)
    assert a1 is adj and a2 is adj
    assert np.array_equal(x1, graph.features)
    assert np.array_equal(x2, graph.features)


def test_high_drop_degenerates_to_identity():
    from polygcl.graphdata import Graph
    g = Graph(2, np.array([[0, 1]]), np.ones((2, 3)), np.zeros(2), 1)
    adj = normalize_adjacency(g)
    cfg = AugmentConfig(0.99, 0.99, 0.0, 0.0, seed=0)
    (a1, _), _ = make_views(g, adj, cfg, epoch=0)
    assert a1.to_dense() == pytest.approx(np.eye(2))


def test_self_loops_never_dropped(graph):
    adj = normalize_adjacency(graph)
    cfg = AugmentConfig(0.9, 0.9, 0.0, 0.0, seed=3)
    (a1, _), (a2, _) = make_views(graph, adj, cfg, epoch=4)
    for a in (a1, a2):
        assert np.all(np.diagonal(a.to_dense()) > 0.0)


def test_view_adjacency_symmetric_after_renormalization(graph):
    adj = normalize_adjacency(graph)
    cfg = AugmentConfig(0.5, 0.5, 0.0, 0.0, seed=3)
    (a1, _), (a2, _) = make_views(graph, adj, cfg, epoch=7)
    for a in (a1, a2):
        dense = a.to_dense()
        assert np.array_equal(dense, dense.T)


def test_deterministic_in_seed_and_epoch(graph):
    adj = normalize_adjacency(graph)
    cfg = AugmentConfig(0.4, 0.2, 0.3, 0.1, seed=11)
    (a1, x1), (b1, y1) = make_views(graph, adj, cfg, epoch=5)
    (a2, x2), (b2, y2) = make_views(graph, adj, cfg, epoch=5)
    assert np.array_equal(a1.values, a2.values)
    assert np.array_equal(x1, x2)
    assert np.array_equal(b1.values, b2.values)
    assert np.array_equal(y1, y2)
    (a3, x3), _ = make_views(graph, adj, cfg, epoch=6)
    assert not np.array_equal(x1, x3) or a1.values.size != a3.values.size


def test_views_differ_between_view_slots(graph):
    adj = normalize_adjacency(graph)
    cfg = AugmentConfig(0.5, 0.5, 0.5, 0.5, seed=11)
    (a1, x1), (a2, x2) = make_views(graph, adj, cfg, epoch=0)
    assert not np.array_equal(x1, x2) or a1.values.size != a2.values.size


def test_feature_masking_zeroes_whole_columns(graph):
    adj = normalize_adjacency(graph)
    cfg = AugmentConfig(0.0, 0.0, 0.5, 0.5, seed=8)
    (_, x1), _ = make_views(graph, adj, cfg, epoch=0)
    zero_cols = np.all(x1 == 0.0, axis=0)
    untouched = ~zero_cols
    assert zero_cols.any()
    assert np.array_equal(x1[:, untouched], graph.features[:, untouched])


def test_empirical_drop_frequency():
    # Monte Carlo oracle: drop frequency over ~10000 edge draws within +/-2%
    g = ring_graph(num_nodes=20, num_features=2, seed=0)
    adj = normalize_adjacency(g)
    p = 0.3
    cfg = AugmentConfig(p, p, 0.0, 0.0, seed=123)
    dropped = 0
    total = 0
    for epoch in range(500):
        (a1, _), _ = make_views(g, adj, cfg, epoch)
        dropped += g.num_edges - kept_edges(a1)
        total += g.num_edges
    assert abs(dropped / total - p) < 0.02


def test_probability_validation():
    with pytest.raises(ValueError, match="edge_drop_1"):
        AugmentConfig(edge_drop_1=1.0)
