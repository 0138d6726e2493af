import numpy as np
import pytest

from polygcl.graphdata import Graph, normalize_adjacency, ring_graph
from polygcl.model import (
    EncoderParams,
    encode_features,
    encoder_tape,
    init_params,
    load_params,
    save_params,
)
from polygcl.tape import forward

from oracles import encode_oracle


def test_init_deterministic():
    a = init_params(10, 4, 3, "square", seed=5)
    b = init_params(10, 4, 3, "square", seed=5)
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)
    c = init_params(10, 4, 3, "square", seed=6)
    assert not np.array_equal(a.w1, c.w1)


def test_init_glorot_bound():
    p = init_params(30, 20, 10, "relu", seed=0)
    assert np.abs(p.w1).max() <= np.sqrt(6.0 / (30 + 20))
    assert np.abs(p.w2).max() <= np.sqrt(6.0 / (20 + 10))


def test_init_mean_near_zero_monte_carlo():
    # 10^5 samples: |mean| below 3 standard errors of the uniform mean
    p = init_params(500, 200, 10, "square", seed=1)
    samples = p.w1.ravel()
    limit = np.sqrt(6.0 / (500 + 200))
    stderr = limit / np.sqrt(3.0 * samples.size)
    assert abs(samples.mean()) < 3.0 * stderr


def test_single_node_closed_form():
    # one node, one feature: z = w^2 * v under the square activation
    g = Graph(1, np.empty((0, 2)), np.array([[1.0]]), np.zeros(1), 1)
    adj = normalize_adjacency(g)
    w, v = 0.7, -1.3
    params = EncoderParams(np.array([[w]]), np.array([[v]]), "square")
    z = encode_features(adj, g.features, params)
    assert z[0, 0] == pytest.approx(w * w * v)


def test_square_activation_on_negative_preactivation():
    g = Graph(1, np.empty((0, 2)), np.array([[1.0]]), np.zeros(1), 1)
    adj = normalize_adjacency(g)
    params = EncoderParams(np.array([[-2.0]]), np.array([[1.0]]), "square")
    # hidden = (-2)^2 = 4 flows through the identity second layer
    assert encode_features(adj, g.features, params)[0, 0] == pytest.approx(4.0)


@pytest.mark.parametrize("activation", ["square", "relu"])
def test_encode_matches_scalar_loop_oracle(activation):
    g = Graph(3, np.array([[0, 1], [1, 2]]),
              np.random.default_rng(7).normal(size=(3, 4)), np.zeros(3), 1)
    adj = normalize_adjacency(g)
    params = init_params(4, 3, 2, activation, seed=2)
    z = encode_features(adj, g.features, params)
    expected = encode_oracle(adj.to_dense().tolist(), g.features.tolist(),
                             params.w1.tolist(), params.w2.tolist(), activation)
    assert z == pytest.approx(np.array(expected), abs=1e-12)


def test_square_encoder_tape_fully_polynomial():
    g = ring_graph(6, 4, seed=0)
    adj = normalize_adjacency(g)
    t = encoder_tape(adj, g.features, init_params(4, 3, 2, "square", 0))
    assert all(n.polynomial for n in t.nodes)


def test_relu_encoder_tape_has_nonpolynomial_node():
    g = ring_graph(6, 4, seed=0)
    adj = normalize_adjacency(g)
    t = encoder_tape(adj, g.features, init_params(4, 3, 2, "relu", 0))
    assert any(not n.polynomial for n in t.nodes)


def test_sign_flip_invariance_bitwise():
    g = ring_graph(7, 5, seed=3)
    adj = normalize_adjacency(g)
    params = init_params(5, 4, 3, "square", seed=4)
    flipped = EncoderParams(-params.w1, params.w2, "square")
    z = encode_features(adj, g.features, params)
    z_flipped = encode_features(adj, g.features, flipped)
    assert np.array_equal(z, z_flipped)


def test_permutation_equivariance():
    rng = np.random.default_rng(9)
    g = ring_graph(8, 5, seed=3)
    adj = normalize_adjacency(g)
    params = init_params(5, 4, 3, "square", seed=4)
    z = encode_features(adj, g.features, params)

    perm = rng.permutation(g.num_nodes)
    inv = np.argsort(perm)
    pg = Graph(g.num_nodes, inv[g.edges], g.features[perm], g.labels[perm], g.num_classes)
    pz = encode_features(normalize_adjacency(pg), pg.features, params)
    assert pz == pytest.approx(z[perm], abs=1e-10)


def test_square_scale_halves_hidden():
    g = Graph(1, np.empty((0, 2)), np.array([[1.0]]), np.zeros(1), 1)
    adj = normalize_adjacency(g)
    params = EncoderParams(np.array([[2.0]]), np.array([[1.0]]), "square")
    full = encode_features(adj, g.features, params)
    half = encode_features(adj, g.features, params, square_scale=0.5)
    assert half[0, 0] == pytest.approx(0.5 * full[0, 0])


def test_checkpoint_round_trip(tmp_path):
    params = init_params(6, 4, 3, "relu", seed=8)
    path = tmp_path / "ckpt.bin"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.activation == "relu"
    assert np.array_equal(loaded.w1, params.w1)
    assert np.array_equal(loaded.w2, params.w2)


def test_checkpoint_header_layout(tmp_path):
    params = init_params(2, 3, 4, "square", seed=0)
    path = tmp_path / "ckpt.bin"
    save_params(params, path)
    raw = path.read_bytes()
    header = np.frombuffer(raw[:16], dtype="<i4")
    assert header.tolist() == [2, 3, 4, 0]
    assert len(raw) == 16 + 8 * (2 * 3 + 3 * 4)


def test_truncated_checkpoint_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x01\x00")
    with pytest.raises(ValueError, match="truncated"):
        load_params(path)
