import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaffdiff import numerics as nx
from scaffdiff.numerics import MlpSpec, ModelParams, Rng, Tensor
from scaffdiff.numerics import ops as T
from scaffdiff.numerics.layers import EgnnLayerConfig, egnn_specs

from conftest import random_rotation


def finite_difference_check(loss_fn, params, h=1e-5, floor=1e-10):
    """Largest relative error between backward() and central differences.

    Components whose gradient magnitude is below ``floor`` are compared on an
    absolute scale, since round-off dominates the difference quotient there.
    """
    grads = nx.backward(loss_fn(), params)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            fd = (up - down) / (2 * h)
            g = grads[name].reshape(-1)[i]
            worst = max(worst, abs(fd - g) / max(abs(fd) + abs(g), floor))
    return worst


# mlp

def test_zero_weight_mlp_gives_zero():
    p = ModelParams({"z.w0": np.zeros((3, 4)), "z.b0": np.zeros(4), "z.w1": np.zeros((4, 2)), "z.b1": np.zeros(2)})
    out = nx.mlp_forward(p, Tensor(np.random.default_rng(0).normal(size=(5, 3))), MlpSpec("z", (3, 4, 2)))
    assert np.all(out.data == 0.0)


def test_identity_linear_layer():
    p = ModelParams({"i.w0": np.eye(3), "i.b0": np.zeros(3)})
    x = np.arange(6.0).reshape(2, 3)
    out = nx.mlp_forward(p, Tensor(x), MlpSpec("i", (3, 3)))
    np.testing.assert_array_equal(out.data, x)


def test_two_layer_mlp_hand_values():
    # tanh(x W0 + b0) W1 + b1 evaluated by hand for x = (1, -1)
    p = ModelParams({
        "m.w0": [[0.5, -1.0], [0.25, 2.0]], "m.b0": [0.1, 0.0],
        "m.w1": [[1.0], [-0.5]], "m.b1": [0.3],
    })
    out = nx.mlp_forward(p, Tensor([[1.0, -1.0]]), MlpSpec("m", (2, 2, 1), "tanh"))
    h = np.tanh([0.5 - 0.25 + 0.1, -1.0 - 2.0])
    assert out.data[0, 0] == pytest.approx(h[0] - 0.5 * h[1] + 0.3, abs=1e-15)


def test_mlp_shape_error_names_layer():
    p = ModelParams({"bad.w0": np.zeros((3, 2)), "bad.b0": np.zeros(2)})
    with pytest.raises(nx.ShapeError, match="bad layer 0"):
        nx.mlp_forward(p, Tensor(np.zeros((1, 4))), MlpSpec("bad", (3, 2)))


# egnn

def _egnn_setup(seed=0, n=5, dim=4, **cfg_kw):
    rng = Rng.from_seed(seed)
    cfg = EgnnLayerConfig(hidden_dim=dim, message_dim=6, **cfg_kw)
    p = ModelParams()
    nx.init_egnn_layer(p, rng, "e", dim, cfg, coord_gain=1.0)
    h = Tensor(rng.normal((n, dim)))
    x = rng.normal((n, 3)) * 2.0
    return p, cfg, h, x


def test_egnn_single_node_no_edges():
    p, cfg, h, x = _egnn_setup(n=1)
    h2, x2 = nx.egnn_layer(h, Tensor(x), (np.array([], int), np.array([], int)), p, "e", cfg)
    np.testing.assert_array_equal(x2.data, x)
    _, _, node = egnn_specs("e", 4, cfg)
    expect = h.data + nx.mlp_forward(p, Tensor(np.concatenate([h.data, np.zeros((1, 6))], 1)), node).data
    np.testing.assert_allclose(h2.data, expect, atol=1e-15)


def test_egnn_path_graph_matches_formula():
    p, cfg, h, x = _egnn_setup(n=3)
    src, dst = np.array([0, 1, 1, 2]), np.array([1, 0, 2, 1])
    h2, x2 = nx.egnn_layer(h, Tensor(x), (src, dst), p, "e", cfg)
    edge, coord, node = egnn_specs("e", 4, cfg)

    def mlp(spec, v):
        return nx.mlp_forward(p, Tensor(np.atleast_2d(v)), spec).data[0]

    agg = np.zeros((3, 6))
    dx = np.zeros((3, 3))
    for j, i in zip(src, dst):
        d2 = ((x[i] - x[j]) ** 2).sum()
        m = mlp(edge, np.concatenate([h.data[i], h.data[j], [d2 / 25.0]]))
        agg[i] += m / 10.0
        dx[i] += (x[i] - x[j]) * mlp(coord, m)[0] / ((1 + np.sqrt(d2)) * 10.0)
    hx = np.array([h.data[i] + mlp(node, np.concatenate([h.data[i], agg[i]])) for i in range(3)])
    np.testing.assert_allclose(h2.data, hx, atol=1e-12)
    np.testing.assert_allclose(x2.data, x + dx, atol=1e-12)


@pytest.mark.parametrize("n_rbf", [0, 6])
def test_egnn_equivariance(n_rbf):
    p, cfg, h, x = _egnn_setup(seed=2, n=6, n_rbf=n_rbf)
    edges = nx.radius_edges(x, 100.0)
    rot, move = random_rotation(5), np.array([0.3, -2.0, 1.0])
    h1, x1 = nx.egnn_layer(h, Tensor(x), edges, p, "e", cfg)
    h2, x2 = nx.egnn_layer(h, Tensor(x @ rot.T + move), edges, p, "e", cfg)
    assert np.abs(h1.data - h2.data).max() < 1e-10
    assert np.abs(x1.data @ rot.T + move - x2.data).max() < 1e-10


def test_egnn_ninety_degree_rotation_two_nodes():
    p, cfg, h, x = _egnn_setup(seed=4, n=2)
    rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    edges = (np.array([0, 1]), np.array([1, 0]))
    _, x1 = nx.egnn_layer(h, Tensor(x), edges, p, "e", cfg)
    _, x2 = nx.egnn_layer(h, Tensor(x @ rz.T), edges, p, "e", cfg)
    assert np.abs(x1.data @ rz.T - x2.data).max() < 1e-10


def test_egnn_mobile_mask_freezes_nodes():
    p, cfg, h, x = _egnn_setup(seed=6, n=4)
    edges = nx.radius_edges(x, 100.0)
    _, x2 = nx.egnn_layer(h, Tensor(x), edges, p, "e", cfg, mobile=[1, 0, 1, 0])
    np.testing.assert_array_equal(x2.data[[1, 3]], x[[1, 3]])
    assert np.abs(x2.data[[0, 2]] - x[[0, 2]]).max() > 0


def test_egnn_rejects_bad_edge():
    p, cfg, h, x = _egnn_setup(n=3)
    with pytest.raises(IndexError, match="node 7"):
        nx.egnn_layer(h, Tensor(x), (np.array([0]), np.array([7])), p, "e", cfg)


def test_radius_edges_always_pairs():
    x = np.array([[0.0, 0, 0], [1.0, 0, 0], [10.0, 0, 0]])
    always = np.zeros((3, 3), bool)
    always[2, 0] = True
    src, dst = nx.radius_edges(x, 2.0, always)
    assert set(zip(src.tolist(), dst.tolist())) == {(1, 0), (0, 1), (0, 2)}


# attention

def _attention_params(seed, q_dim=3, kv_dim=3, d_att=2, out_dim=2):
    p = ModelParams()
    nx.init_cross_attention(p, Rng.from_seed(seed), "a", q_dim, kv_dim, d_att, out_dim)
    return p


def test_attention_single_key_returns_projected_value():
    p = _attention_params(0)
    q = Tensor(np.random.default_rng(1).normal(size=(4, 3)))
    kv = Tensor(np.random.default_rng(2).normal(size=(1, 3)))
    out = nx.cross_attention(q, kv, kv, p, "a")
    v = kv.data @ p["a.v.w0"].data + p["a.v.b0"].data
    np.testing.assert_allclose(out.data, np.repeat(v, 4, axis=0), atol=1e-15)


def test_attention_identical_keys_average_values():
    p = _attention_params(1)
    q = Tensor(np.random.default_rng(1).normal(size=(2, 3)))
    keys = Tensor(np.ones((3, 3)))
    values = Tensor(np.random.default_rng(3).normal(size=(3, 3)))
    out = nx.cross_attention(q, keys, values, p, "a")
    v = values.data @ p["a.v.w0"].data + p["a.v.b0"].data
    np.testing.assert_allclose(out.data, np.repeat(v.mean(0, keepdims=True), 2, axis=0), atol=1e-14)


def test_attention_hand_computed():
    p = ModelParams({
        "a.q.w0": [[1.0, 0.0], [0.0, 1.0]], "a.q.b0": [0.0, 0.0],
        "a.k.w0": [[1.0, 0.0], [0.0, 1.0]], "a.k.b0": [0.0, 0.0],
        "a.v.w0": [[1.0], [2.0]], "a.v.b0": [0.5],
    })
    q = np.array([[1.0, 0.0], [0.0, 2.0]])
    k = np.array([[1.0, 1.0], [0.0, -1.0], [2.0, 0.0]])
    out = nx.cross_attention(Tensor(q), Tensor(k), Tensor(k), p, "a")
    logits = q @ k.T / np.sqrt(2.0)
    w = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    expect = w @ (k @ np.array([[1.0], [2.0]]) + 0.5)
    np.testing.assert_allclose(out.data, expect, atol=1e-14)


def test_attention_rows_sum_to_one():
    from scaffdiff.numerics.layers import attention_weights

    p = _attention_params(2)
    rng = np.random.default_rng(5)
    w = attention_weights(Tensor(rng.normal(size=(6, 3))), Tensor(rng.normal(size=(9, 3))), p, "a")
    assert np.abs(w.data.sum(1) - 1).max() < 1e-12


def test_attention_empty_keys_error():
    p = _attention_params(0)
    with pytest.raises(nx.ShapeError, match="empty key set"):
        nx.cross_attention(Tensor(np.zeros((1, 3))), Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 3))), p, "a")


# autodiff

def test_backward_constant_loss_zero_grads():
    p = ModelParams({"w": np.ones(3)})
    grads = nx.backward(Tensor(2.0), p)
    np.testing.assert_array_equal(grads["w"], np.zeros(3))


def test_backward_half_square_norm():
    p = ModelParams({"w": [1.0, -2.0, 0.5]})
    loss = T.tsum(T.square(p["w"])) * 0.5
    np.testing.assert_allclose(nx.backward(loss, p)["w"], p["w"].data)


def test_backward_rejects_vector_loss():
    p = ModelParams({"w": np.ones(3)})
    with pytest.raises(nx.ShapeError):
        nx.backward(p["w"] * 2.0, p)


def test_unreached_parameter_gets_zero():
    p = ModelParams({"used": [1.0], "unused": [[1.0, 2.0]]})
    grads = nx.backward(T.tsum(p["used"] * 3.0), p)
    assert grads["used"][0] == 3.0
    np.testing.assert_array_equal(grads["unused"], np.zeros((1, 2)))


@pytest.mark.parametrize("activation", ["silu", "tanh", "sigmoid", "relu"])
def test_mlp_gradient_check(activation):
    rng = Rng.from_seed(7)
    p = ModelParams()
    spec = MlpSpec("g", (3, 5, 2), activation)
    nx.init_mlp(p, rng, spec)
    x = Tensor(rng.normal((4, 3)))
    assert finite_difference_check(lambda: T.tsum(T.square(nx.mlp_forward(p, x, spec))), p) < 1e-4


def test_egnn_gradient_check():
    rng = Rng.from_seed(8)
    cfg = EgnnLayerConfig(hidden_dim=3, message_dim=3, n_rbf=2)
    p = ModelParams()
    nx.init_egnn_layer(p, rng, "e", 3, cfg, coord_gain=1.0)
    assert p.n_values() <= 200
    h = Tensor(rng.normal((4, 3)))
    x = Tensor(rng.normal((4, 3)))
    edges = nx.radius_edges(x.data, 100.0)

    def loss():
        h2, x2 = nx.egnn_layer(h, x, edges, p, "e", cfg)
        return T.tsum(T.square(h2)) + T.tsum(T.square(x2))

    assert finite_difference_check(loss, p) < 1e-4


def test_attention_gradient_check():
    p = _attention_params(9, q_dim=3, kv_dim=2, d_att=2, out_dim=3)
    rng = np.random.default_rng(9)
    q, kv = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(4, 2)))
    bias = rng.normal(size=(2, 4))
    assert finite_difference_check(lambda: T.tsum(T.square(nx.cross_attention(q, kv, kv, p, "a", bias))), p) < 1e-4


def test_scatter_ops_gradient_check():
    rng = np.random.default_rng(3)
    p = ModelParams({"a": rng.normal(size=(5, 2))})
    idx = np.array([0, 2, 2, 4, 1, 0])

    def loss():
        g = T.gather_rows(p["a"], idx)
        s = T.segment_sum(g * np.arange(12.0).reshape(6, 2), idx[::-1], 5)
        return T.tsum(T.square(T.softmax(s, axis=1) + T.concat([s, g[:5]], axis=0)[:5]))

    assert finite_difference_check(loss, p) < 1e-4


# optimizer

def test_adam_zero_gradient_keeps_params():
    p = ModelParams({"w": [1.0, 2.0]})
    nx.adam_step(p, {"w": np.zeros(2)}, nx.AdamState(), nx.AdamConfig(lr=0.1))
    np.testing.assert_array_equal(p["w"].data, [1.0, 2.0])


def test_adam_single_step_hand_value():
    p = ModelParams({"w": [0.0]})
    _, state = nx.adam_step(p, {"w": np.array([1.0])}, nx.AdamState(), nx.AdamConfig(lr=0.1))
    # m_hat = v_hat = 1 after bias correction
    assert p["w"].data[0] == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-15)
    assert state.step == 1


def test_adam_moves_monotonically_against_gradient():
    p = ModelParams({"w": [0.5]})
    state = nx.AdamState()
    seen = [0.5]
    for _ in range(2):
        _, state = nx.adam_step(p, {"w": np.array([0.7])}, state, nx.AdamConfig(lr=0.01))
        seen.append(p["w"].data[0])
    assert seen[0] > seen[1] > seen[2]


def test_adam_missing_gradient_key():
    p = ModelParams({"w": [0.0], "v": [0.0]})
    with pytest.raises(KeyError, match="'v'"):
        nx.adam_step(p, {"w": np.zeros(1)}, nx.AdamState())


# rng

def test_gaussian_deterministic():
    a = nx.gaussian(Rng.from_seed(42), (3, 4))
    b = nx.gaussian(Rng.from_seed(42), (3, 4))
    np.testing.assert_array_equal(a, b)


def test_gaussian_moments():
    n = 100_000
    z = nx.gaussian(Rng.from_seed(1), (n,))
    assert abs(z.mean()) < 4 / np.sqrt(n)
    # var of the sample variance of N(0,1) is 2/n
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / n)


def test_split_streams_uncorrelated():
    a, b = Rng.from_seed(5).split(2)
    x, y = nx.gaussian(a, (100_000,)), nx.gaussian(b, (100_000,))
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.02


def test_split_is_reproducible():
    r1, r2 = Rng.from_seed(3), Rng.from_seed(3)
    np.testing.assert_array_equal(r1.split(3)[2].normal(4), r2.split(3)[2].normal(4))


# parameters and checkpoints

def test_checkpoint_round_trip(tmp_path):
    p = ModelParams({"a": np.arange(6.0).reshape(2, 3), "b": [1.5]})
    nx.save_checkpoint(tmp_path / "ck", p, {"kind": "x"})
    q, meta = nx.load_checkpoint(tmp_path / "ck")
    assert meta == {"kind": "x"}
    assert list(q) == ["a", "b"]
    np.testing.assert_array_equal(q["a"].data, p["a"].data)


def test_checkpoint_detects_corruption(tmp_path):
    nx.save_checkpoint(tmp_path / "ck", ModelParams({"a": [1.0, 2.0]}))
    blob = tmp_path / "ck" / "0000.bin"
    blob.write_bytes(b"\x00" * 16)
    with pytest.raises(nx.CheckpointError, match="checksum"):
        nx.load_checkpoint(tmp_path / "ck")


def test_assign_refuses_shape_change():
    p = ModelParams({"a": np.zeros(3)})
    with pytest.raises(ValueError):
        p.assign("a", np.zeros(4))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_broadcast_add_gradient_sums(values):
    p = ModelParams({"b": [0.0]})
    x = np.array(values).reshape(-1, 1)
    loss = T.tsum(Tensor(x) + p["b"])
    assert nx.backward(loss, p)["b"][0] == pytest.approx(len(values))
