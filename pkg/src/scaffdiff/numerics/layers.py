"""MLP, EGNN message-passing and cross-attention blocks over ``Tensor``.

Parameters live in a flat ``ModelParams`` map; every block addresses its
weights by a string prefix, so the same store can hold several networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

DIST_EPS = 1e-12


@dataclass(frozen=True)
class MlpSpec:
    name: str
    widths: tuple  # (in, hidden..., out)
    activation: str = "silu"
    final_activation: str = "identity"


@dataclass(frozen=True)
class EgnnLayerConfig:
    hidden_dim: int = 64
    message_dim: int = 64
    coordinate_update: bool = True
    distance_cutoff: float = 5.0
    aggregation_norm: float = 10.0
    coord_norm: float = 10.0
    n_rbf: int = 0  # Gaussian distance features on edges, centres on [0, rbf_max]
    rbf_max: float = 10.0

    def __post_init__(self):
        if self.hidden_dim <= 0 or self.message_dim <= 0:
            raise ValueError("EGNN dims must be positive")
        if self.distance_cutoff <= 0:
            raise ValueError("distance_cutoff must be positive")
        if self.aggregation_norm <= 0 or self.coord_norm <= 0:
            raise ValueError("aggregation norms must be positive")


def init_mlp(params, rng, spec, gain=1.0, zero_last=False):
    """Add Glorot-style weights for ``spec`` to ``params``."""
    for i, (n_in, n_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        last = i == len(spec.widths) - 2
        if last and zero_last:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.normal((n_in, n_out)) * gain * np.sqrt(2.0 / (n_in + n_out))
        params.add(f"{spec.name}.w{i}", w)
        params.add(f"{spec.name}.b{i}", np.zeros(n_out))


def mlp_forward(params, x, spec):
    h = x
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        w = params[f"{spec.name}.w{i}"]
        b = params[f"{spec.name}.b{i}"]
        if h.shape[-1] != w.shape[0]:
            raise ShapeError(
                f"{spec.name} layer {i}: input width {h.shape[-1]} != expected {w.shape[0]}"
            )
        h = T.matmul(h, w) + b
        act = spec.activation if i < n_layers - 1 else spec.final_activation
        h = T.ACTIVATIONS[act](h)
    return h


# EGNN

def egnn_specs(prefix, in_dim, cfg):
    """The three MLPs of one EGNN layer: edge, coordinate and node update."""
    edge = MlpSpec(f"{prefix}.edge", (2 * in_dim + 1 + cfg.n_rbf, cfg.message_dim, cfg.message_dim), "silu", "silu")
    coord = MlpSpec(f"{prefix}.coord", (cfg.message_dim, cfg.message_dim, 1), "silu", "identity")
    node = MlpSpec(f"{prefix}.node", (in_dim + cfg.message_dim, cfg.hidden_dim, cfg.hidden_dim), "silu", "identity")
    return edge, coord, node


def init_egnn_layer(params, rng, prefix, in_dim, cfg, coord_gain=0.1):
    edge, coord, node = egnn_specs(prefix, in_dim, cfg)
    init_mlp(params, rng, edge)
    if cfg.coordinate_update:
        init_mlp(params, rng, coord, gain=coord_gain)
    init_mlp(params, rng, node)


def rbf(d, n, d_max):
    """``exp(-((d - mu_k) / w)^2)`` for ``n`` evenly spaced centres ``mu_k``."""
    centres = np.linspace(0.0, d_max, n)
    width = d_max / max(n - 1, 1)
    z = (d - centres) * (1.0 / width)
    return T.exp(T.square(z) * -1.0)


def _node_update(params, h, agg, spec, cfg):
    out = mlp_forward(params, T.concat([h, agg], axis=1), spec)
    if h.shape[1] == cfg.hidden_dim:
        out = h + out
    return out


def _check_edges(edges, n):
    src, dst = edges
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        bad = int(max(src.max(), dst.max())) if max(src.max(), dst.max()) >= n else int(min(src.min(), dst.min()))
        raise IndexError(f"edge references node {bad}, graph has {n} nodes")


def egnn_layer(h, x, edges, params, prefix, cfg, mobile=None):
    """One E(n)-equivariant message-passing update.

    ``edges`` is ``(src, dst)``: node ``dst`` receives the message from
    ``src``. With ``i = dst``, ``j = src``, ``d_ij = |x_i - x_j|``,
    ``C = cfg.aggregation_norm`` and ``C_x = cfg.coord_norm``::

        m_ij = phi_e(h_i, h_j, d_ij^2 / cutoff^2)
        x'_i = x_i + sum_j (x_i - x_j) * phi_x(m_ij) / ((1 + d_ij) * C_x)
        h'_i = phi_h(h_i, sum_j m_ij / C)

    ``phi_h`` carries a skip connection (``h + MLP``) when the input and
    hidden widths agree. ``mobile`` (0/1 per node) masks the coordinate
    update; fixed nodes keep their input coordinates exactly.
    """
    if h.shape[0] != x.shape[0]:
        raise ShapeError(f"{prefix}: h has {h.shape[0]} rows, x has {x.shape[0]}")
    n = h.shape[0]
    src = np.asarray(edges[0], dtype=np.intp)
    dst = np.asarray(edges[1], dtype=np.intp)
    _check_edges((src, dst), n)
    in_dim = h.shape[1]
    edge_spec, coord_spec, node_spec = egnn_specs(prefix, in_dim, cfg)

    if len(src) == 0:
        agg = Tensor(np.zeros((n, cfg.message_dim)))
        return _node_update(params, h, agg, node_spec, cfg), x

    diff = T.gather_rows(x, dst) - T.gather_rows(x, src)
    d2 = T.tsum(T.square(diff), axis=1, keepdims=True)
    geo = [d2 * (1.0 / cfg.distance_cutoff**2)]
    if cfg.n_rbf:
        geo.append(rbf(T.sqrt(d2 + DIST_EPS), cfg.n_rbf, cfg.rbf_max))
    m = mlp_forward(params, T.concat([T.gather_rows(h, dst), T.gather_rows(h, src)] + geo, axis=1), edge_spec)
    agg = T.segment_sum(m, dst, n) * (1.0 / cfg.aggregation_norm)
    h_new = _node_update(params, h, agg, node_spec, cfg)

    if not cfg.coordinate_update:
        return h_new, x
    w = mlp_forward(params, m, coord_spec)
    norm = (1.0 + T.sqrt(d2 + DIST_EPS)) * cfg.coord_norm
    delta = T.segment_sum(diff * (w / norm), dst, n)
    if mobile is not None:
        delta = delta * np.asarray(mobile, dtype=np.float64).reshape(-1, 1)
    return h_new, x + delta


def radius_edges(x, cutoff, always=None):
    """Directed edges between distinct nodes closer than ``cutoff``.

    ``always`` is an optional boolean (n, n) matrix of pairs connected
    regardless of distance. Output order is sorted by (dst, src).
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    adj = d2 < cutoff * cutoff
    if always is not None:
        adj |= always
    np.fill_diagonal(adj, False)
    dst, src = np.nonzero(adj)
    return src, dst


# cross-attention

def cross_attention_specs(prefix, q_dim, kv_dim, d_att, out_dim):
    return (
        MlpSpec(f"{prefix}.q", (q_dim, d_att)),
        MlpSpec(f"{prefix}.k", (kv_dim, d_att)),
        MlpSpec(f"{prefix}.v", (kv_dim, out_dim)),
    )


def init_cross_attention(params, rng, prefix, q_dim, kv_dim, d_att, out_dim):
    for spec in cross_attention_specs(prefix, q_dim, kv_dim, d_att, out_dim):
        init_mlp(params, rng, spec)


def attention_weights(queries, keys, params, prefix, bias=None):
    d_att = params[f"{prefix}.q.w0"].shape[1]
    q = mlp_forward(params, queries, _spec(params, f"{prefix}.q"))
    k = mlp_forward(params, keys, _spec(params, f"{prefix}.k"))
    logits = T.matmul(q, T.transpose(k)) * (1.0 / np.sqrt(d_att))
    if bias is not None:
        logits = logits + bias
    return T.softmax(logits, axis=1)


def cross_attention(queries, keys, values, params, prefix, bias=None):
    """Single-head scaled dot-product attention of ``queries`` over ``keys``.

    Each output row is a softmax-weighted (convex) combination of the
    projected ``values`` rows. ``bias`` is an optional additive
    (n_queries, n_keys) logit term.
    """
    if keys.shape[0] == 0:
        raise ShapeError(f"{prefix}: empty key set")
    if keys.shape[0] != values.shape[0]:
        raise ShapeError(f"{prefix}: {keys.shape[0]} keys vs {values.shape[0]} values")
    a = attention_weights(queries, keys, params, prefix, bias)
    v = mlp_forward(params, values, _spec(params, f"{prefix}.v"))
    return T.matmul(a, v)


def _spec(params, name):
    w = params[f"{name}.w0"]
    return MlpSpec(name, (w.shape[0], w.shape[1]))
