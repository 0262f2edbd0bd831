"""Interaction-prior network and the interaction-driven mean shift.

``IpNet`` encodes pocket and ligand atoms with invariant EGNN layers,
exchanges information through distance-biased cross-attention in both
directions and regresses a binding affinity from pooled features. Its
per-atom features ``F_P``, ``F_S``, ``F_R`` are the interaction prior.

``ShiftNet`` turns ``F_R`` and the timestep into an ``N_R x 3`` shift,
scaled by ``k_t``. Its output head is equivariant by default: each R-group
atom moves along weighted unit-ish vectors pointing from context atoms.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .domain import K, AugmentedPocket
from .numerics import ops as T
from .numerics import MlpSpec, ModelParams, Rng, Tensor

log = logging.getLogger(__name__)

# attention logit penalty per Angstrom of separation
ATTENTION_DISTANCE_SCALE = 0.5


@dataclass(frozen=True)
class IpNetConfig:
    hidden_dim: int = 64
    message_dim: int = 64
    n_layers: int = 3
    attention_dim: int = 32
    cutoff: float = 5.0

    def egnn(self):
        return nx.EgnnLayerConfig(self.hidden_dim, self.message_dim, False, self.cutoff)


@dataclass(frozen=True)
class ShiftNetConfig:
    hidden_dim: int = 32
    time_dim: int = 8
    cutoff: float = 5.0
    head: str = "equivariant"  # or "literal"

    def __post_init__(self):
        if self.head not in ("equivariant", "literal"):
            raise ValueError(f"shift_head must be 'equivariant' or 'literal', got {self.head!r}")


@dataclass(frozen=True, eq=False)
class InteractionRepr:
    """Per-atom interaction features plus the coordinates they came from.

    ``InteractionRepr.none()`` is the empty sentinel used before any
    R-group estimate exists.
    """

    F_P: np.ndarray = None
    F_S: np.ndarray = None
    F_R: np.ndarray = None
    x_P: np.ndarray = None
    x_S: np.ndarray = None
    x_R: np.ndarray = None

    @classmethod
    def none(cls):
        return cls()

    @property
    def is_none(self):
        return self.F_R is None

    @property
    def dim(self):
        return None if self.is_none else self.F_R.shape[1]

    def zeros_like(self):
        return InteractionRepr(
            np.zeros_like(self.F_P), np.zeros_like(self.F_S), np.zeros_like(self.F_R),
            self.x_P, self.x_S, self.x_R,
        )


def time_embedding(t, T_max, dim):
    """Sinusoidal features of ``t / T_max``; ``dim`` must be even."""
    if dim == 0:
        return np.zeros(0)
    freqs = 2.0 ** np.arange(dim // 2)
    ang = np.pi * (t / T_max) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


def _as_arrays(points):
    if isinstance(points, AugmentedPocket):
        points = points.pocket
    return np.asarray(points.coords, dtype=np.float64), np.asarray(points.types, dtype=np.float64)


# IpNet

@dataclass
class IpNetModel:
    params: ModelParams
    config: IpNetConfig = field(default_factory=IpNetConfig)
    # pocket encodings keyed by pocket content; only frozen copies cache
    pocket_cache: dict = None

    def frozen(self):
        """Copy whose parameters do not record gradients.

        Pocket features do not depend on the ligand, so the frozen copy
        memoises them per pocket.
        """
        frozen = ModelParams()
        for k, v in self.params.items():
            frozen._store[k] = Tensor(v.data)
        return IpNetModel(frozen, self.config, {})


def init_ipnet(rng, config=IpNetConfig()):
    p = ModelParams()
    h = config.hidden_dim
    nx.init_mlp(p, rng, MlpSpec("ip.embed_p", (K, h)))
    nx.init_mlp(p, rng, MlpSpec("ip.embed_l", (K + 2, h)))
    ecfg = config.egnn()
    for i in range(config.n_layers):
        nx.init_egnn_layer(p, rng, f"ip.prot{i}", h, ecfg)
        nx.init_egnn_layer(p, rng, f"ip.lig{i}", h, ecfg)
    nx.init_cross_attention(p, rng, "ip.l2p", h, h, config.attention_dim, h)
    nx.init_cross_attention(p, rng, "ip.p2l", h, h, config.attention_dim, h)
    nx.init_mlp(p, rng, MlpSpec("ip.head", (2 * h, h, 1)))
    return IpNetModel(p, config)


def _ligand_edges(x_s, x_r, cutoff):
    n_s, n_r = len(x_s), len(x_r)
    x = np.concatenate([x_s, x_r]) if n_r else x_s
    always = np.zeros((n_s + n_r, n_s + n_r), dtype=bool)
    always[:n_s, n_s:] = True
    always[n_s:, :n_s] = True
    return nx.radius_edges(x, cutoff, always)


def _encode_pocket(p, cfg, xp, vp):
    ecfg = cfg.egnn()
    hp = nx.mlp_forward(p, Tensor(vp), MlpSpec("ip.embed_p", (K, cfg.hidden_dim)))
    edges = nx.radius_edges(xp, cfg.cutoff)
    xp_t = Tensor(xp)
    for i in range(cfg.n_layers):
        hp, _ = nx.egnn_layer(hp, xp_t, edges, p, f"ip.prot{i}", ecfg)
    return hp


def ipnet_forward(model, pocket, scaffold, rgroup):
    """Return ``(InteractionRepr, affinity)``; ``affinity`` is a scalar Tensor.

    Only interatomic distances enter the network, so every output is
    invariant to a joint rigid motion of the three inputs. ``rgroup`` types
    may be continuous (noisy estimates during sampling).
    """
    p = model.params
    cfg = model.config
    xp, vp = _as_arrays(pocket)
    xs, vs = _as_arrays(scaffold)
    xr, vr = _as_arrays(rgroup)
    for name, v in (("pocket", vp), ("scaffold", vs), ("rgroup", vr)):
        if v.shape[1] != K:
            raise nx.ShapeError(f"{name} types have width {v.shape[1]}, expected {K}")
    if len(xp) == 0 or len(xs) == 0 or len(xr) == 0:
        raise nx.ShapeError("ipnet_forward needs nonempty pocket, scaffold and rgroup")
    n_s, n_r = len(xs), len(xr)
    ecfg = cfg.egnn()

    key = (xp.tobytes(), vp.tobytes()) if model.pocket_cache is not None else None
    hp = model.pocket_cache.get(key) if key is not None else None
    if hp is None:
        hp = _encode_pocket(p, cfg, xp, vp)
        if key is not None:
            model.pocket_cache[key] = hp
    role = np.zeros((n_s + n_r, 2))
    role[:n_s, 0] = 1.0
    role[n_s:, 1] = 1.0
    hl = nx.mlp_forward(p, Tensor(np.concatenate([np.concatenate([vs, vr]), role], axis=1)),
                        MlpSpec("ip.embed_l", (K + 2, cfg.hidden_dim)))
    xl = np.concatenate([xs, xr])
    l_edges = _ligand_edges(xs, xr, cfg.cutoff)
    xl_t = Tensor(xl)
    for i in range(cfg.n_layers):
        hl, _ = nx.egnn_layer(hl, xl_t, l_edges, p, f"ip.lig{i}", ecfg)

    dist = np.sqrt(((xl[:, None, :] - xp[None, :, :]) ** 2).sum(-1))
    bias = -ATTENTION_DISTANCE_SCALE * dist
    fl = hl + nx.cross_attention(hl, hp, hp, p, "ip.l2p", bias=bias)
    fp = hp + nx.cross_attention(hp, hl, hl, p, "ip.p2l", bias=bias.T)

    pooled = T.concat([T.mean(fp, axis=0, keepdims=True), T.mean(fl, axis=0, keepdims=True)], axis=1)
    affinity = nx.mlp_forward(p, pooled, MlpSpec("ip.head", (2 * cfg.hidden_dim, cfg.hidden_dim, 1)))
    affinity = T.reshape(affinity, ())

    repr_ = InteractionRepr(
        F_P=fp.data, F_S=fl.data[:n_s], F_R=fl.data[n_s:], x_P=xp, x_S=xs, x_R=xr,
    )
    return repr_, affinity


@dataclass(frozen=True)
class PretrainConfig:
    steps: int = 500
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    model: IpNetConfig = field(default_factory=IpNetConfig)


def affinity_loss(model, tuples):
    losses = []
    for tup in tuples:
        _, pred = ipnet_forward(model, tup.pocket, tup.scaffold, tup.rgroup)
        losses.append(T.square(pred - tup.affinity))
    total = losses[0]
    for l in losses[1:]:
        total = total + l
    return total * (1.0 / len(losses))


def pretrain_ipnet(dataset, config=PretrainConfig(), log_fn=None):
    """Fit the affinity head (and encoders) by squared-error regression.

    Returns ``(model, history)`` with the minibatch loss seen at each step.
    """
    labeled = [t for t in dataset if t.affinity is not None and t.rgroup is not None]
    if not labeled:
        raise ValueError("pretraining needs at least one tuple with an affinity label and an R-group")
    rng = Rng.from_seed(config.seed)
    init_rng, batch_rng = rng.split(2)
    model = init_ipnet(init_rng, config.model)
    # start the head at the label mean so early steps shape the features
    mean_label = float(np.mean([t.affinity for t in labeled]))
    model.params.assign("ip.head.b1", np.array([mean_label]))
    state = nx.AdamState()
    hp = nx.AdamConfig(lr=config.lr)
    history = []
    bs = min(config.batch_size, len(labeled))
    for step in range(config.steps):
        idx = batch_rng.choice(len(labeled), size=bs, replace=False)
        loss = affinity_loss(model, [labeled[i] for i in idx])
        grads = nx.backward(loss, model.params)
        history.append(loss.item())
        if log_fn is not None:
            log_fn({"step": step, "loss": loss.item(), "grad_norm": nx.global_norm(grads)})
        _, state = nx.adam_step(model.params, grads, state, hp)
    return model, history


def ipnet_meta(model):
    return {"kind": "ipnet", "config": asdict(model.config)}


def ipnet_from_checkpoint(params, meta):
    if meta.get("kind") != "ipnet":
        raise nx.CheckpointError("checkpoint is not an interaction-prior model")
    return IpNetModel(params, IpNetConfig(**meta["config"]))


# shift network

@dataclass
class ShiftNet:
    params: ModelParams
    config: ShiftNetConfig
    feature_dim: int


def init_shiftnet(rng, feature_dim, config=ShiftNetConfig(), zero=False):
    p = ModelParams()
    h = config.hidden_dim
    nx.init_mlp(p, rng, MlpSpec("shift.psi", (feature_dim + config.time_dim, h, h), "silu", "silu"),
                zero_last=zero)
    if config.head == "equivariant":
        nx.init_mlp(p, rng, MlpSpec("shift.vec", (h + 1, h, 1), "silu", "tanh"), zero_last=zero)
    else:
        nx.init_mlp(p, rng, MlpSpec("shift.lin", (h, 3)), zero_last=zero)
    return ShiftNet(p, config, feature_dim)


def _psi(net, F_R, t, T_max):
    cfg = net.config
    temb = np.broadcast_to(time_embedding(t, T_max, cfg.time_dim), (len(F_R), cfg.time_dim))
    x = Tensor(np.concatenate([F_R, temb], axis=1))
    return nx.mlp_forward(net.params, x, MlpSpec("shift.psi", (net.feature_dim + cfg.time_dim, cfg.hidden_dim, cfg.hidden_dim), "silu", "silu"))


def shift_direction(net, repr_, t, T_max):
    """Unscaled shift ``S_t / k_t`` as an ``N_R x 3`` Tensor."""
    g = _psi(net, repr_.F_R, t, T_max)
    cfg = net.config
    if cfg.head == "literal":
        return nx.mlp_forward(net.params, g, MlpSpec("shift.lin", (cfg.hidden_dim, 3)))

    xr = repr_.x_R
    ctx = np.concatenate([xr, repr_.x_S, repr_.x_P])
    n_r, n_s = len(xr), len(repr_.x_S)
    diff = xr[:, None, :] - ctx[None, :, :]
    d2 = (diff ** 2).sum(-1)
    always = np.zeros_like(d2, dtype=bool)
    always[:, : n_r + n_s] = True  # other R atoms and the whole scaffold
    keep = (d2 < cfg.cutoff ** 2) | always
    keep[np.arange(n_r), np.arange(n_r)] = False
    i, j = np.nonzero(keep)
    if len(i) == 0:
        return Tensor(np.zeros((n_r, 3)))
    feats = T.concat([T.gather_rows(g, i), Tensor(d2[i, j][:, None])], axis=1)
    w = nx.mlp_forward(net.params, feats, MlpSpec("shift.vec", (cfg.hidden_dim + 1, cfg.hidden_dim, 1), "silu", "tanh"))
    unit = diff[i, j] / (1.0 + np.sqrt(d2[i, j] + 1e-12))[:, None]
    return T.segment_sum(w * Tensor(unit), i, n_r)


def shift(net, repr_, schedule, t, n_atoms=None):
    """``S_t = k_t * head(psi(F_R, t))``; zero for the ``none`` sentinel or ``k_t = 0``."""
    kt = schedule.shift_coeff(t)
    if repr_ is None or repr_.is_none:
        if n_atoms is None:
            raise ValueError("n_atoms is required when the representation is none")
        return Tensor(np.zeros((n_atoms, 3)))
    if n_atoms is not None and len(repr_.F_R) != n_atoms:
        raise nx.ShapeError(f"F_R has {len(repr_.F_R)} rows, expected {n_atoms}")
    if kt == 0.0:
        return Tensor(np.zeros((len(repr_.F_R), 3)))
    return shift_direction(net, repr_, t, schedule.T) * kt


def shiftnet_meta(net):
    return {"config": asdict(net.config), "feature_dim": net.feature_dim}
