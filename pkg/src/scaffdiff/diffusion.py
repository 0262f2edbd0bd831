"""Shifted-mean diffusion over R-group coordinates and continuous types.

The diffusion state of an R-group is an ``N_R x (3 + K)`` array: coordinates
relative to the scaffold anchor atom (divided by ``coord_scale``), followed
by continuous type values.
The interaction shift only touches the coordinate block.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import numerics as nx
from .domain import K, PointSet, center_on_scaffold
from .iprior import (
    InteractionRepr,
    ShiftNet,
    ShiftNetConfig,
    init_shiftnet,
    ipnet_forward,
    shift,
    time_embedding,
)
from .numerics import MlpSpec, ModelParams, Rng, Tensor
from .numerics import ops as T
from .schedule import build_cosine_schedule

log = logging.getLogger(__name__)

COORD = 3
N_ROLES = 4  # R-group, scaffold, pocket, anchor
PARAMETERIZATIONS = ("eps", "v", "x0")
CLIP_RADIUS = 12.0
TYPE_CLIP = (-1.0, 2.0)


class DiffusionError(ValueError):
    pass


# kernels

def _is_tensor(x):
    return isinstance(x, Tensor)


def _pad_shift(S, width):
    """Zero-pad a coordinate shift to the full state width."""
    if S is None:
        return 0.0
    cols = S.shape[1]
    if cols == width:
        return S
    if cols > width:
        raise nx.ShapeError(f"shift has {cols} columns, state has {width}")
    pad = np.zeros((S.shape[0], width - cols))
    if _is_tensor(S):
        return T.concat([S, Tensor(pad)], axis=1)
    return np.concatenate([np.asarray(S), pad], axis=1)


def _check_rows(a, b, what):
    if b is not None and not np.isscalar(b) and a.shape[0] != b.shape[0]:
        raise nx.ShapeError(f"{what}: {a.shape[0]} vs {b.shape[0]} rows")


def forward_marginal(R0, S_t, schedule, t, rng=None, eps=None):
    """Draw ``R_t ~ N(alpha_t R_0 + S_t, sigma_t^2 I)``; returns ``(R_t, eps)``.

    ``S_t`` covers the leading (coordinate) columns and may be ``None``.
    Pass ``eps`` to fix the noise; with neither ``rng`` nor ``eps`` the draw
    is noise-free.
    """
    R0 = np.asarray(R0, dtype=np.float64) if not _is_tensor(R0) else R0
    _check_rows(R0, S_t, "forward_marginal")
    a, s = schedule.alpha_sigma(t)
    if eps is None:
        eps = nx.gaussian(rng, R0.shape) if rng is not None else np.zeros(R0.shape)
    if eps.shape != R0.shape:
        raise nx.ShapeError(f"noise shape {eps.shape} != state shape {R0.shape}")
    Rt = R0 * a + _pad_shift(S_t, R0.shape[1]) + s * eps
    return Rt, eps


def forward_step(R_prev, S_prev, S_t, schedule, t, rng=None, eps=None):
    """One transition ``R_{t-1} -> R_t`` of the shifted chain (``t >= 2``).

    Returns ``(R_t, eps)`` like ``forward_marginal``.
    """
    if t < 2:
        raise DiffusionError("forward_step needs t >= 2 (t = 1 has no predecessor state)")
    a_c, s2_c = schedule.conditional(t)
    width = R_prev.shape[1]
    if eps is None:
        eps = nx.gaussian(rng, R_prev.shape) if rng is not None else np.zeros(R_prev.shape)
    R_t = a_c * (R_prev - _pad_shift(S_prev, width)) + _pad_shift(S_t, width) + np.sqrt(s2_c) * eps
    return R_t, eps


def posterior_coeffs(schedule, t):
    """``(c_t, c_0, variance)`` so that ``mu = c_t (R_t - S_t) + c_0 R0 + S_{t-1}``.

    ``t = 1`` uses the clean-state convention at index 0 and returns zero
    variance (deterministic last step).
    """
    t = schedule.check_t(t)
    a_prev, s_prev = schedule.alpha[t - 1], schedule.sigma[t - 1]
    a_c, s2_c = schedule.alpha_cond[t], schedule.sigma2_cond[t]
    s2_t = schedule.sigma[t] ** 2
    c_t = a_c * s_prev**2 / s2_t
    c_0 = a_prev * s2_c / s2_t
    var = 0.0 if t == 1 else s2_c * s_prev**2 / s2_t
    return float(c_t), float(c_0), float(var)


def posterior_params(R_t, R0_hat, S_t, S_prev, schedule, t):
    """Mean and variance of ``q(R_{t-1} | R_t, R_0)`` for the shifted chain."""
    c_t, c_0, var = posterior_coeffs(schedule, t)
    width = R_t.shape[1]
    mu = (R_t - _pad_shift(S_t, width)) * c_t + R0_hat * c_0 + _pad_shift(S_prev, width)
    return mu, var


def estimate_R0(R_t, eps_hat, schedule, t, S_t=None, shift_correction=False):
    """``R0_hat = R_t / alpha_t - (sigma_t / alpha_t) eps_hat``.

    With ``shift_correction`` the coordinate shift ``S_t`` is removed from
    ``R_t`` first.
    """
    a, s = schedule.alpha_sigma(t)
    if a == 0.0:
        raise DiffusionError(f"alpha_t is zero at t={t}")
    if shift_correction and S_t is not None:
        R_t = R_t - _pad_shift(S_t, R_t.shape[1])
    return R_t * (1.0 / a) - eps_hat * (s / a)


def clip_state(R, clip=True, coord_scale=1.0):
    """Bound an R-group state estimate: coordinates to a ball, types to a box."""
    if not clip:
        return R
    R = np.array(R, dtype=np.float64)
    norms = np.linalg.norm(R[:, :COORD], axis=1, keepdims=True) * coord_scale
    scale = np.minimum(1.0, CLIP_RADIUS / np.maximum(norms, 1e-300))
    R[:, :COORD] *= scale
    R[:, COORD:] = np.clip(R[:, COORD:], *TYPE_CLIP)
    return R


# denoiser

@dataclass(frozen=True)
class DenoiserConfig:
    hidden_dim: int = 64
    message_dim: int = 64
    n_layers: int = 3
    cutoff: float = 5.0
    time_dim: int = 8
    coord_scale: float = 1.0  # length units per state unit
    coord_norm: float = 10.0
    n_rbf: int = 0
    # how the network output becomes eps_hat: "eps" (directly), "v"
    # (sigma_t R_t + alpha_t net) or "x0" (net is a clean-state estimate)
    parameterization: str = "eps"

    def __post_init__(self):
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}, got {self.parameterization!r}")

    def egnn(self):
        return nx.EgnnLayerConfig(self.hidden_dim, self.message_dim, True, self.cutoff,
                                  coord_norm=self.coord_norm, n_rbf=self.n_rbf)


@dataclass
class DenoiserModel:
    params: ModelParams
    config: DenoiserConfig
    feature_dim: int
    schedule: object = None  # needed by the "v" output parameterization

    @property
    def in_dim(self):
        return K + 1 + self.feature_dim + self.config.time_dim + N_ROLES


def init_denoiser(rng, feature_dim, config=DenoiserConfig(), params=None):
    params = ModelParams() if params is None else params
    h = config.hidden_dim
    model = DenoiserModel(params, config, feature_dim)
    nx.init_mlp(params, rng, MlpSpec("den.embed", (model.in_dim, h)))
    for i in range(config.n_layers):
        nx.init_egnn_layer(params, rng, f"den.egnn{i}", h, config.egnn())
    nx.init_mlp(params, rng, MlpSpec("den.type_head", (h, h, K)), gain=0.5)
    return model


@dataclass
class DenoiseItem:
    R_t: object  # (N_R, 3 + K) ndarray or Tensor
    scaffold: object
    pocket: object  # AugmentedPocket
    repr: InteractionRepr
    t: int
    T_max: int


def _node_inputs(model, item):
    n_r = item.R_t.shape[0]
    scaffold, aug = item.scaffold, item.pocket
    n_s, n_p = len(scaffold), len(aug)
    d = model.feature_dim
    repr_ = item.repr
    if repr_ is None or repr_.is_none:
        F_R, F_S, F_P = np.zeros((n_r, d)), np.zeros((n_s, d)), np.zeros((n_p, d))
    else:
        F_R, F_S, F_P = repr_.F_R, repr_.F_S, repr_.F_P
        if F_R.shape != (n_r, d) or F_S.shape != (n_s, d) or F_P.shape != (n_p, d):
            raise nx.ShapeError("interaction features do not match the point sets")
    temb = time_embedding(item.t, item.T_max, model.config.time_dim)
    n = n_r + n_s + n_p
    static = np.zeros((n_s + n_p, model.in_dim - K))
    static[:n_s, 1:1 + d] = F_S
    static[n_s:, 0] = aug.conservation[:, 0]
    static[n_s:, 1:1 + d] = F_P
    static[:, 1 + d:1 + d + len(temb)] = temb
    static[:n_s, -3] = 1.0
    static[n_s:, -2] = 1.0
    static[scaffold.anchor, -1] = 1.0
    r_static = np.zeros((n_r, model.in_dim - K))
    r_static[:, 1:1 + d] = F_R
    r_static[:, 1 + d:1 + d + len(temb)] = temb
    r_static[:, -4] = 1.0

    R_t = item.R_t
    if _is_tensor(R_t):
        r_types = R_t[:, COORD:]
        r_feat = T.concat([r_types, Tensor(r_static)], axis=1)
    else:
        r_feat = Tensor(np.concatenate([R_t[:, COORD:], r_static], axis=1))
    other = Tensor(np.concatenate([np.concatenate([scaffold.types, aug.pocket.types]), static], axis=1))
    return T.concat([r_feat, other], axis=0), n


def _positions(item, scale):
    anchor = item.scaffold.coords[item.scaffold.anchor]
    R_t = item.R_t
    rest = np.concatenate([item.scaffold.coords, item.pocket.pocket.coords])
    if _is_tensor(R_t):
        xr = R_t[:, :COORD] * scale + anchor
        return T.concat([xr, Tensor(rest)], axis=0), np.concatenate([xr.data, rest])
    xr = R_t[:, :COORD] * scale + anchor
    x = np.concatenate([xr, rest])
    return Tensor(x), x


def denoiser_edges(x, n_r, n_s, cutoff):
    """Radius edges plus full R-group <-> (R-group and scaffold) connectivity.

    Pocket atoms only send messages. They never move and their features
    reach the R-group through the edges they source, so dropping the
    pocket-to-pocket traffic cuts most of the edge count for free.
    """
    n = len(x)
    always = np.zeros((n, n), dtype=bool)
    always[:n_r, : n_r + n_s] = True
    always[: n_r + n_s, :n_r] = True
    src, dst = nx.radius_edges(x, cutoff, always)
    keep = dst < n_r + n_s
    return src[keep], dst[keep]


def denoise_batch(model, items):
    """Predicted noise for each item, batched as one disjoint graph."""
    cfg = model.config
    feats, xs_t, srcs, dsts, mobile, r_rows = [], [], [], [], [], []
    offset = 0
    for item in items:
        if item.R_t.shape[1] != COORD + K:
            raise nx.ShapeError(f"R_t must have {COORD + K} columns, got {item.R_t.shape[1]}")
        f, n = _node_inputs(model, item)
        x_t, x = _positions(item, cfg.coord_scale)
        n_r, n_s = item.R_t.shape[0], len(item.scaffold)
        src, dst = denoiser_edges(x, n_r, n_s, cfg.cutoff)
        feats.append(f)
        xs_t.append(x_t)
        srcs.append(src + offset)
        dsts.append(dst + offset)
        m = np.zeros(n)
        m[:n_r] = 1.0
        mobile.append(m)
        r_rows.append(np.arange(offset, offset + n_r))
        offset += n
    h = T.concat(feats, axis=0) if len(feats) > 1 else feats[0]
    x0 = T.concat(xs_t, axis=0) if len(xs_t) > 1 else xs_t[0]
    edges = (np.concatenate(srcs), np.concatenate(dsts))
    mobile = np.concatenate(mobile)

    h = nx.mlp_forward(model.params, h, MlpSpec("den.embed", (model.in_dim, cfg.hidden_dim)))
    x = x0
    for i in range(cfg.n_layers):
        h, x = nx.egnn_layer(h, x, edges, model.params, f"den.egnn{i}", cfg.egnn(), mobile=mobile)
    dx = x - x0
    out = []
    for item, rows in zip(items, r_rows):
        eps_x = T.gather_rows(dx, rows) * (1.0 / cfg.coord_scale)
        eps_v = nx.mlp_forward(model.params, T.gather_rows(h, rows), MlpSpec("den.type_head", (cfg.hidden_dim, cfg.hidden_dim, K)))
        out.append(_to_eps(model, item, eps_x, eps_v))
    return out


def _to_eps(model, item, out_x, out_v):
    cfg = model.config
    if cfg.parameterization == "eps":
        return T.concat([out_x, out_v], axis=1)
    if model.schedule is None:
        raise DiffusionError(f"the {cfg.parameterization!r} parameterization needs the denoiser's schedule")
    a, s = model.schedule.alpha_sigma(item.t)
    R_t = item.R_t
    if cfg.parameterization == "v":
        return R_t * s + T.concat([out_x, out_v], axis=1) * a
    # x0: coordinates are the input plus the EGNN displacement, types come
    # straight from the head
    x0 = T.concat([R_t[:, :COORD] + out_x, out_v], axis=1) if _is_tensor(R_t) else \
        T.concat([Tensor(R_t[:, :COORD]) + out_x, out_v], axis=1)
    return (R_t - x0 * a) * (1.0 / s)


def denoise(model, R_t, scaffold, aug_pocket, repr_, t, T_max):
    """Predicted noise for one R-group state.

    ``model`` may also be any callable with this function's signature
    (minus ``model``), which is how oracle denoisers are plugged in.
    """
    if callable(model):
        return model(R_t, scaffold, aug_pocket, repr_, t, T_max)
    return denoise_batch(model, [DenoiseItem(R_t, scaffold, aug_pocket, repr_, t, T_max)])[0]


# training

@dataclass(frozen=True)
class TrainConfig:
    T: int = 1000
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    clip_norm: float = 10.0
    seed: int = 0
    beta_interpretation: str = "cumulative"
    repr_dropout: float = 0.0  # chance of training an item on the none sentinel
    # > 0: condition on features of a perturbed R0, as the sampler does
    repr_noise: float = 0.0
    lr_decay: str = "none"  # or "cosine": anneal to zero over the run
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    shift: ShiftNetConfig = field(default_factory=ShiftNetConfig)

    def __post_init__(self):
        if self.lr_decay not in ("none", "cosine"):
            raise ValueError(f"lr_decay must be 'none' or 'cosine', got {self.lr_decay!r}")


@dataclass
class Prepared:
    """A centered training tuple with its frozen interaction prior."""

    tup: object
    offset: np.ndarray
    pocket: object  # AugmentedPocket
    R0: np.ndarray
    repr0: InteractionRepr


def rgroup_state(rgroup, scaffold, coord_scale=1.0):
    rel = (rgroup.coords - scaffold.coords[scaffold.anchor]) / coord_scale
    return np.concatenate([rel, rgroup.types], axis=1)


def prepare(tup, ipnet, coord_scale=1.0):
    if tup.rgroup is None:
        raise DiffusionError("training tuple has no ground-truth R-group")
    centered, offset = center_on_scaffold(tup)
    repr0, _ = ipnet_forward(ipnet, centered.pocket, centered.scaffold, centered.rgroup)
    return Prepared(centered, offset, centered.augmented_pocket(), rgroup_state(centered.rgroup, centered.scaffold, coord_scale), repr0)


def sampler_like_repr(ipnet, prep, schedule, t, rng, scale, coord_scale=1.0):
    """Interaction features as the sampler would see them at step ``t``.

    The sampler conditions step ``t`` on an estimate of R0 made at step
    ``t + 1``, and on the ``none`` sentinel at ``t = T``. Here the estimate
    is the true R0 plus Gaussian error of size ``scale * sigma / alpha`` at
    ``t + 1``, clipped the way the sampler clips.
    """
    if t >= schedule.T:
        return InteractionRepr.none()
    a, s = schedule.alpha_sigma(t + 1)
    est = prep.R0 + (scale * s / a) * nx.gaussian(rng, prep.R0.shape)
    est = clip_state(est, True, coord_scale)
    scaffold = prep.tup.scaffold
    rg = PointSet(est[:, :COORD] * coord_scale + scaffold.anchor_coord, est[:, COORD:])
    rep, _ = ipnet_forward(ipnet, prep.tup.pocket, scaffold, rg)
    return rep


def _item_loss(denoiser, shiftnet, prep, schedule, t, eps):
    S_t = shift(shiftnet, prep.repr0, schedule, t, n_atoms=len(prep.R0))
    R_t, _ = forward_marginal(prep.R0, S_t, schedule, t, eps=eps)
    item = DenoiseItem(R_t, prep.tup.scaffold, prep.pocket, prep.repr0, t, schedule.T)
    return item


def _sq_loss(eps, eps_hat):
    return T.tsum(T.square(eps_hat - eps))


def training_loss(denoiser, shiftnet, ipnet, tup, schedule, rng, t=None, eps=None):
    """``||eps - eps_hat||^2`` summed over R-group entries for one tuple.

    Returns ``(loss, info)``; ``info`` carries the sampled ``t`` and ``eps``.
    ``ipnet`` may be an ``IpNetModel`` or an already prepared tuple cache.
    """
    prep = tup if isinstance(tup, Prepared) else prepare(tup, ipnet.frozen() if hasattr(ipnet, "frozen") else ipnet)
    if t is None:
        t = int(rng.integers(1, schedule.T + 1))
    if eps is None:
        eps = nx.gaussian(rng, prep.R0.shape)
    item = _item_loss(denoiser, shiftnet, prep, schedule, t, eps)
    eps_hat = denoise(denoiser, item.R_t, item.scaffold, item.pocket, item.repr, t, schedule.T)
    return _sq_loss(eps, eps_hat), {"t": t, "eps": eps}


def batch_loss(denoiser, shiftnet, preps, schedule, ts, epss):
    items = [_item_loss(denoiser, shiftnet, p, schedule, t, e) for p, t, e in zip(preps, ts, epss)]
    if callable(denoiser):
        outs = [denoise(denoiser, i.R_t, i.scaffold, i.pocket, i.repr, i.t, i.T_max) for i in items]
    else:
        outs = denoise_batch(denoiser, items)
    total = None
    for e, o in zip(epss, outs):
        l = _sq_loss(e, o)
        total = l if total is None else total + l
    return total * (1.0 / len(items))


@dataclass
class DiffusionModel:
    denoiser: DenoiserModel
    shiftnet: ShiftNet
    schedule: object
    config: TrainConfig
    rgroup_sizes: dict = field(default_factory=dict)

    @property
    def params(self):
        return self.denoiser.params


def init_diffusion_model(rng, feature_dim, config=TrainConfig()):
    params = ModelParams()
    d_rng, s_rng = rng.split(2)
    den = init_denoiser(d_rng, feature_dim, config.denoiser, params)
    sn = init_shiftnet(s_rng, feature_dim, config.shift)
    for k, v in sn.params.items():
        params._store[k] = v
    sn.params = params
    schedule = build_cosine_schedule(config.T, config.beta_interpretation)
    den.schedule = schedule
    return DiffusionModel(den, sn, schedule, config)


def eval_draws(n_items, schedule, seed, n_draws=4):
    """Fixed ``(item index, t, eps seed)`` draws for a reproducible loss probe."""
    rng = Rng.from_seed(seed)
    return [(i, int(rng.integers(1, schedule.T + 1))) for _ in range(n_draws) for i in range(n_items)]


def probe_loss(model, preps, seed=12345, n_draws=4):
    """Mean loss over a fixed set of draws; same value for the same model."""
    draws = eval_draws(len(preps), model.schedule, seed, n_draws)
    rng = Rng.from_seed(seed + 1)
    epss = [nx.gaussian(rng, preps[i].R0.shape) for i, _ in draws]
    total = 0.0
    chunk = 16
    for start in range(0, len(draws), chunk):
        sel = draws[start:start + chunk]
        l = batch_loss(model.denoiser, model.shiftnet, [preps[i] for i, _ in sel], model.schedule,
                       [t for _, t in sel], epss[start:start + chunk])
        total += l.item() * len(sel)
    return total / len(draws)


def train_diffusion(dataset, ipnet, config=TrainConfig(), log_fn=None, probe_every=0):
    """Train the denoiser and shift network with the interaction prior frozen.

    Returns ``(model, history)``; ``history`` holds one dict per step with
    ``step``, ``loss``, ``t`` (list, one per batch item) and ``grad_norm``.
    """
    frozen = ipnet.frozen()
    preps = [prepare(tup, frozen, config.denoiser.coord_scale) for tup in dataset]
    if not preps:
        raise DiffusionError("empty training set")
    rng = Rng.from_seed(config.seed)
    init_rng, step_rng = rng.split(2)
    model = init_diffusion_model(init_rng, frozen.config.hidden_dim, config)
    sizes = {}
    for p in preps:
        sizes[len(p.R0)] = sizes.get(len(p.R0), 0) + 1
    model.rgroup_sizes = dict(sorted(sizes.items()))

    params = model.params
    hp = nx.AdamConfig(lr=config.lr, clip_norm=config.clip_norm)
    state = nx.AdamState()
    history = []
    bs = min(config.batch_size, len(preps))
    for step in range(config.steps):
        if config.lr_decay == "cosine":
            hp = replace(hp, lr=0.5 * config.lr * (1 + np.cos(np.pi * step / config.steps)))
        idx = step_rng.choice(len(preps), size=bs, replace=False)
        ts = [int(t) for t in step_rng.integers(1, model.schedule.T + 1, size=bs)]
        epss = [nx.gaussian(step_rng, preps[i].R0.shape) for i in idx]
        drop = step_rng.uniform(size=bs) < config.repr_dropout
        batch = []
        for i, t, d in zip(idx, ts, drop):
            if d:
                batch.append(replace(preps[i], repr0=InteractionRepr.none()))
            elif config.repr_noise > 0:
                rep = sampler_like_repr(frozen, preps[i], model.schedule, t, step_rng, config.repr_noise,
                                        config.denoiser.coord_scale)
                batch.append(replace(preps[i], repr0=rep))
            else:
                batch.append(preps[i])
        loss = batch_loss(model.denoiser, model.shiftnet, batch, model.schedule, ts, epss)
        grads = nx.backward(loss, params)
        gnorm = nx.global_norm(grads)
        rec = {"step": step, "loss": loss.item(), "t": ts, "grad_norm": gnorm}
        if not np.isfinite(rec["loss"]):
            raise DiffusionError(f"non-finite loss at step {step}")
        _, state = nx.adam_step(params, grads, state, hp)
        if probe_every and (step + 1) % probe_every == 0:
            rec["probe_loss"] = probe_loss(model, preps)
        history.append(rec)
        if log_fn is not None:
            log_fn(rec)
    return model, history


def model_meta(model):
    return {
        "kind": "diffusion",
        "config": asdict(model.config),
        "feature_dim": model.denoiser.feature_dim,
        "rgroup_sizes": {str(k): v for k, v in model.rgroup_sizes.items()},
    }


def model_from_checkpoint(params, meta):
    if meta.get("kind") != "diffusion":
        raise nx.CheckpointError("checkpoint is not a diffusion model")
    cfg = meta["config"]
    config = TrainConfig(
        **{k: v for k, v in cfg.items() if k not in ("denoiser", "shift")},
        denoiser=DenoiserConfig(**cfg["denoiser"]),
        shift=ShiftNetConfig(**cfg["shift"]),
    )
    d = meta["feature_dim"]
    den = DenoiserModel(params, config.denoiser, d)
    sn = ShiftNet(params, config.shift, d)
    schedule = build_cosine_schedule(config.T, config.beta_interpretation)
    den.schedule = schedule
    sizes = {int(k): v for k, v in meta.get("rgroup_sizes", {}).items()}
    return DiffusionModel(den, sn, schedule, config, sizes)
