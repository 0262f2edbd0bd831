"""Reverse generation loop with bootstrapped interaction features."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .diffusion import COORD, clip_state, denoise, estimate_R0, posterior_params
from .domain import K, PointSet, center_on_scaffold, encode_types, onehot_decode
from .iprior import InteractionRepr, ipnet_forward, shift
from .numerics import Rng

log = logging.getLogger(__name__)



class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 100
    n_atoms: int = None  # None: draw from the training size histogram
    seed: int = 0
    r0_shift_correction: bool = False
    clip_r0: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class TrajectoryStep:
    t: int
    R_t: np.ndarray
    R0_hat: np.ndarray
    S_t: np.ndarray
    S_prev: np.ndarray
    repr_source: int = None  # timestep whose R0_hat fed the interaction prior
    repr_input: np.ndarray = None


def _data(x):
    return x.data if isinstance(x, nx.Tensor) else np.asarray(x)


def _as_pointset(R, anchor, scale):
    return PointSet(R[:, :COORD] * scale + anchor, R[:, COORD:])


def sample_one(denoiser, shiftnet, ipnet, aug_pocket, scaffold, n_atoms, schedule, rng,
               shift_correction=False, clip_r0=True, noise_rotation=None, trajectory=None, coord_scale=None):
    """Generate one R-group attached to ``scaffold`` inside ``aug_pocket``.

    Works in the frame of the inputs; the state is kept relative to the
    scaffold anchor and starts from ``N(0, I)`` there. For every step
    ``t < T`` the interaction prior is evaluated on the estimate of the clean
    R-group made at step ``t + 1``; at ``t = T`` it is the ``none`` sentinel.
    ``ipnet=None`` disables the prior altogether.

    ``noise_rotation`` rotates the coordinate block of every noise draw,
    which lets tests compare runs in rotated frames with the same seed.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    if coord_scale is None:
        coord_scale = denoiser.config.coord_scale if hasattr(denoiser, "config") else 1.0
    anchor = scaffold.coords[scaffold.anchor]
    width = COORD + K

    def draw():
        e = nx.gaussian(rng, (n_atoms, width))
        if noise_rotation is not None:
            e[:, :COORD] = e[:, :COORD] @ np.asarray(noise_rotation).T
        return e

    R = draw()
    repr_ = InteractionRepr.none()
    source = None
    ipnet_input = None
    for t in range(schedule.T, 0, -1):
        S_t = _data(shift(shiftnet, repr_, schedule, t, n_atoms=n_atoms))
        S_prev = _data(shift(shiftnet, repr_, schedule, t - 1, n_atoms=n_atoms))
        eps_hat = _data(denoise(denoiser, R, scaffold, aug_pocket, repr_, t, schedule.T))
        R0_hat = estimate_R0(R, eps_hat, schedule, t, S_t=S_t, shift_correction=shift_correction)
        R0_hat = clip_state(R0_hat, clip_r0, coord_scale)
        mu, var = posterior_params(R, R0_hat, S_t, S_prev, schedule, t)
        mu = _data(mu)
        R_next = mu + np.sqrt(var) * draw() if var > 0 else mu
        if not np.all(np.isfinite(R_next)):
            raise SamplingError(f"non-finite state at step t={t}")
        if trajectory is not None:
            trajectory.append(TrajectoryStep(t, R.copy(), R0_hat.copy(), S_t.copy(), S_prev.copy(),
                                             source, None if ipnet_input is None else ipnet_input.copy()))
        if ipnet is not None and t > 1:
            ipnet_input = R0_hat
            repr_, _ = ipnet_forward(ipnet, aug_pocket, scaffold, _as_pointset(R0_hat, anchor, coord_scale))
            source = t
        R = R_next

    coords = R[:, :COORD] * coord_scale + anchor
    types = encode_types([onehot_decode(row) for row in R[:, COORD:]])
    return PointSet(coords, types)


def choose_n_atoms(sizes, rng):
    """Draw an R-group size from a ``{size: count}`` histogram."""
    if not sizes:
        raise SamplingError("no R-group size histogram; pass n_atoms explicitly")
    keys = sorted(sizes)
    counts = np.array([sizes[k] for k in keys], dtype=np.float64)
    return int(keys[int(rng.choice(len(keys), p=counts / counts.sum()))])


def sample_batch(model, ipnet, tup, config=SamplerConfig(), trajectories=None):
    """``config.n_samples`` independent R-groups for one complex.

    Sample ``i`` uses child stream ``i`` of ``config.seed``, so results do
    not depend on worker count or execution order. Output coordinates are in
    the input frame.
    """
    centered, offset = center_on_scaffold(tup)
    aug = centered.augmented_pocket()
    frozen = ipnet.frozen() if ipnet is not None and hasattr(ipnet, "frozen") else ipnet
    streams = Rng.from_seed(config.seed).split(config.n_samples)

    def run(i):
        rng = streams[i]
        n = config.n_atoms if config.n_atoms is not None else choose_n_atoms(model.rgroup_sizes, rng)
        traj = [] if trajectories is not None else None
        try:
            rg = sample_one(model.denoiser, model.shiftnet, frozen, aug, centered.scaffold, n, model.schedule, rng,
                            shift_correction=config.r0_shift_correction, clip_r0=config.clip_r0, trajectory=traj)
        except SamplingError as exc:
            raise SamplingError(f"sample {i}: {exc}") from None
        return rg.translated(offset), traj

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, range(config.n_samples)))
    else:
        results = [run(i) for i in range(config.n_samples)]
    if trajectories is not None:
        trajectories.extend(tr for _, tr in results)
    return [rg for rg, _ in results]
