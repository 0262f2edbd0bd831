"""Fast invariant checks over every module, run by ``scaffdiff selfcheck``.

Each check returns the largest observed error; a check passes when that is
below its tolerance. The suite uses small random instances so it finishes in
a few seconds.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from . import metrics
from . import numerics as nx
from .diffusion import (
    DenoiserConfig,
    forward_marginal,
    forward_step,
    init_denoiser,
    posterior_params,
    denoise,
)
from .domain import K
from .iprior import IpNetConfig, init_ipnet, ipnet_forward
from .numerics import Rng, Tensor
from .schedule import build_cosine_schedule
from .synthetic import make_dataset


def check_schedule():
    s = build_cosine_schedule(1000)
    t = np.arange(1, 1001)
    err = np.abs(s.alpha[t] ** 2 + s.sigma[t] ** 2 - 1).max()
    t2 = np.arange(2, 1001)
    err = max(err, np.abs(s.alpha_cond[t2] * s.alpha[t2 - 1] - s.alpha[t2]).max())
    err = max(err, np.abs(s.sigma2_cond[t2] + s.alpha_cond[t2] ** 2 * s.sigma[t2 - 1] ** 2 - s.sigma[t2] ** 2).max())
    return err


def _shifts(rng, s, n):
    base = rng.normal((n, 3))
    return [base * s.k[t] for t in range(s.T + 1)]


def check_composition():
    s = build_cosine_schedule(50)
    rng = Rng.from_seed(1)
    R0 = rng.normal((4, 3 + K))
    S = _shifts(rng, s, 4)
    R = R0
    err = 0.0
    zero = np.zeros_like(R0)
    for t in range(1, s.T + 1):
        if t == 1:
            R, _ = forward_marginal(R0, S[1], s, 1, eps=zero)
        else:
            R, _ = forward_step(R, S[t - 1], S[t], s, t, eps=zero)
        m, _ = forward_marginal(R0, S[t], s, t, eps=zero)
        err = max(err, np.abs(np.asarray(R) - np.asarray(m)).max())
    return err


def check_posterior():
    s = build_cosine_schedule(50)
    rng = Rng.from_seed(2)
    R0 = rng.normal((3, 3 + K))
    S = _shifts(rng, s, 3)
    err = 0.0
    for t in range(2, s.T + 1):
        R_t, _ = forward_marginal(R0, S[t], s, t, eps=np.zeros_like(R0))
        mu, _ = posterior_params(R_t, R0, S[t], S[t - 1], s, t)
        expect, _ = forward_marginal(R0, S[t - 1], s, t - 1, eps=np.zeros_like(R0))
        err = max(err, np.abs(np.asarray(mu.data if isinstance(mu, Tensor) else mu) - expect).max())
    return err


def check_equivariance():
    tups, _ = make_dataset(1, seed=3, n_pocket=12)
    tup = tups[0]
    rng = Rng.from_seed(4)
    ip = init_ipnet(rng, IpNetConfig(hidden_dim=8, message_dim=8, n_layers=1, attention_dim=4)).frozen()
    den = init_denoiser(rng, 8, DenoiserConfig(hidden_dim=8, message_dim=8, n_layers=2))
    rot = Rotation.from_rotvec([0.3, -1.1, 0.7]).as_matrix()
    move = np.array([1.5, -2.0, 0.25])
    moved = tup.transformed(rot, move)
    R_t = rng.normal((len(tup.rgroup), 3 + K))
    R_rot = R_t.copy()
    R_rot[:, :3] = R_t[:, :3] @ rot.T

    rep, aff = ipnet_forward(ip, tup.pocket, tup.scaffold, tup.rgroup)
    rep2, aff2 = ipnet_forward(ip, moved.pocket, moved.scaffold, moved.rgroup)
    err = max(abs(aff.item() - aff2.item()), np.abs(rep.F_R - rep2.F_R).max())
    a = denoise(den, R_t, tup.scaffold, tup.augmented_pocket(), rep, 7, 20).data
    b = denoise(den, R_rot, moved.scaffold, moved.augmented_pocket(), rep2, 7, 20).data
    err = max(err, np.abs(a[:, :3] @ rot.T - b[:, :3]).max(), np.abs(a[:, 3:] - b[:, 3:]).max())
    return err


def check_gradients():
    rng = Rng.from_seed(5)
    params = nx.ModelParams()
    spec = nx.MlpSpec("g", (4, 5, 2), "tanh")
    nx.init_mlp(params, rng, spec)
    x = Tensor(rng.normal((3, 4)))

    def loss():
        return nx.ops.tsum(nx.ops.square(nx.mlp_forward(params, x, spec)))

    grads = nx.backward(loss(), params)
    worst = 0.0
    h = 1e-6
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss().item()
            flat[i] = old - h
            down = loss().item()
            flat[i] = old
            fd = (up - down) / (2 * h)
            g = grads[name].reshape(-1)[i]
            worst = max(worst, abs(fd - g) / max(1e-8, abs(fd) + abs(g)))
    return worst


def check_interactions():
    tups, _ = make_dataset(3, seed=6)
    worst = 0.0
    for tup in tups:
        lig = metrics.assemble(tup.scaffold, tup.rgroup)
        a = metrics.detect_interactions(tup.augmented_pocket(), lig)
        b = metrics.brute_force_interactions(tup.augmented_pocket(), lig)
        if [r.key() for r in a] != [r.key() for r in b]:
            return float("inf")
        if a:
            worst = max(worst, max(abs(x.distance - y.distance) for x, y in zip(a, b)))
    return worst


CHECKS = (
    ("schedule identities", check_schedule, 1e-12),
    ("kernel composition", check_composition, 1e-10),
    ("posterior reduction", check_posterior, 1e-10),
    ("equivariance", check_equivariance, 1e-6),
    ("gradient check", check_gradients, 1e-4),
    ("interaction oracle", check_interactions, 1e-12),
)


def run_selfcheck(report=print):
    ok = True
    for name, fn, tol in CHECKS:
        err = fn()
        passed = bool(err < tol)
        ok &= passed
        report(f"{'PASS' if passed else 'FAIL'} {name}: max error {err:.3g} (tol {tol:g})")
    return ok
