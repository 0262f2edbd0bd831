"""Cosine noise schedule in log-SNR form, with the mean-shift coefficient.

Arrays are stored with length ``T + 1``; index ``t`` holds the value at
timestep ``t`` and index 0 holds the clean-data convention
(alpha = 1, sigma = 0, k = 0).

Two readings of the per-step rate inside ``gamma`` are supported:

``literal``
    gamma_t = log(1 - beta_t) - log(beta_t) with the per-step beta_t, so
    alpha_t**2 = beta_t.
``cumulative``
    the same formula applied to the running product prod_{s<=t}(1 - beta_s),
    i.e. gamma_t = log(1 - abar_t) - log(abar_t) and alpha_t**2 = abar_t.

The ``k_t`` product always uses the per-step beta_t.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)

BETA_MIN = 1e-5
BETA_MAX = 0.999
COSINE_OFFSET = 0.008
INTERPRETATIONS = ("literal", "cumulative")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    alpha_bar_prod: np.ndarray
    k: np.ndarray
    alpha_cond: np.ndarray
    sigma2_cond: np.ndarray
    beta_interpretation: str = "cumulative"

    def check_t(self, t, lo=1):
        if not (lo <= t <= self.T) or int(t) != t:
            raise ScheduleError(f"timestep {t} outside [{lo}, {self.T}]")
        return int(t)

    def gamma_at(self, t):
        return gamma(self, t)

    def alpha_sigma(self, t):
        return alpha_sigma(self, t)

    def conditional(self, t):
        return conditional_coeffs(self, t)

    def shift_coeff(self, t):
        return shift_coeff(self, t)

    def records(self):
        for t in range(1, self.T + 1):
            yield {
                "t": t,
                "beta": float(self.beta[t]),
                "gamma": float(self.gamma[t]),
                "alpha": float(self.alpha[t]),
                "sigma": float(self.sigma[t]),
                "alpha_bar_prod": float(self.alpha_bar_prod[t]),
                "k": float(self.k[t]),
                "alpha_cond": float(self.alpha_cond[t]) if t >= 2 else None,
                "sigma2_cond": float(self.sigma2_cond[t]) if t >= 2 else None,
            }

    def dump(self, path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


def cosine_betas(T, s=COSINE_OFFSET):
    """Per-step rates from the squared-cosine cumulative curve, clipped."""
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((steps / T) + s) / (1 + s) * math.pi / 2) ** 2
    abar = f / f[0]
    beta = 1.0 - abar[1:] / abar[:-1]
    return np.clip(beta, BETA_MIN, BETA_MAX)


def build_cosine_schedule(T, beta_interpretation="cumulative"):
    if int(T) != T or T < 2:
        raise ScheduleError(f"need T >= 2, got {T}")
    if beta_interpretation not in INTERPRETATIONS:
        raise ScheduleError(f"beta_interpretation must be one of {INTERPRETATIONS}")
    T = int(T)
    beta = np.concatenate([[0.0], cosine_betas(T)])
    abar = np.cumprod(1.0 - beta)

    rate = beta if beta_interpretation == "literal" else abar
    gam = np.full(T + 1, -np.inf)
    gam[1:] = np.log1p(-rate[1:]) - np.log(rate[1:])
    alpha = np.ones(T + 1)
    sigma = np.zeros(T + 1)
    alpha[1:] = np.sqrt(expit(-gam[1:]))
    sigma[1:] = np.sqrt(expit(gam[1:]))

    root = np.sqrt(abar)
    k = root * (1.0 - root)

    alpha_cond = np.full(T + 1, np.nan)
    sigma2_cond = np.full(T + 1, np.nan)
    # t = 1 conditions on the clean state (index 0)
    alpha_cond[1:] = alpha[1:] / alpha[:-1]
    sigma2_cond[1:] = sigma[1:] ** 2 - alpha_cond[1:] ** 2 * sigma[:-1] ** 2
    negative = sigma2_cond[1:] < 0
    if negative.any():
        log.warning(
            "conditional variance negative at %d timesteps (min %.3g); clamped to 0",
            int(negative.sum()),
            float(sigma2_cond[1:].min()),
        )
        sigma2_cond[1:] = np.maximum(sigma2_cond[1:], 0.0)

    return NoiseSchedule(
        T=T,
        beta=beta,
        gamma=gam,
        alpha=alpha,
        sigma=sigma,
        alpha_bar_prod=abar,
        k=k,
        alpha_cond=alpha_cond,
        sigma2_cond=sigma2_cond,
        beta_interpretation=beta_interpretation,
    )


def gamma(schedule, t):
    """Log inverse SNR at step ``t``."""
    return float(schedule.gamma[schedule.check_t(t)])


def alpha_sigma(schedule, t):
    t = schedule.check_t(t)
    return float(schedule.alpha[t]), float(schedule.sigma[t])


def conditional_coeffs(schedule, t):
    """``(alpha_{t|t-1}, sigma^2_{t|t-1})`` for ``t >= 2``."""
    t = schedule.check_t(t, lo=2)
    return float(schedule.alpha_cond[t]), float(schedule.sigma2_cond[t])


def shift_coeff(schedule, t):
    """``k_t = sqrt(abar_t) * (1 - sqrt(abar_t))``; ``t = 0`` gives 0."""
    t = schedule.check_t(t, lo=0)
    return float(schedule.k[t])


def gamma_from_rate(beta):
    return math.log1p(-beta) - math.log(beta)


def alpha_sigma_from_gamma(g):
    return math.sqrt(expit(-g)), math.sqrt(expit(g))


def k_from_product(prod):
    root = math.sqrt(prod)
    return root * (1.0 - root)
