"""The noise schedule and the shifted forward process, step by step.

Run with ``python3 demos/01_noise_schedule.py``.
"""

import numpy as np

from scaffdiff.diffusion import forward_marginal, forward_step, posterior_params
from scaffdiff.numerics import Rng
from scaffdiff.schedule import build_cosine_schedule

# A short schedule is enough to look at. Index 0 is the clean state.
sched = build_cosine_schedule(10)
for rec in sched.records():
    print(f"t={rec['t']:2d}  alpha={rec['alpha']:.4f}  sigma={rec['sigma']:.4f}  k={rec['k']:.4f}")

# Variance preserving: alpha^2 + sigma^2 stays at one.
t = np.arange(1, 11)
print("max |alpha^2 + sigma^2 - 1| =", np.abs(sched.alpha[t] ** 2 + sched.sigma[t] ** 2 - 1).max())

# The other reading of the betas makes alpha grow with t. Every one-step
# variance then comes out negative and is clamped to zero.
lit = build_cosine_schedule(10, "literal")
print("literal alpha:", np.round(lit.alpha[1:], 3))
print("literal one-step variances:", lit.sigma2_cond[2:])

# One R-group of two atoms: 3 coordinates and 10 type logits per row.
R0 = np.zeros((2, 13))
R0[:, :3] = [[1.2, 0.0, 0.0], [2.4, 0.3, 0.0]]
R0[0, 3] = R0[1, 5] = 1.0

# A mean shift scaled by k_t moves the coordinates only.
direction = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
S = [direction * sched.k[t] for t in range(sched.T + 1)]

# Walking the chain one step at a time with zero noise lands on the
# marginal mean at every t.
R, _ = forward_marginal(R0, S[1], sched, 1, eps=np.zeros_like(R0))
for t in range(2, sched.T + 1):
    R, _ = forward_step(R, S[t - 1], S[t], sched, t, eps=np.zeros_like(R0))
    m, _ = forward_marginal(R0, S[t], sched, t, eps=np.zeros_like(R0))
    assert np.abs(R - m).max() < 1e-12
print("step-by-step chain matches the marginal at every t")

# With noise, the posterior pulls a sample back towards the previous step.
rng = Rng.from_seed(0)
R5, eps = forward_marginal(R0, S[5], sched, 5, rng=rng)
mu, var = posterior_params(R5, R0, S[5], S[4], sched, 5)
print("posterior mean at t=4 (first atom xyz):", np.round(mu[0, :3], 3), " variance:", round(var, 4))
prev, _ = forward_marginal(R0, S[4], sched, 4, eps=np.zeros_like(R0))
print("noise-free marginal at t=4:            ", np.round(prev[0, :3], 3))
