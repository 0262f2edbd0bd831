"""Scaffold-conditioned R-group generation with interaction-aware diffusion.

Subpackages and modules:

- ``numerics``: reverse-mode autodiff, EGNN and attention layers, Adam, RNG
- ``schedule``: SNR-parameterised cosine noise schedule
- ``domain``: point sets, complexes and the dataset file format
- ``conservation``: A3M parsing and per-residue conservation scores
- ``iprior``: interaction prior network and the learned mean shift
- ``diffusion``: shifted forward kernels, posterior, denoiser and training
- ``sampler``: reverse generation with bootstrapped interaction features
- ``metrics``: validity, uniqueness, interactions and model comparison
"""

__version__ = "0.1.0"
