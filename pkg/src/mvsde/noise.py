"""Deterministic noise streams for particle simulations.

All randomness is derived from a 64-bit seed through the counter-based
Philox generator.  The Gaussian variate for (step k, particle i, component
j) is obtained by inverse-CDF transform of the uniform draw at flat counter
position ``(k*N + i)*m + j``, so the value depends only on the seed and
that index.  Serial and parallel execution therefore agree bit for bit,
and two tensors drawn from the same seed share a common prefix.

Initial-condition sampling uses an independent Philox stream (stream id 1)
so that changing the number of steps never perturbs the initial draw.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_NOISE_STREAM = 0
_INITIAL_STREAM = 1


def _philox(seed: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_increments(seed: int, n_steps: int, n_particles: int, m: int) -> np.ndarray:
    """Standard-normal tensor of shape (n_steps, n_particles, m).

    Uniform draws consume exactly one 64-bit word each, so entry
    ``[k, i, j]`` is a pure function of the seed and its flat index.
    """
    gen = _philox(seed, _NOISE_STREAM)
    u = gen.random((n_steps, n_particles, m))
    # u == 0.0 would map to -inf under the inverse CDF; probability 2^-53.
    np.copyto(u, 2.0 ** -54, where=(u == 0.0))
    return ndtri(u)


def initial_rng(seed: int) -> np.random.Generator:
    """Generator for drawing i.i.d. initial conditions."""
    return _philox(seed, _INITIAL_STREAM)
