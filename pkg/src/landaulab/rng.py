"""Stream-keyed random sources.

Every stochastic routine in this package draws from a counter-based
generator (Philox) keyed by ``(seed, *path)`` where the path is a tuple of
small integer labels (purpose tag, replica, step, ...).  Distinct paths
give statistically independent streams, and a stream's output depends only
on its key, never on call order or thread count.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

# purpose tags for derived streams
TAG_INIT = 1          # initial particle draws
TAG_PAIR = 2          # antisymmetric pair noise (Kac)
TAG_PAIR_IID = 3      # independent pair noise (Fontbona-Guerin-Meleard)
TAG_SINGLE = 4        # per-particle noise (Nanbu)
TAG_SAMPLER = 5       # density samplers
TAG_MC = 6            # Monte-Carlo functional estimates
TAG_SLICED = 7        # sliced-Wasserstein directions


def stream(seed: int, *path: int) -> Generator:
    """Generator for the stream identified by ``(seed, *path)``."""
    ss = SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in path))
    return Generator(Philox(ss))


def pair_noise(seed, replica, step, n, dt):
    """Antisymmetric Brownian increments for the conservative pair scheme.

    Returns Z of shape (n, n, 3) with Z[j, i] = -Z[i, j] exactly, the
    upper triangle i < j being i.i.d. N(0, dt Id).
    """
    g = stream(seed, TAG_PAIR, replica, step).standard_normal((n, n, 3))
    z = g - g.swapaxes(0, 1)
    z *= np.sqrt(dt / 2.0)
    return z


def iid_pair_noise(seed, replica, step, n, dt):
    """Independent N(0, dt Id) increments for every ordered pair (i, j)."""
    g = stream(seed, TAG_PAIR_IID, replica, step).standard_normal((n, n, 3))
    g *= np.sqrt(dt)
    return g


def particle_noise(seed, replica, step, n, dt):
    """One N(0, dt Id) increment per particle."""
    g = stream(seed, TAG_SINGLE, replica, step).standard_normal((n, 3))
    g *= np.sqrt(dt)
    return g
