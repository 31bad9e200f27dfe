"""Counter-based Gaussian streams keyed by (seed, level, sample index, role).

Every path owns a 64-bit key.  The n-th uniform of a stream is the SplitMix64
output ``mix64(key + (n + 1) * GAMMA)``, so any draw can be computed directly
from ``(key, n)`` without touching other streams.  This is what makes batch
results independent of how samples are partitioned across workers.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MASK64 = (1 << 64) - 1

ROLES = {"single": 1, "coupled": 2, "contraction": 3}


def mix64(z):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed, level, sample_index, role="single"):
    """Vectorised key derivation; ``sample_index`` may be an integer array."""
    if role not in ROLES:
        raise ValueError(f"unknown stream role {role!r}")
    idx = np.atleast_1d(np.asarray(sample_index, dtype=np.int64)).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = mix64(np.array([int(seed) & _MASK64], dtype=np.uint64) + GAMMA)
        h = mix64(h ^ mix64(np.uint64(int(level) & _MASK64) + GAMMA * np.uint64(2)))
        h = mix64(h ^ mix64(np.uint64(ROLES[role]) + GAMMA * np.uint64(3)))
        keys = mix64(h ^ mix64(idx + GAMMA * np.uint64(5)))
    return keys


def uniform_bits(keys, counters):
    """Raw 64-bit outputs for ``(key, counter)`` pairs."""
    with np.errstate(over="ignore"):
        state = keys + (np.asarray(counters, dtype=np.uint64) + np.uint64(1)) * GAMMA
    return mix64(state)


def uniforms(keys, counters):
    """Open-interval uniforms on (0, 1) with 53 random bits."""
    bits = uniform_bits(keys, counters)
    return ((bits >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def counter_normals(keys, counters, dim):
    """Standard normals of shape ``(len(keys), dim)``.

    Row ``i`` component ``j`` is draw number ``counters[i] * dim + j`` of
    stream ``keys[i]``.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    base = np.asarray(counters, dtype=np.uint64) * np.uint64(dim)
    if dim == 1:
        return ndtri(uniforms(keys, base))[:, None]
    offs = np.arange(dim, dtype=np.uint64)
    u = uniforms(keys[:, None], base[:, None] + offs[None, :])
    return ndtri(u)


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible Gaussian stream."""

    seed: int
    level: int = 0
    sample_index: int = 0
    role: str = "single"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown stream role {self.role!r}")

    @property
    def key(self):
        return stream_keys(self.seed, self.level, self.sample_index, self.role)[0]

    def normals(self, n, start=0):
        """Draws ``start .. start + n - 1`` of this stream."""
        keys = np.full(n, self.key, dtype=np.uint64)
        counters = np.arange(start, start + n, dtype=np.uint64)
        return ndtri(uniforms(keys, counters))
