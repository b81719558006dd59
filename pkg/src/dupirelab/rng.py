"""Seed derivation.

Every random stream in the package is keyed by a tuple of non-negative
integers (root seed, path index, node index, ...). Outer simulations use
numpy ``Generator`` objects built from ``SeedSequence``; the nested Monte
Carlo kernels use a SplitMix64 counter hash so that any (path, node, sample)
stream can be addressed directly, independent of scheduling.
"""
import numpy as np

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(*keys):
    """Deterministic 64-bit seed from integer keys."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0])


def generator(*keys):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def mix64(z):
    """SplitMix64 finalizer on a python int."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(*keys):
    """Chain-hash integer keys into a single 64-bit kernel key."""
    h = 0x6A09E667F3BCC909
    for k in keys:
        h = mix64(h ^ mix64((int(k) + GOLDEN) & _MASK))
    return h
