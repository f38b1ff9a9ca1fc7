"""Portable seeded generator.

xorshift64* seeded through splitmix64, so any reimplementation reproduces
the exact same stream::

    seeding (splitmix64 of the user seed):
        z = (seed + 0x9E3779B97F4A7C15) mod 2^64
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2^64
        state = z ^ (z >> 31)          (replaced by 1 if zero)

    step:
        x ^= x >> 12;  x ^= x << 25 (mod 2^64);  x ^= x >> 27
        output = x * 0x2545F4914F6CDD1D mod 2^64

    uniform double in [0, 1): (output >> 11) * 2^-53
"""
import math

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(seed):
    z = (seed + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed=0):
        self.state = _splitmix64(int(seed) & _MASK) or 1

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def random(self, n=None):
        """Uniform doubles in [0, 1); a float if ``n`` is None, else an array."""
        if n is None:
            return (self.next_u64() >> 11) * 2.0**-53
        out = np.empty(int(n), dtype=np.float64)
        for i in range(out.size):
            out[i] = (self.next_u64() >> 11) * 2.0**-53
        return out

    def normal(self, n):
        # Box-Muller, two outputs per pair of uniforms
        n = int(n)
        m = (n + 1) // 2
        u1 = self.random(m)
        u2 = self.random(m)
        rad = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([rad * np.cos(2 * math.pi * u2), rad * np.sin(2 * math.pi * u2)])
        return z[:n]
