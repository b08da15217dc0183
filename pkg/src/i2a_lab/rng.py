"""Seeded pseudo-random streams.

All randomness in the package goes through :class:`Rng`, a SplitMix64
generator (Steele, Lea & Flood 2014).  The algorithm is fixed so that a seed
reproduces the same stream on every platform, and so that the compiled
kernels can mirror it bit-for-bit.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state):
    """Advance ``state`` once; return ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _mix_label(label):
    h = 0xCBF29CE484222325
    for byte in label.encode("utf8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


class Rng:
    """SplitMix64 stream with the handful of helpers the package needs."""

    __slots__ = ("state",)

    def __init__(self, seed=0):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state, out = splitmix64(self.state)
        return out

    def randbelow(self, n):
        """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError(f"randbelow needs n > 0, got {n}")
        threshold = (1 << 64) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def random(self):
        """Uniform float in ``[0, 1)`` with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle; returns ``items``."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def sample(self, seq, k):
        pool = list(seq)
        if k > len(pool):
            raise ValueError(f"cannot sample {k} from {len(pool)} items")
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def categorical(self, probs):
        """Index drawn from a probability vector (inverse CDF)."""
        u = self.random()
        acc = 0.0
        last = 0
        for i, p in enumerate(probs):
            if p > 0.0:
                last = i
                acc += p
                if u < acc:
                    return i
        return last

    def split(self, label):
        """Independent child stream for one purpose (levels, init, actions...)."""
        _, seed = splitmix64(self.state ^ _mix_label(str(label)))
        return Rng(seed)

    def numpy(self):
        """A numpy PCG64 generator seeded from this stream, for bulk draws."""
        return np.random.Generator(np.random.PCG64(self.next_u64()))


def derive_seed(*parts):
    """Stable 64-bit seed from a tuple of ints/strings."""
    h = 0x6A09E667F3BCC908
    for part in parts:
        h, _ = splitmix64(h ^ _mix_label(str(part)))
    return h
