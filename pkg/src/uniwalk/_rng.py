"""SplitMix64 hashing and generator shared by both kernel backends.

The compiled kernels reimplement exactly these operations on ``uint64``
so that walk streams agree bit-for-bit across backends.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_SEED_SALT = 0x5851F42D4C957F2D
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def walk_seed(seed: int, kind_tag: int, iteration: int, node: int, rep: int) -> int:
    """Hash the walk coordinates into an independent 64-bit generator state."""
    h = mix64((seed & MASK64) ^ _SEED_SALT)
    for x in (kind_tag, iteration, node, rep):
        h = mix64(((h ^ (x & MASK64)) + GOLDEN) & MASK64)
    return h


class SplitMix64:
    """Minimal counter-based generator; ``random()`` yields floats in [0, 1)."""

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * _INV_2_53
