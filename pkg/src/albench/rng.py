"""Fixed, portable PRNG used for every random decision in the package.

The generator is xoshiro256** with its state seeded from a SplitMix64
stream, so identical seeds give identical results on every platform and
under any parallel schedule.  Per-task streams are derived with
``mix(master_seed, tag, ...)`` instead of sharing one global stream.

Array fills (``uniforms``/``normals``) draw one child seed from the scalar
stream and then run many single-output xoshiro256** lanes side by side in
numpy, each lane's state words coming from the child's SplitMix64 stream.
This keeps bulk generation fast while staying bit-reproducible: the result
depends only on the child seed and the requested length.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_TWO53_INV = 2.0**-53


def splitmix64_mix(z: int) -> int:
    """SplitMix64 output function (finalizer) on a 64-bit value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a string, used to turn stream tags into 64-bit words."""
    h = _FNV_BASIS
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def mix(seed: int, *tags: int | str) -> int:
    """Derive a deterministic child seed from a master seed and task tags."""
    h = splitmix64_mix((seed + GOLDEN) & MASK64)
    for tag in tags:
        word = fnv1a64(tag) if isinstance(tag, str) else tag & MASK64
        h = splitmix64_mix(((h ^ word) + GOLDEN) & MASK64)
    return h


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def _seed_state(seed: int) -> list[int]:
    state = []
    z = seed & MASK64
    for _ in range(4):
        z = (z + GOLDEN) & MASK64
        state.append(splitmix64_mix(z))
    if not any(state):  # all-zero state is the one forbidden xoshiro state
        state[0] = 1
    return state


# --- vectorized lanes -------------------------------------------------------

_U = np.uint64


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _U(_MIX1)
    z = (z ^ (z >> _U(27))) * _U(_MIX2)
    return z ^ (z >> _U(31))


def _rotl_array(x: np.ndarray, k: int) -> np.ndarray:
    return (x << _U(k)) | (x >> _U(64 - k))


def _lane_states(seed: int, n: int) -> list[np.ndarray]:
    """State words for n parallel lanes, SplitMix64 stream of the seed."""
    base = _U(seed & MASK64)
    lane = np.arange(n, dtype=np.uint64)
    golden = _U(GOLDEN)
    words = []
    for j in range(4):
        ctr = base + (lane * _U(4) + _U(j + 1)) * golden
        words.append(_mix_array(ctr))
    return words


def _lane_outputs(state: list[np.ndarray], rounds: int) -> list[np.ndarray]:
    """`rounds` xoshiro256** outputs per lane, advancing lane states."""
    s0, s1, s2, s3 = state
    outs = []
    for _ in range(rounds):
        outs.append(_rotl_array(s1 * _U(5), 7) * _U(9))
        t = s1 << _U(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl_array(s3, 45)
    state[:] = [s0, s1, s2, s3]
    return outs


def _fill_uniforms(seed: int, n: int) -> np.ndarray:
    """n float64 values in [0, 1) from single-output lanes under `seed`."""
    if n == 0:
        return np.empty(0, dtype=np.float64)
    out = _lane_outputs(_lane_states(seed, n), 1)[0]
    return (out >> _U(11)).astype(np.float64) * _TWO53_INV


def _fill_normals(seed: int, n: int) -> np.ndarray:
    """n standard-normal float64 values via Box-Muller on lane pairs."""
    if n == 0:
        return np.empty(0, dtype=np.float64)
    pairs = (n + 1) // 2
    o1, o2 = _lane_outputs(_lane_states(seed, pairs), 2)
    u1 = ((o1 >> _U(11)).astype(np.float64) + 1.0) * _TWO53_INV  # (0, 1]
    u2 = (o2 >> _U(11)).astype(np.float64) * _TWO53_INV  # [0, 1)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs, dtype=np.float64)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:n]


class Rng:
    """Sequential xoshiro256** stream plus vectorized array draws.

    Scalar draws advance the stream one step per output.  Array draws
    consume exactly one scalar step (a child seed) regardless of length,
    so call sequences stay aligned across code paths.
    """

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        self._s = _seed_state(seed)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float64 in [0, 1)."""
        return (self.next_u64() >> 11) * _TWO53_INV

    def below(self, n: int) -> int:
        """Integer in [0, n) via the multiply-high reduction."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return (self.next_u64() * n) >> 64

    def normal(self) -> float:
        """One standard-normal draw (Box-Muller, cosine branch)."""
        u1 = ((self.next_u64() >> 11) + 1) * _TWO53_INV
        u2 = (self.next_u64() >> 11) * _TWO53_INV
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list | np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choose_prefix(self, items: list | np.ndarray, k: int) -> list:
        """k items without replacement (Fisher-Yates prefix), selection order."""
        n = len(items)
        if not 0 <= k <= n:
            raise ValueError(f"cannot choose {k} of {n} items")
        pool = list(items)
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        order = np.arange(n, dtype=np.int64)
        self.shuffle(order)
        return order

    def uniforms(self, n: int) -> np.ndarray:
        """Array of n uniform float64 in [0, 1)."""
        return _fill_uniforms(self.next_u64(), n)

    def normals(self, n: int) -> np.ndarray:
        """Array of n standard-normal float64."""
        return _fill_normals(self.next_u64(), n)
