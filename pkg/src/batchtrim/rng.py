"""Deterministic random numbers built on SplitMix64.

One named generator keeps every run reproducible and documentable: the same
seed always yields the same bit pattern, independent of platform library
generators.  State advances by a fixed additive constant per draw, which lets
`next_block` produce n draws vectorized while staying bit-identical to n
scalar `next_u64` calls.

Draw accounting (fixed, so streams can be reasoned about):
  * `normals(n)` consumes 2 * ceil(n / 2) draws (one Box-Muller pair per two
    outputs; the spare half of an odd request is discarded).
  * `uniforms(n)` consumes n draws.
  * `permutation(prng, n)` consumes max(n - 1, 0) draws.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .tensor import Tensor, validate_shape

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# 2**-53; (u64 >> 11) * _U53 is uniform on [0, 1) with 53 random bits
_U53 = 1.0 / (1 << 53)


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # array ops only: numpy scalar uint64 arithmetic warns on overflow,
    # array arithmetic wraps silently
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed (order-sensitive).

    Used to key independent streams, e.g. derive_seed(run_seed, epoch) for
    the per-epoch shuffle and derive_seed(run_seed, 0) for weight init.
    """
    state = 0
    for part in parts:
        state = _mix64((state + (int(part) & _MASK)) & _MASK)
    return state


class Prng:
    """SplitMix64 stream; single-owner, never shared between trials."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix64(self.state)

    def next_block(self, n: int) -> np.ndarray:
        """n draws as a uint64 array; bit-identical to n next_u64 calls."""
        if n < 0:
            raise ParameterError(f"block size must be >= 0, got {n}")
        steps = np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self.state) + np.uint64(_GAMMA) * steps
        self.state = (self.state + _GAMMA * n) & _MASK
        return _mix64_array(states)

    def uniforms(self, n: int) -> np.ndarray:
        """n float64 samples uniform on [0, 1)."""
        return (self.next_block(n) >> np.uint64(11)).astype(np.float64) * _U53

    def normals(self, n: int) -> np.ndarray:
        """n standard-normal float64 samples via the Box-Muller transform.

        Each consecutive pair of outputs (cos branch then sin branch) is
        produced from two draws; u1 is mapped to (0, 1] so log never sees 0.
        """
        pairs = (n + 1) // 2
        raw = self.next_block(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _U53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _U53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]


def randn(prng: Prng, shape, mean: float = 0.0, std: float = 1.0) -> Tensor:
    """Tensor of Normal(mean, std) samples; same seed gives identical bits."""
    if std < 0:
        raise ParameterError(f"std must be >= 0, got {std}")
    validate_shape(shape)
    n = int(np.prod(shape))
    values = mean + std * prng.normals(n)
    return Tensor(values.reshape(shape))


def permutation(prng: Prng, n: int) -> np.ndarray:
    """Fisher-Yates shuffle of [0, n) driven by one SplitMix64 stream.

    The bounded index for step i uses the multiply-shift map
    (u64 * (i + 1)) >> 64; its selection bias is below 2**-57 for any i
    that fits a mini-batch index and is identical across runs.
    """
    if n < 0:
        raise ShapeError(f"permutation length must be >= 0, got {n}")
    perm = list(range(n))
    if n > 1:
        draws = prng.next_block(n - 1).tolist()
        for t, i in enumerate(range(n - 1, 0, -1)):
            j = (draws[t] * (i + 1)) >> 64
            perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)
