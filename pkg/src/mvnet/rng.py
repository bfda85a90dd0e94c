"""Deterministic random numbers for every stochastic step in the package.

Built on the Philox 4x64 counter-based generator. The raw 64-bit stream is
fixed by the Philox definition, and every transform on top of it (uniform,
Box-Muller normal, rejection-sampled bounded integers, Fisher-Yates
shuffles) is implemented here so the mapping from (seed, stream, call
sequence) to outputs is pinned by this file, not by library internals.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64"

_U64 = np.uint64
_TWO53_INV = float(np.ldexp(1.0, -53))


def stream_for(name: str) -> int:
    """Derive a stable 63-bit stream id from a component name."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF


class Rng:
    """Counter-based PRNG: (seed, stream, call sequence) fixes all outputs.

    Philox is keyed with (seed, stream); draws advance the counter only, so
    two Rng objects with equal construction arguments replay bit-identical
    sequences on any platform.
    """

    algorithm = ALGORITHM

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.stream = int(stream) & 0xFFFF_FFFF_FFFF_FFFF
        self._bits = np.random.Philox(key=(self.seed << 64) | self.stream)

    def spawn(self, name: str) -> "Rng":
        """Independent child stream named after the component using it."""
        return Rng(self.seed, self.stream ^ stream_for(name))

    def raw(self, n: int) -> np.ndarray:
        """n raw 64-bit words straight from the Philox counter stream."""
        return self._bits.random_raw(n)

    def uniform(self, shape=(), lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Uniforms in [lo, hi) from the top 53 bits of each raw word."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self.raw(n) >> _U64(11)).astype(np.float64) * _TWO53_INV
        out = lo + (hi - lo) * u
        return out.reshape(shape) if shape else float(out[0])

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Standard Box-Muller pairs on 53-bit uniforms; fully reproducible."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        u = (self.raw(2 * pairs) >> _U64(11)).astype(np.float64) * _TWO53_INV
        u1 = u[:pairs]
        u2 = u[pairs:]
        # guard log(0); the offset is below the 53-bit resolution of u1
        r = np.sqrt(-2.0 * np.log(u1 + 1e-300))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = mean + std * z
        return out.reshape(shape) if shape else float(out[0])

    def integers(self, lo: int, hi: int, size: int | None = None) -> np.ndarray | int:
        """Unbiased integers in [lo, hi) via rejection on raw 64-bit words."""
        if hi <= lo:
            raise ValueError(f"empty integer range [{lo}, {hi})")
        span = hi - lo
        limit = (1 << 64) - ((1 << 64) % span)
        n = 1 if size is None else int(size)
        got: list[int] = []
        while len(got) < n:
            for w in self.raw(max(n - len(got), 1)).tolist():
                if w < limit:
                    got.append(lo + (w % span))
                    if len(got) == n:
                        break
        return got[0] if size is None else np.array(got, dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n)."""
        order = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, stream={self.stream}, algorithm={self.algorithm!r})"


def _as_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)
