"""Deterministic public-coin source.

A CoinSource expands a 32-byte seed into an unbounded stream via
SHA-256 in counter mode.  Every draw is length-prefixed in the coin log
so a transcript replay can reproduce the exact stream positions.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

_U64 = np.uint64

SEED_ENV = "UIPBATCH_SEED"


def resolve_seed(seed) -> bytes:
    """Normalize a seed argument; honors the UIPBATCH_SEED override."""
    env = os.environ.get(SEED_ENV)
    if env is not None:
        seed = int(env)
    if isinstance(seed, bytes):
        data = seed
    elif isinstance(seed, int):
        data = seed.to_bytes(32, "big", signed=False)
    elif isinstance(seed, str):
        data = hashlib.sha256(seed.encode()).digest()
    else:
        raise TypeError("seed must be int, str, or bytes")
    if len(data) != 32:
        data = hashlib.sha256(data).digest()
    return data


class CoinSource:
    """Deterministic bit/element stream with a draw log."""

    def __init__(self, seed):
        self.seed = resolve_seed(seed)
        self._counter = 0
        self._buf = b""
        self._bitbuf = 0
        self._bitcount = 0
        self.log = []  # (kind, count) entries, length-prefixed by construction

    def _refill(self, nbytes: int):
        while len(self._buf) < nbytes:
            block = hashlib.sha256(
                self.seed + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            self._buf += block

    def draw_bytes(self, n: int) -> bytes:
        self._refill(n)
        out, self._buf = self._buf[:n], self._buf[n:]
        self.log.append(("bytes", n))
        return out

    def draw_bits(self, n: int) -> tuple:
        """n coin bits as a tuple of 0/1 ints."""
        out = []
        while len(out) < n:
            if self._bitcount == 0:
                self._refill(1)
                self._bitbuf, self._buf = self._buf[0], self._buf[1:]
                self._bitcount = 8
            out.append(self._bitbuf & 1)
            self._bitbuf >>= 1
            self._bitcount -= 1
        self.log.append(("bits", n))
        return tuple(out)

    def draw_elements(self, n: int, cfg) -> np.ndarray:
        """n uniform field elements as a uint64 array."""
        nbytes = cfg.nbytes
        raw = self.draw_bytes(n * nbytes)
        vals = np.zeros(n, dtype=_U64)
        for i in range(n):
            v = int.from_bytes(raw[i * nbytes:(i + 1) * nbytes], "big")
            vals[i] = v & cfg.mask
        return vals

    def draw_element(self, cfg) -> int:
        return int(self.draw_elements(1, cfg)[0])

    def draw_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        nbits = (bound - 1).bit_length() or 1
        nbytes = (nbits + 7) // 8
        while True:
            v = int.from_bytes(self.draw_bytes(nbytes), "big")
            v &= (1 << nbits) - 1
            if v < bound:
                return v

    def shuffle(self, n: int) -> list:
        """Fisher-Yates permutation of range(n)."""
        table = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.draw_below(i + 1)
            table[i], table[j] = table[j], table[i]
        return table

    def child(self, label: str) -> "CoinSource":
        """Independent stream derived from this seed and a label."""
        return CoinSource(hashlib.sha256(self.seed + label.encode()).digest())
