"""Permutations on {0,1}^m with succinct descriptions.

Two samplers: UNIFORM (Fisher-Yates from a seeded coin stream; the
description is the full table, exactly d-wise independent for every d)
and REVERSIBLE (random width-2 gate circuits; kept for description-size
measurements, its independence guarantee needs d <= 2^(m/50) which never
holds at bench scale, so its guarantee flag is False).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .coins import CoinSource

UNIFORM = "UNIFORM"
REVERSIBLE = "REVERSIBLE"

# the 24 permutations of 2-bit values, as output tables indexed by input
_S4 = [p for p in itertools.permutations(range(4))]


@dataclass(frozen=True)
class ReversibleCircuit:
    """Width-2 gates (i, j, sigma) acting on wires of an m-bit value."""

    m: int
    gates: tuple  # ((i, j, sigma_index), ...)

    def apply_table(self) -> np.ndarray:
        n = 1 << self.m
        idx = np.arange(n, dtype=np.int64)
        for (i, j, s) in self.gates:
            sigma = _S4[s]
            bi = (idx >> i) & 1
            bj = (idx >> j) & 1
            pair = (bi << 1) | bj
            out = np.array(sigma, dtype=np.int64)[pair]
            idx = (
                (idx & ~((1 << i) | (1 << j)))
                | (((out >> 1) & 1) << i)
                | ((out & 1) << j)
            )
        return idx

    def inverse_gates(self) -> tuple:
        inv = []
        for (i, j, s) in reversed(self.gates):
            sigma = _S4[s]
            isig = [0] * 4
            for a, b in enumerate(sigma):
                isig[b] = a
            inv.append((i, j, _S4.index(tuple(isig))))
        return tuple(inv)


class PermutationHandle:
    """A bijection on {0,1}^m with a forward table, inverse table, and a
    measured description size in bits."""

    def __init__(self, m: int, table, variant: str, description_bits: int,
                 gates=None, guarantee: bool = True):
        self.m = m
        self.table = np.asarray(table, dtype=np.int64)
        self.variant = variant
        self.description_bits = description_bits
        self.gates = gates
        self.guarantee = guarantee
        inv = np.empty_like(self.table)
        inv[self.table] = np.arange(self.table.size, dtype=np.int64)
        self.inverse_table = inv

    @property
    def size(self) -> int:
        return int(self.table.size)

    def apply(self, x: int) -> int:
        return int(self.table[x])

    def apply_inverse(self, y: int) -> int:
        return int(self.inverse_table[y])

    def inverse(self) -> "PermutationHandle":
        return PermutationHandle(
            self.m, self.inverse_table, self.variant, self.description_bits,
            gates=None, guarantee=self.guarantee,
        )

    def serialize(self) -> bytes:
        out = bytearray()
        out.append(0 if self.variant == UNIFORM else 1)
        out.append(self.m)
        if self.variant == UNIFORM or self.gates is None:
            out += len(self.table).to_bytes(4, "big")
            for v in self.table:
                out += int(v).to_bytes(4, "big")
        else:
            out += len(self.gates).to_bytes(4, "big")
            for (i, j, s) in self.gates:
                out += bytes([i, j, s])
        return bytes(out)

    @staticmethod
    def parse(data: bytes) -> "PermutationHandle":
        variant = UNIFORM if data[0] == 0 else REVERSIBLE
        m = data[1]
        n = int.from_bytes(data[2:6], "big")
        off = 6
        if data[0] == 0:
            table = [
                int.from_bytes(data[off + 4 * i: off + 4 * i + 4], "big")
                for i in range(n)
            ]
            return PermutationHandle(m, table, variant, 8 * len(data))
        gates = tuple(
            (data[off + 3 * i], data[off + 3 * i + 1], data[off + 3 * i + 2])
            for i in range(n)
        )
        rc = ReversibleCircuit(m, gates)
        return PermutationHandle(
            m, rc.apply_table(), variant, 8 * len(data), gates=gates,
            guarantee=False,
        )


def identity(m: int) -> PermutationHandle:
    return PermutationHandle(m, np.arange(1 << m), UNIFORM, (1 << m) * m)


def gate_count(m: int, d: int, eta: float, c: float = 4.0) -> int:
    """ceil(c * d * m * (log2(1/eta) + log2(d*m)))."""
    return math.ceil(c * d * m * (math.log2(1.0 / eta) + math.log2(max(2, d * m))))


def sample(m: int, d: int, eta: float, sampler: str, seed,
           c: float = 4.0) -> PermutationHandle:
    """Draw a permutation on {0,1}^m, deterministic in the seed."""
    src = seed if isinstance(seed, CoinSource) else CoinSource(seed)
    if sampler == UNIFORM:
        table = src.shuffle(1 << m)
        return PermutationHandle(m, table, UNIFORM, (1 << m) * m)
    if sampler == REVERSIBLE:
        n = gate_count(m, d, eta, c)
        gates = []
        for _ in range(n):
            i = src.draw_below(m)
            j = src.draw_below(m - 1)
            if j >= i:
                j += 1
            s = src.draw_below(24)
            gates.append((i, j, s))
        rc = ReversibleCircuit(m, tuple(gates))
        bits = n * (2 * max(1, m.bit_length()) + 5)
        guarantee = d <= 2 ** (m / 50)
        return PermutationHandle(
            m, rc.apply_table(), REVERSIBLE, bits, gates=tuple(gates),
            guarantee=guarantee,
        )
    raise ValueError("unknown sampler %r" % sampler)


def intersection_test(m: int, d: int, eps: float, eta: float, trials: int,
                      seed, sampler: str = UNIFORM) -> float:
    """Frequency of |A0 ∩ pi(A1)| >= eps*d over sampled permutations, with
    A0 = A1 = a fixed d-subset (the adversarial aligned choice)."""
    if eps * d < 2:
        raise ValueError("eps*d must be at least 2")
    a_set = frozenset(range(d))
    src = CoinSource(seed)
    hits = 0
    thresh = eps * d
    for _ in range(trials):
        pi = sample(m, d, eta, sampler, src.child("perm%d" % src.draw_below(1 << 30)))
        image = {pi.apply(x) for x in a_set}
        if len(a_set & image) >= thresh:
            hits += 1
    return hits / trials
