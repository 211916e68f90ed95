"""Optional compiled kernels for the width-64 field backend.

Falls back to pure numpy when numba is unavailable; the arithmetic is
identical either way.
"""

from __future__ import annotations

import numpy as np

HAVE_NUMBA = False
try:  # pragma: no cover - environment dependent
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    njit = None


if HAVE_NUMBA:

    @njit(cache=True)
    def clmul64_arr(a, b, low):
        out = np.zeros_like(a)
        one = np.uint64(1)
        zero = np.uint64(0)
        s63 = np.uint64(63)
        for i in range(a.size):
            x = a[i]
            y = b[i]
            acc = zero
            while y != zero:
                acc ^= x & (zero - (y & one))
                y >>= one
                carry = zero - (x >> s63)
                x = (x << one) ^ (low & carry)
            out[i] = acc
        return out

    @njit(cache=True)
    def clmul64_const(a, c, low):
        out = np.zeros_like(a)
        one = np.uint64(1)
        zero = np.uint64(0)
        s63 = np.uint64(63)
        for i in range(a.size):
            x = a[i]
            y = c
            acc = zero
            while y != zero:
                acc ^= x & (zero - (y & one))
                y >>= one
                carry = zero - (x >> s63)
                x = (x << one) ^ (low & carry)
            out[i] = acc
        return out

    def warm_up():
        z = np.zeros(1, dtype=np.uint64)
        clmul64_arr(z, z, np.uint64(0x1B))
        clmul64_const(z, np.uint64(3), np.uint64(0x1B))

else:

    def clmul64_arr(a, b, low):  # pragma: no cover - fallback path
        acc = np.zeros_like(a)
        a = a.copy()
        one = np.uint64(1)
        s63 = np.uint64(63)
        zero = np.uint64(0)
        for i in range(64):
            mask = zero - ((b >> np.uint64(i)) & one)
            acc ^= a & mask
            if i == 63:
                break
            carry = zero - (a >> s63)
            a = (a << one) ^ (low & carry)
        return acc

    def clmul64_const(a, c, low):  # pragma: no cover
        b = np.full(a.shape, c, dtype=np.uint64)
        return clmul64_arr(a, b, low)

    def warm_up():
        pass
