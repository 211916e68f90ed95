"""Binary extension field arithmetic GF(2^w) with fixed reduction polynomials.

Elements are bit-vectors of width w interpreted as polynomials over GF(2)
modulo a fixed irreducible polynomial per width.  Widths 4 and 16 get
log/antilog table backends; width 64 gets a vectorized shift-and-add
backend over numpy uint64 arrays; width 128 is scalar-only.

All values are immutable; operations are pure.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as _k


class FieldConfigError(Exception):
    """Mismatched or invalid field configuration."""


class DuplicateNodeError(Exception):
    """Interpolation received two points with the same abscissa."""


# Fixed low-weight irreducible polynomials, one per supported width.
# Checked for irreducibility at construction time.
_BUILTIN_POLYS = {
    4: (1 << 4) | 0b0011,            # x^4 + x + 1
    16: (1 << 16) | 0x100B,          # x^16 + x^12 + x^3 + x + 1
    64: (1 << 64) | 0x1B,            # x^64 + x^4 + x^3 + x + 1
    128: (1 << 128) | 0x87,          # x^128 + x^7 + x^2 + x + 1
}

_PRIME_FACTORS = {4: (2,), 16: (2,), 64: (2,), 128: (2,)}

_U64 = np.uint64


def clmul(a: int, b: int) -> int:
    """Carry-less product of two GF(2) polynomials given as ints."""
    res = 0
    while a:
        low = a & -a
        res ^= b << (low.bit_length() - 1)
        a ^= low
    return res


def poly_mod(p: int, mod: int) -> int:
    """Reduce polynomial p modulo mod over GF(2)."""
    mbits = mod.bit_length()
    while p.bit_length() >= mbits:
        p ^= mod << (p.bit_length() - mbits)
    return p


def _poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


def _x_pow_2k_mod(k: int, mod: int) -> int:
    """Compute x^(2^k) mod `mod` by repeated squaring."""
    r = 2  # the polynomial x
    for _ in range(k):
        r = poly_mod(clmul(r, r), mod)
    return r


def is_irreducible(poly: int) -> bool:
    """Rabin irreducibility test for a GF(2) polynomial."""
    w = poly.bit_length() - 1
    if w <= 0:
        return False
    if _x_pow_2k_mod(w, poly) != 2:
        return False
    seen = set()
    n = w
    d = 2
    while d * d <= n:
        if n % d == 0:
            seen.add(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        seen.add(n)
    for q in seen:
        h = _x_pow_2k_mod(w // q, poly) ^ 2
        if _poly_gcd(h, poly) != 1:
            return False
    return True


def _mul_int(a: int, b: int, poly: int, w: int) -> int:
    """Schoolbook shift-and-add multiply, reduced mod poly."""
    top = 1 << (w - 1)
    low = poly ^ (1 << w)
    res = 0
    for _ in range(w):
        if b & 1:
            res ^= a
        b >>= 1
        if not b:
            break
        if a & top:
            a = ((a << 1) & ((1 << w) - 1)) ^ low
        else:
            a <<= 1
    return res


def _inv_int(a: int, poly: int) -> int:
    """Inverse via extended Euclid on GF(2) polynomials."""
    if a == 0:
        raise ZeroDivisionError("zero has no inverse")
    t0, t1 = 0, 1
    r0, r1 = poly, a
    while r1 != 0:
        shift = r0.bit_length() - r1.bit_length()
        if shift < 0:
            r0, r1, t0, t1 = r1, r0, t1, t0
            continue
        r0 ^= r1 << shift
        t0 ^= t1 << shift
    if r0 != 1:
        raise FieldConfigError("reduction polynomial is not irreducible")
    return poly_mod(t0, poly)


# below this size plain int loops beat vector dispatch; with the compiled
# kernel available almost nothing does
_SCALAR_CUTOFF = 2 if _k.HAVE_NUMBA else 24


class _TableBackend:
    """Log/antilog tables; usable for w <= 16."""

    def __init__(self, cfg):
        size = 1 << cfg.width
        order = size - 1
        # find a generator by checking order against prime factors of 2^w-1
        factors = []
        n = order
        d = 2
        while d * d <= n:
            if n % d == 0:
                factors.append(d)
                while n % d == 0:
                    n //= d
            d += 1
        if n > 1:
            factors.append(n)
        g = 2
        while True:
            if all(self._pow(cfg, g, order // q) != 1 for q in factors):
                break
            g += 1
        exp = [0] * (2 * order)
        log = [0] * size
        v = 1
        for i in range(order):
            exp[i] = v
            exp[i + order] = v
            log[v] = i
            v = _mul_int(v, g, cfg.poly, cfg.width)
        self.order = order
        self.exp_list = exp
        self.log_list = log
        self.exp_np = np.array(exp, dtype=np.int64)
        self.log_np = np.array(log, dtype=np.int64)

    @staticmethod
    def _pow(cfg, a, n):
        r = 1
        while n:
            if n & 1:
                r = _mul_int(r, a, cfg.poly, cfg.width)
            a = _mul_int(a, a, cfg.poly, cfg.width)
            n >>= 1
        return r

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp_list[self.log_list[a] + self.log_list[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse")
        return self.exp_list[self.order - self.log_list[a]]

    def vmul(self, a, b):
        shape = np.broadcast_shapes(a.shape, b.shape)
        n = 1
        for d in shape:
            n *= d
        if n <= _SCALAR_CUTOFF:
            af = np.broadcast_to(a, shape).reshape(-1)
            bf = np.broadcast_to(b, shape).reshape(-1)
            exp, log = self.exp_list, self.log_list
            out = np.zeros(n, dtype=_U64)
            for i in range(n):
                x, y = int(af[i]), int(bf[i])
                if x and y:
                    out[i] = exp[log[x] + log[y]]
            return out.reshape(shape)
        a = np.broadcast_to(a, shape).astype(np.int64, copy=False)
        b = np.broadcast_to(b, shape).astype(np.int64, copy=False)
        out = self.exp_np[self.log_np[a] + self.log_np[b]]
        out[(a == 0) | (b == 0)] = 0
        return out.astype(_U64)

    def vmul_const(self, a, c: int):
        if c == 0:
            return np.zeros_like(a, dtype=_U64)
        if c == 1:
            return a.astype(_U64, copy=True)
        if a.size <= _SCALAR_CUTOFF:
            exp, log = self.exp_list, self.log_list
            lc = log[c]
            flat = a.reshape(-1)
            out = np.zeros(a.size, dtype=_U64)
            for i in range(a.size):
                x = int(flat[i])
                if x:
                    out[i] = exp[log[x] + lc]
            return out.reshape(a.shape)
        la = self.log_np[a.astype(np.int64, copy=False)]
        out = self.exp_np[la + self.log_list[c]]
        out[a == 0] = 0
        return out.astype(_U64)


class _Shift64Backend:
    """Shift-and-add multiply for w = 64; compiled kernel when available."""

    def __init__(self, cfg):
        self.low = _U64(cfg.poly ^ (1 << 64))
        self.poly = cfg.poly
        self._one = np.zeros(1, dtype=_U64)

    def mul(self, a: int, b: int) -> int:
        if _k.HAVE_NUMBA:
            buf = self._one
            buf[0] = a
            return int(_k.clmul64_const(buf, _U64(b), self.low)[0])
        return _mul_int(a, b, self.poly, 64)

    def inv(self, a: int) -> int:
        return _inv_int(a, self.poly)

    def vmul(self, a, b):
        if a.shape == b.shape:
            shape = a.shape
            af, bf = a, b
        else:
            shape = np.broadcast_shapes(a.shape, b.shape)
            af = np.ascontiguousarray(np.broadcast_to(a, shape), dtype=_U64)
            bf = np.ascontiguousarray(np.broadcast_to(b, shape), dtype=_U64)
        return _k.clmul64_arr(
            af.reshape(-1), bf.reshape(-1), self.low
        ).reshape(shape)

    def vmul_const(self, a, c: int):
        if c == 0:
            return np.zeros_like(a, dtype=_U64)
        if c == 1:
            return a.astype(_U64, copy=True)
        a = np.ascontiguousarray(a, dtype=_U64)
        return _k.clmul64_const(a.reshape(-1), _U64(c), self.low).reshape(a.shape)


class _ScalarBackend:
    """Pure-int fallback; no vector support (w = 128)."""

    def __init__(self, cfg):
        self.poly = cfg.poly
        self.width = cfg.width

    def mul(self, a: int, b: int) -> int:
        return _mul_int(a, b, self.poly, self.width)

    def inv(self, a: int) -> int:
        return _inv_int(a, self.poly)

    def vmul(self, a, b):
        raise FieldConfigError("no vector backend for width %d" % self.width)

    vmul_const = vmul


class FieldConfig:
    """A constructible binary field GF(2^w) with a fixed reduction polynomial."""

    def __init__(self, width_bits: int, reduction_poly: int | None = None):
        if width_bits not in _BUILTIN_POLYS:
            raise FieldConfigError("unsupported width %r" % (width_bits,))
        poly = _BUILTIN_POLYS[width_bits] if reduction_poly is None else reduction_poly
        if poly.bit_length() - 1 != width_bits:
            raise FieldConfigError("reduction polynomial degree != width")
        if not is_irreducible(poly):
            raise FieldConfigError("reduction polynomial is not irreducible")
        self.width = width_bits
        self.poly = poly
        self.order = 1 << width_bits
        self.mask = self.order - 1
        self.nbytes = (width_bits + 7) // 8
        if width_bits <= 16:
            self._b = _TableBackend(self)
        elif width_bits == 64:
            self._b = _Shift64Backend(self)
        else:
            self._b = _ScalarBackend(self)
        self.has_vector = width_bits <= 64

    # -- scalar ops on raw ints ------------------------------------------
    def mul_int(self, a: int, b: int) -> int:
        return self._b.mul(a, b)

    def inv_int(self, a: int) -> int:
        return self._b.inv(a)

    def pow_int(self, a: int, n: int) -> int:
        if n < 0:
            a = self._b.inv(a)
            n = -n
        r = 1
        while n:
            if n & 1:
                r = self._b.mul(r, a)
            a = self._b.mul(a, a)
            n >>= 1
        return r

    # -- vector ops on numpy uint64 arrays -------------------------------
    def vmul(self, a, b):
        return self._b.vmul(np.asarray(a, dtype=_U64), np.asarray(b, dtype=_U64))

    def vmul_const(self, a, c: int):
        return self._b.vmul_const(np.asarray(a, dtype=_U64), c)

    def vinv(self, a):
        flat = np.asarray(a, dtype=_U64).ravel()
        out = np.array([self._b.inv(int(x)) for x in flat], dtype=_U64)
        return out.reshape(np.shape(a))

    # -- element factory --------------------------------------------------
    def elem(self, value: int) -> "FieldElement":
        return FieldElement(value & self.mask, self)

    @property
    def zero(self) -> "FieldElement":
        return FieldElement(0, self)

    @property
    def one(self) -> "FieldElement":
        return FieldElement(1, self)

    def from_bytes(self, data: bytes) -> "FieldElement":
        if len(data) != self.nbytes:
            raise FieldConfigError("expected %d bytes" % self.nbytes)
        return FieldElement(int.from_bytes(data, "big"), self)

    def __eq__(self, other):
        return (
            isinstance(other, FieldConfig)
            and other.width == self.width
            and other.poly == self.poly
        )

    def __hash__(self):
        return hash((self.width, self.poly))

    def __repr__(self):
        return "FieldConfig(GF(2^%d))" % self.width


_CONFIG_CACHE: dict[int, FieldConfig] = {}


def get_field(width_bits: int) -> FieldConfig:
    """Shared FieldConfig instance for a built-in width."""
    cfg = _CONFIG_CACHE.get(width_bits)
    if cfg is None:
        cfg = FieldConfig(width_bits)
        _CONFIG_CACHE[width_bits] = cfg
    return cfg


class FieldElement:
    """An element of GF(2^w); value is a bit-vector of width w."""

    __slots__ = ("v", "cfg")

    def __init__(self, value: int, cfg: FieldConfig):
        self.v = value
        self.cfg = cfg

    def _check(self, other):
        if not isinstance(other, FieldElement) or other.cfg != self.cfg:
            raise FieldConfigError("operands from different field configs")

    def __add__(self, other):
        self._check(other)
        return FieldElement(self.v ^ other.v, self.cfg)

    __sub__ = __add__

    def __mul__(self, other):
        self._check(other)
        return FieldElement(self.cfg.mul_int(self.v, other.v), self.cfg)

    def __truediv__(self, other):
        self._check(other)
        return FieldElement(
            self.cfg.mul_int(self.v, self.cfg.inv_int(other.v)), self.cfg
        )

    def __pow__(self, n: int):
        return FieldElement(self.cfg.pow_int(self.v, n), self.cfg)

    def inverse(self):
        return FieldElement(self.cfg.inv_int(self.v), self.cfg)

    def __eq__(self, other):
        return (
            isinstance(other, FieldElement)
            and other.cfg == self.cfg
            and other.v == self.v
        )

    def __hash__(self):
        return hash((self.v, self.cfg.width))

    def __bool__(self):
        return self.v != 0

    def to_bytes(self) -> bytes:
        """Canonical big-endian encoding, ceil(w/8) bytes."""
        return self.v.to_bytes(self.cfg.nbytes, "big")

    def __repr__(self):
        return "gf%d(0x%x)" % (self.cfg.width, self.v)


class UniPoly:
    """Univariate polynomial over a FieldConfig, lowest-degree coefficient first.

    Stored as a list of raw int values; trailing zero coefficients are
    stripped so that degree is well defined (the zero polynomial has
    an empty coefficient list and degree -1).
    """

    __slots__ = ("coeffs", "cfg")

    def __init__(self, coeffs, cfg: FieldConfig):
        vals = [c.v if isinstance(c, FieldElement) else int(c) for c in coeffs]
        while vals and vals[-1] == 0:
            vals.pop()
        self.coeffs = vals
        self.cfg = cfg

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def eval_int(self, x: int) -> int:
        acc = 0
        mul = self.cfg.mul_int
        for c in reversed(self.coeffs):
            acc = mul(acc, x) ^ c
        return acc

    def __call__(self, x):
        if isinstance(x, FieldElement):
            return FieldElement(self.eval_int(x.v), self.cfg)
        return self.eval_int(int(x))

    def __eq__(self, other):
        return (
            isinstance(other, UniPoly)
            and other.cfg == self.cfg
            and other.coeffs == self.coeffs
        )

    def __repr__(self):
        return "UniPoly(deg=%d, gf%d)" % (self.degree, self.cfg.width)


def interpolate(points, cfg: FieldConfig) -> UniPoly:
    """Unique polynomial of degree < len(points) through the given (x, y) pairs.

    Newton's divided differences; all x must be distinct.
    """
    xs = []
    ys = []
    for x, y in points:
        xs.append(x.v if isinstance(x, FieldElement) else int(x))
        ys.append(y.v if isinstance(y, FieldElement) else int(y))
    if len(set(xs)) != len(xs):
        raise DuplicateNodeError("interpolation nodes must be distinct")
    n = len(xs)
    if n == 0:
        raise ValueError("need at least one point")
    mul = cfg.mul_int
    inv = cfg.inv_int
    if cfg.has_vector and n > 8:
        xs_np = np.array(xs, dtype=_U64)
        d = np.array(ys, dtype=_U64)
        for j in range(1, n):
            num = d[j:] ^ d[j - 1:-1]
            den = xs_np[j:] ^ xs_np[: n - j]
            d = np.concatenate([d[:j], cfg.vmul(num, cfg.vinv(den))])
        coeffs = np.zeros(1, dtype=_U64)
        for i in range(n - 1, -1, -1):
            shifted = np.concatenate([np.zeros(1, dtype=_U64), coeffs])
            scaled = cfg.vmul_const(coeffs, xs[i])
            shifted[: len(scaled)] ^= scaled
            shifted[0] ^= _U64(d[i])
            coeffs = shifted
        return UniPoly([int(c) for c in coeffs], cfg)
    d = list(ys)
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            den = xs[i] ^ xs[i - j]
            d[i] = mul(d[i] ^ d[i - 1], inv(den))
    coeffs = [0]
    for i in range(n - 1, -1, -1):
        new = [0] * (len(coeffs) + 1)
        for k, c in enumerate(coeffs):
            new[k + 1] ^= c
            new[k] ^= mul(c, xs[i])
        new[0] ^= d[i]
        coeffs = new
    return UniPoly(coeffs, cfg)


def eval_multi(p: UniPoly, xs) -> list:
    """Evaluate p at each abscissa; returns raw int values."""
    cfg = p.cfg
    raw = [x.v if isinstance(x, FieldElement) else int(x) for x in xs]
    if not p.coeffs:
        return [0] * len(raw)
    if cfg.has_vector and len(raw) * len(p.coeffs) > 256:
        xs_np = np.array(raw, dtype=_U64)
        acc = np.zeros(len(raw), dtype=_U64)
        for c in reversed(p.coeffs):
            acc = cfg.vmul(acc, xs_np)
            acc ^= _U64(c)
        return [int(v) for v in acc]
    return [p.eval_int(x) for x in raw]
