"""Layered fan-in-2 arithmetic circuits over GF(2^w) and the succinct
descriptions that generate them.

A LayeredCircuit's gates reference the previous layer only.  Builders keep
wire 0 of every internal layer equal to 0 and wire 1 equal to 1 (char-2
rails: ADD(x,x)=0 keeps the zero, MUL(1,1)=1 keeps the one), which makes
single-gate copies possible (copy(x) = ADD(x, zero)).

A PredicateDescription expands deterministically to a circuit whose input
layer is the flattened claim matrix followed by the description's own
constants; expanding twice yields structurally identical circuits.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .coins import CoinSource
from .field import FieldConfig

_U64 = np.uint64
log = logging.getLogger("uipbatch.circuit")

ADD, MUL = 0, 1


class BuilderError(Exception):
    """Malformed description parameters."""


def _pow2ceil(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length()) if n > 1 else 1


# ---------------------------------------------------------------------------
# layered circuits


class Layer:
    __slots__ = ("width", "kinds", "left", "right",
                 "add_idx", "add_l", "add_r", "mul_idx", "mul_l", "mul_r")

    def __init__(self, width, kinds, left, right):
        self.width = width
        self.kinds = np.asarray(kinds, dtype=np.int8)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        sel = self.kinds == ADD
        self.add_idx = np.nonzero(sel)[0]
        self.add_l = self.left[sel]
        self.add_r = self.right[sel]
        sel = self.kinds == MUL
        self.mul_idx = np.nonzero(sel)[0]
        self.mul_l = self.left[sel]
        self.mul_r = self.right[sel]

    @property
    def ngates(self) -> int:
        return len(self.kinds)


class LayeredCircuit:
    """Input layer plus gate layers; evaluation keeps every wire value."""

    def __init__(self, input_width: int, layers: list, output_index: int):
        self.input_width = input_width
        self.layers = layers
        self.output_index = output_index
        self.size = sum(l.ngates for l in layers)
        self.depth = len(layers)

    def evaluate(self, inputs, cfg: FieldConfig):
        """All layer values; inputs shaped (..., input_width)."""
        vals = np.asarray(inputs, dtype=_U64)
        squeeze = vals.ndim == 1
        if squeeze:
            vals = vals[None, :]
        if vals.shape[-1] != self.input_width:
            raise BuilderError(
                "input width %d, expected %d" % (vals.shape[-1], self.input_width)
            )
        out = [vals]
        for layer in self.layers:
            cur = np.zeros((vals.shape[0], layer.width), dtype=_U64)
            prev = out[-1]
            if layer.add_idx.size:
                cur[:, layer.add_idx] = prev[:, layer.add_l] ^ prev[:, layer.add_r]
            if layer.mul_idx.size:
                cur[:, layer.mul_idx] = cfg.vmul(
                    prev[:, layer.mul_l], prev[:, layer.mul_r]
                )
            out.append(cur)
        return out

    def output(self, inputs, cfg: FieldConfig) -> int:
        vals = self.evaluate(inputs, cfg)
        return int(vals[-1][0, self.output_index])


class CircuitBuilder:
    """DAG construction; finalize() layers the DAG and inserts copy chains."""

    def __init__(self, a_size: int, cfg: FieldConfig):
        if a_size & (a_size - 1):
            raise BuilderError("claim region must be a power of two")
        self.a_size = a_size
        self.cfg = cfg
        self.consts = [1, 0]  # reserved one/zero rails at desc offsets 0, 1
        self._const_map = {1: 0, 0: 1}
        # nodes: parallel arrays; inputs are implicit (negative handles)
        self.kind = []
        self.arg_a = []
        self.arg_b = []
        self.level = []

    # wire handles: inputs are encoded as -(pos+1); gates as node index
    def input_wire(self, pos: int) -> int:
        return -(pos + 1)

    def a_wire(self, row: int, col: int, ncols: int) -> int:
        return self.input_wire(row * ncols + col)

    def const(self, value: int) -> int:
        idx = self._const_map.get(value)
        if idx is None:
            idx = len(self.consts)
            self.consts.append(value)
            self._const_map[value] = idx
        return self.input_wire(self.a_size + idx)

    @property
    def one(self) -> int:
        return self.input_wire(self.a_size)

    @property
    def zero(self) -> int:
        return self.input_wire(self.a_size + 1)

    def _lvl(self, w: int) -> int:
        return 0 if w < 0 else self.level[w]

    def _gate(self, kind: int, x: int, y: int) -> int:
        n = len(self.kind)
        self.kind.append(kind)
        self.arg_a.append(x)
        self.arg_b.append(y)
        self.level.append(max(self._lvl(x), self._lvl(y)) + 1)
        return n

    def add(self, x: int, y: int) -> int:
        return self._gate(ADD, x, y)

    def mul(self, x: int, y: int) -> int:
        return self._gate(MUL, x, y)

    def add_many(self, wires) -> int:
        wires = list(wires)
        if not wires:
            return self.zero
        while len(wires) > 1:
            nxt = []
            for i in range(0, len(wires) - 1, 2):
                nxt.append(self.add(wires[i], wires[i + 1]))
            if len(wires) & 1:
                nxt.append(wires[-1])
            wires = nxt
        return wires[0]

    def mul_many(self, wires) -> int:
        wires = list(wires)
        if not wires:
            return self.one
        while len(wires) > 1:
            nxt = []
            for i in range(0, len(wires) - 1, 2):
                nxt.append(self.mul(wires[i], wires[i + 1]))
            if len(wires) & 1:
                nxt.append(wires[-1])
            wires = nxt
        return wires[0]

    def finalize(self, output_wire: int):
        """Layer the DAG; returns (LayeredCircuit, desc_values, input_width)."""
        if output_wire < 0 or self._lvl(output_wire) == 0:
            output_wire = self.add(output_wire, self.zero)
        depth = self.level[output_wire]
        n_inputs = self.a_size + len(self.consts)
        input_width = _pow2ceil(n_inputs)

        # keep only the output's cone; dead gates may sit deeper than it
        live = set()
        stack = [output_wire]
        while stack:
            n = stack.pop()
            if n < 0 or n in live:
                continue
            live.add(n)
            stack.append(self.arg_a[n])
            stack.append(self.arg_b[n])

        # group live gates by level
        by_level = [[] for _ in range(depth + 1)]
        for n in sorted(live):
            by_level[self.level[n]].append(n)

        # demands: (wire, at_level) pairs where a representative is needed
        max_need = {}

        def note(w, lv):
            have = self._lvl(w)
            if lv > have:
                cur = max_need.get(w, have)
                if lv > cur:
                    max_need[w] = lv

        for n in sorted(live):
            lv = self.level[n]
            note(self.arg_a[n], lv - 1)
            note(self.arg_b[n], lv - 1)
        note(output_wire, depth)

        # per-layer structures; positions 0/1 are the zero/one rails
        layers_kinds = [[ADD, MUL] for _ in range(depth)]
        layers_l = [[0, 1] for _ in range(depth)]
        layers_r = [[0, 1] for _ in range(depth)]
        # rails at layer 1 read the input-region rails
        zero_in = self.a_size + 1
        one_in = self.a_size
        layers_l[0] = [zero_in, one_in]
        layers_r[0] = [zero_in, one_in]

        pos = {}  # (wire, level) -> index within that layer

        def pos_at(w, lv):
            if lv == 0:
                return (w, 0)
            return pos[(w, lv)]

        def raw_pos(w, lv):
            """Index usable by a gate at level lv+1."""
            if lv == 0:
                return -(w) - 1 if w < 0 else None
            return pos[(w, lv)]

        def ref(w, lv):
            """Position of wire w as seen from a gate in layer lv+1."""
            have = self._lvl(w)
            if lv == 0:
                if w >= 0:
                    raise BuilderError("gate referenced at input level")
                return -w - 1
            if have == lv:
                return pos[(w, lv)]
            return pos[(w, lv)]

        # place real gates and copies level by level
        for lv in range(1, depth + 1):
            kinds = layers_kinds[lv - 1]
            ls = layers_l[lv - 1]
            rs = layers_r[lv - 1]
            for n in by_level[lv] if lv <= depth else []:
                xa, xb = self.arg_a[n], self.arg_b[n]
                pa = ref(xa, lv - 1)
                pb = ref(xb, lv - 1)
                pos[(n, lv)] = len(kinds)
                kinds.append(self.kind[n])
                ls.append(pa)
                rs.append(pb)
            # copies for wires needed above their own level
            for w, need in max_need.items():
                have = self._lvl(w)
                if have < lv <= need:
                    src = ref(w, lv - 1)
                    pos[(w, lv)] = len(kinds)
                    kinds.append(ADD)
                    ls.append(src)
                    rs.append(1 if lv == 1 else 0)  # + zero rail
                    # at layer 1 the zero rail is the input zero const
                    if lv == 1:
                        rs[-1] = zero_in
        layers = []
        for lv in range(1, depth + 1):
            kinds = layers_kinds[lv - 1]
            width = _pow2ceil(max(2, len(kinds)))
            layers.append(
                Layer(width, kinds, layers_l[lv - 1], layers_r[lv - 1])
            )
        out_idx = pos[(output_wire, depth)]
        circ = LayeredCircuit(input_width, layers, out_idx)
        desc_vals = np.array(self.consts, dtype=_U64)
        return circ, desc_vals, input_width


# ---------------------------------------------------------------------------
# canonical serialization


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _enc(obj) -> bytes:
    if obj is None:
        return b"n"
    if isinstance(obj, bool):
        return b"i" + _varint(int(obj))
    if isinstance(obj, (int, np.integer)):
        if obj < 0:
            raise BuilderError("negative ints not serializable")
        return b"i" + _varint(int(obj))
    if isinstance(obj, str):
        raw = obj.encode()
        return b"s" + _varint(len(raw)) + raw
    if isinstance(obj, bytes):
        return b"b" + _varint(len(obj)) + obj
    if isinstance(obj, np.ndarray):
        data = np.ascontiguousarray(obj, dtype=_U64).astype(">u8").tobytes()
        dims = b"".join(_varint(d) for d in obj.shape)
        return b"a" + _varint(obj.ndim) + dims + _varint(len(data)) + data
    if isinstance(obj, (tuple, list)):
        body = b"".join(_enc(x) for x in obj)
        return b"l" + _varint(len(obj)) + body
    if isinstance(obj, PredicateDescription):
        return b"P" + obj.serialize()
    if isinstance(obj, SetDescription):
        return b"S" + obj.serialize()
    raise BuilderError("cannot serialize %r" % type(obj))


# ---------------------------------------------------------------------------
# descriptions


@dataclass(frozen=True)
class PredicateDescription:
    """Succinct generator of a predicate circuit over a claim matrix."""

    builder_id: str
    params: tuple  # ((name, value), ...) in declaration order

    def param(self, name):
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)

    def serialize(self) -> bytes:
        body = _enc(self.builder_id) + _enc(
            [(k, v) for k, v in self.params]
        )
        return _varint(len(body)) + body

    @property
    def bit_length(self) -> int:
        return 8 * len(self.serialize())

    def digest(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()


@dataclass(frozen=True)
class SetDescription:
    """Succinct generator of an ordered list of (statement, coins) pairs.

    Expansion entries are (index, coins) tuples or None for padding rows.
    """

    builder_id: str
    params: tuple

    def param(self, name):
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)

    def serialize(self) -> bytes:
        body = _enc(self.builder_id) + _enc([(k, v) for k, v in self.params])
        return _varint(len(body)) + body

    @property
    def bit_length(self) -> int:
        return 8 * len(self.serialize())

    def expand(self) -> list:
        return _SET_BUILDERS[self.builder_id].expand(self)

    def expand_entry(self, i: int):
        return _SET_BUILDERS[self.builder_id].entry(self, i)

    def size(self) -> int:
        return _SET_BUILDERS[self.builder_id].size(self)

    def n_active(self) -> int:
        return sum(1 for e in self.expand() if e is not None)


# base-protocol hooks, registered by the protocol modules
base_spec_registry: dict = {}


@dataclass
class ExpandedCircuit:
    circuit: LayeredCircuit
    desc_values: np.ndarray
    a_rows: int
    a_cols: int
    cfg: FieldConfig

    @property
    def a_size(self) -> int:
        return self.a_rows * self.a_cols

    @property
    def input_width(self) -> int:
        return self.circuit.input_width

    @property
    def lead_vars(self) -> int:
        return (self.input_width.bit_length() - 1) - (
            self.a_size.bit_length() - 1
        )

    def assemble(self, a_flat) -> np.ndarray:
        a = np.asarray(a_flat, dtype=_U64).reshape(-1)
        if a.size != self.a_size:
            raise BuilderError("claim region size mismatch")
        out = np.zeros(self.input_width, dtype=_U64)
        out[: self.a_size] = a
        out[self.a_size: self.a_size + self.desc_values.size] = self.desc_values
        return out

    def joint_input(self, matrix_vals) -> np.ndarray:
        return self.assemble(np.asarray(matrix_vals, dtype=_U64).reshape(-1))


@dataclass
class _PredBuilder:
    shape_fn: object       # desc -> (rows, cols)
    emit_fails: object     # (cb, desc, cfg) -> list of fail wires
    ref_fails: object      # (desc, matrix_vals, cfg) -> np.ndarray of ints
    combiner: str          # "gamma" | "product" | "raw"
    emit_raw: object = None  # for combiner == "raw"
    ref_raw: object = None


_PRED_BUILDERS: dict = {}
_SET_BUILDERS: dict = {}
_EXPAND_CACHE: dict = {}


def register_predicate(tag: str, builder: _PredBuilder):
    _PRED_BUILDERS[tag] = builder


def register_set(tag: str, builder):
    _SET_BUILDERS[tag] = builder


def _gammas(desc, count: int, cfg: FieldConfig) -> np.ndarray:
    src = CoinSource(desc.param("gamma_seed"))
    return src.draw_elements(count, cfg)


def expand(desc: PredicateDescription, cfg: FieldConfig) -> ExpandedCircuit:
    """Deterministic circuit for a description; cached by serialization."""
    key = (desc.digest(), cfg.width)
    hit = _EXPAND_CACHE.get(key)
    if hit is not None:
        return hit
    entry = _PRED_BUILDERS.get(desc.builder_id)
    if entry is None:
        raise BuilderError("unknown builder %r" % desc.builder_id)
    rows, cols = entry.shape_fn(desc)
    a_size = rows * cols
    cb = CircuitBuilder(a_size, cfg)
    if entry.combiner == "raw":
        out = entry.emit_raw(cb, desc, cfg)
    else:
        fails = entry.emit_fails(cb, desc, cfg)
        if entry.combiner == "product":
            out = cb.mul_many([cb.add(cb.one, f) for f in fails])
        else:
            gam = _gammas(desc, len(fails), cfg)
            terms = [
                cb.mul(cb.const(int(g)), f) for g, f in zip(gam, fails)
            ]
            out = cb.add(cb.one, cb.add_many(terms))
    circ, desc_vals, _ = cb.finalize(out)
    exp = ExpandedCircuit(circ, desc_vals, rows, cols, cfg)
    log.debug(
        "expand %s: size=%d depth=%d input=%d",
        desc.builder_id, circ.size, circ.depth, circ.input_width,
    )
    if len(_EXPAND_CACHE) > 256:
        _EXPAND_CACHE.clear()
    _EXPAND_CACHE[key] = exp
    return exp


def reference_eval(desc: PredicateDescription, matrix_vals, cfg: FieldConfig) -> int:
    """Direct (non-circuit) evaluation; equals the circuit output exactly."""
    entry = _PRED_BUILDERS[desc.builder_id]
    vals = np.asarray(matrix_vals, dtype=_U64)
    if entry.combiner == "raw":
        return entry.ref_raw(desc, vals, cfg)
    fails = np.asarray(entry.ref_fails(desc, vals, cfg), dtype=_U64)
    if entry.combiner == "product":
        acc = 1
        for f in fails:
            acc = cfg.mul_int(acc, int(f) ^ 1)
        return acc
    gam = _gammas(desc, len(fails), cfg)
    acc = 0
    if len(fails):
        acc = int(np.bitwise_xor.reduce(cfg.vmul(gam, fails)))
    return acc ^ 1


def predicate_shape(desc: PredicateDescription):
    return _PRED_BUILDERS[desc.builder_id].shape_fn(desc)


def predicate_accepts(desc, matrix_vals, cfg) -> bool:
    return reference_eval(desc, matrix_vals, cfg) == 1


# ---------------------------------------------------------------------------
# set builders


class _InitialPairs:
    @staticmethod
    def expand(desc):
        k = desc.param("k")
        coins = tuple(desc.param("coins"))
        return [(i, coins) for i in range(k)]

    @staticmethod
    def entry(desc, i):
        if not 0 <= i < desc.param("k"):
            raise IndexError(i)
        return (i, tuple(desc.param("coins")))

    @staticmethod
    def size(desc):
        return desc.param("k")


class _HybridPairs:
    """Each base pair (i, q) yields ell hybrids (i, (q_<=j, q'_>j)); the list
    is padded with None rows to the next power of two."""

    @staticmethod
    def size(desc):
        base = desc.param("base")
        ell = desc.param("ell")
        return _pow2ceil(base.size() * ell)

    @staticmethod
    def entry(desc, idx):
        base = desc.param("base")
        ell = desc.param("ell")
        b = desc.param("b_bits")
        qprime = tuple(desc.param("qprime"))
        n = base.size() * ell
        if idx >= n:
            return None
        g, j = divmod(idx, ell)
        e = base.expand_entry(g)
        if e is None:
            return None
        i, q = e
        cut = (j + 1) * b
        return (i, tuple(q[:cut]) + qprime[cut:])

    @staticmethod
    def expand(desc):
        return [
            _HybridPairs.entry(desc, i) for i in range(_HybridPairs.size(desc))
        ]


class _SubsampledPairs:
    @staticmethod
    def size(desc):
        return len(desc.param("indices"))

    @staticmethod
    def entry(desc, i):
        base = desc.param("base")
        return base.expand_entry(desc.param("indices")[i])

    @staticmethod
    def expand(desc):
        base = desc.param("base")
        table = base.expand()
        return [table[i] for i in desc.param("indices")]


register_set("INITIAL_PAIRS", _InitialPairs)
register_set("HYBRID_PAIRS", _HybridPairs)
register_set("SUBSAMPLED_PAIRS", _SubsampledPairs)


def initial_pairs(k: int, coins) -> SetDescription:
    return SetDescription("INITIAL_PAIRS", (("k", k), ("coins", tuple(coins))))


def hybrid_pairs(base: SetDescription, qprime, ell: int, b_bits: int) -> SetDescription:
    return SetDescription(
        "HYBRID_PAIRS",
        (("base", base), ("qprime", tuple(qprime)), ("ell", ell), ("b_bits", b_bits)),
    )


def subsampled_pairs(base: SetDescription, indices) -> SetDescription:
    return SetDescription(
        "SUBSAMPLED_PAIRS", (("base", base), ("indices", tuple(int(i) for i in indices)))
    )


# ---------------------------------------------------------------------------
# predicate builders


def _custom_shape(desc):
    n = desc.param("n_inputs")
    return (1, _pow2ceil(n))


def _custom_emit(cb, desc, cfg):
    gates = desc.param("gates")
    n = desc.param("n_inputs")
    wires = [cb.input_wire(i) for i in range(n)]
    for kind, a, b in gates:
        fn = cb.add if kind == ADD else cb.mul
        wires.append(fn(wires[a], wires[b]))
    return wires[desc.param("out")]


def _custom_ref(desc, vals, cfg):
    gates = desc.param("gates")
    n = desc.param("n_inputs")
    flat = vals.reshape(-1)
    acc = [int(flat[i]) for i in range(n)]
    for kind, a, b in gates:
        if kind == ADD:
            acc.append(acc[a] ^ acc[b])
        else:
            acc.append(cfg.mul_int(acc[a], acc[b]))
    return acc[desc.param("out")]


register_predicate(
    "CUSTOM",
    _PredBuilder(
        shape_fn=_custom_shape,
        emit_fails=None,
        ref_fails=None,
        combiner="raw",
        emit_raw=_custom_emit,
        ref_raw=_custom_ref,
    ),
)


def custom_predicate(n_inputs: int, gates, out: int) -> PredicateDescription:
    """Wrap an explicit gate list (inputs 0..n-1, then gates in order)."""
    return PredicateDescription(
        "CUSTOM",
        (
            ("n_inputs", n_inputs),
            ("gates", tuple((int(k), int(a), int(b)) for k, a, b in gates)),
            ("out", out),
        ),
    )


# -- VERDICT_BATCH: every row of the claim matrix is an accepted transcript


def _vb_shape(desc):
    n = len(desc.param("xs"))
    ncol = desc.param("ell") * desc.param("a_bits")
    return (_pow2ceil(n), _pow2ceil(ncol))


def _vb_emit(cb, desc, cfg):
    spec = base_spec_registry[desc.param("spec_id")]
    xs = desc.param("xs")
    q = desc.param("q")
    _, ncolp = _vb_shape(desc)
    ncol = desc.param("ell") * desc.param("a_bits")
    fails = []
    for row, xbits in enumerate(xs):
        wires = [cb.a_wire(row, c, ncolp) for c in range(ncol)]
        out = spec.emit_verdict(cb, wires, xbits, q)
        fails.append(cb.add(cb.one, out))
    return fails


def _vb_ref(desc, vals, cfg):
    spec = base_spec_registry[desc.param("spec_id")]
    xs = desc.param("xs")
    q = desc.param("q")
    rows, ncolp = _vb_shape(desc)
    ncol = desc.param("ell") * desc.param("a_bits")
    vals = vals.reshape(rows, ncolp)
    fails = []
    for row, xbits in enumerate(xs):
        out = spec.ref_verdict_vals(xbits, q, vals[row, :ncol], cfg)
        fails.append(out ^ 1)
    return np.array(fails, dtype=_U64)


register_predicate(
    "VERDICT_BATCH",
    _PredBuilder(_vb_shape, _vb_emit, _vb_ref, "product"),
)


def build_verdict_batch(spec_id: str, xs, q, ell: int, a_bits: int) -> PredicateDescription:
    return PredicateDescription(
        "VERDICT_BATCH",
        (
            ("spec_id", spec_id),
            ("xs", tuple(tuple(x) for x in xs)),
            ("q", tuple(q)),
            ("ell", ell),
            ("a_bits", a_bits),
        ),
    )


# -- DIST_PHI: hybrid-transcript distance predicate
#
# Fail order: inner-predicate fails on the original rows, per-hybrid-row
# verdict fails, prefix-agreement fails, the collapsed checksum fail, and
# binarity fails row-major.  The checksum condition is one linear form
# whose weights fold the per-round per-column key evaluations through
# coin-derived multipliers (see notes in dist weights below).


def _dp_dims(desc):
    sdist = desc.param("sdist")
    ell = desc.param("ell")
    a_bits = desc.param("a_bits")
    m_rows = sdist.size()
    ncol = ell * a_bits
    return m_rows, ncol, _pow2ceil(ncol)


def _dp_shape(desc):
    m_rows, _, ncolp = _dp_dims(desc)
    return (m_rows, ncolp)


def _dist_weights(desc, cfg):
    """(W, c0): weights over the claim matrix and the constant offset of
    the collapsed checksum condition."""
    from . import mle

    m_rows, ncol, ncolp = _dp_dims(desc)
    u = np.asarray(desc.param("key_points"), dtype=_U64)
    committed = np.asarray(desc.param("committed"), dtype=_U64)  # (ell, Tck, a)
    ell = desc.param("ell")
    a_bits = desc.param("a_bits")
    src = CoinSource(desc.param("gamma_seed")).child("cksum")
    g1 = src.draw_elements(ncolp, cfg)          # per padded column
    g2 = src.draw_elements(u.shape[0], cfg)     # per key point
    chi = mle.chi_table(u, cfg)                 # (Tck, M)
    wbase = mle.gf_matmul(g2[None, :], chi, cfg)[0]  # (M,)
    w = cfg.vmul(wbase[:, None], np.broadcast_to(g1[None, :], (m_rows, ncolp)))
    c0 = 0
    for r in range(ell):
        dot = mle.gf_matmul(g2[None, :], committed[r], cfg)[0]  # (a,)
        cols = g1[r * a_bits:(r + 1) * a_bits]
        c0 ^= int(np.bitwise_xor.reduce(cfg.vmul(dot, cols)))
    return w, c0


def _dp_structure(desc):
    """Active hybrid rows with their statement/coin data and group layout."""
    sdist = desc.param("sdist")
    ell = desc.param("ell")
    entries = sdist.expand()
    groups = len(entries) // ell
    return entries, groups


def _dp_emit(cb, desc, cfg):
    spec = base_spec_registry[desc.param("spec_id")]
    xs = desc.param("xs")
    inner = desc.param("inner")
    ell = desc.param("ell")
    a_bits = desc.param("a_bits")
    m_rows, ncol, ncolp = _dp_dims(desc)
    entries, groups = _dp_structure(desc)
    fails = []

    # condition 1: the inner predicate on the rows of the previous pair set
    irows, icols = predicate_shape(inner)
    inner_wires = []
    prev_n = desc.param("prev_size")
    for t in range(irows * icols):
        rr, cc = divmod(t, icols)
        if rr < prev_n and cc < ncolp:
            row = rr * ell + (ell - 1)
            inner_wires.append(cb.a_wire(row, cc, ncolp))
        else:
            inner_wires.append(cb.zero)
    ib = _PRED_BUILDERS[inner.builder_id]
    fails.extend(_emit_inner_fails(cb, inner, inner_wires, cfg))

    # condition 2: base verdict on every active hybrid row + prefix agreement
    for s, e in enumerate(entries):
        if e is None:
            continue
        i, coins = e
        wires = [cb.a_wire(s, c, ncolp) for c in range(ncol)]
        out = spec.emit_verdict(cb, wires, xs[i], coins)
        fails.append(cb.add(cb.one, out))
    for s, e in enumerate(entries):
        if e is None:
            continue
        g, j = divmod(s, ell)
        if j == ell - 1:
            continue
        orig = g * ell + (ell - 1)
        for c in range((j + 1) * a_bits):
            fails.append(
                cb.add(cb.a_wire(s, c, ncolp), cb.a_wire(orig, c, ncolp))
            )

    # condition 3: collapsed checksum consistency (single linear form)
    w, c0 = _dist_weights(desc, cfg)
    terms = []
    for s in range(m_rows):
        for c in range(ncolp):
            wv = int(w[s, c])
            if wv:
                terms.append(cb.mul(cb.const(wv), cb.a_wire(s, c, ncolp)))
    fails.append(cb.add(cb.add_many(terms), cb.const(c0)))

    # condition 4: binarity x^2 + x = 0 for every entry
    for s in range(m_rows):
        for c in range(ncolp):
            wv = cb.a_wire(s, c, ncolp)
            fails.append(cb.add(cb.mul(wv, wv), wv))
    return fails


def _emit_inner_fails(cb, inner, wires, cfg):
    entry = _PRED_BUILDERS[inner.builder_id]
    if entry.combiner == "raw":
        out = _custom_emit_on_wires(cb, inner, wires, cfg)
        return [cb.add(cb.one, out)]
    return entry.emit_fails(_WireView(cb, wires), inner, cfg)


def _custom_emit_on_wires(cb, desc, wires, cfg):
    gates = desc.param("gates")
    n = desc.param("n_inputs")
    acc = list(wires[:n])
    for kind, a, b in gates:
        fn = cb.add if kind == ADD else cb.mul
        acc.append(fn(acc[a], acc[b]))
    return acc[desc.param("out")]


class _WireView:
    """Redirects a builder's claim-region references to explicit wires so a
    predicate can be inlined inside another circuit."""

    def __init__(self, cb: CircuitBuilder, wires):
        self._cb = cb
        self._wires = wires

    def input_wire(self, pos):
        return self._wires[pos]

    def a_wire(self, row, col, ncols):
        return self._wires[row * ncols + col]

    def __getattr__(self, name):
        return getattr(self._cb, name)

    @property
    def one(self):
        return self._cb.one

    @property
    def zero(self):
        return self._cb.zero


def _dp_ref(desc, vals, cfg):
    from . import mle

    spec = base_spec_registry[desc.param("spec_id")]
    xs = desc.param("xs")
    inner = desc.param("inner")
    ell = desc.param("ell")
    a_bits = desc.param("a_bits")
    m_rows, ncol, ncolp = _dp_dims(desc)
    entries, groups = _dp_structure(desc)
    vals = vals.reshape(m_rows, ncolp)
    fails = []

    irows, icols = predicate_shape(inner)
    prev_n = desc.param("prev_size")
    inner_vals = np.zeros((irows, icols), dtype=_U64)
    for rr in range(min(prev_n, irows)):
        row = rr * ell + (ell - 1)
        take = min(icols, ncolp)
        inner_vals[rr, :take] = vals[row, :take]
    fails.extend(_ref_inner_fails(inner, inner_vals, cfg))

    for s, e in enumerate(entries):
        if e is None:
            continue
        i, coins = e
        out = spec.ref_verdict_vals(xs[i], coins, vals[s, :ncol], cfg)
        fails.append(out ^ 1)
    for s, e in enumerate(entries):
        if e is None:
            continue
        g, j = divmod(s, ell)
        if j == ell - 1:
            continue
        orig = g * ell + (ell - 1)
        for c in range((j + 1) * a_bits):
            fails.append(int(vals[s, c]) ^ int(vals[orig, c]))

    w, c0 = _dist_weights(desc, cfg)
    acc = int(np.bitwise_xor.reduce(cfg.vmul(w, vals).reshape(-1))) ^ c0
    fails.append(acc)

    sq = cfg.vmul(vals, vals) ^ vals
    fails.extend(int(x) for x in sq.reshape(-1))
    return np.array(fails, dtype=_U64)


def _ref_inner_fails(inner, vals, cfg):
    entry = _PRED_BUILDERS[inner.builder_id]
    if entry.combiner == "raw":
        return [entry.ref_raw(inner, vals, cfg) ^ 1]
    return list(entry.ref_fails(inner, vals, cfg))


register_predicate(
    "DIST_PHI", _PredBuilder(_dp_shape, _dp_emit, _dp_ref, "gamma")
)


def build_dist_phi(spec_id, xs, sdist, prev_size, inner, key_points, committed,
                   gamma_seed, ell, a_bits) -> PredicateDescription:
    """Distance predicate over the hybrid pair set: conjoins the inner
    predicate on original rows, per-hybrid verdicts with prefix agreement,
    checksum consistency, and binarity."""
    return PredicateDescription(
        "DIST_PHI",
        (
            ("spec_id", spec_id),
            ("xs", tuple(tuple(x) for x in xs)),
            ("sdist", sdist),
            ("prev_size", prev_size),
            ("inner", inner),
            ("key_points", np.asarray(key_points, dtype=_U64)),
            ("committed", np.asarray(committed, dtype=_U64)),
            ("gamma_seed", gamma_seed),
            ("ell", ell),
            ("a_bits", a_bits),
        ),
    )


# -- PERMUTED_PVAL: permute rows, then check all T point-value constraints


def _pp_shape(desc):
    return (1 << desc.param("m"), 1 << desc.param("lncol"))


def _pp_emit(cb, desc, cfg):
    from . import mle

    rows, cols = _pp_shape(desc)
    perm = np.asarray(desc.param("perm_table"), dtype=np.int64)
    points = np.asarray(desc.param("points"), dtype=_U64)
    values = np.asarray(desc.param("values"), dtype=_U64)
    # each evaluation is one linear form over the input: the basis weights
    # of the point, pre-composed with the row permutation
    chi = mle.chi_table(points, cfg).reshape(points.shape[0], rows, cols)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(rows)
    fails = []
    for t in range(points.shape[0]):
        w = chi[t][inv]  # weight for wire (r, c) is chi at (inv(r), c)
        terms = []
        for r in range(rows):
            for c in range(cols):
                wv = int(w[r, c])
                if wv:
                    terms.append(cb.mul(cb.const(wv), cb.a_wire(r, c, cols)))
        fails.append(cb.add(cb.add_many(terms), cb.const(int(values[t]))))
    return fails


def _pp_ref(desc, vals, cfg):
    from . import mle

    rows, cols = _pp_shape(desc)
    perm = np.asarray(desc.param("perm_table"), dtype=np.int64)
    points = np.asarray(desc.param("points"), dtype=_U64)
    values = np.asarray(desc.param("values"), dtype=_U64)
    mat = vals.reshape(rows, cols)[perm]
    flat = mat.reshape(-1)
    fails = []
    for t in range(points.shape[0]):
        fails.append(mle.mle_eval(flat, points[t], cfg) ^ int(values[t]))
    return np.array(fails, dtype=_U64)


register_predicate(
    "PERMUTED_PVAL", _PredBuilder(_pp_shape, _pp_emit, _pp_ref, "gamma")
)


def build_permuted_pval(perm_table, claim, gamma_seed, m, lncol) -> PredicateDescription:
    """Circuit over a matrix that permutes rows by perm_table and checks
    every point-value constraint of the claim."""
    if len(perm_table) != (1 << m):
        raise BuilderError("permutation acts on 2^m rows")
    if claim.dim != m + lncol:
        raise BuilderError("claim points must have m + lncol coordinates")
    return PredicateDescription(
        "PERMUTED_PVAL",
        (
            ("perm_table", np.asarray(perm_table, dtype=_U64)),
            ("points", claim.points),
            ("values", claim.values),
            ("gamma_seed", gamma_seed),
            ("m", m),
            ("lncol", lncol),
        ),
    )


# -- FOLD_CHECK: folded rows of the queried submatrix match claimed values


def _fc_shape(desc):
    return (_pow2ceil(max(1, desc.param("nrows"))), desc.param("ncolp"))


def _fc_emit(cb, desc, cfg):
    sources = desc.param("sources")
    psi = np.asarray(desc.param("psi"), dtype=_U64)
    _, ncolp = _fc_shape(desc)
    fails = []
    for qi, (positions, coeffs) in enumerate(sources):
        for c in range(ncolp):
            terms = [
                cb.mul(cb.const(int(cv)), cb.a_wire(int(p), c, ncolp))
                for p, cv in zip(positions, coeffs)
            ]
            fails.append(
                cb.add(cb.add_many(terms), cb.const(int(psi[qi, c])))
            )
    return fails


def _fc_ref(desc, vals, cfg):
    sources = desc.param("sources")
    psi = np.asarray(desc.param("psi"), dtype=_U64)
    rows, ncolp = _fc_shape(desc)
    vals = vals.reshape(rows, ncolp)
    fails = []
    for qi, (positions, coeffs) in enumerate(sources):
        acc = np.zeros(ncolp, dtype=_U64)
        for p, cv in zip(positions, coeffs):
            acc ^= cfg.vmul_const(vals[int(p)], int(cv))
        acc ^= psi[qi]
        fails.extend(int(x) for x in acc)
    return np.array(fails, dtype=_U64)


register_predicate(
    "FOLD_CHECK", _PredBuilder(_fc_shape, _fc_emit, _fc_ref, "gamma")
)


def build_fold_check(sources, psi, gamma_seed, nrows, ncolp) -> PredicateDescription:
    """Predicate over the queried submatrix: the accumulated linear fold of
    its rows must reproduce the claimed folded values."""
    return PredicateDescription(
        "FOLD_CHECK",
        (
            ("sources", tuple(
                (tuple(int(p) for p in pos), tuple(int(c) for c in cf))
                for pos, cf in sources
            )),
            ("psi", np.asarray(psi, dtype=_U64)),
            ("gamma_seed", gamma_seed),
            ("nrows", nrows),
            ("ncolp", ncolp),
        ),
    )
