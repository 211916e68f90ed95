"""Pluggable base protocol abstraction, a reference toy instance, and the
random-continuation transcript checker built generically on any base.

A base protocol is public-coin with `rounds` rounds, per-round prover
message of `a_bits` bits and verifier message of `b_bits` bits (b <= a).
The prescribed prover is deterministic and, on non-member statements,
sends all-zero messages which the verdict rejects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import circuit as cir
from .session import Session

_U64 = np.uint64


class SpecError(Exception):
    """Invalid base protocol registration."""


@dataclass
class BaseUipSpec:
    spec_id: str
    rounds: int             # ell
    a_bits: int             # prover message bits per round
    b_bits: int             # verifier message bits per round
    statement_bits: int
    epsilon: float          # claimed unambiguity error
    next_message: object    # (x_bits, r, coins_prefix) -> tuple of a_bits bits
    is_member: object       # (x_bits) -> bool
    emit_verdict: object    # (cb, row_wires, x_bits, q_bits) -> wire
    ref_verdict_vals: object  # (x_bits, q_bits, row_vals, cfg) -> int

    def __post_init__(self):
        if self.b_bits > self.a_bits:
            raise SpecError("verifier messages longer than prover messages")
        if self.rounds < 0:
            raise SpecError("negative round count")

    @property
    def ncol(self) -> int:
        return self.rounds * self.a_bits

    def prescribed_row(self, x_bits, coins) -> np.ndarray:
        """The full prescribed transcript for (x, q): rounds * a_bits bits."""
        out = np.zeros(self.ncol, dtype=_U64)
        coins = tuple(coins)
        for r in range(self.rounds):
            prefix = coins[: (r + 1) * self.b_bits]
            msg = self.next_message(x_bits, r, prefix)
            out[r * self.a_bits:(r + 1) * self.a_bits] = np.array(
                msg, dtype=_U64
            )
        return out

    def verdict_bits(self, x_bits, q_bits, row) -> bool:
        from .field import get_field

        cfg = get_field(4)
        vals = np.asarray(row, dtype=_U64)
        return self.ref_verdict_vals(tuple(x_bits), tuple(q_bits), vals, cfg) == 1

    def verdict_builder(self, x_bits, q_bits) -> cir.PredicateDescription:
        """Standalone acceptance predicate for a single transcript."""
        return cir.build_verdict_batch(
            self.spec_id, [tuple(x_bits)], tuple(q_bits), self.rounds, self.a_bits
        )


def register_spec(spec: BaseUipSpec) -> BaseUipSpec:
    cir.base_spec_registry[spec.spec_id] = spec
    return spec


def get_spec(spec_id: str) -> BaseUipSpec:
    return cir.base_spec_registry[spec_id]


# ---------------------------------------------------------------------------
# the toy base language: pairs (u, w) with w = B(A(u)) for the quadratic map
# A(u)_i = u_i u_{i+1} + u_{i+2} over GF(2), B = A.


def _quad_map_bits(bits):
    n = len(bits)
    return tuple(
        (bits[i] & bits[(i + 1) % n]) ^ bits[(i + 2) % n] for i in range(n)
    )


def _quad_map_vals(wvals, cfg):
    """Field-arithmetic version of the quadratic map on wire values."""
    n = len(wvals)
    out = []
    for i in range(n):
        prod = cfg.mul_int(int(wvals[i]), int(wvals[(i + 1) % n]))
        out.append(prod ^ int(wvals[(i + 2) % n]))
    return out


def _quad_map_emit(cb, wires):
    n = len(wires)
    out = []
    for i in range(n):
        prod = cb.mul(wires[i], wires[(i + 1) % n])
        out.append(cb.add(prod, wires[(i + 2) % n]))
    return out


def toy_language(nbits: int = 4) -> BaseUipSpec:
    """Two-round base protocol for {(u, w): w = B(A(u))}.

    Prescribed answers are the intermediate and final map values masked by
    the round coins; the verdict recomputes both layers, so deviations are
    caught deterministically (unambiguity error 0).
    """
    ell, a, b = 2, nbits, nbits

    def split(x_bits):
        return tuple(x_bits[:nbits]), tuple(x_bits[nbits:])

    def member(x_bits):
        u, w = split(x_bits)
        return _quad_map_bits(_quad_map_bits(u)) == w

    def next_message(x_bits, r, prefix):
        if not member(x_bits):
            return (0,) * a
        u, _ = split(x_bits)
        q_r = tuple(prefix[r * b:(r + 1) * b])
        z = _quad_map_bits(u)
        layer = z if r == 0 else _quad_map_bits(z)
        return tuple(zv ^ qv for zv, qv in zip(layer, q_r))

    def ref_verdict_vals(x_bits, q_bits, row, cfg):
        u, w = split(x_bits)
        z = _quad_map_bits(u)
        zz = _quad_map_bits(z)
        q1 = q_bits[:b]
        q2 = q_bits[b: 2 * b]
        a1 = [int(v) for v in row[:a]]
        a2 = [int(v) for v in row[a: 2 * a]]
        fails = []
        for i in range(nbits):
            fails.append(a1[i] ^ z[i] ^ q1[i])
        y = [a1[i] ^ q1[i] for i in range(nbits)]
        by = _quad_map_vals(y, cfg)
        for i in range(nbits):
            fails.append(a2[i] ^ by[i] ^ q2[i])
        for i in range(nbits):
            fails.append(w[i] ^ zz[i])
        acc = 1
        for f in fails:
            acc = cfg.mul_int(acc, f ^ 1)
        return acc

    def emit_verdict(cb, row_wires, x_bits, q_bits):
        u, w = split(x_bits)
        z = _quad_map_bits(u)
        zz = _quad_map_bits(z)
        q1 = q_bits[:b]
        q2 = q_bits[b: 2 * b]
        a1 = row_wires[:a]
        a2 = row_wires[a: 2 * a]
        fails = []
        for i in range(nbits):
            fails.append(cb.add(a1[i], cb.const(z[i] ^ q1[i])))
        y = [cb.add(a1[i], cb.const(q1[i])) for i in range(nbits)]
        by = _quad_map_emit(cb, y)
        for i in range(nbits):
            fails.append(cb.add(a2[i], cb.add(by[i], cb.const(q2[i]))))
        for i in range(nbits):
            fails.append(cb.const(w[i] ^ zz[i]))
        return cb.mul_many([cb.add(cb.one, f) for f in fails])

    spec = BaseUipSpec(
        spec_id="toy%d" % nbits,
        rounds=ell,
        a_bits=a,
        b_bits=b,
        statement_bits=2 * nbits,
        epsilon=0.0,
        next_message=next_message,
        is_member=member,
        emit_verdict=emit_verdict,
        ref_verdict_vals=ref_verdict_vals,
    )
    return register_spec(spec)


def toy_member(rnd, nbits: int = 4) -> tuple:
    """A member statement (u, B(A(u))) from a python Random."""
    u = tuple(rnd.randrange(2) for _ in range(nbits))
    w = _quad_map_bits(_quad_map_bits(u))
    return u + w


def toy_nonmember(rnd, nbits: int = 4) -> tuple:
    x = list(toy_member(rnd, nbits))
    flip = nbits + rnd.randrange(nbits)
    x[flip] ^= 1
    return tuple(x)


# ---------------------------------------------------------------------------
# hybrid coins and prescribed matrices


def hybrid_coins(q, qprime, j: int, b_bits: int) -> tuple:
    """(q_{<=j}, q'_{>j}) for 1-based j."""
    cut = j * b_bits
    return tuple(q[:cut]) + tuple(qprime[cut:])


def prescribed_matrix(spec: BaseUipSpec, xs, entries, ncol_pad: int):
    """Stack prescribed transcripts for (index, coins) entries; None entries
    become zero rows.  Returns (matrix, active_mask)."""
    rows = len(entries)
    mat = np.zeros((rows, ncol_pad), dtype=_U64)
    active = np.zeros(rows, dtype=bool)
    for s, e in enumerate(entries):
        if e is None:
            continue
        i, coins = e
        mat[s, : spec.ncol] = spec.prescribed_row(xs[i], coins)
        active[s] = True
    return mat, active


# ---------------------------------------------------------------------------
# the random-continuation transcript checker


def transcript_checker(spec: BaseUipSpec, x_bits, q, candidate, session: Session,
                       stage: str = "tc"):
    """Certify that `candidate` is the prescribed transcript for (x, q) and
    that x is a member; public-coin, spec.rounds rounds."""
    candidate = np.asarray(candidate, dtype=_U64)
    if candidate.size != spec.ncol:
        session.finish("reject:%s.shape" % stage)
        return False
    ell, a, b = spec.rounds, spec.a_bits, spec.b_bits
    qprime = []
    rows = [np.zeros(spec.ncol, dtype=_U64) for _ in range(ell)]
    for r in range(ell):
        q_r = session.coin_bits(b, "%s.r%d" % (stage, r))
        qprime.extend(q_r)

        def msg(r=r):
            out = []
            for j in range(1, ell + 1):
                hyb = hybrid_coins(q, qprime + [0] * (ell * b - len(qprime)), j, b)
                prefix = hyb[: (r + 1) * b]
                out.extend(spec.next_message(x_bits, r, prefix))
            return out

        payload = session.prover_message(
            "%s.r%d" % (stage, r), msg, bits_per_element=1
        )
        for j in range(ell):
            rows[j][r * a:(r + 1) * a] = payload[j * a:(j + 1) * a]
    return transcript_checker_verdict(spec, x_bits, q, candidate, qprime, rows)


def transcript_checker_verdict(spec, x_bits, q, candidate, qprime, rows) -> bool:
    """Accept iff every hybrid run is accepted and each shares the required
    prefix with the candidate transcript."""
    ell, a, b = spec.rounds, spec.a_bits, spec.b_bits
    for j in range(1, ell + 1):
        hyb = hybrid_coins(q, qprime, j, b)
        if not spec.verdict_bits(x_bits, hyb, rows[j - 1]):
            return False
        if not np.array_equal(rows[j - 1][: j * a], candidate[: j * a]):
            return False
    return True


# ---------------------------------------------------------------------------
# the explicit check of an associated claim (pair set + predicate)


def final_check(spec: BaseUipSpec, xs, pair_set: cir.SetDescription,
                phi: cir.PredicateDescription, session: Session,
                stage: str = "final", prover_xs=None):
    """Explicitly verify that the prescribed transcripts for the pair set
    satisfy phi and that every referenced statement is a member.

    The prover first sends the claimed transcript matrix, then the batched
    transcript checkers run with one shared fresh coin sequence.
    prover_xs, when given, is the (possibly adversarial) statement view
    the prover computes from; verdicts always use the public xs.
    """
    entries = pair_set.expand()
    actives = [(s, e) for s, e in enumerate(entries) if e is not None]
    ell, a, b = spec.rounds, spec.a_bits, spec.b_bits
    rows_phi, cols_phi = cir.predicate_shape(phi)
    cfg = session.cfg
    view = xs if prover_xs is None else prover_xs

    def claimed_fn(src=None):
        src = view if src is None else src
        out = []
        for _, (i, coins) in actives:
            out.extend(int(v) for v in spec.prescribed_row(src[i], coins))
        return out

    claimed_flat = session.prover_message(
        stage + ".matrix", claimed_fn,
        honest_fn=(lambda: claimed_fn(xs)) if view is not xs else None,
        bits_per_element=1,
    )
    claimed = {}
    for idx, (s, _) in enumerate(actives):
        claimed[s] = claimed_flat[idx * spec.ncol:(idx + 1) * spec.ncol]

    qprime = []
    hybrid_rows = {
        s: [np.zeros(spec.ncol, dtype=_U64) for _ in range(ell)]
        for s, _ in actives
    }
    for r in range(ell):
        q_r = session.coin_bits(b, "%s.r%d" % (stage, r))
        qprime.extend(q_r)

        def msg(r=r, src=None):
            src = view if src is None else src
            out = []
            for _, (i, coins) in actives:
                for j in range(1, ell + 1):
                    hyb = hybrid_coins(
                        coins, qprime + [0] * (ell * b - len(qprime)), j, b
                    )
                    out.extend(spec.next_message(src[i], r, hyb[: (r + 1) * b]))
            return out

        payload = session.prover_message(
            "%s.r%d" % (stage, r), msg,
            honest_fn=(lambda r=r: msg(r, xs)) if view is not xs else None,
            bits_per_element=1,
        )
        k = 0
        for s, _ in actives:
            for j in range(ell):
                hybrid_rows[s][j][r * a:(r + 1) * a] = payload[k * a:(k + 1) * a]
                k += 1

    # verdict: transcript checkers, then phi on the claimed matrix
    for s, (i, coins) in actives:
        if not transcript_checker_verdict(
            spec, xs[i], coins, claimed[s], qprime, hybrid_rows[s]
        ):
            return False, "tc"
    mat = np.zeros((rows_phi, cols_phi), dtype=_U64)
    for s, _ in actives:
        if s < rows_phi:
            mat[s, : spec.ncol] = claimed[s]
    if cir.reference_eval(phi, mat, cfg) != 1:
        return False, "phi"
    return True, None
