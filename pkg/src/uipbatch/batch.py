"""The top-level batching driver and its two sub-protocols: checksummed
distance generation over hybrid transcript pair sets, and instance
reduction through the circuit-to-claim reduction plus column-distance
folding.

Parameter formulas follow the source analyses and are computed as
defaults; desk-scale runs may override the distance parameter and the
repetition counts, in which case the validity flags record that the
theoretical bounds are void and every run echoes both values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import baseuip as bu
from . import circuit as cir
from . import dcrr as dcrr_mod
from . import gkr as gkr_mod
from . import mle
from .coins import CoinSource
from .field import FieldConfig
from .session import Session

_U64 = np.uint64


class ParameterError(Exception):
    """Driver configuration violates a structural contract."""


@dataclass
class BatchParams:
    k: int
    lam: int
    field: FieldConfig
    d: int = None              # None -> formula value
    gkr_reps: int = None       # None -> formula value
    dcrr_reps: int = None      # None -> match incoming claim size
    c0: int = 2
    force_rho: int = None
    d_formula: int = 0
    rho: int = 0
    flags: dict = dc_field(default_factory=dict)

    def resolve(self, spec: bu.BaseUipSpec) -> "BatchParams":
        ell = max(1, spec.rounds)
        if self.k < 1:
            raise ParameterError("batch size must be >= 1")
        rho = self.k.bit_length() - 1 if self.k > 1 else 0
        if self.force_rho is not None:
            if self.force_rho > rho:
                raise ParameterError(
                    "forcing more than floor(log2 k) iterations is rejected"
                )
            rho = self.force_rho
        self.rho = rho
        self.d_formula = math.ceil(16 * math.log2(self.k * ell) * self.lam) * ell \
            if self.k * ell > 1 else 16 * self.lam * ell
        if self.d is None:
            self.d = self.d_formula
        if spec.rounds > 0 and self.d <= 2 * spec.rounds:
            raise ParameterError("distance parameter must exceed 2*rounds")
        m1 = (max(1, self.k * ell) - 1).bit_length()
        a = max(1, spec.a_bits)
        field_bound = 32 * (2 ** self.lam) * (
            (16 * max(1, math.log2(max(2, self.k))) * self.lam * a * ell * m1)
            ** self.c0
        )
        self.flags = {
            "d_is_formula": self.d == self.d_formula,
            "d_technical_ok": self.d >= 16 * m1 * self.lam,
            "field_size_ok": self.field.order >= field_bound,
            "gkr_reps_is_formula": self.gkr_reps is None,
            "dcrr_reps_is_formula": self.dcrr_reps is None,
        }
        return self


@dataclass
class AssociatedClaim:
    """A pair set plus a predicate over its prescribed transcript matrix."""

    pair_set: cir.SetDescription
    phi: cir.PredicateDescription

    def n_active(self) -> int:
        return self.pair_set.n_active()

    def size(self) -> int:
        return self.pair_set.size()


@dataclass
class DistOutput:
    claim: AssociatedClaim      # (hybrid pair set, distance predicate)
    key_points: np.ndarray
    committed: np.ndarray       # (ell, T_ck, a)
    qprime: tuple
    t_ck: int
    prev_claim: AssociatedClaim


@dataclass
class BatchResult:
    accepted: bool
    stage: str = ""
    rho: int = 0
    flags: dict = dc_field(default_factory=dict)
    warnings: list = dc_field(default_factory=list)
    claims: list = dc_field(default_factory=list)
    ladder: list = dc_field(default_factory=list)


def cksum_key_count(d: int, m: int, lam: int) -> int:
    return mle.cksum_count(d, m, lam)


def dist_gen(spec: bu.BaseUipSpec, xs, claim: AssociatedClaim,
             params: BatchParams, session: Session, stage: str = "dist",
             prover_xs=None) -> DistOutput:
    """Checksummed random continuation over the claim's pair set.

    The verifier never rejects here; all failure surfaces later through
    the distance predicate.  Prover payload per round is exactly
    T_ck * a * width bits.
    """
    cfg = session.cfg
    ell, a, b = spec.rounds, spec.a_bits, spec.b_bits
    prover_xs = prover_xs if prover_xs is not None else xs
    prev_entries = claim.pair_set.expand()
    m_rows = cir._pow2ceil(len(prev_entries) * ell)
    m = m_rows.bit_length() - 1
    ncolp = cir._pow2ceil(ell * a)
    t_ck = cksum_key_count(params.d, m, params.lam)

    # the key is pure public randomness; broadcast a seed and expand
    key_seed = session.coin_bytes(32, stage + ".key")
    key_points = CoinSource(key_seed).draw_elements(t_ck * m, cfg).reshape(t_ck, m)
    key = mle.ChecksumKey(key_points, cfg)

    qprime: list = []
    committed = np.zeros((ell, t_ck, a), dtype=_U64)
    proving = not session.replaying

    mat_p = mat_h = None
    if proving:
        # the hybrid entries only depend on coins, so build incrementally
        pass
    for r in range(ell):
        q_r = session.coin_bits(b, "%s.coin.r%d" % (stage, r))
        qprime.extend(q_r)

        def round_cksum(r=r, view=prover_xs):
            sd = cir.hybrid_pairs(
                claim.pair_set, tuple(qprime) + (0,) * (ell * b - len(qprime)),
                ell, b,
            )
            entries = sd.expand()
            mat, _ = bu.prescribed_matrix(spec, view, entries, ncolp)
            cols = mat[:, r * a:(r + 1) * a]
            return mle.cksum(key, cols).reshape(-1)

        honest_fn = None
        if prover_xs is not xs:
            honest_fn = lambda r=r: round_cksum(r, xs)
        payload = session.prover_message(
            "%s.cksum.r%d" % (stage, r), round_cksum, honest_fn=honest_fn
        )
        if payload.size != t_ck * a:
            session.warn("checksum payload of unexpected shape")
            payload = np.resize(payload, t_ck * a)
        committed[r] = payload.reshape(t_ck, a)

    gamma_seed = session.coin_bytes(32, stage + ".gamma")
    sdist = cir.hybrid_pairs(claim.pair_set, tuple(qprime), ell, b)
    phi_dist = cir.build_dist_phi(
        spec.spec_id, xs, sdist, len(prev_entries), claim.phi,
        key_points, committed, gamma_seed, ell, a,
    )
    return DistOutput(
        AssociatedClaim(sdist, phi_dist), key_points, committed,
        tuple(qprime), t_ck, claim,
    )


def reduce(spec: bu.BaseUipSpec, xs, dist: DistOutput, params: BatchParams,
           session: Session, stage: str = "reduce", prover_xs=None):
    """Reduce the distance claim to a claim over a subsample of the hybrid
    pairs.  Returns (AssociatedClaim, info) or (None, reason)."""
    cfg = session.cfg
    ell, a = spec.rounds, spec.a_bits
    prover_xs = prover_xs if prover_xs is not None else xs
    sdist = dist.claim.pair_set
    entries = sdist.expand()
    m_rows = len(entries)
    m = m_rows.bit_length() - 1
    ncolp = cir._pow2ceil(ell * a)
    ncol = ell * a

    t_formula = gkr_mod.formula_repetitions(params.d, ncol, m)
    t_reps = params.gkr_reps or t_formula
    proving = not session.replaying
    mat = None
    if proving:
        mat, _ = bu.prescribed_matrix(spec, prover_xs, entries, ncolp)

    out = gkr_mod.gkr_distance_preserving(
        dist.claim.phi, params.d, gkr_mod.GkrParams(t_reps, cfg),
        mat.reshape(-1) if proving else None, session, stage + ".gkr",
    )
    if out.verdict != gkr_mod.CLAIM:
        return None, "gkr:" + out.reason

    config = dcrr_mod.DcrrConfig(reps=params.dcrr_reps)
    res = dcrr_mod.dcrr_run(
        out.claim, mat, params.d, params.lam, session, config,
        stage + ".fold", shape=(m, ncolp.bit_length() - 1),
    )
    if not res.accepted:
        return None, "fold:" + res.reason

    # drop padding rows from the subsample; their values are zero and
    # contribute nothing to the fold
    active_q = [r for r in res.q_rows if entries[r] is not None]
    pos_in_q = {r: i for i, r in enumerate(res.q_rows)}
    active_pos = {r: i for i, r in enumerate(active_q)}
    new_sources = []
    for (positions, coeffs) in res.sources:
        kept = [
            (active_pos[res.q_rows[p]], cv)
            for p, cv in zip(positions, coeffs)
            if entries[res.q_rows[p]] is not None
        ]
        new_sources.append((
            tuple(p for p, _ in kept), tuple(cv for _, cv in kept)
        ))
    s_new = cir.subsampled_pairs(sdist, active_q)
    phi_new = cir.build_fold_check(
        new_sources, res.psi, res.gamma_seed, nrows=len(active_q),
        ncolp=ncolp,
    )
    info = {
        "q_rows": len(res.q_rows),
        "active_rows": len(active_q),
        "gkr_reps": t_reps,
        "gkr_reps_formula": t_formula,
        "size_bound": math.ceil(8 * params.lam * m_rows / params.d),
        "q_desc_bits": 8 * len(res.q_description()),
        "phi_desc_bits": 8 * len(res.phi_description()),
    }
    return AssociatedClaim(s_new, phi_new), info


def batch_run(spec: bu.BaseUipSpec, xs, params: BatchParams,
              session: Session, adversary_xs=None) -> BatchResult:
    """The full batching driver: initial coin broadcast, rho iterations of
    (distance generation, instance reduction), then the explicit check."""
    params = params.resolve(spec)
    cfg = session.cfg
    if any(len(x) != spec.statement_bits for x in xs):
        raise ParameterError("statements must share the declared length")
    if len(xs) != params.k:
        raise ParameterError("statement count differs from k")
    result = BatchResult(False, rho=params.rho, flags=dict(params.flags))

    prover_xs = session.adversary.prover_statements(list(xs))
    if adversary_xs is not None:
        prover_xs = adversary_xs

    if spec.rounds == 0:
        ok = all(
            spec.verdict_bits(x, (), np.zeros(0, dtype=_U64)) for x in xs
        )
        result.accepted = ok
        result.stage = "" if ok else "verdict"
        return result

    ell, a, b = spec.rounds, spec.a_bits, spec.b_bits
    q = session.coin_bits(b * ell, "driver.init")
    s0 = cir.initial_pairs(params.k, q)
    phi0 = cir.build_verdict_batch(spec.spec_id, xs, q, ell, a)
    claim = AssociatedClaim(s0, phi0)
    result.claims.append(claim)
    result.ladder.append(claim.n_active())

    for j in range(1, params.rho + 1):
        dist = dist_gen(
            spec, xs, claim, params, session, "dist%d" % j, prover_xs=prover_xs
        )
        reduced, info = reduce(
            spec, xs, dist, params, session, "reduce%d" % j,
            prover_xs=prover_xs,
        )
        if reduced is None:
            result.stage = "reduce%d:%s" % (j, info)
            result.warnings = list(session.warnings)
            session.finish("reject:" + result.stage)
            return result
        claim = reduced
        result.claims.append(claim)
        result.ladder.append(claim.n_active())
        bound = math.ceil(params.k * 2.0 ** (-j))
        if claim.n_active() > bound:
            raise ParameterError(
                "instance ladder violated at iteration %d: %d > %d"
                % (j, claim.n_active(), bound)
            )
        if claim.n_active() > info["size_bound"]:
            raise ParameterError("subsample exceeded the reduction bound")

    ok, why = bu.final_check(
        spec, xs, claim.pair_set, claim.phi, session, stage="final",
        prover_xs=prover_xs,
    )
    result.accepted = bool(ok)
    result.stage = "" if ok else "final:%s" % why
    result.warnings = list(session.warnings)
    session.finish("accept" if ok else ("reject:" + result.stage))
    return result
