"""Instance reduction for point-value claims under column distance:
splitting, permuting-and-curve-fitting gap amplification, emptiness
checks, evaluation-point reduction, the folding loop, and the final
query-based predicate.

The folding loop halves the row dimension per round, maintaining a linear
map (random combinations with per-round row permutations) whose
description lets the verifier reconstruct the query set by unrolling the
folds in reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import circuit as cir
from . import gkr as gkr_mod
from . import linalg
from . import mle
from . import permute
from .field import FieldConfig, UniPoly, interpolate, eval_multi
from .session import Session

_U64 = np.uint64


@dataclass
class DcrrConfig:
    """Desk-scale dials.  reps is the per-round repetition count of the
    permuted-claim reduction (the full-strength choice equals the incoming
    claim size; smaller values are flagged in the run summary)."""

    reps: int | None = None
    r_divisor: int | None = None   # distance-loss divisor, default m
    sampler: str = permute.UNIFORM
    perm_const: float = 4.0
    emptiness_budget_log2: int = 24


@dataclass
class FoldEntry:
    c: int
    perm: permute.PermutationHandle
    cfg: FieldConfig = None


@dataclass
class FoldState:
    """Current row-log, accumulated fold map, and live claim."""

    m_prot: int
    lncol: int
    entries: list
    claim: mle.PvalClaim
    table: np.ndarray  # prover-side current table (2^m_prot, L); None on replay

    def fold_rows(self) -> int:
        return len(self.entries)


@dataclass
class CanonicalCurve:
    """Low-degree curve through the stacked points, at nodes 0..n-1."""

    polys: list  # one UniPoly per coordinate
    nodes: np.ndarray
    dim: int

    @staticmethod
    def through(points: np.ndarray, cfg: FieldConfig) -> "CanonicalCurve":
        n, dim = points.shape
        nodes = np.arange(n, dtype=_U64)
        polys = [
            interpolate([(int(nodes[k]), int(points[k, c])) for k in range(n)], cfg)
            for c in range(dim)
        ]
        return CanonicalCurve(polys, nodes, dim)

    def eval_at(self, xs, cfg) -> np.ndarray:
        xs = [int(x) for x in np.asarray(xs, dtype=_U64)]
        out = np.zeros((len(xs), self.dim), dtype=_U64)
        for c, p in enumerate(self.polys):
            out[:, c] = np.array(eval_multi(p, xs), dtype=_U64)
        return out

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.polys), default=0)


@dataclass
class DcrrResult:
    accepted: bool
    reason: str = ""
    q_rows: list = None            # level-0 row indices, sorted
    qprime_rows: list = None       # sampled rows of the final folded table
    sources: list = None           # per q'-row: (positions into q_rows, coeffs)
    psi: np.ndarray = None         # claimed folded values on q'
    fold_entries: list = None
    phi_desc: object = None
    gamma_seed: bytes = b""
    final_claim: object = None
    flags: dict = dc_field(default_factory=dict)

    def q_description(self) -> bytes:
        return _serialize_qdesc(self, with_psi=False)

    def phi_description(self) -> bytes:
        return _serialize_qdesc(self, with_psi=True)


def _serialize_qdesc(res: DcrrResult, with_psi: bool) -> bytes:
    out = bytearray([1])  # version
    out += len(res.fold_entries).to_bytes(2, "big")
    for e in res.fold_entries:
        out += int(e.c).to_bytes(16, "big")
        blob = e.perm.serialize()
        out += len(blob).to_bytes(4, "big")
        out += blob
    out += len(res.qprime_rows).to_bytes(4, "big")
    for r in res.qprime_rows:
        out += int(r).to_bytes(4, "big")
    if with_psi:
        psi = np.asarray(res.psi, dtype=_U64)
        out += psi.shape[0].to_bytes(4, "big") + psi.shape[1].to_bytes(4, "big")
        out += psi.astype(">u8").tobytes()
        out += res.gamma_seed
    return bytes(out)


def reconstruct_query_rows(fold_entries, qprime_rows) -> list:
    """Unroll the folding steps in reverse: the level-0 rows each final row
    depends on."""
    rows = set()
    for q in qprime_rows:
        for (r, _) in unfold_sources(fold_entries, int(q)):
            rows.add(r)
    return sorted(rows)


def unfold_sources(fold_entries, row: int) -> list:
    """(level-0 row, coefficient) pairs contributing to a final folded row."""
    srcs = [(row, 1)]
    for e in reversed(fold_entries):
        half = e.perm.size
        nxt = []
        for (r, coeff) in srcs:
            nxt.append((r, coeff))
            nxt.append((half + e.perm.apply(r), _mulc(coeff, e.c, e.cfg)))
        srcs = nxt
    return srcs


def _mulc(a, b, cfg):
    return cfg.mul_int(int(a), int(b))


# ---------------------------------------------------------------------------
# sub-protocols


def break_into_two(claim: mle.PvalClaim, table, session: Session,
                   stage: str = "dcrr.break"):
    """Split the claim on the leading row variable.  The prover sends both
    half-table evaluations; the verifier checks the multilinear combination
    against the claimed values.  Returns (j_tail, zeta0, zeta1) or None."""
    cfg = claim.cfg
    t = claim.count
    chi = claim.points[:, 0]
    j_tail = claim.points[:, 1:]

    def halves():
        half = table.shape[0] // 2
        z0 = [mle.EvalMatrix(table[:half], cfg).joint_eval(p) for p in j_tail]
        z1 = [mle.EvalMatrix(table[half:], cfg).joint_eval(p) for p in j_tail]
        return z0 + z1

    payload = session.prover_message(stage, halves)
    if payload.size != 2 * t:
        return None
    zeta0, zeta1 = payload[:t], payload[t:]
    combo = cfg.vmul(chi ^ _U64(1), zeta0) ^ cfg.vmul(chi, zeta1)
    if not np.array_equal(combo, claim.values):
        return None
    return j_tail, zeta0, zeta1


def pval_emptiness(claim: mle.PvalClaim, budget_log2: int = 24) -> bool:
    """Exact non-emptiness by rank comparison of the constraint system."""
    size = 1 << claim.dim
    if size * (claim.count + 1) > (1 << budget_log2):
        raise mle.EnumerationBudgetError("emptiness system too large")
    e = claim.system()
    r1 = linalg.rank(e, claim.cfg)
    aug = np.concatenate([e, claim.values[:, None]], axis=1)
    r2 = linalg.rank(aug, claim.cfg)
    return r1 == r2


def gap_amplify(j_tail, v0, v1, a0, a1, d: int, lam: int, reps: int,
                session: Session, config: DcrrConfig,
                stage: str = "dcrr.amp"):
    """Permute the second half's rows, reduce its claim through the
    permuted-claim circuit, fit the canonical curve, and check endpoints.

    Returns (perm, b_table, curve, j_new, v_new, g0, g1) or an error tag.
    """
    cfg = session.cfg
    m_half = int(math.log2(a0.shape[0]))
    lncol = int(math.log2(a0.shape[1]))
    t1 = j_tail.shape[0]

    seed = session.coin_bytes(32, stage + ".perm")
    perm = permute.sample(
        m_half, max(1, 4 * d), 2.0 ** (-lam), config.sampler, seed,
        c=config.perm_const,
    )
    if not perm.guarantee:
        session.warn("permutation family guarantee void at this scale")

    proving = not session.replaying
    b_table = a1[perm.table] if proving else None  # b = a1 rows permuted

    gamma_seed = session.coin_bytes(32, stage + ".gamma")
    claim1 = mle.PvalClaim(j_tail, v1, cfg)
    desc = cir.build_permuted_pval(
        perm.inverse_table, claim1, gamma_seed, m_half, lncol
    )
    out = gkr_mod.gkr_run(
        desc, gkr_mod.GkrParams(reps, cfg),
        b_table.reshape(-1) if proving else None,
        session, stage + ".gkr",
    )
    if out.verdict != gkr_mod.CLAIM:
        return ("reject", "gkr:" + out.reason)
    j_new, v_new = out.claim.points, out.claim.values

    stacked = np.concatenate([j_tail, j_new], axis=0)
    curve = CanonicalCurve.through(stacked, cfg)
    n_nodes = stacked.shape[0]
    dim = stacked.shape[1]
    max_deg = (n_nodes - 1) * dim

    def curve_restrictions():
        xs = np.arange(max_deg + 1, dtype=_U64)
        pts = curve.eval_at(xs, cfg)
        g0v = [mle.EvalMatrix(a0, cfg).joint_eval(p) for p in pts]
        g1v = [mle.EvalMatrix(b_table, cfg).joint_eval(p) for p in pts]
        c0 = interpolate([(int(x), v) for x, v in zip(xs, g0v)], cfg).coeffs
        c1 = interpolate([(int(x), v) for x, v in zip(xs, g1v)], cfg).coeffs
        c0 = c0 + [0] * (max_deg + 1 - len(c0))
        c1 = c1 + [0] * (max_deg + 1 - len(c1))
        return list(c0) + list(c1)

    payload = session.prover_message(stage + ".curves", curve_restrictions)
    if payload.size != 2 * (max_deg + 1):
        return ("reject", "curve degree bound")
    g0 = UniPoly(payload[: max_deg + 1], cfg)
    g1 = UniPoly(payload[max_deg + 1:], cfg)
    if g0.degree > max_deg or g1.degree > max_deg:
        return ("reject", "curve degree bound")

    nodes = curve.nodes
    got0 = np.array(eval_multi(g0, nodes[:t1]), dtype=_U64)
    if not np.array_equal(got0, v0):
        return ("reject", "endpoint check g0")
    got1 = np.array(eval_multi(g1, nodes[t1:]), dtype=_U64)
    if not np.array_equal(got1, v_new):
        return ("reject", "endpoint check g1")
    return (perm, b_table, curve, j_new, v_new, g0, g1)


def reduce_round(state: FoldState, d: int, lam: int, session: Session,
                 config: DcrrConfig, stage: str):
    """One folding round: split, amplify, emptiness checks, then draw the
    evaluation points and fold constant.  Returns the new state or an
    error reason string."""
    cfg = session.cfg
    if state.m_prot < 1:
        return "fold exhausted"
    reps = config.reps or state.claim.count
    split = break_into_two(state.claim, state.table, session, stage + ".break")
    if split is None:
        return "linear split check"
    j_tail, zeta0, zeta1 = split
    proving = not session.replaying
    half = (1 << (state.m_prot - 1))
    a0 = state.table[:half] if proving else None
    a1 = state.table[half:] if proving else None

    amp = gap_amplify(
        j_tail, zeta0, zeta1, a0, a1, d, lam, reps, session, config,
        stage + ".amp",
    )
    if amp[0] == "reject":
        return amp[1]
    perm, b_table, curve, j_new, v_new, g0, g1 = amp

    t1 = j_tail.shape[0]
    nodes = curve.nodes
    stacked_pts = curve.eval_at(nodes, cfg)
    vals0 = np.array(eval_multi(g0, nodes), dtype=_U64)
    vals1 = np.array(eval_multi(g1, nodes), dtype=_U64)
    try:
        empty0 = not pval_emptiness(
            mle.PvalClaim(stacked_pts, vals0, cfg), config.emptiness_budget_log2
        )
        empty1 = not pval_emptiness(
            mle.PvalClaim(stacked_pts, vals1, cfg), config.emptiness_budget_log2
        )
    except mle.EnumerationBudgetError:
        session.warn("emptiness check skipped: system over budget")
        empty0 = empty1 = False
    if empty0 or empty1:
        return "emptiness check"

    t_next = reps
    alphas = session.coin_elements(t_next, stage + ".alpha")
    c = int(session.coin_elements(1, stage + ".c")[0])
    new_pts = curve.eval_at(alphas, cfg)
    g0a = np.array(eval_multi(g0, alphas), dtype=_U64)
    g1a = np.array(eval_multi(g1, alphas), dtype=_U64)
    new_vals = g0a ^ cfg.vmul_const(g1a, c)
    new_claim = mle.PvalClaim(new_pts, new_vals, cfg)
    new_table = None
    if proving:
        new_table = a0 ^ cfg.vmul_const(b_table, c)
    entry = FoldEntry(c, perm, cfg)
    return FoldState(
        state.m_prot - 1, state.lncol, state.entries + [entry],
        new_claim, new_table,
    )


def query_target(m: int, d: int, lam: int) -> int:
    """ceil(4 * lam * 2^m / d) query rows."""
    return max(1, math.ceil(4 * lam * (1 << m) / d))


def dcrr_run(claim: mle.PvalClaim, table, d: int, lam: int, session: Session,
             config: DcrrConfig | None = None, stage: str = "dcrr",
             shape=None) -> DcrrResult:
    """Fold the claim down, receive the final table explicitly, check its
    membership, then subsample query rows and emit the query/predicate
    descriptions.  In replay mode pass shape=(m, lncol) instead of a table."""
    cfg = session.cfg
    config = config or DcrrConfig()
    proving = not session.replaying
    if proving:
        table = np.asarray(table, dtype=_U64)
        m = int(math.log2(table.shape[0]))
        lncol = int(math.log2(table.shape[1]))
    else:
        if shape is None:
            raise mle.ShapeError("replay requires an explicit (m, lncol) shape")
        m, lncol = shape
    if claim.dim != (m + lncol):
        raise mle.ShapeError("claim dimension does not match the table")

    flags = {
        "kernel_distance_assumed": True,
        "reps_formula": config.reps is None,
    }
    q_rows_target = query_target(m, d, lam)
    # stop once the folded table is within the query budget; additionally
    # each queried folded row unfolds to 2^folds original rows, so folding
    # beyond log2(target) would overshoot the query-count invariant
    stop_folds = max(0, m - max(0, (q_rows_target - 1).bit_length()))
    gran_folds = max(0, q_rows_target.bit_length() - 1)
    n_folds = min(stop_folds, gran_folds, m)
    state = FoldState(m, lncol, [], claim, table if proving else None)
    rounds = 0
    while rounds < n_folds:
        nxt = reduce_round(
            state, d, lam, session, config, "%s.f%d" % (stage, rounds)
        )
        if isinstance(nxt, str):
            return DcrrResult(False, reason=nxt, flags=flags)
        state = nxt
        rounds += 1

    m_fin = state.m_prot
    rows_fin = 1 << m_fin
    ncols = 1 << state.lncol

    def send_table():
        return state.table.reshape(-1)

    payload = session.prover_message(stage + ".table", send_table)
    if payload.size != rows_fin * ncols:
        return DcrrResult(False, reason="final table shape", flags=flags)
    a_new = payload.reshape(rows_fin, ncols)
    if not state.claim.holds_for(a_new.reshape(-1)):
        return DcrrResult(False, reason="final table membership", flags=flags)

    unfold_factor = 1 << (m - m_fin)
    n_qprime = max(1, math.ceil(q_rows_target / unfold_factor))
    n_qprime = min(n_qprime, rows_fin)
    # draw q' rows through the public-coin stream so replay reproduces them
    qprime = []
    remaining = list(range(rows_fin))
    for _ in range(n_qprime):
        idx = _coin_below(session, len(remaining), stage + ".q")
        qprime.append(remaining.pop(idx))
    qprime.sort()

    gamma_seed = session.coin_bytes(32, stage + ".gamma")
    q_rows = reconstruct_query_rows(state.entries, qprime)
    pos_of = {r: i for i, r in enumerate(q_rows)}
    sources = []
    for qr in qprime:
        srcs = unfold_sources(state.entries, qr)
        sources.append((
            tuple(pos_of[r] for r, _ in srcs),
            tuple(int(cv) for _, cv in srcs),
        ))
    psi = a_new[qprime]
    flags["q_rows"] = len(q_rows)
    flags["q_target"] = q_rows_target
    phi = cir.build_fold_check(
        sources, psi, gamma_seed, nrows=len(q_rows), ncolp=ncols
    )
    return DcrrResult(
        True, q_rows=q_rows, qprime_rows=qprime, sources=sources, psi=psi,
        fold_entries=state.entries, phi_desc=phi, gamma_seed=gamma_seed,
        final_claim=state.claim, flags=flags,
    )


def _coin_below(session: Session, bound: int, stage: str) -> int:
    """Rejection-sampled uniform index drawn from session coin bits."""
    if bound == 1:
        return 0
    nbits = (bound - 1).bit_length()
    while True:
        bits = session.coin_bits(nbits, stage)
        v = 0
        for b in bits:
            v = (v << 1) | b
        if v < bound:
            return v
