"""Reduction from "circuit accepts the matrix" to a point-value claim about
the matrix, via per-layer sumcheck with parallel repetitions.

Each layer transition runs the sumcheck for

    V_i(z) = sum_{u,w} [ add(z,u,w) (V_{i-1}(u) + V_{i-1}(w))
                          + mult(z,u,w) V_{i-1}(u) V_{i-1}(w) ]

with message degree <= 2 per variable, followed by the two-point-to-one
random-line reduction.  The verifier evaluates the wiring sums densely
from the expanded gate lists.

The asserted output value 1 is never checked directly: the gap between it
and the prover's first round sum is carried as an additive offset into the
final claim, so a prescribed run on a rejecting input completes and
produces a violated claim (the verifier rejects only on failed
consistency checks, which a prescribed prover never triggers).

All repetitions run in lockstep over shared layer structure with
independent coins; the output point sequence depends only on the coins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import circuit as cir
from . import mle
from .field import FieldConfig
from .session import Session

_U64 = np.uint64

REJECT = "REJECT"
CLAIM = "CLAIM"

_TAU = 2  # third evaluation node for degree-2 messages


@dataclass
class GkrParams:
    repetitions: int
    field: FieldConfig

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class GkrOutcome:
    verdict: str
    claim: object = None        # PvalClaim over the matrix alone
    joint_claim: object = None  # PvalClaim over (matrix || description)
    reason: str = ""
    resamples: int = 0


def _group_by(idx, n_targets):
    """Precompute (order, starts, targets) to xor-accumulate by target."""
    idx = np.asarray(idx, dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    targets, starts = np.unique(sorted_idx, return_index=True)
    return order, starts, targets


def _scatter_xor(out, group, contrib):
    """out[:, targets] ^= grouped xor of contrib columns."""
    order, starts, targets = group
    if targets.size == 0:
        return
    red = np.bitwise_xor.reduceat(contrib[:, order], starts, axis=1)
    out[:, targets] ^= red


class _LayerPlan:
    """Per-layer precomputation shared by every repetition and run."""

    def __init__(self, layer: cir.Layer):
        self.layer = layer
        self.add_by_l = _group_by(layer.add_l, 0)
        self.mul_by_l = _group_by(layer.mul_l, 0)
        self.add_by_r = _group_by(layer.add_r, 0)
        self.mul_by_r = _group_by(layer.mul_r, 0)


_PLAN_CACHE: dict = {}


def _plans(circ: cir.LayeredCircuit):
    key = id(circ)
    hit = _PLAN_CACHE.get(key)
    if hit is None:
        hit = [_LayerPlan(l) for l in circ.layers]
        if len(_PLAN_CACHE) > 64:
            _PLAN_CACHE.clear()
        _PLAN_CACHE[key] = hit
    return hit


def _poly3_from_evals(g0, g1, gt, cfg):
    """Coefficients (c0, c1, c2) of the degree-<=2 polynomial with values
    g0, g1, gt at 0, 1, tau."""
    tau = _TAU
    denom = cfg.inv_int(cfg.mul_int(tau, tau) ^ tau)  # (tau^2 + tau)^-1
    s1 = g1 ^ g0
    st = gt ^ g0
    c2 = cfg.vmul_const(st ^ cfg.vmul_const(s1, tau), denom)
    c1 = s1 ^ c2
    return np.stack([g0, c1, c2], axis=1)  # (T, 3)


def _eval_poly(coeffs, x, cfg):
    """Evaluate (T, k) coefficient rows at per-repetition points x (T,)."""
    acc = np.zeros(x.shape[0], dtype=_U64)
    for j in range(coeffs.shape[1] - 1, -1, -1):
        acc = cfg.vmul(acc, x) ^ coeffs[:, j]
    return acc


def _mle_eval_batch(values, points, cfg):
    """values (W,) shared table; points (T, w): per-row MLE evaluations."""
    t = points.shape[0]
    vals = np.broadcast_to(values, (t, values.shape[0])).copy()
    for i in range(points.shape[1]):
        half = vals.shape[1] // 2
        lo, hi = vals[:, :half], vals[:, half:]
        diff = lo ^ hi
        vals = lo ^ cfg.vmul(np.broadcast_to(points[:, i][:, None], diff.shape), diff)
    return vals[:, 0]


class _Reject(Exception):
    def __init__(self, reason):
        self.reason = reason


def gkr_run(desc: cir.PredicateDescription, params: GkrParams, a_matrix,
            session: Session, stage: str = "gkr") -> GkrOutcome:
    """Reduce the claim "the described circuit outputs 1 on a_matrix" to a
    point-value claim about the flattened matrix.

    The prover input may be None in replay mode; all prover work is then
    skipped and recorded messages drive the verifier checks.
    """
    cfg = params.field
    if cfg != session.cfg:
        raise ValueError("session field differs from protocol field")
    exp = cir.expand(desc, cfg)
    circ = exp.circuit
    t_reps = params.repetitions
    plans = _plans(circ)

    proving = not session.replaying
    layer_vals = None
    if proving:
        joint = exp.joint_input(a_matrix)
        layer_vals = circ.evaluate(joint, cfg)

    # initial claim: output wire of the top layer equals 1
    w_top = circ.layers[-1].width.bit_length() - 1
    out_bits = [
        (circ.output_index >> (w_top - 1 - i)) & 1 for i in range(w_top)
    ]
    z_pts = np.broadcast_to(
        np.array(out_bits, dtype=_U64), (t_reps, w_top)
    ).copy()
    running = np.ones(t_reps, dtype=_U64)
    delta = np.zeros(t_reps, dtype=_U64)

    try:
        for li in range(len(circ.layers) - 1, -1, -1):
            plan = plans[li]
            layer = circ.layers[li]
            w_in_width = (
                circ.layers[li - 1].width if li > 0 else circ.input_width
            )
            w_in = w_in_width.bit_length() - 1
            in_vals = layer_vals[li] if proving else None  # (1, W_in)

            z_pts, running = _layer_round(
                session, cfg, stage, li, plan, layer, w_in, w_in_width,
                in_vals, z_pts, running, delta if li == len(circ.layers) - 1 else None,
                t_reps,
            )
    except _Reject as r:
        _LAST_LINE.pop(id(session), None)
        return GkrOutcome(REJECT, reason=r.reason)

    # claim about the joint input; fold away the description half
    final_vals = running ^ delta
    na = exp.a_size.bit_length() - 1
    lead = z_pts.shape[1] - na
    resamples = 0

    desc_input = np.zeros(circ.input_width, dtype=_U64)
    desc_input[exp.a_size: exp.a_size + exp.desc_values.size] = exp.desc_values

    # chi = prod over lead coords of (1 + p_i); resample the last line draw
    # for any repetition where it vanishes (coin-determined, one retry)
    chi = None
    for attempt in range(3):
        chi = np.ones(t_reps, dtype=_U64)
        for i in range(lead):
            chi = cfg.vmul(chi, z_pts[:, i] ^ _U64(1))
        bad = np.nonzero(chi == 0)[0]
        if bad.size == 0:
            break
        if attempt == 2:
            _LAST_LINE.pop(id(session), None)
            return GkrOutcome(REJECT, reason="fold selector kept vanishing")
        resamples += int(bad.size)
        session.warn("fold selector vanished; resampling %d point(s)" % bad.size)
        fresh = session.coin_elements(int(bad.size), stage + ".resample")
        ln = _LAST_LINE[id(session)]
        for k, rep in enumerate(bad):
            tstar = int(fresh[k])
            z_pts[rep] = ln["ru"][rep] ^ cfg.vmul_const(
                ln["ru"][rep] ^ ln["rw"][rep], tstar
            )
            final_vals[rep] = (
                _eval_poly(
                    ln["q"][rep][None, :], np.array([tstar], dtype=_U64), cfg
                )[0]
                ^ delta[rep]
            )
    _LAST_LINE.pop(id(session), None)

    joint_claim = mle.PvalClaim(z_pts.copy(), final_vals.copy(), cfg)
    v0 = _mle_eval_batch(desc_input, z_pts, cfg)
    chi_inv = cfg.vinv(chi)
    a_vals = cfg.vmul(final_vals ^ v0, chi_inv)
    a_pts = z_pts[:, lead:]
    claim = mle.PvalClaim(a_pts, a_vals, cfg)
    return GkrOutcome(CLAIM, claim=claim, joint_claim=joint_claim,
                      resamples=resamples)


_LAST_LINE: dict = {}


def _layer_round(session, cfg, stage, li, plan, layer, w_in, w_in_width,
                 in_vals, z_pts, running, delta, t_reps):
    """One layer's sumcheck (two phases), final wiring check, and line
    reduction.  Returns the next layer's (points, running values)."""
    proving = not session.replaying
    tag = "%s.l%d" % (stage, li)

    eqz = mle.chi_table(z_pts, cfg)

    if proving:
        vin = in_vals[0]
        vin_b = np.broadcast_to(vin, (t_reps, vin.shape[0]))
        # phase-u tables
        bu = np.zeros((t_reps, w_in_width), dtype=_U64)
        cu = np.zeros((t_reps, w_in_width), dtype=_U64)
        # mult gates: B[l] += eqz[z] * V[r]
        if layer.mul_idx.size:
            contrib = cfg.vmul(
                eqz[:, layer.mul_idx], vin_b[:, layer.mul_r]
            )
            _scatter_xor(bu, plan.mul_by_l, contrib)
        # add gates: B[l] += eqz[z];  C[l] += eqz[z] * V[r]
        if layer.add_idx.size:
            _scatter_xor(bu, plan.add_by_l, eqz[:, layer.add_idx])
            contrib = cfg.vmul(
                eqz[:, layer.add_idx], vin_b[:, layer.add_r]
            )
            _scatter_xor(cu, plan.add_by_l, contrib)
        au = vin_b.copy()
    else:
        au = bu = cu = None

    running, ru, au_fin = _sumcheck_phase(
        session, cfg, tag + ".u", w_in, au, bu, cu, running, delta, t_reps
    )

    pu = session.prover_message(
        tag + ".pu", lambda: au_fin if au_fin is not None else None
    )

    if proving:
        vin = in_vals[0]
        vin_b = np.broadcast_to(vin, (t_reps, vin.shape[0]))
        equ = mle.chi_table(ru, cfg)
        dw = np.zeros((t_reps, w_in_width), dtype=_U64)
        ew = np.zeros((t_reps, w_in_width), dtype=_U64)
        if layer.add_idx.size:
            contrib = cfg.vmul(eqz[:, layer.add_idx], equ[:, layer.add_l])
            _scatter_xor(dw, plan.add_by_r, contrib)
        if layer.mul_idx.size:
            contrib = cfg.vmul(eqz[:, layer.mul_idx], equ[:, layer.mul_l])
            _scatter_xor(ew, plan.mul_by_r, contrib)
        vu = pu[:, None]
        bw = dw ^ cfg.vmul(ew, np.broadcast_to(vu, ew.shape))
        cw = cfg.vmul(dw, np.broadcast_to(vu, dw.shape))
        aw = vin_b.copy()
    else:
        aw = bw = cw = None

    running, rw, aw_fin = _sumcheck_phase(
        session, cfg, tag + ".w", w_in, aw, bw, cw, running, None, t_reps
    )

    pw = session.prover_message(
        tag + ".pw", lambda: aw_fin if aw_fin is not None else None
    )

    # dense wiring evaluation and the final gate-identity check
    equ = mle.chi_table(ru, cfg)
    eqw = mle.chi_table(rw, cfg)
    addv = np.zeros(t_reps, dtype=_U64)
    mulv = np.zeros(t_reps, dtype=_U64)
    if layer.add_idx.size:
        prod = cfg.vmul(
            cfg.vmul(eqz[:, layer.add_idx], equ[:, layer.add_l]),
            eqw[:, layer.add_r],
        )
        addv = np.bitwise_xor.reduce(prod, axis=1)
    if layer.mul_idx.size:
        prod = cfg.vmul(
            cfg.vmul(eqz[:, layer.mul_idx], equ[:, layer.mul_l]),
            eqw[:, layer.mul_r],
        )
        mulv = np.bitwise_xor.reduce(prod, axis=1)
    expect = cfg.vmul(addv, pu ^ pw) ^ cfg.vmul(mulv, cfg.vmul(pu, pw))
    if not np.array_equal(expect, running):
        raise _Reject("wiring identity failed at layer %d" % li)

    # two-point-to-one-point reduction along the line ru + t (ru + rw)
    span = ru ^ rw

    def line_poly():
        # restriction of the next layer's extension to the line
        coeff_nodes = list(range(w_in + 1))
        vals = []
        vin = in_vals[0]
        for node in coeff_nodes:
            pt = ru ^ cfg.vmul_const(span, node)
            vals.append(_mle_eval_batch(vin, pt, cfg))
        polys = np.zeros((t_reps, w_in + 1), dtype=_U64)
        from .field import interpolate

        for rep in range(t_reps):
            poly = interpolate(
                [(n, int(vals[k][rep])) for k, n in enumerate(coeff_nodes)],
                cfg,
            )
            row = poly.coeffs + [0] * (w_in + 1 - len(poly.coeffs))
            polys[rep] = np.array(row, dtype=_U64)
        return polys.reshape(-1)

    q_flat = session.prover_message(tag + ".line", line_poly)
    if q_flat.size != t_reps * (w_in + 1):
        raise _Reject("line polynomial degree violation at layer %d" % li)
    q = q_flat.reshape(t_reps, w_in + 1)
    if not np.array_equal(q[:, 0], pu):
        raise _Reject("line endpoint 0 mismatch at layer %d" % li)
    if not np.array_equal(_eval_poly(q, np.ones(t_reps, dtype=_U64), cfg), pw):
        raise _Reject("line endpoint 1 mismatch at layer %d" % li)
    tstar = session.coin_elements(t_reps, tag + ".t")
    new_pts = ru ^ cfg.vmul(np.broadcast_to(tstar[:, None], span.shape), span)
    new_running = _eval_poly(q, tstar, cfg)
    _LAST_LINE[id(session)] = {"ru": ru, "rw": rw, "q": q}
    return new_pts, new_running


def _sumcheck_phase(session, cfg, tag, rounds, a_tab, b_tab, c_tab, running,
                    delta, t_reps):
    """Bind `rounds` variables of sum_u A[u] B[u] + C[u].

    delta, when given, absorbs the first round's gap instead of checking it
    (the asserted-output fold of the top layer).  Returns the updated
    running value, the bound point, and the final A scalar per repetition.
    """
    proving = a_tab is not None
    bound = np.zeros((t_reps, rounds), dtype=_U64)
    for j in range(rounds):
        if proving:
            half = a_tab.shape[1] // 2
            a0, a1 = a_tab[:, :half], a_tab[:, half:]
            b0, b1 = b_tab[:, :half], b_tab[:, half:]
            c0, c1 = c_tab[:, :half], c_tab[:, half:]
            g0 = np.bitwise_xor.reduce(cfg.vmul(a0, b0) ^ c0, axis=1)
            g1 = np.bitwise_xor.reduce(cfg.vmul(a1, b1) ^ c1, axis=1)
            at = a0 ^ cfg.vmul_const(a0 ^ a1, _TAU)
            bt = b0 ^ cfg.vmul_const(b0 ^ b1, _TAU)
            ct = c0 ^ cfg.vmul_const(c0 ^ c1, _TAU)
            gt = np.bitwise_xor.reduce(cfg.vmul(at, bt) ^ ct, axis=1)
            coeffs = _poly3_from_evals(g0, g1, gt, cfg)
        msg = session.prover_message(
            tag + ".sc%d" % j, (lambda: coeffs.reshape(-1)) if proving else None
        )
        if msg.size != 3 * t_reps:
            raise _Reject("sumcheck message shape at %s round %d" % (tag, j))
        coeffs_v = msg.reshape(t_reps, 3)
        total = coeffs_v[:, 0] ^ _eval_poly(
            coeffs_v, np.ones(t_reps, dtype=_U64), cfg
        )
        if delta is not None and j == 0:
            delta ^= running ^ total
        elif not np.array_equal(total, running):
            raise _Reject("sumcheck chain broken at %s round %d" % (tag, j))
        r = session.coin_elements(t_reps, tag + ".r%d" % j)
        bound[:, j] = r
        running = _eval_poly(coeffs_v, r, cfg)
        if proving:
            rb = np.broadcast_to(r[:, None], (t_reps, a_tab.shape[1] // 2))
            half = a_tab.shape[1] // 2
            a_tab = a_tab[:, :half] ^ cfg.vmul(rb, a_tab[:, :half] ^ a_tab[:, half:])
            b_tab = b_tab[:, :half] ^ cfg.vmul(rb, b_tab[:, :half] ^ b_tab[:, half:])
            c_tab = c_tab[:, :half] ^ cfg.vmul(rb, c_tab[:, :half] ^ c_tab[:, half:])
    final_a = a_tab[:, 0] if proving else None
    return running, bound, final_a


def gkr_distance_preserving(desc, d: int, params: GkrParams, a_matrix,
                            session: Session, stage: str = "gkr"):
    """Run the reduction with enough repetitions for the column-distance
    preservation contract; d only parameterizes the caller's analysis."""
    return gkr_run(desc, params, a_matrix, session, stage)


def formula_repetitions(d: int, ncol: int, m: int) -> int:
    """Repetition count 8 * d * ncol * m used by the instance reducer."""
    return 8 * d * ncol * max(1, m)
