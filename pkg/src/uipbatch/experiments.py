"""Quantitative experiments behind the CLI subcommands and the acceptance
suite: Monte-Carlo soundness runs, oracle cross-checks, scaling sweeps.

Each experiment returns plain dicts so the CLI can render them as rows
and tests can assert on them directly.
"""

from __future__ import annotations

import math
import random
import time

import numpy as np

from . import baseuip as bu
from . import batch as batch_mod
from . import circuit as cir
from . import dcrr as dcrr_mod
from . import delegate as dg
from . import gkr as gkr_mod
from . import mle
from . import permute
from . import session as ses
from .field import get_field

_U64 = np.uint64


# ---------------------------------------------------------------------------
# driver sweeps


def toy_params(k: int, lam: int, cfg, d=None, gkr_reps=2, dcrr_reps=4):
    if d is None:
        # smallest distance that keeps the instance ladder halving for the
        # two-round toy base: ceil(4 lam M / d) <= g/2 needs d >= 8 lam ell
        d = 8 * lam * 2
    return batch_mod.BatchParams(
        k=k, lam=lam, field=cfg, d=d, gkr_reps=gkr_reps, dcrr_reps=dcrr_reps
    )


def completeness_sweep(k_list, lam: int, field_bits: int, seeds: int,
                       base_seed: int = 1, d=None, gkr_reps=2, dcrr_reps=4):
    """Accept counts for all-true toy batches across k values."""
    cfg = get_field(field_bits)
    spec = bu.toy_language()
    out = []
    for k in k_list:
        accepts = 0
        t0 = time.time()
        for s in range(seeds):
            rnd = random.Random(base_seed * 1009 + 37 * k + s)
            xs = [bu.toy_member(rnd) for _ in range(k)]
            params = toy_params(k, lam, cfg, d, gkr_reps, dcrr_reps)
            sess = ses.Session(cfg, seed=base_seed * 65537 + k * 257 + s)
            res = batch_mod.batch_run(spec, xs, params, sess)
            accepts += int(res.accepted)
        out.append({
            "k": k, "trials": seeds, "accepts": accepts,
            "seconds": time.time() - t0, "d": params.d,
        })
    return out


def prescribed_reject_sweep(k: int, lam: int, field_bits: int, seeds: int,
                            base_seed: int = 2, d=None, false_count: int = 1,
                            gkr_reps=2, dcrr_reps=4):
    """Reject counts for batches with false statements under the honest
    prescribed prover."""
    cfg = get_field(field_bits)
    spec = bu.toy_language()
    rejects = 0
    for s in range(seeds):
        rnd = random.Random(base_seed * 2003 + s)
        xs = [bu.toy_member(rnd) for _ in range(k)]
        for i in range(false_count):
            xs[rnd.randrange(k)] = bu.toy_nonmember(rnd)
        params = toy_params(k, lam, cfg, d, gkr_reps, dcrr_reps)
        sess = ses.Session(cfg, seed=base_seed * 99991 + s)
        res = batch_mod.batch_run(spec, xs, params, sess)
        rejects += int(not res.accepted)
    return {"k": k, "trials": seeds, "rejects": rejects}


def soundness_mc(adversary: str, trials: int, k: int, lam: int,
                 field_bits: int, base_seed: int = 3, d=None,
                 gkr_reps=2, dcrr_reps=4):
    """Acceptance counts for single-deviation strategies on all-true
    batches, grouped by the first deviation round."""
    cfg = get_field(field_bits)
    spec = bu.toy_language()
    accepts = 0
    by_round: dict = {}
    for t in range(trials):
        rnd = random.Random(base_seed * 100003 + t)
        xs = [bu.toy_member(rnd) for _ in range(k)]
        if adversary == "wrong-instance-swap":
            while xs[1] == xs[0]:
                xs[1] = bu.toy_member(rnd)
            adv = ses.WrongInstanceSwap(0, 1)
        elif adversary == "flip-bit":
            adv = ses.FlipBit(round=t % 8, offset=t)
        elif adversary == "substitute":
            adv = ses.SubstituteMessage(round=t % 8, payload=(t + 1, 5, 9))
        elif adversary == "checksum-offset":
            adv = ses.ChecksumOffset(round=t % spec.rounds, delta=t + 1)
        else:
            raise ValueError(adversary)
        params = toy_params(k, lam, cfg, d, gkr_reps, dcrr_reps)
        sess = ses.Session(cfg, seed=base_seed * 7919 + t, adversary=adv)
        res = batch_mod.batch_run(spec, xs, params, sess)
        dev = sess.first_deviation if sess.first_deviation is not None else -1
        cell = by_round.setdefault(dev, [0, 0])
        cell[0] += 1
        cell[1] += int(res.accepted)
        accepts += int(res.accepted)
    eps_bound = 2 * math.log2(max(2, k)) * (spec.epsilon + 2.0 ** (-lam))
    return {
        "adversary": adversary, "trials": trials, "accepts": accepts,
        "by_round": {r: tuple(v) for r, v in sorted(by_round.items())},
        "epsilon_bound": eps_bound,
    }


def bench_comm(k_list, lam: int, field_bits: int, d: int, base_seed: int = 4,
               gkr_reps=2, dcrr_reps=4):
    """Total communication per k plus the exact per-round distance-phase
    payload check."""
    cfg = get_field(field_bits)
    spec = bu.toy_language()
    rows = []
    totals = {}
    for k in k_list:
        rnd = random.Random(base_seed + k)
        xs = [bu.toy_member(rnd) for _ in range(k)]
        params = batch_mod.BatchParams(
            k=k, lam=lam, field=cfg, d=d, gkr_reps=gkr_reps,
            dcrr_reps=dcrr_reps,
        )
        sess = ses.Session(cfg, seed=base_seed + k)
        res = batch_mod.batch_run(spec, xs, params, sess)
        total = sess.meter.total_bits()
        totals[k] = total
        payload_exact = True
        for j in range(1, params.rho + 1):
            m_rows = cir._pow2ceil(_active_at(res, j - 1) * spec.rounds)
            tck = mle.cksum_count(params.d, m_rows.bit_length() - 1, lam)
            expect = tck * spec.a_bits * cfg.width
            got = [
                bits for (st, role, _, bits) in sess.meter.rows
                if st.startswith("dist%d.cksum" % j) and role == ses.PROVER
            ]
            if not got or any(b != expect for b in got):
                payload_exact = False
        rows.append({
            "k": k, "total_bits": total, "accepted": res.accepted,
            "payload_exact": payload_exact, "stages": sess.meter.by_stage(),
        })
    ks = sorted(totals)
    ratio = totals[ks[-1]] / totals[ks[0]] if len(ks) > 1 else 1.0
    fitted_c = max(totals[k] / (math.log2(k) ** 2) for k in ks)
    return {"rows": rows, "ratio": ratio, "fitted_c": fitted_c}


def _active_at(res: batch_mod.BatchResult, idx: int) -> int:
    return res.ladder[idx] if idx < len(res.ladder) else 1


# ---------------------------------------------------------------------------
# oracle experiments


def kernel_distance_mc(trials: int = 100, base_seed: int = 5):
    """Random weight-bounded kernel checks at the small-field dials."""
    cfg = get_field(4)
    rnd = random.Random(base_seed)
    m, d, lam = 3, 1, 4
    t_pts = mle.cksum_count(d, m, lam)
    hits = 0
    for _ in range(trials):
        pts = np.array(
            [[rnd.randrange(16) for _ in range(m)] for _ in range(t_pts)],
            dtype=_U64,
        )
        if mle.pval_kernel_distance(pts, d, cfg):
            hits += 1
    return {"trials": trials, "hits": hits, "t_points": t_pts}


def cksum_decoding_mc(keys: int = 16, base_seed: int = 6):
    """Exhaustive pairwise decoding check at m=2, d=1 over GF(2^4): no two
    distinct tables within distance 1 of a fixed center may collide."""
    cfg = get_field(4)
    rnd = random.Random(base_seed)
    tck = mle.cksum_count(1, 2, 4)
    center = np.array([rnd.randrange(16) for _ in range(4)], dtype=_U64)
    ball = []
    for s in range(4):
        for delta in range(1, 16):
            v = center.copy()
            v[s] ^= _U64(delta)
            ball.append(v)
    ball.append(center)
    good = 0
    for _ in range(keys):
        pts = np.array(
            [[rnd.randrange(16) for _ in range(2)] for _ in range(tck)],
            dtype=_U64,
        )
        key = mle.ChecksumKey(pts, cfg)
        sums = [tuple(int(x) for x in mle.cksum(key, v[:, None])[:, 0]) for v in ball]
        if len(set(sums)) == len(sums):
            good += 1
    return {"keys": keys, "unambiguous": good}


def fold_collapse_mc(trials: int = 1000, base_seed: int = 7):
    """Frequency over the combination scalar of the folded table landing
    closer than max(d0, d1)/2 to a rank-one claim kernel.

    With a one-dimensional kernel span{b}, the exact distance of v is
    n minus the best per-scalar coordinate agreement, computed directly.
    """
    cfg = get_field(16)
    rnd = random.Random(base_seed)
    n = 4
    while True:
        pts = np.array(
            [[rnd.randrange(cfg.order) for _ in range(2)] for _ in range(3)],
            dtype=_U64,
        )
        kernel = mle.PvalClaim(pts, np.zeros(3, dtype=_U64), cfg)
        _, basis = mle.pval_solution_set(kernel)
        if basis.shape[0] == 1:
            break
    b = basis[0]

    def dist(v):
        base_good = 0
        counts: dict = {}
        for i in range(n):
            bi, vi = int(b[i]), int(v[i])
            if bi == 0:
                base_good += int(vi == 0)
            else:
                c = cfg.mul_int(vi, cfg.inv_int(bi))
                counts[c] = counts.get(c, 0) + 1
        best = max(counts.values(), default=0)
        return n - base_good - best

    collapses = 0
    for _ in range(trials):
        a0 = np.array([rnd.randrange(cfg.order) for _ in range(n)], dtype=_U64)
        a1 = np.array([rnd.randrange(cfg.order) for _ in range(n)], dtype=_U64)
        d0, d1 = dist(a0), dist(a1)
        c = rnd.randrange(1, cfg.order)
        if dist(a0 ^ cfg.vmul_const(a1, c)) < max(d0, d1) / 2:
            collapses += 1
    bound = 1.0 / (cfg.order - 1)
    sigma = math.sqrt(bound * (1 - bound) / trials)
    return {
        "trials": trials, "collapses": collapses,
        "bound": bound, "three_sigma": 3 * sigma,
    }


def _random_planted_circuit(rnd, cfg, n_inputs: int, size: int):
    """Random DAG circuit rigged so its output is exactly 1 on a chosen
    input (half the time) or generic (other half)."""
    gates = []
    total = n_inputs
    for _ in range(size):
        gates.append((rnd.randrange(2), rnd.randrange(total), rnd.randrange(total)))
        total += 1
    vals = [rnd.randrange(2) for _ in range(n_inputs)]
    desc = cir.custom_predicate(n_inputs, gates, out=total - 1)
    if rnd.random() < 0.5:
        # plant: out' = 1 + (f(a) + f_val) so the chosen input satisfies it
        fv = cir.reference_eval(desc, np.array(
            vals + [0] * ((cir._pow2ceil(n_inputs)) - n_inputs), dtype=_U64
        ), cfg)
        gates2 = list(gates)
        # wire indices: constants are not available in CUSTOM, emulate with
        # an input extension: append f_val and 1 as extra inputs
        n2 = n_inputs + 2
        shift = 2
        gates2 = [
            (k, a + shift if a >= n_inputs else a,
             b + shift if b >= n_inputs else b)
            for (k, a, b) in gates
        ]
        total2 = n2 + len(gates2)
        gates2.append((cir.ADD, total2 - 1, n_inputs))      # f + f_val
        gates2.append((cir.ADD, total2, n_inputs + 1))      # + 1
        desc = cir.custom_predicate(n2, gates2, out=total2 + 1)
        vals = vals + [fv, 1]
        n_inputs = n2
    return desc, np.array(vals, dtype=_U64), n_inputs


def gkr_iff_suite(trials: int = 100, base_seed: int = 8, field_bits: int = 64):
    """Honest runs on random circuits: the output claim holds exactly when
    the circuit accepts."""
    cfg = get_field(field_bits)
    rnd = random.Random(base_seed)
    good = 0
    for t in range(trials):
        n = rnd.randrange(2, 9)
        desc, vals, n = _random_planted_circuit(rnd, cfg, n, rnd.randrange(2, 24))
        exp = cir.expand(desc, cfg)
        full = np.zeros(exp.a_size, dtype=_U64)
        full[: vals.size] = vals
        phi = exp.circuit.output(exp.assemble(full), cfg)
        sess = ses.Session(cfg, seed=base_seed * 31 + t)
        out = gkr_mod.gkr_run(desc, gkr_mod.GkrParams(1, cfg), full, sess)
        if out.verdict != gkr_mod.CLAIM:
            continue
        sat = all(
            mle.mle_eval(full, out.claim.points[i], cfg)
            == int(out.claim.values[i])
            for i in range(out.claim.count)
        )
        if sat == (phi == 1):
            good += 1
    return {"trials": trials, "iff_holds": good}


def gkr_adversarial_suite(trials: int = 200, base_seed: int = 9,
                          field_bits: int = 64):
    """Deviating provers: count {no reject and claim satisfied} events."""
    cfg = get_field(field_bits)
    rnd = random.Random(base_seed)
    n = 8
    gates = []
    total = n
    for _ in range(56):
        gates.append((rnd.randrange(2), rnd.randrange(total), rnd.randrange(total)))
        total += 1
    desc = cir.custom_predicate(n, gates, out=total - 1)
    exp = cir.expand(desc, cfg)
    bad_events = 0
    rejects = 0
    for t in range(trials):
        full = np.zeros(exp.a_size, dtype=_U64)
        full[:n] = [rnd.randrange(2) for _ in range(n)]
        adv = ses.FlipBit(round=t % 10, offset=t * 13)
        sess = ses.Session(cfg, seed=base_seed * 131 + t, adversary=adv)
        out = gkr_mod.gkr_run(desc, gkr_mod.GkrParams(1, cfg), full, sess)
        if out.verdict == gkr_mod.REJECT:
            rejects += 1
            continue
        if sess.first_deviation is None:
            continue
        sat = all(
            mle.mle_eval(full, out.claim.points[i], cfg)
            == int(out.claim.values[i])
            for i in range(out.claim.count)
        )
        if sat:
            bad_events += 1
    return {"trials": trials, "bad_events": bad_events, "rejects": rejects}


def ball_pval_intersection_d1(a: np.ndarray, claim: mle.PvalClaim):
    """All members of the distance-1 column ball around `a` that satisfy
    the claim, found analytically by linearity of the extension.

    Returns a list of (row, col, delta) with delta 0 meaning `a` itself.
    """
    cfg = claim.cfg
    rows, cols = a.shape
    flat = a.reshape(-1)
    base = np.array(
        [mle.mle_eval(flat, p, cfg) for p in claim.points], dtype=_U64
    )
    out = []
    if np.array_equal(base, claim.values):
        out.append((0, 0, 0))
    e = claim.system()  # (T, rows*cols) Lagrange weights
    need = base ^ claim.values
    for s in range(rows * cols):
        col_w = e[:, s]
        # delta must satisfy delta * chi_s(j_t) = need_t for every t
        delta = None
        ok = True
        for t in range(claim.count):
            w = int(col_w[t])
            nv = int(need[t])
            if w == 0:
                if nv != 0:
                    ok = False
                    break
                continue
            cand = cfg.mul_int(nv, cfg.inv_int(w))
            if delta is None:
                delta = cand
            elif delta != cand:
                ok = False
                break
        if ok and delta not in (None, 0):
            out.append((s // cols, s % cols, delta))
    return out


def distance_preservation_mc(trials: int = 100, base_seed: int = 10,
                             field_bits: int = 16):
    """Tiny-instance ball analysis after the claim reduction.

    Case member: the pinned matrix stays the unique ball member of the
    output claim.  Case far: the ball misses the output claim entirely.
    """
    cfg = get_field(field_bits)
    rnd = random.Random(base_seed)
    m, lncol, d = 2, 0, 1
    rows, cols = 1 << m, 1 << lncol
    t_reps = gkr_mod.formula_repetitions(d, cols, m)
    member_ok = 0
    far_ok = 0
    for t in range(trials):
        a_star = np.array(
            [[rnd.randrange(cfg.order)] for _ in range(rows)], dtype=_U64
        )
        bool_pts = np.array(
            [[(s >> 1) & 1, s & 1] for s in range(rows)], dtype=_U64
        )
        pin = mle.claim_from_table(a_star.reshape(-1), bool_pts, cfg)
        phi = cir.build_permuted_pval(
            list(range(rows)), pin, b"ball%d" % t, m, lncol
        )
        # member case: a = a_star
        sess = ses.Session(cfg, seed=base_seed * 17 + 2 * t)
        out = gkr_mod.gkr_distance_preserving(
            phi, d, gkr_mod.GkrParams(t_reps, cfg), a_star.reshape(-1), sess
        )
        if out.verdict == gkr_mod.CLAIM:
            hits = ball_pval_intersection_d1(a_star, out.claim)
            if hits == [(0, 0, 0)]:
                member_ok += 1
        # far case: a differs from a_star in 2 entries; nothing in the
        # distance-1 ball of a is accepted by phi
        a_far = a_star.copy()
        for r in rnd.sample(range(rows), 2):
            a_far[r, 0] ^= _U64(rnd.randrange(1, cfg.order))
        sess = ses.Session(cfg, seed=base_seed * 17 + 2 * t + 1)
        out = gkr_mod.gkr_distance_preserving(
            phi, d, gkr_mod.GkrParams(t_reps, cfg), a_far.reshape(-1), sess
        )
        if out.verdict == gkr_mod.CLAIM:
            hits = ball_pval_intersection_d1(a_far, out.claim)
            if not hits:
                far_ok += 1
    return {"trials": trials, "member_ok": member_ok, "far_ok": far_ok,
            "gkr_reps": t_reps}


def dcrr_mc(mode: str, trials: int, m: int = 8, d: int = 64, lam: int = 2,
            field_bits: int = 16, claim_points: int = 64, reps: int = 8,
            base_seed: int = 11):
    """Honest-accept or far-reject frequencies for the fold pipeline."""
    cfg = get_field(field_bits)
    ok = 0
    for t in range(trials):
        rnd = random.Random(base_seed * 55441 + t)
        rows = 1 << m
        w = np.array(
            [[rnd.randrange(cfg.order)] for _ in range(rows)], dtype=_U64
        )
        pts = np.array(
            [[rnd.randrange(cfg.order) for _ in range(m)]
             for _ in range(claim_points)], dtype=_U64,
        )
        claim = mle.claim_from_table(w.reshape(-1), pts, cfg)
        sess = ses.Session(cfg, seed=base_seed * 7919 + t)
        res = dcrr_mod.dcrr_run(
            claim, w, d, lam, sess, dcrr_mod.DcrrConfig(reps=reps)
        )
        if not res.accepted:
            continue
        if mode == "honest":
            if cir.reference_eval(res.phi_desc, w[res.q_rows], cfg) == 1:
                ok += 1
        else:
            a = w.copy()
            for r in rnd.sample(range(rows), min(d, rows)):
                a[r, 0] ^= _U64(rnd.randrange(1, cfg.order))
            if cir.reference_eval(res.phi_desc, a[res.q_rows], cfg) != 1:
                ok += 1
    return {"mode": mode, "trials": trials, "ok": ok,
            "soundness_bound": m * 2.0 ** (4 - lam)}


def delegate_mc(trials: int = 50, tamper: bool = False, k: int = 4,
                gamma: int = 2, lam: int = 4, field_bits: int = 64,
                base_seed: int = 12):
    cfg = get_field(field_bits)
    tm = dg.counter_tm()
    ok = 0
    comm = {}
    for t in range(trials):
        rnd = random.Random(base_seed * 3571 + t)
        c0 = dg.Configuration(
            rnd.randrange(tm.n_states), rnd.randrange(tm.tape_len),
            tuple(rnd.randrange(2) for _ in range(tm.tape_len)),
        )
        w_end = dg.run(tm, c0, k ** gamma)
        adv = ses.FlipBit(round=0, offset=5 + t % 13) if tamper else ses.Honest()
        sess = ses.Session(cfg, seed=base_seed * 911 + t, adversary=adv)
        accepted, info = dg.ladder_run(
            tm, c0, w_end, dg.LadderParams(k, gamma, lam), sess
        )
        if tamper:
            ok += int(not accepted)
        else:
            ok += int(accepted)
        comm = info["comm_bits"]
    return {"trials": trials, "ok": ok, "tamper": tamper, "comm_bits": comm}


def permutation_uniformity(m: int = 3, samples: int = 24000,
                           base_seed: int = 13):
    """Chi-squared statistic of pi(0) over uniform-sampler draws."""
    counts = [0] * (1 << m)
    from .coins import CoinSource

    src = CoinSource(base_seed)
    for i in range(samples):
        pi = permute.sample(m, 2, 0.01, permute.UNIFORM, src.child("u%d" % i))
        counts[pi.apply(0)] += 1
    expect = samples / (1 << m)
    chi2 = sum((c - expect) ** 2 / expect for c in counts)
    return {"samples": samples, "chi2": chi2, "df": (1 << m) - 1}


def intersection_mc(m: int = 12, d: int = 16, eps: float = 0.5,
                    trials: int = 1000, base_seed: int = 14):
    freq = permute.intersection_test(
        m, d, eps, 0.0, trials, base_seed, permute.UNIFORM
    )
    bound = math.exp(-eps * d / 6)
    sigma = math.sqrt(max(bound * (1 - bound), 1e-9) / trials)
    return {"trials": trials, "freq": freq, "bound": bound,
            "three_sigma": 3 * sigma}
