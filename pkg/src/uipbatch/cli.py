"""Reproducible experiment runner.

Every run echoes its fully-resolved configuration as the first output
record and emits rows in a fixed schema, so identical configurations
produce byte-identical output files.

Exit codes: 0 on completion, 1 when a single-run protocol rejects,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import random
import sys

import numpy as np

from . import baseuip as bu
from . import batch as batch_mod
from . import circuit as cir
from . import dcrr as dcrr_mod
from . import delegate as dg
from . import mle
from . import permute
from . import session as ses
from .coins import CoinSource, SEED_ENV
from .field import get_field

COLUMNS = (
    "experiment", "k", "lambda", "field_bits", "d", "stage", "role",
    "round", "bytes", "outcome", "trials", "accepts",
)

ADVERSARIES = {
    "honest": lambda a: ses.Honest(),
    "flip-bit": lambda a: ses.FlipBit(round=a.adv_round, offset=a.adv_offset),
    "substitute": lambda a: ses.SubstituteMessage(
        round=a.adv_round, payload=(a.adv_offset + 1, 7, 13)
    ),
    "checksum-offset": lambda a: ses.ChecksumOffset(
        round=a.adv_round, delta=a.adv_offset + 1
    ),
    "wrong-instance-swap": lambda a: ses.WrongInstanceSwap(0, 1),
}


class Emitter:
    def __init__(self, fmt: str, path):
        self.fmt = fmt
        self.path = path
        self.rows = []
        self.config = {}

    def echo_config(self, config: dict):
        self.config = dict(sorted(config.items()))
        self.row(experiment="config", outcome=json.dumps(self.config, sort_keys=True))

    def row(self, **kw):
        base = {c: "" for c in COLUMNS}
        base.update({k: v for k, v in kw.items() if k in base})
        self.rows.append(base)

    def flush(self):
        if self.fmt == "json":
            text = json.dumps(
                {"config": self.config, "rows": self.rows}, indent=1,
                sort_keys=True,
            ) + "\n"
        else:
            lines = [",".join(COLUMNS)]
            for r in self.rows:
                lines.append(",".join(_csv_cell(r[c]) for c in COLUMNS))
            text = "\n".join(lines) + "\n"
        if self.path:
            with open(self.path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _csv_cell(v) -> str:
    s = str(v)
    if "," in s or '"' in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def _meter_rows(em, meter, **common):
    for stage, role, rnd_i, bits in meter.rows:
        em.row(
            stage=stage, role="V" if role == ses.VERIFIER else "P",
            round=rnd_i, bytes=(bits + 7) // 8, **common,
        )


def _toy_batch(args, rnd):
    spec = bu.toy_language()
    xs = [bu.toy_member(rnd) for _ in range(args.k)]
    for i in range(min(args.false_count, args.k)):
        xs[i] = bu.toy_nonmember(rnd)
    return spec, xs


def cmd_batch_run(args, em) -> int:
    cfg = get_field(args.field_bits)
    rnd = random.Random(args.seed)
    spec, xs = _toy_batch(args, rnd)
    params = batch_mod.BatchParams(
        k=args.k, lam=args.lam, field=cfg, d=args.d,
        gkr_reps=args.gkr_reps, dcrr_reps=args.dcrr_reps,
    )
    s = ses.Session(cfg, seed=args.seed, adversary=ADVERSARIES[args.adversary](args))
    res = batch_mod.batch_run(spec, xs, params, s)
    common = dict(
        experiment="batch-run", k=args.k, **{"lambda": args.lam},
        field_bits=args.field_bits, d=params.d,
    )
    _meter_rows(em, s.meter, **common)
    em.row(outcome="accept" if res.accepted else "reject:%s" % res.stage,
           trials=1, accepts=int(res.accepted), **common)
    return 0 if res.accepted else 1


def cmd_soundness_mc(args, em) -> int:
    cfg = get_field(args.field_bits)
    accepts = 0
    by_round: dict = {}
    params_echo = None
    for t in range(args.trials):
        rnd = random.Random(args.seed * 100003 + t)
        spec, xs = _toy_batch(args, rnd)
        if args.adversary == "wrong-instance-swap":
            while xs[0] == xs[1]:
                xs[1] = bu.toy_member(rnd)
        a = argparse.Namespace(**vars(args))
        a.adv_round = t % 6
        a.adv_offset = t
        adv = ADVERSARIES[args.adversary](a)
        params = batch_mod.BatchParams(
            k=args.k, lam=args.lam, field=cfg, d=args.d,
            gkr_reps=args.gkr_reps, dcrr_reps=args.dcrr_reps,
        )
        s = ses.Session(cfg, seed=args.seed * 7919 + t, adversary=adv)
        res = batch_mod.batch_run(spec, xs, params, s)
        params_echo = params
        dev = s.first_deviation if s.first_deviation is not None else -1
        cell = by_round.setdefault(dev, [0, 0])
        cell[0] += 1
        cell[1] += int(res.accepted)
        accepts += int(res.accepted)
    common = dict(
        experiment="soundness-mc", k=args.k, **{"lambda": args.lam},
        field_bits=args.field_bits, d=params_echo.d,
    )
    for dev in sorted(by_round):
        trials, acc = by_round[dev]
        em.row(stage="deviation-round-%d" % dev, trials=trials, accepts=acc,
               **common)
    em.row(outcome=args.adversary, trials=args.trials, accepts=accepts,
           **common)
    return 0


def cmd_bench_comm(args, em) -> int:
    cfg = get_field(args.field_bits)
    totals = {}
    for k in args.k_list:
        rnd = random.Random(args.seed + k)
        spec = bu.toy_language()
        xs = [bu.toy_member(rnd) for _ in range(k)]
        params = batch_mod.BatchParams(
            k=k, lam=args.lam, field=cfg, d=args.d,
            gkr_reps=args.gkr_reps, dcrr_reps=args.dcrr_reps,
        )
        s = ses.Session(cfg, seed=args.seed + k)
        res = batch_mod.batch_run(spec, xs, params, s)
        common = dict(
            experiment="bench-comm", k=k, **{"lambda": args.lam},
            field_bits=args.field_bits, d=params.d,
        )
        _meter_rows(em, s.meter, **common)
        total = s.meter.total_bits()
        totals[k] = total
        em.row(stage="total", bytes=(total + 7) // 8,
               outcome="accept" if res.accepted else "reject", trials=1,
               accepts=int(res.accepted), **common)
        tck = mle.cksum_count(
            params.d, (cir._pow2ceil(k * spec.rounds)).bit_length() - 1,
            args.lam,
        )
        expect = tck * spec.a_bits * cfg.width
        got = [
            bits for (st, role, _, bits) in s.meter.rows
            if st.startswith("dist1.cksum") and role == ses.PROVER
        ]
        em.row(stage="dist-payload-check",
               outcome="exact" if all(b == expect for b in got) else "mismatch",
               bytes=(expect + 7) // 8, **common)
    ks = sorted(totals)
    if len(ks) >= 2:
        ratio = totals[ks[-1]] / totals[ks[0]]
        fitted = max(totals[k] / (math.log2(k) ** 2) for k in ks)
        em.row(experiment="bench-comm", stage="ratio",
               outcome="%.3f" % ratio, bytes=int(fitted))
    return 0


def cmd_dcrr_run(args, em) -> int:
    cfg = get_field(args.field_bits)
    accepts = 0
    final_rejects = 0
    for t in range(args.trials):
        rnd = random.Random(args.seed * 55441 + t)
        rows = 1 << args.m
        w = np.array(
            [[rnd.randrange(cfg.order)] for _ in range(rows)], dtype=np.uint64
        )
        pts = np.array(
            [[rnd.randrange(cfg.order) for _ in range(args.m)]
             for _ in range(args.claim_points)],
            dtype=np.uint64,
        )
        claim = mle.claim_from_table(w.reshape(-1), pts, cfg)
        if args.mode == "far":
            a = w.copy()
            for r in rnd.sample(range(rows), min(args.d, rows)):
                a[r, 0] ^= np.uint64(rnd.randrange(1, cfg.order))
        else:
            a = w
        s = ses.Session(cfg, seed=args.seed * 7919 + t)
        res = dcrr_mod.dcrr_run(
            claim, w, args.d, args.lam, s,
            dcrr_mod.DcrrConfig(reps=args.dcrr_reps),
        )
        if not res.accepted:
            continue
        accepts += 1
        phi_val = cir.reference_eval(res.phi_desc, a[res.q_rows], cfg)
        if phi_val != 1:
            final_rejects += 1
    em.row(
        experiment="dcrr-run", k=args.claim_points, **{"lambda": args.lam},
        field_bits=args.field_bits, d=args.d, stage=args.mode,
        trials=args.trials,
        accepts=(accepts - final_rejects) if args.mode != "far" else final_rejects,
        outcome="%d accepted, %d final-rejects" % (accepts, final_rejects),
    )
    if args.trials == 1 and args.mode == "honest":
        return 0 if accepts == 1 and final_rejects == 0 else 1
    return 0


def cmd_delegate_run(args, em) -> int:
    cfg = get_field(args.field_bits)
    rnd = random.Random(args.seed)
    tm = dg.counter_tm()
    c0 = dg.Configuration(0, 0, tuple(rnd.randrange(2) for _ in range(tm.tape_len)))
    steps = args.k ** args.gamma
    w_end = dg.run(tm, c0, steps)
    adv = ses.Honest() if not args.tamper else ses.FlipBit(round=0, offset=5)
    s = ses.Session(cfg, seed=args.seed, adversary=adv)
    ok, info = dg.ladder_run(
        tm, c0, w_end, dg.LadderParams(args.k, args.gamma, args.lam), s,
        batch_kwargs={"d": args.d or 64, "gkr_reps": args.gkr_reps,
                      "dcrr_reps": args.dcrr_reps},
    )
    common = dict(
        experiment="delegate-run", k=args.k, **{"lambda": args.lam},
        field_bits=args.field_bits, d=args.d or 64,
    )
    _meter_rows(em, s.meter, **common)
    em.row(stage="gamma-%d" % args.gamma,
           outcome="accept" if ok else "reject", trials=1,
           accepts=int(ok), **common)
    return 0 if ok else 1


def cmd_oracle_suite(args, em) -> int:
    rnd = random.Random(args.seed)
    f4 = get_field(4)
    # kernel distance: T = 2d(m+lam)+lam random points
    m, d, lam, t_pts = 3, 1, 4, 18
    hits = 0
    for _ in range(args.trials):
        pts = np.array(
            [[rnd.randrange(16) for _ in range(m)] for _ in range(t_pts)],
            dtype=np.uint64,
        )
        if mle.pval_kernel_distance(pts, d, f4):
            hits += 1
    em.row(experiment="oracle-suite", stage="kernel-distance",
           field_bits=4, d=d, **{"lambda": lam},
           trials=args.trials, accepts=hits,
           outcome="%d/%d" % (hits, args.trials))

    # checksum unique decoding, exhaustive at m=2, d=1
    good_keys = 0
    nkeys = 16
    tck = mle.cksum_count(1, 2, 4)
    for _ in range(nkeys):
        pts = np.array(
            [[rnd.randrange(16) for _ in range(2)] for _ in range(tck)],
            dtype=np.uint64,
        )
        if mle.pval_kernel_distance(pts, 1, f4):
            good_keys += 1
    em.row(experiment="oracle-suite", stage="cksum-decoding", field_bits=4,
           d=1, **{"lambda": 4}, trials=nkeys, accepts=good_keys,
           outcome="%d/%d" % (good_keys, nkeys))

    # fold distance collapse frequency over the combination scalar
    f16 = get_field(16)
    base_pts = np.array(
        [[rnd.randrange(f16.order) for _ in range(2)] for _ in range(2)],
        dtype=np.uint64,
    )
    kernel = mle.PvalClaim(base_pts, np.zeros(2, dtype=np.uint64), f16)
    part, basis = mle.pval_solution_set(kernel)
    members = []
    counters = [0] * basis.shape[0]
    cur = part.copy()
    for _ in range(min(256, f16.order ** basis.shape[0])):
        members.append(cur.copy())
        for i in range(len(counters)):
            counters[i] += 1
            if counters[i] < f16.order:
                cur = cur ^ f16.vmul_const(basis[i], 1)
                break
            counters[i] = 0
    collapses = 0
    trials = args.trials
    mem = np.stack(members)
    for _ in range(trials):
        a0 = np.array([rnd.randrange(f16.order) for _ in range(4)], dtype=np.uint64)
        a1 = np.array([rnd.randrange(f16.order) for _ in range(4)], dtype=np.uint64)
        d0 = min(int((m_ != a0).sum()) for m_ in mem)
        d1 = min(int((m_ != a1).sum()) for m_ in mem)
        c = rnd.randrange(1, f16.order)
        comb = a0 ^ f16.vmul_const(a1, c)
        dc = min(int((m_ != comb).sum()) for m_ in mem)
        if dc < max(d0, d1) / 2:
            collapses += 1
    em.row(experiment="oracle-suite", stage="fold-collapse", field_bits=16,
           trials=trials, accepts=collapses,
           outcome="%d/%d" % (collapses, trials))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uipbatch",
        description="batch unambiguous interactive proof experiments",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--field-bits", type=int, default=64,
                        choices=(4, 16, 64, 128))
        sp.add_argument("--lambda", dest="lam", type=int, default=8)
        sp.add_argument("--k", type=int, default=4)
        sp.add_argument("--d", type=int, default=None,
                        help="distance parameter override")
        sp.add_argument("--gkr-reps", type=int, default=2)
        sp.add_argument("--dcrr-reps", type=int, default=4)
        sp.add_argument("--trials", type=int, default=1)
        sp.add_argument("--adversary", default="honest",
                        choices=sorted(ADVERSARIES))
        sp.add_argument("--adv-round", type=int, default=0)
        sp.add_argument("--adv-offset", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", default="csv", choices=("csv", "json"))

    sp = sub.add_parser("batch-run", help="one driver run on a toy batch")
    common(sp)
    sp.add_argument("--false-count", type=int, default=0)
    sp.set_defaults(fn=cmd_batch_run)

    sp = sub.add_parser("soundness-mc", help="deviation Monte-Carlo")
    common(sp)
    sp.add_argument("--false-count", type=int, default=0)
    sp.set_defaults(fn=cmd_soundness_mc)

    sp = sub.add_parser("bench-comm", help="communication scaling")
    common(sp)
    sp.add_argument("--k-list", type=lambda s: [int(x) for x in s.split(",")],
                    default=[4, 16, 64])
    sp.set_defaults(fn=cmd_bench_comm)

    sp = sub.add_parser("dcrr-run", help="claim-reduction runs")
    common(sp)
    sp.add_argument("--m", type=int, default=8)
    sp.add_argument("--claim-points", type=int, default=64)
    sp.add_argument("--mode", default="honest", choices=("honest", "far"))
    sp.set_defaults(fn=cmd_dcrr_run)

    sp = sub.add_parser("delegate-run", help="step-delegation ladder")
    common(sp)
    sp.add_argument("--gamma", type=int, default=2)
    sp.add_argument("--tamper", action="store_true")
    sp.set_defaults(fn=cmd_delegate_run)

    sp = sub.add_parser("oracle-suite", help="brute-force oracle suite")
    common(sp)
    sp.set_defaults(fn=cmd_oracle_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    em = Emitter(args.format, args.out)
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("fn",) and not callable(v)
    }
    config["seed_env"] = SEED_ENV
    em.echo_config(config)
    try:
        code = args.fn(args, em)
    except (batch_mod.ParameterError, bu.SpecError, ValueError) as exc:
        em.row(experiment=args.cmd, outcome="config-error: %s" % exc)
        em.flush()
        return 2
    em.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
