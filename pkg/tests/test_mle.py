import math

import numpy as np
import pytest

from uipbatch import linalg, mle
from uipbatch.field import get_field

U = np.uint64


def _rand_table(rnd, cfg, n):
    return np.array([rnd.randrange(cfg.order) for _ in range(n)], dtype=U)


def test_mle_agrees_on_cube(f16, rnd):
    table = _rand_table(rnd, f16, 8)
    for s in range(8):
        pt = [(s >> 2) & 1, (s >> 1) & 1, s & 1]
        assert mle.mle_eval(table, pt, f16) == int(table[s])


def test_mle_one_variable_identity(f16, rnd):
    a0, a1 = rnd.randrange(f16.order), rnd.randrange(f16.order)
    t = rnd.randrange(f16.order)
    got = mle.mle_eval(np.array([a0, a1], dtype=U), [t], f16)
    assert got == a0 ^ f16.mul_int(t, a0 ^ a1)


def test_mle_lagrange_sum_oracle(f4, rnd):
    table = _rand_table(rnd, f4, 4)
    pt = [rnd.randrange(16), rnd.randrange(16)]
    chi = mle.chi_weights(pt, f4)
    expect = 0
    for s in range(4):
        expect ^= f4.mul_int(int(chi[s]), int(table[s]))
    assert mle.mle_eval(table, pt, f4) == expect


def test_mle_linearity(f16, rnd):
    a = _rand_table(rnd, f16, 16)
    b = _rand_table(rnd, f16, 16)
    pt = [rnd.randrange(f16.order) for _ in range(4)]
    assert (
        mle.mle_eval(a ^ b, pt, f16)
        == mle.mle_eval(a, pt, f16) ^ mle.mle_eval(b, pt, f16)
    )


def test_split_identity(f16, rnd):
    # 500 random points: f(x1, xs) = (1+x1) f0(xs) + x1 f1(xs)
    table = _rand_table(rnd, f16, 16)
    lo, hi = table[:8], table[8:]
    for _ in range(500):
        x1 = rnd.randrange(f16.order)
        xs = [rnd.randrange(f16.order) for _ in range(3)]
        whole = mle.mle_eval(table, [x1] + xs, f16)
        v0 = mle.mle_eval(lo, xs, f16)
        v1 = mle.mle_eval(hi, xs, f16)
        assert whole == f16.mul_int(x1 ^ 1, v0) ^ f16.mul_int(x1, v1)


def test_schwartz_zippel_empirical(f16, rnd):
    m = 4
    table = _rand_table(rnd, f16, 1 << m)
    while not table.any():
        table = _rand_table(rnd, f16, 1 << m)
    n = 100_000
    pts = np.array(
        [[rnd.randrange(f16.order) for _ in range(m)] for _ in range(n)],
        dtype=U,
    )
    chi = mle.chi_table(pts, f16)
    vals = mle.gf_matmul(chi, table[:, None], f16)[:, 0]
    zero_rate = float((vals == 0).mean())
    p = m / f16.order
    assert zero_rate <= p + 3 * math.sqrt(p / n)


def test_delta_c_basics(f16, rnd):
    a = mle.EvalMatrix(_rand_table(rnd, f16, 8).reshape(4, 2), f16)
    assert mle.delta_c(a, a) == 0
    b = a.copy()
    b.entries[1, 0] ^= U(3)
    assert mle.delta_c(a, b) == 1
    c = a.copy()
    c.entries[0, 0] ^= U(1)
    c.entries[2, 0] ^= U(2)
    c.entries[3, 1] ^= U(4)
    assert mle.delta_c(a, c) == 2  # max over columns: 2 vs 1
    with pytest.raises(mle.ShapeError):
        mle.delta_c(a, mle.EvalMatrix(np.zeros((8, 2), dtype=U), f16))


def test_delta_c_below_row_distance(f16, rnd):
    for _ in range(50):
        a = mle.EvalMatrix(_rand_table(rnd, f16, 16).reshape(4, 4), f16)
        b = mle.EvalMatrix(_rand_table(rnd, f16, 16).reshape(4, 4), f16)
        assert mle.delta_c(a, b) <= mle.rows_differing(a, b) <= 4 * 4


def test_pval_membership_and_bruteforce(f4, rnd):
    table = _rand_table(rnd, f4, 4)
    em = mle.EvalMatrix(table.reshape(4, 1), f4)
    pts = np.array([[rnd.randrange(16), rnd.randrange(16)]], dtype=U)
    claim = mle.claim_from_table(em.flatten(), pts, f4)
    assert claim.holds_for(em.flatten())
    assert mle.pval_delta_c_bruteforce(em, claim) == 0


def test_pval_bruteforce_single_point_line(f4, rnd):
    # m=1, L=1, T=1, wrong value: enumerate the affine line
    table = np.array([3, 7], dtype=U)
    em = mle.EvalMatrix(table.reshape(2, 1), f4)
    pt = np.array([[5]], dtype=U)
    true_v = mle.mle_eval(table, [5], f4)
    claim = mle.PvalClaim(pt, np.array([true_v ^ 2], dtype=U), f4)
    d = mle.pval_delta_c_bruteforce(em, claim)
    # brute-force cross-check by explicit enumeration of all 256 tables
    best = 99
    for v0 in range(16):
        for v1 in range(16):
            cand = np.array([v0, v1], dtype=U)
            if mle.mle_eval(cand, [5], f4) == true_v ^ 2:
                best = min(best, int((cand != table).sum()))
    assert d == best == 1


def test_pval_bruteforce_empty(f4):
    em = mle.EvalMatrix(np.zeros((4, 1), dtype=U), f4)
    pts = np.array([[1, 2], [1, 2]], dtype=U)
    claim = mle.PvalClaim(pts, np.array([0, 1], dtype=U), f4)
    assert mle.pval_delta_c_bruteforce(em, claim) is None


def test_pval_kernel_distance_no_constraints(f4):
    pts = np.zeros((0, 3), dtype=U)
    assert mle.pval_kernel_distance(pts, 1, f4) is False


def test_pval_kernel_distance_rank_deficient(f4):
    pts = np.array([[3]] * 18, dtype=U)
    assert mle.pval_kernel_distance(pts, 1, f4) is False


def test_cksum_shapes_and_linearity(f4, rnd):
    key = mle.ChecksumKey(
        np.array([[rnd.randrange(16) for _ in range(2)] for _ in range(16)], dtype=U),
        f4,
    )
    assert key.count == 16 and key.m == 2
    z = np.zeros((4, 3), dtype=U)
    assert not mle.cksum(key, z).any()
    a = np.array([[rnd.randrange(2) for _ in range(3)] for _ in range(4)], dtype=U)
    b = np.array([[rnd.randrange(2) for _ in range(3)] for _ in range(4)], dtype=U)
    assert np.array_equal(
        mle.cksum(key, a) ^ mle.cksum(key, b), mle.cksum(key, a ^ b)
    )


def test_cksum_collision_frequency(f4, rnd):
    # m=2, d=1: among all pairs of distinct single-column tables within
    # distance 1 of a fixed table, no collision for most keys
    tck = mle.cksum_count(1, 2, 4)
    center = _rand_table(rnd, f4, 4)
    ball = [center]
    for s in range(4):
        for delta in range(1, 16):
            v = center.copy()
            v[s] ^= U(delta)
            ball.append(v)
    good = 0
    keys = 16
    for _ in range(keys):
        pts = np.array(
            [[rnd.randrange(16) for _ in range(2)] for _ in range(tck)], dtype=U
        )
        key = mle.ChecksumKey(pts, f4)
        digests = [tuple(int(x) for x in mle.cksum(key, v[:, None])[:, 0]) for v in ball]
        good += int(len(set(digests)) == len(digests))
    assert good >= 15


def test_unique_decoding_follows_kernel_check(f4, rnd):
    # whenever the kernel check passes at 2d, ball members have distinct sums
    tck = mle.cksum_count(1, 2, 4)
    for _ in range(4):
        pts = np.array(
            [[rnd.randrange(16) for _ in range(2)] for _ in range(tck)], dtype=U
        )
        if not mle.pval_kernel_distance(pts, 1, f4):
            continue
        key = mle.ChecksumKey(pts, f4)
        center = _rand_table(rnd, f4, 4)
        seen = {}
        for s in range(4):
            for delta in range(16):
                v = center.copy()
                v[s] ^= U(delta)
                dig = tuple(int(x) for x in mle.cksum(key, v[:, None])[:, 0])
                if dig in seen:
                    assert np.array_equal(seen[dig], v)
                seen[dig] = v


def test_ball_members_enumeration(f4, rnd):
    center = mle.EvalMatrix(_rand_table(rnd, f4, 4).reshape(4, 1), f4)
    members = list(mle.ball_members(center, 1))
    assert len(members) == 1 + 4 * 15
    assert all(mle.delta_c(center, m) <= 1 for m in members)


def test_active_row_mask_excluded_from_distance(f4):
    ent = np.zeros((4, 1), dtype=U)
    a = mle.EvalMatrix(ent, f4, active_rows=[True, True, False, False])
    b = a.copy()
    b.entries[3, 0] = U(5)  # padding row: must not count
    assert mle.delta_c(a, b) == 0


def test_linalg_rank_and_solve(f16, rnd):
    a = np.array(
        [[rnd.randrange(f16.order) for _ in range(5)] for _ in range(3)], dtype=U
    )
    x = np.array([rnd.randrange(f16.order) for _ in range(5)], dtype=U)
    b = mle.gf_matmul(a, x[:, None], f16)[:, 0]
    sol = linalg.solve_affine(a, b, f16)
    assert sol is not None
    part, basis = sol
    got = mle.gf_matmul(a, part[:, None], f16)[:, 0]
    assert np.array_equal(got, b)
    for row in basis:
        assert not mle.gf_matmul(a, row[:, None], f16)[:, 0].any()
    assert basis.shape[0] == 5 - linalg.rank(a, f16)
