"""Boolean-hypercube tables, multilinear extensions, point-value claims,
column distance, and checksums, plus the brute-force oracles that ground
the protocol tests.

Conventions: a table of 2^m values is indexed so that coordinate 0 of an
evaluation point binds the most significant index bit.  A matrix in
F^{M x L} flattens row-major, so the m row variables come first and the
log2(L) column variables last.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .field import FieldConfig

_U64 = np.uint64


class EnumerationBudgetError(Exception):
    """A brute-force oracle was asked to enumerate beyond its limit."""


class ShapeError(Exception):
    """Mismatched table/point dimensions."""


def _log2_exact(n: int) -> int:
    b = n.bit_length() - 1
    if n <= 0 or (1 << b) != n:
        raise ShapeError("%d is not a power of two" % n)
    return b


def mle_eval(table, point, cfg: FieldConfig) -> int:
    """Value of the multilinear extension of `table` at `point` (raw ints).

    Iterative halving: O(len(table)) field multiplications.
    """
    vals = np.asarray(table, dtype=_U64)
    m = _log2_exact(vals.size)
    if len(point) != m:
        raise ShapeError("point has %d coords, table needs %d" % (len(point), m))
    for p in point:
        half = vals.size // 2
        lo, hi = vals[:half], vals[half:]
        vals = lo ^ cfg.vmul_const(lo ^ hi, int(p))
    return int(vals[0])


def chi_weights(point, cfg: FieldConfig):
    """Lagrange-basis weights chi_s(point) for all s in {0,1}^m, as uint64."""
    w = np.ones(1, dtype=_U64)
    for p in reversed(list(point)):
        p = int(p)
        w = np.concatenate([cfg.vmul_const(w, p ^ 1), cfg.vmul_const(w, p)])
    return w


def chi_table(points, cfg: FieldConfig):
    """Stack of chi_weights rows, one per point: shape (T, 2^m)."""
    pts = np.asarray(points, dtype=_U64)
    if pts.ndim == 1:
        pts = pts[None, :]
    t, m = pts.shape
    w = np.ones((t, 1), dtype=_U64)
    one = _U64(1)
    for i in range(m - 1, -1, -1):
        col = pts[:, i][:, None]
        left = cfg.vmul(w, np.broadcast_to(col ^ one, w.shape))
        right = cfg.vmul(w, np.broadcast_to(col, w.shape))
        w = np.concatenate([left, right], axis=1)
    return w


def gf_matmul(a, b, cfg: FieldConfig):
    """(n,k) x (k,m) product over the field; b entries may be arbitrary."""
    a = np.asarray(a, dtype=_U64)
    b = np.asarray(b, dtype=_U64)
    if set(np.unique(b)) <= {0, 1}:
        out = np.zeros((a.shape[0], b.shape[1]), dtype=_U64)
        for j in range(b.shape[1]):
            sel = np.nonzero(b[:, j])[0]
            if sel.size:
                out[:, j] = np.bitwise_xor.reduce(a[:, sel], axis=1)
        return out
    out = np.zeros((a.shape[0], b.shape[1]), dtype=_U64)
    for j in range(b.shape[1]):
        prods = cfg.vmul(a, np.broadcast_to(b[:, j][None, :], a.shape))
        out[:, j] = np.bitwise_xor.reduce(prods, axis=1)
    return out


class EvalMatrix:
    """A matrix in F^{M x L} viewed as L columns of hypercube function tables.

    Rows and columns are powers of two.  `active_rows` marks real rows;
    padding rows (always zero in prescribed data) are excluded from
    distance accounting.
    """

    def __init__(self, entries, cfg: FieldConfig, active_rows=None):
        self.entries = np.asarray(entries, dtype=_U64)
        if self.entries.ndim != 2:
            raise ShapeError("entries must be 2-D")
        self.cfg = cfg
        self.m = _log2_exact(self.entries.shape[0])
        self.lncol = _log2_exact(self.entries.shape[1])
        if active_rows is None:
            active_rows = np.ones(self.entries.shape[0], dtype=bool)
        self.active_rows = np.asarray(active_rows, dtype=bool)

    @property
    def nrows(self) -> int:
        return self.entries.shape[0]

    @property
    def ncols(self) -> int:
        return self.entries.shape[1]

    def flatten(self):
        return self.entries.reshape(-1)

    def joint_eval(self, point) -> int:
        """MLE of the row-major flattening, point in F^{m + lncol}."""
        return mle_eval(self.flatten(), point, self.cfg)

    def column_eval(self, col: int, point) -> int:
        return mle_eval(self.entries[:, col], point, self.cfg)

    def permute_rows(self, row_map):
        """Row action of a permutation pi x I: new[s] = old[pi(s)]."""
        return EvalMatrix(
            self.entries[np.asarray(row_map)], self.cfg,
            self.active_rows[np.asarray(row_map)],
        )

    def copy(self):
        return EvalMatrix(self.entries.copy(), self.cfg, self.active_rows.copy())

    def __eq__(self, other):
        return (
            isinstance(other, EvalMatrix)
            and other.cfg == self.cfg
            and np.array_equal(other.entries, self.entries)
        )


def delta_c(a: EvalMatrix, b: EvalMatrix) -> int:
    """Column distance: max over columns of per-column Hamming distance."""
    if a.entries.shape != b.entries.shape:
        raise ShapeError("matrices must have equal shape")
    mask = a.active_rows & b.active_rows
    diff = (a.entries != b.entries) & mask[:, None]
    return int(diff.sum(axis=0).max(initial=0))


def rows_differing(a: EvalMatrix, b: EvalMatrix) -> int:
    """Number of rows that must change to transform a into b."""
    if a.entries.shape != b.entries.shape:
        raise ShapeError("matrices must have equal shape")
    return int((a.entries != b.entries).any(axis=1).sum())


@dataclass(frozen=True)
class PvalClaim:
    """T evaluation points in F^dim and T target values: the affine set of
    tables whose multilinear extension hits `values` at `points`."""

    points: np.ndarray  # (T, dim) uint64
    values: np.ndarray  # (T,) uint64
    cfg: FieldConfig

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=_U64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=_U64))
        if self.points.ndim != 2 or self.values.ndim != 1:
            raise ShapeError("points must be (T, dim), values (T,)")
        if self.points.shape[0] != self.values.shape[0] or self.values.shape[0] < 1:
            raise ShapeError("|points| must equal |values| and be >= 1")

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def system(self):
        """Lagrange-basis constraint matrix E with E[t, s] = chi_s(j_t)."""
        return chi_table(self.points, self.cfg)

    def holds_for(self, table) -> bool:
        """Exact membership of a flat table in the claim's affine set."""
        e = self.system()
        got = gf_matmul(e, np.asarray(table, dtype=_U64)[:, None], self.cfg)[:, 0]
        return bool(np.array_equal(got, self.values))


def claim_from_table(table, points, cfg: FieldConfig) -> PvalClaim:
    """Claim that is true for `table` by construction."""
    pts = np.asarray(points, dtype=_U64)
    vals = np.array([mle_eval(table, p, cfg) for p in pts], dtype=_U64)
    return PvalClaim(pts, vals, cfg)


def pval_solution_set(claim: PvalClaim, budget_log2: int = 20):
    """Particular solution and nullspace basis of the claim's affine set.

    Returns None when the set is empty.  Raises EnumerationBudgetError if
    the Gaussian-elimination workload exceeds roughly 2^budget_log2 cells.
    """
    size = 1 << claim.dim
    if size * (claim.count + 1) > (1 << budget_log2):
        raise EnumerationBudgetError("solution system too large")
    e = claim.system()
    return linalg.solve_affine(e, claim.values, claim.cfg)


def pval_delta_c_bruteforce(a: EvalMatrix, claim: PvalClaim, budget_log2: int = 20):
    """Exact min over members of the claim's set of delta_c(a, member).

    Returns None when the set is empty.  The affine set is enumerated
    explicitly, so |F|^dim(nullspace) must stay within 2^budget_log2.
    """
    if claim.dim != a.m + a.lncol:
        raise ShapeError("claim dimension does not match matrix shape")
    sol = pval_solution_set(claim, budget_log2=max(budget_log2, 22))
    if sol is None:
        return None
    part, basis = sol
    k = basis.shape[0]
    cfg = a.cfg
    if cfg.order ** k > (1 << budget_log2):
        raise EnumerationBudgetError("affine set too large to enumerate")
    shape = a.entries.shape
    best = None
    member = part.copy()
    # odometer walk over F^k; each step updates one coordinate incrementally
    scaled = [
        [cfg.vmul_const(basis[i], c) for c in range(cfg.order)] for i in range(k)
    ]
    counters = [0] * k
    total = cfg.order ** k
    mask = a.active_rows[:, None]
    for step in range(total):
        mat = member.reshape(shape)
        diff = (mat != a.entries) & mask
        dist = int(diff.sum(axis=0).max(initial=0))
        if best is None or dist < best:
            best = dist
            if best == 0:
                break
        if step + 1 == total:
            break
        i = 0
        while True:
            old = counters[i]
            new = old + 1
            if new < cfg.order:
                counters[i] = new
                member = member ^ scaled[i][old ^ new]
                break
            counters[i] = 0
            member = member ^ scaled[i][old]
            i += 1
    return best


def ball_members(center: EvalMatrix, d: int, budget_log2: int = 22):
    """Yield every matrix in the column-distance d-ball around `center`.

    Only positions on active rows vary.  Intended for tiny oracle tests.
    """
    cfg = center.cfg
    rows = [int(r) for r in np.nonzero(center.active_rows)[0]]
    ncols = center.ncols
    per_col = sum(
        math.comb(len(rows), i) * (cfg.order - 1) ** i for i in range(d + 1)
    )
    if per_col ** ncols > (1 << budget_log2):
        raise EnumerationBudgetError("ball too large to enumerate")

    def col_variants():
        out = []
        for nerr in range(d + 1):
            for support in itertools.combinations(rows, nerr):
                for deltas in itertools.product(
                    range(1, cfg.order), repeat=nerr
                ):
                    out.append((support, deltas))
        return out

    variants = col_variants()
    for combo in itertools.product(variants, repeat=ncols):
        mat = center.entries.copy()
        for j, (support, deltas) in enumerate(combo):
            for r, dv in zip(support, deltas):
                mat[r, j] ^= _U64(dv)
        yield EvalMatrix(mat, cfg, center.active_rows)


@dataclass(frozen=True)
class ChecksumKey:
    """T_ck random points in F^m keying per-column MLE checksums."""

    points: np.ndarray  # (T_ck, m)
    cfg: FieldConfig

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=_U64))

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def m(self) -> int:
        return int(self.points.shape[1])

    def table(self):
        """chi table, cached: (T_ck, 2^m)."""
        cached = getattr(self, "_table", None)
        if cached is None:
            cached = chi_table(self.points, self.cfg)
            object.__setattr__(self, "_table", cached)
        return cached


def cksum_count(d: int, m: int, lam: int) -> int:
    """Key length 2d(m + lam) + lam."""
    return 2 * d * (m + lam) + lam


def cksum(key: ChecksumKey, columns) -> np.ndarray:
    """Per-column MLE evaluations at all key points: shape (T_ck, a)."""
    cols = np.asarray(columns, dtype=_U64)
    if cols.ndim == 1:
        cols = cols[:, None]
    if cols.shape[0] != (1 << key.m):
        raise ShapeError("key dimension does not match table rows")
    return gf_matmul(key.table(), cols, key.cfg)


def pval_kernel_distance(points, d: int, cfg: FieldConfig,
                         budget_log2: int = 22) -> bool:
    """True iff no nonzero single-column table of Hamming weight <= 2d has a
    multilinear extension vanishing at every point.

    Checked by enumerating supports and testing column-rank of the
    Lagrange system restricted to each support.
    """
    pts = np.asarray(points, dtype=_U64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[0] == 0:
        return False
    m = pts.shape[1]
    size = 1 << m
    work = sum(math.comb(size, s) for s in range(1, 2 * d + 1))
    if work > (1 << budget_log2):
        raise EnumerationBudgetError("weight-bounded enumeration too large")
    e = chi_table(pts, cfg)
    for s in range(1, 2 * d + 1):
        for support in itertools.combinations(range(size), s):
            sub = e[:, list(support)]
            if linalg.rank(sub, cfg) < s:
                return False
    return True


def kernel_delta_c_min(points, shape, cfg: FieldConfig, budget_log2: int = 20):
    """Min column-distance weight of a nonzero kernel member, by full
    enumeration of the kernel: PVAL(points, 0) over a matrix of `shape`.

    Returns math.inf when the kernel is trivial.
    """
    m_rows, ncols = shape
    dim = _log2_exact(m_rows) + _log2_exact(ncols)
    pts = np.asarray(points, dtype=_U64)
    if pts.shape[1] != dim:
        raise ShapeError("points do not match shape")
    e = chi_table(pts, cfg)
    basis = linalg.nullspace(e, cfg)
    k = basis.shape[0]
    if k == 0:
        return math.inf
    if cfg.order ** k > (1 << budget_log2):
        raise EnumerationBudgetError("kernel too large to enumerate")
    best = math.inf
    scaled = [
        [cfg.vmul_const(basis[i], c) for c in range(cfg.order)] for i in range(k)
    ]
    member = np.zeros(basis.shape[1], dtype=_U64)
    counters = [0] * k
    total = cfg.order ** k
    for step in range(total - 1):
        i = 0
        while True:
            old = counters[i]
            new = old + 1
            if new < cfg.order:
                counters[i] = new
                member = member ^ scaled[i][old ^ new]
                break
            counters[i] = 0
            member = member ^ scaled[i][old]
            i += 1
        w = int((member.reshape(m_rows, ncols) != 0).sum(axis=0).max())
        if w < best:
            best = w
    return best
