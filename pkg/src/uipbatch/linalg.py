"""Dense linear algebra over GF(2^w): row reduction, rank, solving, nullspaces.

Matrices are numpy uint64 arrays of raw element values; a FieldConfig
supplies the arithmetic.  Gaussian elimination with partial pivoting by
first nonzero entry; row operations are vectorized through the field's
constant-multiply kernel.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64


def rref(mat, cfg, max_pivot_cols=None):
    """Reduced row-echelon form.

    Returns (R, pivot_cols).  Pivots are searched in the first
    max_pivot_cols columns only, but row operations span full rows.
    """
    r = np.array(mat, dtype=_U64, copy=True)
    if r.ndim != 2:
        raise ValueError("matrix required")
    nrows, ncols = r.shape
    limit = ncols if max_pivot_cols is None else max_pivot_cols
    pivots = []
    row = 0
    for col in range(limit):
        if row >= nrows:
            break
        sub = r[row:, col]
        nz = np.nonzero(sub)[0]
        if nz.size == 0:
            continue
        sel = row + int(nz[0])
        if sel != row:
            r[[row, sel]] = r[[sel, row]]
        piv = int(r[row, col])
        if piv != 1:
            r[row] = cfg.vmul_const(r[row], cfg.inv_int(piv))
        factors = r[:, col].copy()
        factors[row] = 0
        hit = np.nonzero(factors)[0]
        if hit.size:
            prods = cfg.vmul(
                factors[hit][:, None], np.broadcast_to(r[row], (hit.size, ncols))
            )
            r[hit] ^= prods
        pivots.append(col)
        row += 1
    return r, pivots


def rank(mat, cfg) -> int:
    _, pivots = rref(mat, cfg)
    return len(pivots)


def solve_affine(a, b, cfg):
    """Solve A x = b.  Returns (particular, nullspace_basis) or None if empty.

    particular: uint64 vector of raw values; nullspace_basis: (k, n) array
    whose rows span the solution space's direction space.
    """
    a = np.asarray(a, dtype=_U64)
    b = np.asarray(b, dtype=_U64)
    nrows, ncols = a.shape
    aug = np.concatenate([a, b[:, None]], axis=1)
    r, pivots = rref(aug, cfg, max_pivot_cols=ncols)
    # inconsistent iff a row is zero in A-part but nonzero in b-part
    apart = r[:, :ncols]
    bpart = r[:, ncols]
    bad = np.nonzero((apart == 0).all(axis=1) & (bpart != 0))[0]
    if bad.size:
        return None
    part = np.zeros(ncols, dtype=_U64)
    for i, col in enumerate(pivots):
        part[col] = bpart[i]
    free = [c for c in range(ncols) if c not in set(pivots)]
    basis = np.zeros((len(free), ncols), dtype=_U64)
    for k, fc in enumerate(free):
        basis[k, fc] = 1
        for i, col in enumerate(pivots):
            basis[k, col] = apart[i, fc]
    return part, basis


def nullspace(a, cfg):
    """Basis of the right nullspace of A, rows spanning."""
    a = np.asarray(a, dtype=_U64)
    sol = solve_affine(a, np.zeros(a.shape[0], dtype=_U64), cfg)
    assert sol is not None
    return sol[1]
