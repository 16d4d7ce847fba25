"""Verified linear algebra helpers shared by the certificate machinery.

Everything here turns approximate numpy results into rigorous interval
enclosures: inverse enclosures by Neumann-series residual bounds, and
eigenvalue range bounds by exact similarity transport (Gershgorin disks of
W^-1 M W, where W^-1 is itself enclosed, not approximated).
"""

from __future__ import annotations

import numpy as np

from .intervals import (
    Interval,
    IntervalMatrix,
    add_up,
    div_up,
    gershgorin_bounds,
    mul_up,
    sub_down,
)


class VerifiedLinalgError(Exception):
    pass


def inf_norm_upper(M: IntervalMatrix) -> float:
    """Upper bound on the infinity norm over all point matrices in M."""
    worst = 0.0
    n, m = M.shape
    for i in range(n):
        s = 0.0
        for j in range(m):
            s = add_up(s, M.rows[i][j].mag())
        worst = max(worst, s)
    return worst


def verified_inverse(A: np.ndarray) -> IntervalMatrix:
    """Interval enclosure of A^-1 for a point matrix A.

    Uses C ~= A^-1 and the residual E = I - C A: if ||E||_inf < 1 then
    A^-1 = (I - E)^-1 C, and the Neumann tail gives an entrywise bound
    |A^-1 - C| <= ||E|| / (1 - ||E||) * colmax|C|.
    """
    n = A.shape[0]
    try:
        C = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise VerifiedLinalgError(f"singular matrix: {exc}") from exc
    if not np.all(np.isfinite(C)):
        raise VerifiedLinalgError("approximate inverse has non-finite entries")
    C_iv = IntervalMatrix.from_floats(C.tolist())
    A_iv = IntervalMatrix.from_floats(A.tolist())
    E = IntervalMatrix.identity(n) - C_iv.matmul(A_iv)
    beta = inf_norm_upper(E)
    if beta >= 1.0:
        raise VerifiedLinalgError(f"residual norm {beta} >= 1; inverse not enclosed")
    factor = div_up(beta, sub_down(1.0, beta))
    rows = []
    col_max = [max(abs(C[k, j]) for k in range(n)) for j in range(n)]
    for i in range(n):
        row = []
        for j in range(n):
            gamma = mul_up(factor, col_max[j])
            row.append(Interval(sub_down(C[i, j], gamma), add_up(C[i, j], gamma)))
        rows.append(row)
    return IntervalMatrix(rows)


def similarity_disks(M: IntervalMatrix, basis: np.ndarray) -> list[Interval]:
    """Gershgorin disks of W^-1 M W: exact-similarity eigenvalue bounds.

    Every eigenvalue of every point matrix in M has its real part inside
    the union of the returned intervals.
    """
    Winv = verified_inverse(basis)
    W_iv = IntervalMatrix.from_floats(basis.tolist())
    S = Winv.matmul(M).matmul(W_iv)
    return gershgorin_bounds(S)


def symmetric_eig_range(M: IntervalMatrix) -> tuple[Interval, Interval]:
    """Enclosures of (lambda_min, lambda_max) of a symmetric interval matrix.

    Disks come from similarity with the approximate eigenbasis of the
    midpoint; Rayleigh quotients on unit coordinate vectors supply the
    opposing bounds.
    """
    n, m = M.shape
    if n != m:
        raise VerifiedLinalgError("eigenvalue range needs a square matrix")
    mid = np.array(M.midpoint())
    mid = (mid + mid.T) / 2.0
    try:
        _, W = np.linalg.eigh(mid)
    except np.linalg.LinAlgError as exc:
        raise VerifiedLinalgError(f"eigendecomposition failed: {exc}") from exc
    disks = similarity_disks(M, W)
    lo_all = min(d.lo for d in disks)
    hi_all = max(d.hi for d in disks)
    # Rayleigh bounds from the diagonal: lambda_min <= M_ii <= lambda_max.
    diag_min_hi = min(M.rows[i][i].hi for i in range(n))
    diag_max_lo = max(M.rows[i][i].lo for i in range(n))
    lam_min = Interval(lo_all, max(lo_all, diag_min_hi))
    lam_max = Interval(min(hi_all, diag_max_lo), hi_all)
    return lam_min, lam_max
