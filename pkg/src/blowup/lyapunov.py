"""Quadratic Lyapunov certificates around verified boundary equilibria.

The certificate packages a symmetric matrix Y with L(x) = (x - x*)^T Y (x - x*),
a rectangular domain on which A(x) = Dg(x)^T Y + Y Dg(x) is certified negative
definite, and the two constants the blow-up tail bound consumes:

* inv_lambda_min: upper bound on 1/lambda_min(Y), converting L-levels into
  squared distances (|x - x*|^2 <= inv_lambda_min * L).
* decay_min: lower bound on min |eigenvalue| of A over the domain, i.e. the
  certified decay rate dL/dtau <= -decay_min * |x - x*|^2.

Y is a concrete point matrix (the approximate-eigenbasis construction made
exactly symmetric); every certified quantity is evaluated from that exact Y
in interval arithmetic, so the choice can be arbitrary without affecting
soundness.  Negative definiteness of A together with positive definiteness
of Y certifies Re(lambda(Dg)) < 0 on the whole domain by inertia, so the
spectral hypothesis of the blow-up theorems is discharged without computing
eigenvalues of Dg itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compactification import CompactifiedSystem
from .equilibria import EquilibriumEnclosure
from .intervals import (
    Interval,
    IntervalMatrix,
    IntervalVector,
    add_up,
    int_pow,
    mul_up,
    sqrt_up,
    sub_down,
)
from .linalg import VerifiedLinalgError, similarity_disks, symmetric_eig_range


class LyapunovError(Exception):
    pass


class EigendecompositionFailed(LyapunovError):
    pass


class NearImaginaryAxis(LyapunovError):
    """Some eigenvalue real part is too close to zero to build Y."""


class YNotPositiveDefinite(LyapunovError):
    pass


class NotNegativeDefinite(LyapunovError):
    """A(x) could not be certified negative definite over the domain."""


@dataclass(frozen=True)
class SublevelInclusion:
    """Containment {L <= epsilon^2} within the box |x_i - x*_i| <= half_width.

    Holds by the chain |x - x*|^2 <= inv_lambda_min * L <= inv_lambda_min *
    epsilon^2, so half_width = epsilon * sqrt(inv_lambda_min).
    """

    epsilon: Interval
    inv_lambda_min: Interval
    half_width: float


def sublevel_inside_box(inv_lambda_min: Interval, epsilon: Interval) -> SublevelInclusion:
    half = mul_up(epsilon.hi, sqrt_up(inv_lambda_min.hi))
    return SublevelInclusion(
        epsilon=epsilon, inv_lambda_min=inv_lambda_min, half_width=half
    )


@dataclass(frozen=True)
class LyapunovCertificate:
    equilibrium: EquilibriumEnclosure
    Y: IntervalMatrix
    epsilon: Interval
    domain_box: IntervalVector
    inv_lambda_min: Interval  # upper bound of 1/lambda_min(Y)
    lambda_max: Interval  # enclosure of lambda_max(Y)
    decay_min: Interval  # lower bound of min |eig(A)| over the domain
    a_disks: tuple[Interval, ...]  # certifying Gershgorin disks for A
    stable: bool

    @property
    def dim(self) -> int:
        return len(self.domain_box)


def build_Y(dg_star: IntervalMatrix, imag_tol: float = 1e-9) -> IntervalMatrix:
    """Symmetric quadratic-form matrix from the approximate eigenbasis.

    Computes V from the midpoint Jacobian, orients each eigendirection by the
    sign of its real part, and returns the exactly symmetrized real part of
    V^-H I* V^-1 as a point interval matrix.
    """
    mid = np.array(dg_star.midpoint())
    try:
        eigvals, V = np.linalg.eig(mid)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionFailed(str(exc)) from exc
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    if np.min(np.abs(eigvals.real)) < imag_tol * scale:
        raise NearImaginaryAxis(
            f"eigenvalue real parts {eigvals.real} too close to the imaginary axis"
        )
    istar = np.where(eigvals.real < 0.0, 1.0, -1.0)
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionFailed(str(exc)) from exc
    if not np.all(np.isfinite(Vinv)):
        raise EigendecompositionFailed("eigenvector matrix not invertible")
    Yhat = Vinv.conj().T @ np.diag(istar) @ Vinv
    Y = np.real(Yhat)
    Y = (Y + Y.T) / 2.0
    return IntervalMatrix.from_floats(Y.tolist())


def eval_L(Y: IntervalMatrix, x_star: IntervalVector, x: IntervalVector) -> Interval:
    """Rigorous enclosure of (x - x*)^T Y (x - x*) using the verified box."""
    v = x - x_star
    n = len(v)
    acc = Interval(0.0)
    for i in range(n):
        acc = acc + Y.rows[i][i] * int_pow(v[i], 2)
        for j in range(i + 1, n):
            acc = acc + Interval(2.0) * Y.rows[i][j] * v[i] * v[j]
    return acc


def _interval_jacobian(sys: CompactifiedSystem, box: IntervalVector) -> IntervalMatrix:
    m = sys.dim
    return IntervalMatrix(
        [[sys.jac_normalized[i][j].eval(box) for j in range(m)] for i in range(m)]
    )


def _a_matrix(dg: IntervalMatrix, Y: IntervalMatrix) -> IntervalMatrix:
    """A = Dg^T Y + Y Dg, assembled exactly symmetric entry by entry."""
    n, _ = dg.shape
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            acc = Interval(0.0)
            for k in range(n):
                acc = acc + dg.rows[k][i] * Y.rows[k][j] + Y.rows[i][k] * dg.rows[k][j]
            rows[i][j] = acc
            rows[j][i] = acc
    return IntervalMatrix(rows)


def _negdef_bound(A: IntervalMatrix) -> tuple[float, tuple[Interval, ...]]:
    """Certified upper bound on lambda_max(A) via eigenbasis similarity disks."""
    mid = np.array(A.midpoint())
    mid = (mid + mid.T) / 2.0
    try:
        _, W = np.linalg.eigh(mid)
        disks = similarity_disks(A, W)
    except (np.linalg.LinAlgError, VerifiedLinalgError):
        # Fall back to plain Gershgorin on A itself.
        from .intervals import gershgorin_bounds

        disks = gershgorin_bounds(A, symmetric=True)
    return max(d.hi for d in disks), tuple(disks)


def _split_box(box: IntervalVector) -> tuple[IntervalVector, IntervalVector]:
    widths = [e.width() for e in box]
    k = widths.index(max(widths))
    mid = box[k].midpoint()
    left = [e for e in box]
    right = [e for e in box]
    left[k] = Interval(box[k].lo, mid)
    right[k] = Interval(mid, box[k].hi)
    return IntervalVector(left), IntervalVector(right)


def verify_domain(
    sys: CompactifiedSystem,
    equilibrium: EquilibriumEnclosure,
    Y: IntervalMatrix,
    epsilon: float | Interval,
    subdivide_depth: int = 4,
) -> LyapunovCertificate:
    """Certify the Lyapunov domain and its constants for the given epsilon.

    The domain is the coordinate box x* +- epsilon*sqrt(inv_lambda_min)
    (inflated by the equilibrium box itself) clipped to [-1, 1]^m; A is
    certified negative definite over it, with uniform subdivision up to
    `subdivide_depth` retried before failing.
    """
    if not isinstance(epsilon, Interval):
        epsilon = Interval(float(epsilon))
    if epsilon.hi <= 0.0:
        raise LyapunovError("epsilon must be positive")

    lam_min, lam_max = symmetric_eig_range(Y)
    if lam_min.lo <= 0.0:
        raise YNotPositiveDefinite(
            f"lambda_min(Y) only bounded below by {lam_min.lo}"
        )
    inv_lambda_min = Interval(1.0) / lam_min

    half = mul_up(epsilon.hi, sqrt_up(inv_lambda_min.hi))
    unit = Interval(-1.0, 1.0)
    domain = IntervalVector(
        Interval(sub_down(e.lo, half), add_up(e.hi, half)).intersect(unit)
        for e in equilibrium.box
    )
    if any(e.is_empty for e in domain):
        raise LyapunovError("Lyapunov domain does not meet the unit box")

    # Negative definiteness of A over the domain, with subdivision fallback.
    stack = [(domain, 0)]
    worst_hi = -float("inf")
    disks_out: tuple[Interval, ...] = ()
    while stack:
        box, depth = stack.pop()
        A = _a_matrix(_interval_jacobian(sys, box), Y)
        hi, disks = _negdef_bound(A)
        if hi < 0.0:
            worst_hi = max(worst_hi, hi)
            if not disks_out:
                disks_out = disks
            continue
        if depth >= subdivide_depth:
            raise NotNegativeDefinite(
                f"A(x) not certified negative definite at depth {depth}: "
                f"max Gershgorin upper bound {hi}"
            )
        left, right = _split_box(box)
        stack.append((left, depth + 1))
        stack.append((right, depth + 1))

    decay_lo = -worst_hi  # lambda_max(A) <= worst_hi < 0 over the domain
    # Diagnostic upper bound: min |eig(A)| <= -max_i A_ii.lo at any sample;
    # reuse the full-domain A at the equilibrium box for a cheap estimate.
    A_star = _a_matrix(_interval_jacobian(sys, equilibrium.box), Y)
    n = len(equilibrium.box)
    diag_max_lo = max(A_star.rows[i][i].lo for i in range(n))
    decay_hi = max(decay_lo, -diag_max_lo)
    decay_min = Interval(decay_lo, decay_hi)

    return LyapunovCertificate(
        equilibrium=equilibrium,
        Y=Y,
        epsilon=epsilon,
        domain_box=domain,
        inv_lambda_min=inv_lambda_min,
        lambda_max=lam_max,
        decay_min=decay_min,
        a_disks=disks_out,
        stable=True,
    )
