"""Location and rigorous enclosure of critical points at infinity.

Boundary equilibria of the normalized field are zeros of g on the unit
sphere.  Candidates come from floating-point Newton iteration over seed
points; each candidate is then verified with the Krawczyk operator

    K(X) = c - C g(c) + (I - C Dg(X)) (X - c),

whose strict containment K(X) in the interior of X certifies a unique zero.
Under the Poincare compactification with auxiliary s the equilibrium system
block-diagonalizes (g never depends on s and the appended equation is s = 0
exactly), so verification runs on the x-coordinates alone with s pinned to
zero.

A verified zero is certified to lie exactly on the sphere when the radial
rate <x, f~(x)> excludes zero over the box: at any equilibrium
<x, g(x)> = (1 - |x|^2) <x, f~(x)> vanishes, so a nonzero radial rate
forces |x*| = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compactification import CompactifiedSystem
from .intervals import Interval, IntervalMatrix, IntervalVector
from .polynomials import PolyVectorField


class EquilibriumError(Exception):
    pass


class VerificationFailed(EquilibriumError):
    """Krawczyk contraction K(X) in int(X) could not be established."""


class SingularApproximateJacobian(EquilibriumError):
    """Midpoint Jacobian is numerically singular; no preconditioner."""


class NoConvergence(EquilibriumError):
    """Newton iteration from a seed did not reach the residual tolerance."""


@dataclass(frozen=True)
class EquilibriumEnclosure:
    box: IntervalVector
    unique: bool
    residual: IntervalVector
    on_boundary: bool
    radial_rate: Interval

    @property
    def dim(self) -> int:
        return len(self.box)

    def midpoint(self) -> list[float]:
        return self.box.midpoint()


def characteristic_residual(field: PolyVectorField, x: IntervalVector) -> IntervalVector:
    """Enclosure of p_d(x) - <x, p_d(x)> x, the boundary equilibrium system.

    Depends only on the top homogeneous part of the field.
    """
    top = field.homogeneous_parts()[-1]
    pd = top.eval(x)
    rad = x.dot(pd)
    return IntervalVector(pd[i] - rad * x[i] for i in range(len(x)))


# ---------------------------------------------------------------------------
# Seeding


def default_sphere_seeds(m: int, count: int = 64) -> list[np.ndarray]:
    """Roughly uniform unit-sphere seeds for the Newton search."""
    if m == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if m == 2:
        angles = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        return [np.array([math.cos(a), math.sin(a)]) for a in angles]
    if m == 3:
        # Fibonacci sphere lattice.
        pts = []
        golden = math.pi * (3.0 - math.sqrt(5.0))
        for i in range(count):
            z = 1.0 - 2.0 * (i + 0.5) / count
            r = math.sqrt(max(0.0, 1.0 - z * z))
            theta = golden * i
            pts.append(np.array([r * math.cos(theta), r * math.sin(theta), z]))
        return pts
    rng = np.random.default_rng(1234)
    pts = rng.normal(size=(count, m))
    return [p / np.linalg.norm(p) for p in pts]


def _jacobian_float(sys: CompactifiedSystem, x: np.ndarray) -> np.ndarray:
    m = sys.dim
    J = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            J[i, j] = sys.jac_normalized[i][j].eval_float(x)
    return J


def newton_candidates(
    sys: CompactifiedSystem,
    seeds: list[np.ndarray],
    max_iter: int = 60,
    tol: float = 1e-10,
    dedup_tol: float = 1e-6,
) -> list[np.ndarray]:
    """Floating Newton on g(x) = 0; converged iterates, deduplicated."""
    found: list[np.ndarray] = []
    for seed in seeds:
        x = np.asarray(seed, dtype=float).copy()
        ok = False
        for _ in range(max_iter):
            gval = sys.normalized.eval_float(x)
            if np.linalg.norm(gval) < tol:
                ok = True
                break
            J = _jacobian_float(sys, x)
            try:
                step = np.linalg.solve(J, gval)
            except np.linalg.LinAlgError:
                break
            x = x - step
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e6:
                break
        if not ok:
            continue
        if all(np.linalg.norm(x - f) > dedup_tol for f in found):
            found.append(x)
    return found


# ---------------------------------------------------------------------------
# Krawczyk verification


def _interval_jacobian(sys: CompactifiedSystem, box: IntervalVector) -> IntervalMatrix:
    m = sys.dim
    return IntervalMatrix(
        [[sys.jac_normalized[i][j].eval(box) for j in range(m)] for i in range(m)]
    )


def krawczyk_verify(
    sys: CompactifiedSystem,
    center: np.ndarray | list[float],
    radius: float,
    refine: int = 3,
) -> EquilibriumEnclosure:
    """Verify a unique zero of the normalized field in center +- radius."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    center = [float(c) for c in center]
    m = sys.dim
    if len(center) != m:
        raise ValueError("center dimension mismatch")
    X = IntervalVector.box(center, radius)
    c_vec = IntervalVector.from_floats(center)

    J = _interval_jacobian(sys, X)
    J_mid = np.array(J.midpoint())
    try:
        C = np.linalg.inv(J_mid)
    except np.linalg.LinAlgError as exc:
        raise SingularApproximateJacobian(str(exc)) from exc
    if not np.all(np.isfinite(C)) or np.linalg.cond(J_mid) > 1e14:
        raise SingularApproximateJacobian("approximate Jacobian inverse unusable")
    C_iv = IntervalMatrix.from_floats(C.tolist())

    g_c = sys.normalized.eval(c_vec)
    I_minus_CJ = IntervalMatrix.identity(m) - C_iv.matmul(J)
    K = (
        IntervalVector(c_vec)
        - C_iv.matvec(g_c)
        + I_minus_CJ.matvec(X - c_vec)
    )
    if not X.interior_contains(K):
        raise VerificationFailed(
            f"Krawczyk image not interior to the box (radius {radius})"
        )
    X = K.intersect(X)
    # Optional shrink passes with the same preconditioner.
    for _ in range(refine):
        Jr = _interval_jacobian(sys, X)
        I_minus_CJ = IntervalMatrix.identity(m) - C_iv.matmul(Jr)
        K = (
            IntervalVector(c_vec)
            - C_iv.matvec(g_c)
            + I_minus_CJ.matvec(X - c_vec)
        )
        nxt = K.intersect(X)
        if any(e.is_empty for e in nxt):
            break
        X = nxt

    residual = sys.normalized.eval(X)
    nsq = X.norm_sq()
    radial_rate = sys.radial.eval(X)
    on_boundary = nsq.contains(1.0) and not radial_rate.contains(0.0)
    return EquilibriumEnclosure(
        box=X,
        unique=True,
        residual=residual,
        on_boundary=on_boundary,
        radial_rate=radial_rate,
    )


def find_boundary_equilibrium(
    sys: CompactifiedSystem,
    direction: np.ndarray,
    base_radius: float = 1e-3,
    newton_tol: float = 1e-10,
) -> EquilibriumEnclosure:
    """Newton-polish a direction seed, then verify with a radius ladder."""
    seeds = [np.asarray(direction, dtype=float)]
    candidates = newton_candidates(sys, seeds, tol=newton_tol)
    if not candidates:
        # Retry from the whole default seed set, keeping the candidate most
        # aligned with the requested direction.
        grid = default_sphere_seeds(sys.dim)
        candidates = newton_candidates(sys, grid, tol=newton_tol)
        if not candidates:
            raise NoConvergence("no Newton candidate near the escape direction")
        dirn = np.asarray(direction, dtype=float)
        dirn = dirn / max(np.linalg.norm(dirn), 1e-300)
        candidates.sort(key=lambda c: -float(np.dot(c, dirn) / max(np.linalg.norm(c), 1e-300)))
    cand = candidates[0]

    radii = [base_radius * 10.0**-k for k in range(4)] + [
        base_radius * 10.0**k for k in range(1, 4)
    ]
    last_err: Exception | None = None
    for r in radii:
        try:
            return krawczyk_verify(sys, cand, r)
        except (VerificationFailed, SingularApproximateJacobian) as exc:
            last_err = exc
    raise VerificationFailed(
        f"all verification radii failed near {cand.tolist()}: {last_err}"
    )
