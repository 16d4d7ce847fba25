"""Compactifications of R^m onto the unit ball and their normalized fields.

Two concrete admissible compactifications are provided:

* Poincare: x = y / sqrt(1 + |y|^2).  Applicable to polynomial fields whose
  nonzero homogeneous parts p_j all satisfy d - j even ("parity condition"),
  which makes the scaled field a genuine polynomial in x.  When d is even
  the time factor needs sqrt(1 - |x|^2) itself, so the system is augmented
  with an auxiliary coordinate s obeying s' = -s * <x, f~(x)>; everything
  stays polynomial.
* Parabolic: y = x / (1 - |x|^2).  Always applicable; the normalized field
  and time factor are polynomials for every polynomial input field.

The returned `CompactifiedSystem` carries the normalized field g on the
x-coordinates (used for equilibria and Lyapunov certificates) and the
augmented field (x, [s], t) actually integrated, where t accumulates
original time via dt/dtau = time_factor.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .intervals import (
    Interval,
    IntervalVector,
    ONE,
    sqrt_clamped,
)
from .polynomials import Polynomial, PolyVectorField


class CompactificationError(Exception):
    pass


class BoundaryPoint(CompactificationError):
    """Inverse map requested at (or across) the unit sphere."""


class NotApplicable(CompactificationError):
    """The requested compactification cannot produce a polynomial system."""

    def __init__(self, report: "ApplicabilityReport"):
        super().__init__(report.message)
        self.report = report


class CompactificationKind(enum.Enum):
    POINCARE = "poincare"
    PARABOLIC = "parabolic"


@dataclass(frozen=True)
class ApplicabilityReport:
    kind: CompactificationKind
    ok: bool
    violating_parts: tuple[int, ...]
    message: str


# ---------------------------------------------------------------------------
# Coordinate maps


def poincare_forward(y: IntervalVector) -> IntervalVector:
    """x = y / sqrt(1 + |y|^2); lands strictly inside the unit ball."""
    kappa = sqrt_clamped(ONE + y.norm_sq())
    return IntervalVector(yi / kappa for yi in y)


def poincare_inverse(x: IntervalVector) -> IntervalVector:
    """y = x / sqrt(1 - |x|^2); requires |x| < 1 rigorously."""
    rest = ONE - x.norm_sq()
    if rest.lo <= 0.0:
        raise BoundaryPoint(f"1 - |x|^2 = {rest} touches zero")
    s = sqrt_clamped(rest)
    return IntervalVector(xi / s for xi in x)


def parabolic_forward(y: IntervalVector) -> IntervalVector:
    """x_i = 2 y_i / (1 + sqrt(1 + 4 |y|^2))."""
    denom = ONE + sqrt_clamped(ONE + Interval(4.0) * y.norm_sq())
    return IntervalVector((Interval(2.0) * yi) / denom for yi in y)


def parabolic_inverse(x: IntervalVector) -> IntervalVector:
    """y_i = x_i / (1 - |x|^2); requires |x| < 1 rigorously."""
    rest = ONE - x.norm_sq()
    if rest.lo <= 0.0:
        raise BoundaryPoint(f"1 - |x|^2 = {rest} touches zero")
    return IntervalVector(xi / rest for xi in x)


def forward(kind: CompactificationKind, y: IntervalVector) -> IntervalVector:
    if kind is CompactificationKind.POINCARE:
        return poincare_forward(y)
    return parabolic_forward(y)


def inverse(kind: CompactificationKind, x: IntervalVector) -> IntervalVector:
    if kind is CompactificationKind.POINCARE:
        return poincare_inverse(x)
    return parabolic_inverse(x)


def kappa(kind: CompactificationKind, y: IntervalVector) -> Interval:
    """The scaling factor kappa(y) of the compactification."""
    if kind is CompactificationKind.POINCARE:
        return sqrt_clamped(ONE + y.norm_sq())
    root = sqrt_clamped(ONE + Interval(4.0) * y.norm_sq())
    return (ONE + root) / Interval(2.0)


def kappa_radial_derivative(kind: CompactificationKind, y: IntervalVector) -> Interval:
    """<y, grad kappa(y)> for the admissibility check."""
    nsq = y.norm_sq()
    if kind is CompactificationKind.POINCARE:
        return nsq / sqrt_clamped(ONE + nsq)
    return (Interval(2.0) * nsq) / sqrt_clamped(ONE + Interval(4.0) * nsq)


# ---------------------------------------------------------------------------
# Applicability


def check_applicability(
    field: PolyVectorField, kind: CompactificationKind
) -> ApplicabilityReport:
    """Parabolic always works; Poincare needs d - j even for nonzero p_j."""
    if kind is CompactificationKind.PARABOLIC:
        return ApplicabilityReport(kind, True, (), "parabolic compactification always applicable")
    d = field.degree()
    violating = tuple(
        j
        for j, part in enumerate(field.homogeneous_parts())
        if not part.is_zero() and (d - j) % 2 == 1
    )
    if violating:
        msg = (
            f"Poincare compactification inapplicable: homogeneous parts {list(violating)} "
            f"have odd degree gap to d={d}, so the normalized field is not polynomial "
            "and its Jacobian is discontinuous at the sphere"
        )
        return ApplicabilityReport(kind, False, violating, msg)
    return ApplicabilityReport(kind, True, (), "parity condition holds")


# ---------------------------------------------------------------------------
# Normalized systems


@dataclass(frozen=True)
class CompactifiedSystem:
    """Normalized dynamics on the closed unit ball plus time bookkeeping.

    `normalized` is g on the x-coordinates (m variables).  `aug_field` is the
    square polynomial field actually integrated, over variables
    (x_1..x_m, [s,] t); its last component is the time factor dt/dtau.
    """

    kind: CompactificationKind
    dim: int
    degree: int
    original: PolyVectorField
    scaled: PolyVectorField
    normalized: PolyVectorField
    radial: Polynomial
    has_aux: bool
    aug_field: PolyVectorField
    time_factor: Polynomial
    idx_s: int | None
    idx_t: int
    # True when the unit ball (and s in [0,1]) is forward-invariant for the
    # exact dynamics, allowing sound clamping of enclosures.
    invariant_unit_ball: bool = True
    jac_normalized: tuple = dataclass_field(repr=False, default=())
    # Mutable scratch for the integrator's compiled evaluation plan.
    plan_cache: dict = dataclass_field(
        repr=False, compare=False, default_factory=dict
    )

    @property
    def aug_dim(self) -> int:
        return self.aug_field.dim

    def initial_state(self, y0: IntervalVector) -> tuple[IntervalVector, Interval | None]:
        """Compactified initial point (x0, s0) from original coordinates."""
        if self.kind is CompactificationKind.POINCARE:
            k = sqrt_clamped(ONE + y0.norm_sq())
            x0 = IntervalVector(yi / k for yi in y0)
            s0 = ONE / k if self.has_aux else None
            return x0, s0
        return parabolic_forward(y0), None

    def aux_from_x(self, x0: IntervalVector) -> Interval | None:
        """s = sqrt(1 - |x|^2) for initial points given directly in x."""
        if not self.has_aux:
            return None
        return sqrt_clamped(ONE - x0.norm_sq())


def _one_minus_r2(m: int) -> Polynomial:
    terms = {tuple([0] * m): ONE}
    for i in range(m):
        e = [0] * m
        e[i] = 2
        terms[tuple(e)] = Interval(-1.0)
    return Polynomial(m, terms)


def _one_plus_r2(m: int) -> Polynomial:
    terms = {tuple([0] * m): ONE}
    for i in range(m):
        e = [0] * m
        e[i] = 2
        terms[tuple(e)] = ONE
    return Polynomial(m, terms)


def _radial_component(scaled: PolyVectorField) -> Polynomial:
    """<x, f~(x)> as a polynomial."""
    m = scaled.dim
    acc = Polynomial.zero(m)
    for i, comp in enumerate(scaled.components):
        acc = acc + Polynomial.variable(i, m) * comp
    return acc


def build_normalized(
    field: PolyVectorField, kind: CompactificationKind
) -> CompactifiedSystem:
    """Construct the desingularized system for the chosen compactification."""
    report = check_applicability(field, kind)
    if not report.ok:
        raise NotApplicable(report)
    m = field.dim
    d = field.degree()
    parts = field.homogeneous_parts()
    omr2 = _one_minus_r2(m)

    if kind is CompactificationKind.POINCARE:
        # f~ = sum_j (1 - |x|^2)^((d-j)/2) p_j(x); parity makes every exponent
        # an integer, so the scaled field is polynomial in x alone.
        scaled_comps = [Polynomial.zero(m) for _ in range(m)]
        for j, part in enumerate(parts):
            if part.is_zero():
                continue
            w = omr2.pow((d - j) // 2)
            for i in range(m):
                scaled_comps[i] = scaled_comps[i] + w * part.components[i]
        scaled = PolyVectorField(scaled_comps)
        radial = _radial_component(scaled)
        normalized = PolyVectorField(
            [
                scaled.components[i] - radial * Polynomial.variable(i, m)
                for i in range(m)
            ]
        )
        has_aux = d % 2 == 0
        if has_aux:
            # Augmented variables: x_1..x_m, s, t.
            n = m + 2
            idx_s, idx_t = m, m + 1
            xmap = list(range(m))
            g_aug = [p.embed(n, xmap) for p in normalized.components]
            s_eq = -(Polynomial.variable(idx_s, n) * radial.embed(n, xmap))
            time_factor = Polynomial.variable(idx_s, n) * omr2.pow((d - 2) // 2).embed(n, xmap)
            aug = PolyVectorField(g_aug + [s_eq, time_factor])
        else:
            n = m + 1
            idx_s, idx_t = None, m
            xmap = list(range(m))
            g_aug = [p.embed(n, xmap) for p in normalized.components]
            time_factor = omr2.pow((d - 1) // 2).embed(n, xmap)
            aug = PolyVectorField(g_aug + [time_factor])
    else:
        # Parabolic: f~ = sum_j (1 - R^2)^(d-j) p_j(x); always polynomial.
        scaled_comps = [Polynomial.zero(m) for _ in range(m)]
        for j, part in enumerate(parts):
            if part.is_zero():
                continue
            w = omr2.pow(d - j)
            for i in range(m):
                scaled_comps[i] = scaled_comps[i] + w * part.components[i]
        scaled = PolyVectorField(scaled_comps)
        radial = _radial_component(scaled)
        opr2 = _one_plus_r2(m)
        two = Polynomial.constant(m, 2.0)
        normalized = PolyVectorField(
            [
                opr2 * scaled.components[i]
                - two * radial * Polynomial.variable(i, m)
                for i in range(m)
            ]
        )
        n = m + 1
        idx_s, idx_t = None, m
        xmap = list(range(m))
        g_aug = [p.embed(n, xmap) for p in normalized.components]
        time_factor = (omr2.pow(d - 1) * opr2).embed(n, xmap)
        aug = PolyVectorField(g_aug + [time_factor])
        has_aux = False

    jac = tuple(tuple(row) for row in normalized.jacobian())
    return CompactifiedSystem(
        kind=kind,
        dim=m,
        degree=d,
        original=field,
        scaled=scaled,
        normalized=normalized,
        radial=radial,
        has_aux=has_aux,
        aug_field=aug,
        time_factor=time_factor,
        idx_s=idx_s,
        idx_t=idx_t,
        jac_normalized=jac,
    )


def raw_system(field: PolyVectorField) -> CompactifiedSystem:
    """Wrap an arbitrary polynomial field for direct integration in tau-time.

    Test/diagnostic helper: no compactification, time factor identically 1,
    so t and tau coincide.
    """
    m = field.dim
    n = m + 1
    xmap = list(range(m))
    aug = PolyVectorField(
        [p.embed(n, xmap) for p in field.components]
        + [Polynomial.constant(n, 1.0)]
    )
    jac = tuple(tuple(row) for row in field.jacobian())
    return CompactifiedSystem(
        kind=CompactificationKind.PARABOLIC,
        dim=m,
        degree=field.degree(),
        original=field,
        scaled=field,
        normalized=field,
        radial=_radial_component(field),
        has_aux=False,
        aug_field=aug,
        time_factor=Polynomial.constant(n, 1.0),
        idx_s=None,
        idx_t=m,
        invariant_unit_ball=False,
        jac_normalized=jac,
    )


# ---------------------------------------------------------------------------
# Admissibility spot checks


@dataclass(frozen=True)
class AdmissibilitySample:
    point: tuple[float, ...]
    bound_ok: bool  # (A0) kappa(y) > |y|, rigorous
    radial_ok: bool  # (A3) <y, grad kappa(y)> < kappa(y), rigorous


@dataclass(frozen=True)
class AdmissibilityReport:
    kind: CompactificationKind
    samples: tuple[AdmissibilitySample, ...]
    all_ok: bool
    # Nonrigorous large-norm trend diagnostics for the asymptotic conditions
    # (A1) kappa = O(|y|) and (A2) grad kappa ~ y/|y|.
    growth_ratios: tuple[float, ...]
    gradient_alignments: tuple[float, ...]


def admissibility_spotcheck(
    kind: CompactificationKind, samples: list[list[float]]
) -> AdmissibilityReport:
    results = []
    for pt in samples:
        y = IntervalVector.from_floats(pt)
        k = kappa(kind, y)
        norm = sqrt_clamped(y.norm_sq())
        rad = kappa_radial_derivative(kind, y)
        results.append(
            AdmissibilitySample(
                point=tuple(float(v) for v in pt),
                bound_ok=k.lo > norm.hi,
                radial_ok=rad.hi < k.lo,
            )
        )
    # Trend diagnostics at scaled-up copies of the sample set (floats only).
    ratios = []
    aligns = []
    for pt in samples:
        v = np.asarray(pt, dtype=float)
        if np.linalg.norm(v) == 0.0:
            continue
        big = v * (1e6 / np.linalg.norm(v))
        y = IntervalVector.from_floats(big.tolist())
        k = kappa(kind, y).midpoint()
        ratios.append(k / float(np.linalg.norm(big)))
        rad = kappa_radial_derivative(kind, y).midpoint()
        aligns.append(rad / k)
    return AdmissibilityReport(
        kind=kind,
        samples=tuple(results),
        all_ok=all(s.bound_ok and s.radial_ok for s in results),
        growth_ratios=tuple(ratios),
        gradient_alignments=tuple(aligns),
    )
