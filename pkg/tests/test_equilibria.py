import math

import numpy as np
import pytest

from blowup.compactification import CompactificationKind, build_normalized
from blowup.equilibria import (
    EquilibriumError,
    SingularApproximateJacobian,
    VerificationFailed,
    characteristic_residual,
    default_sphere_seeds,
    find_boundary_equilibrium,
    krawczyk_verify,
    newton_candidates,
)
from blowup.intervals import Interval, IntervalVector
from blowup.polynomials import Polynomial, PolyVectorField

POINCARE = CompactificationKind.POINCARE


def poly(nvars, terms):
    return Polynomial(nvars, {tuple(e): Interval(c) for e, c in terms.items()})


def square_field():
    return PolyVectorField([poly(1, {(2,): 1.0})])


def two_dim_field():
    return PolyVectorField(
        [
            poly(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}),
            poly(2, {(1, 1): 5.0, (0, 0): -5.0}),
        ]
    )


def spiral_field(a=-1.5, b=1.0, c=-1.25):
    return PolyVectorField(
        [
            poly(3, {(1, 0, 1): a - c, (0, 1, 1): -b}),
            poly(3, {(1, 0, 1): b, (0, 1, 1): a - c}),
            poly(3, {(0, 0, 2): -c}),
        ]
    )


SQRT5 = math.sqrt(5.0)
SIX_POINTS = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (1.0 / SQRT5, 2.0 / SQRT5),
    (-1.0 / SQRT5, -2.0 / SQRT5),
    (1.0 / SQRT5, -2.0 / SQRT5),
    (-1.0 / SQRT5, 2.0 / SQRT5),
]


class TestCharacteristicResidual:
    def test_square_field_at_one(self):
        r = characteristic_residual(square_field(), IntervalVector.from_floats([1.0]))
        assert r[0] == Interval(0.0)

    def test_two_dim_at_known_point(self):
        x = IntervalVector.from_floats([1.0 / SQRT5, 2.0 / SQRT5])
        r = characteristic_residual(two_dim_field(), x)
        for comp in r:
            assert abs(comp.midpoint()) < 1e-14
            assert comp.contains(0.0) or comp.width() < 1e-13

    def test_antipodal_point(self):
        x = IntervalVector.from_floats([-1.0 / SQRT5, -2.0 / SQRT5])
        r = characteristic_residual(two_dim_field(), x)
        for comp in r:
            assert abs(comp.midpoint()) < 1e-14


class TestNewtonCandidates:
    def test_square_field_from_seed(self):
        sys = build_normalized(square_field(), POINCARE)
        cands = newton_candidates(sys, [np.array([0.9])])
        assert len(cands) == 1
        assert cands[0][0] == pytest.approx(1.0, abs=1e-9)

    def test_two_dim_six_points(self):
        sys = build_normalized(two_dim_field(), POINCARE)
        cands = newton_candidates(sys, default_sphere_seeds(2, 64))
        on_sphere = [c for c in cands if abs(np.linalg.norm(c) - 1.0) < 1e-6]
        assert len(on_sphere) == 6
        for expect in SIX_POINTS:
            assert any(np.linalg.norm(c - np.array(expect)) < 1e-6 for c in on_sphere)

    def test_empty_seeds(self):
        sys = build_normalized(square_field(), POINCARE)
        assert newton_candidates(sys, []) == []


class TestKrawczyk:
    def test_square_field_unique_enclosure(self):
        sys = build_normalized(square_field(), POINCARE)
        enc = krawczyk_verify(sys, [1.0], 1e-3)
        assert enc.unique
        assert enc.box[0].contains(1.0)
        assert enc.box[0].width() < 1e-12
        assert enc.residual[0].contains(0.0)
        assert enc.on_boundary

    def test_spiral_exact_zero(self):
        sys = build_normalized(spiral_field(), POINCARE)
        enc = krawczyk_verify(sys, [0.0, 0.0, 1.0], 1e-3)
        assert enc.unique
        assert enc.box[2].contains(1.0)
        for r in enc.residual:
            assert r.contains(0.0)
        assert enc.on_boundary

    def test_degenerate_center_fails(self):
        sys = build_normalized(square_field(), POINCARE)
        with pytest.raises((SingularApproximateJacobian, VerificationFailed)):
            krawczyk_verify(sys, [0.0], 1e-3)

    def test_verified_box_residual_contains_zero(self):
        sys = build_normalized(two_dim_field(), POINCARE)
        for pt in SIX_POINTS:
            try:
                enc = krawczyk_verify(sys, list(pt), 1e-4)
            except EquilibriumError:
                continue
            for r in enc.residual:
                assert r.contains(0.0)
            res = characteristic_residual(two_dim_field(), enc.box)
            for r in res:
                assert r.contains(0.0)

    def test_antipodal_closure(self):
        sys = build_normalized(two_dim_field(), POINCARE)
        a = krawczyk_verify(sys, [1.0 / SQRT5, 2.0 / SQRT5], 1e-4)
        b = krawczyk_verify(sys, [-1.0 / SQRT5, -2.0 / SQRT5], 1e-4)
        assert a.unique and b.unique
        for i in range(2):
            assert (-b.box[i]).intersect(a.box[i]).is_empty is False

    def test_nested_refinement_intersects(self):
        sys = build_normalized(square_field(), POINCARE)
        coarse = krawczyk_verify(sys, [1.0], 1e-2)
        fine = krawczyk_verify(sys, [1.0], 1e-5)
        assert not coarse.box[0].intersect(fine.box[0]).is_empty


class TestFindBoundaryEquilibrium:
    def test_square_field_from_direction(self):
        sys = build_normalized(square_field(), POINCARE)
        enc = find_boundary_equilibrium(sys, np.array([1.0]))
        assert enc.on_boundary and enc.unique

    def test_two_dim_direction_selects_nearest(self):
        sys = build_normalized(two_dim_field(), POINCARE)
        enc = find_boundary_equilibrium(sys, np.array([0.4, 0.9]))
        mid = enc.midpoint()
        assert mid[0] == pytest.approx(1.0 / SQRT5, abs=1e-8)
        assert mid[1] == pytest.approx(2.0 / SQRT5, abs=1e-8)
