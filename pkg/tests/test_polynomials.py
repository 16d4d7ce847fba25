import math
import random

import numpy as np
import pytest

from blowup.intervals import DimensionMismatch, Interval, IntervalVector
from blowup.polynomials import (
    Polynomial,
    PolyVectorField,
    compose_scale,
    taylor_recurrence_step,
)


def iv(lo, hi=None):
    return Interval(lo, hi)


def poly(nvars, terms):
    return Polynomial(nvars, {tuple(e): iv(c) for e, c in terms.items()})


def test_canonical_merge():
    p = Polynomial(1, {(2,): iv(1.0)}) + Polynomial(1, {(2,): iv(2.0)})
    assert p.terms == {(2,): iv(3.0)}
    assert (p - p).is_zero()


def test_degree():
    p = poly(2, {(1, 2): 1.0, (0, 1): -4.0})
    assert p.degree() == 3


class TestEval:
    def test_square(self):
        p = poly(1, {(2,): 1.0})
        assert p.eval(IntervalVector.from_floats([2.0])) == iv(4.0)

    def test_circle_at_ones(self):
        # y1^2 + y2^2 - 1 at (1, 1)
        p = poly(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0})
        assert p.eval(IntervalVector.from_floats([1.0, 1.0])) == iv(1.0)

    def test_vanishing_at_critical_point(self):
        # x^2 - x^4 at x = 1
        p = poly(1, {(2,): 1.0, (4,): -1.0})
        assert p.eval(IntervalVector.from_floats([1.0])) == iv(0.0)

    def test_dimension_mismatch(self):
        p = poly(2, {(1, 0): 1.0})
        with pytest.raises(DimensionMismatch):
            p.eval(IntervalVector.from_floats([1.0]))

    def test_range_containment_random(self):
        rng = random.Random(5)
        p = poly(2, {(2, 1): 1.5, (1, 0): -0.5, (0, 0): 0.25, (0, 3): 2.0})
        for _ in range(300):
            box = IntervalVector(
                [
                    iv(rng.uniform(-2, 0), rng.uniform(0, 2)),
                    iv(rng.uniform(-2, 0), rng.uniform(0, 2)),
                ]
            )
            enc = p.eval(box)
            for _ in range(10):
                x = np.array(
                    [rng.uniform(box[0].lo, box[0].hi), rng.uniform(box[1].lo, box[1].hi)]
                )
                val = 1.5 * x[0] ** 2 * x[1] - 0.5 * x[0] + 0.25 + 2.0 * x[1] ** 3
                assert enc.lo - 1e-9 <= val <= enc.hi + 1e-9


class TestJacobian:
    def test_scalar(self):
        F = PolyVectorField([poly(1, {(2,): 1.0})])
        J = F.jacobian()
        assert J[0][0] == poly(1, {(1,): 2.0})

    def test_normalized_scalar_field(self):
        # d/dx (x^2 - x^4) = 2x - 4x^3, equal to -2 at x = 1
        F = PolyVectorField([poly(1, {(2,): 1.0, (4,): -1.0})])
        J = F.jacobian()
        val = J[0][0].eval(IntervalVector.from_floats([1.0]))
        assert val == iv(-2.0)

    def test_finite_difference_agreement(self):
        rng = random.Random(17)
        F = PolyVectorField(
            [
                poly(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}),
                poly(2, {(1, 1): 5.0, (0, 0): -5.0}),
            ]
        )
        J = F.jacobian()
        h = 1e-6
        for _ in range(50):
            x = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1)])
            for i in range(2):
                for j in range(2):
                    xp = x.copy()
                    xm = x.copy()
                    xp[j] += h
                    xm[j] -= h
                    fd = (F.components[i].eval_float(xp) - F.components[i].eval_float(xm)) / (2 * h)
                    sym = J[i][j].eval_float(x)
                    assert fd == pytest.approx(sym, rel=1e-6, abs=1e-6)


class TestHomogeneousParts:
    def test_square_field(self):
        F = PolyVectorField([poly(1, {(2,): 1.0})])
        parts = F.homogeneous_parts()
        assert parts[0].is_zero() and parts[1].is_zero()
        assert parts[2].components[0] == poly(1, {(2,): 1.0})

    def test_two_dim_example(self):
        F = PolyVectorField(
            [
                poly(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}),
                poly(2, {(1, 1): 5.0, (0, 0): -5.0}),
            ]
        )
        parts = F.homogeneous_parts()
        assert parts[0].components[0] == poly(2, {(0, 0): -1.0})
        assert parts[0].components[1] == poly(2, {(0, 0): -5.0})
        assert parts[1].is_zero()
        assert parts[2].components[0] == poly(2, {(2, 0): 1.0, (0, 2): 1.0})
        assert parts[2].components[1] == poly(2, {(1, 1): 5.0})

    def test_riccati_lower_part_nonzero(self):
        # y1' = y1^2 + y2, y2' = 1: p_1 = (y2, 0) is nonzero while d = 2.
        F = PolyVectorField(
            [poly(2, {(2, 0): 1.0, (0, 1): 1.0}), poly(2, {(0, 0): 1.0})]
        )
        parts = F.homogeneous_parts()
        assert not parts[1].is_zero()
        assert parts[1].components[0] == poly(2, {(0, 1): 1.0})
        assert F.degree() == 2

    def test_sum_of_parts_equals_field(self):
        F = PolyVectorField(
            [poly(2, {(2, 0): 1.0, (0, 1): 1.0}), poly(2, {(0, 0): 1.0})]
        )
        total = [Polynomial.zero(2), Polynomial.zero(2)]
        for part in F.homogeneous_parts():
            total = [t + c for t, c in zip(total, part.components)]
        for t, c in zip(total, F.components):
            assert t == c

    def test_homogeneous_scaling_property(self):
        rng = random.Random(3)
        F = PolyVectorField(
            [
                poly(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}),
                poly(2, {(1, 1): 5.0, (0, 0): -5.0}),
            ]
        )
        parts = F.homogeneous_parts()
        for _ in range(30):
            lam = rng.uniform(0.5, 2.0)
            x = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1)])
            for j, part in enumerate(parts):
                for comp in part.components:
                    lhs = comp.eval_float(lam * x)
                    rhs = lam**j * comp.eval_float(x)
                    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


class TestComposeScale:
    def test_identity_substitution(self):
        F = PolyVectorField([poly(1, {(2,): 1.0, (1,): -0.5})])
        sub = [Polynomial.variable(0, 1)]
        assert compose_scale(F, sub).components[0] == F.components[0]

    def test_scaled_square(self):
        # f = y^2 over homogeneous scaling: the degree-2 part composed with
        # y -> x and multiplied by 1 reproduces x^2 (see compactification
        # construction, which uses homogeneous parts to avoid 1/s powers).
        F = PolyVectorField([poly(1, {(2,): 1.0})])
        top = F.homogeneous_parts()[2]
        # f~ built as sum_j s^(d-j) p_j(x) has only the j = d term here.
        assert top.components[0] == poly(1, {(2,): 1.0})

    def test_multiplier(self):
        F = PolyVectorField([poly(1, {(1,): 1.0})])
        mult = poly(1, {(2,): 1.0})
        out = compose_scale(F, [Polynomial.variable(0, 1)], mult)
        assert out.components[0] == poly(1, {(3,): 1.0})

    def test_embedding(self):
        p = poly(1, {(2,): 3.0})
        q = p.embed(3, [1])
        assert q == poly(3, {(0, 2, 0): 3.0})


class TestTaylorRecurrence:
    def test_geometric_series(self):
        # x' = x^2, x(0) = 1 has solution 1/(1 - t): coefficients all 1.
        F = PolyVectorField([poly(1, {(2,): 1.0})])
        coeffs = [IntervalVector.from_floats([1.0])]
        for k in range(8):
            coeffs.append(taylor_recurrence_step(F, coeffs, k))
        for c in coeffs:
            assert c[0] == iv(1.0)

    def test_zero_field(self):
        F = PolyVectorField([Polynomial.zero(1)])
        coeffs = [IntervalVector.from_floats([3.0])]
        for k in range(5):
            coeffs.append(taylor_recurrence_step(F, coeffs, k))
        for c in coeffs[1:]:
            assert c[0] == iv(0.0)

    def test_exponential_series(self):
        F = PolyVectorField([poly(1, {(1,): 1.0})])
        coeffs = [IntervalVector.from_floats([1.0])]
        for k in range(10):
            coeffs.append(taylor_recurrence_step(F, coeffs, k))
        for k, c in enumerate(coeffs):
            expect = 1.0 / math.factorial(k)
            assert c[0].contains(expect)
            assert c[0].width() <= (4 * k + 4) * math.ulp(expect)

    def test_two_dim_rotation(self):
        # x' = -y, y' = x from (1, 0): x(t) = cos t, y(t) = sin t.
        F = PolyVectorField(
            [poly(2, {(0, 1): -1.0}), poly(2, {(1, 0): 1.0})]
        )
        coeffs = [IntervalVector.from_floats([1.0, 0.0])]
        for k in range(8):
            coeffs.append(taylor_recurrence_step(F, coeffs, k))
        # cos: 1, 0, -1/2, 0, 1/24 ; sin: 0, 1, 0, -1/6, 0
        assert coeffs[2][0].contains(-0.5)
        assert coeffs[3][1].contains(-1.0 / 6.0)
        assert coeffs[4][0].contains(1.0 / 24.0)
