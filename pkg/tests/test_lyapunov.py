import math
import random

import numpy as np
import pytest

from blowup.compactification import CompactificationKind, build_normalized
from blowup.equilibria import krawczyk_verify
from blowup.intervals import Interval, IntervalMatrix, IntervalVector
from blowup.linalg import symmetric_eig_range, verified_inverse
from blowup.lyapunov import (
    NearImaginaryAxis,
    NotNegativeDefinite,
    build_Y,
    eval_L,
    sublevel_inside_box,
    verify_domain,
)
from blowup.polynomials import Polynomial, PolyVectorField

POINCARE = CompactificationKind.POINCARE


def poly(nvars, terms):
    return Polynomial(nvars, {tuple(e): Interval(c) for e, c in terms.items()})


def square_system():
    return build_normalized(PolyVectorField([poly(1, {(2,): 1.0})]), POINCARE)


def spiral_system(a=-1.5, b=1.0, c=-1.25):
    F = PolyVectorField(
        [
            poly(3, {(1, 0, 1): a - c, (0, 1, 1): -b}),
            poly(3, {(1, 0, 1): b, (0, 1, 1): a - c}),
            poly(3, {(0, 0, 2): -c}),
        ]
    )
    return build_normalized(F, POINCARE)


class TestVerifiedLinalg:
    def test_verified_inverse_contains_exact(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        inv = verified_inverse(A)
        exact = np.linalg.inv(A)
        for i in range(2):
            for j in range(2):
                assert inv[i, j].contains(exact[i, j])

    def test_eig_range_diagonal(self):
        M = IntervalMatrix.from_floats([[1.0, 0.0], [0.0, 4.0]])
        lam_min, lam_max = symmetric_eig_range(M)
        assert lam_min.contains(1.0)
        assert lam_max.contains(4.0)

    def test_eig_range_random_symmetric(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            A = rng.normal(size=(n, n))
            A = (A + A.T) / 2.0
            lam_min, lam_max = symmetric_eig_range(IntervalMatrix.from_floats(A.tolist()))
            evs = np.linalg.eigvalsh(A)
            assert lam_min.lo - 1e-10 <= evs[0] <= lam_min.hi + 1e-10
            assert lam_max.lo - 1e-10 <= evs[-1] <= lam_max.hi + 1e-10


class TestBuildY:
    def test_scalar_negative(self):
        Y = build_Y(IntervalMatrix.from_floats([[-2.0]]))
        # Unit-normalized eigenvector gives Y = 1.
        assert Y[0, 0].contains(1.0)
        assert Y[0, 0].width() < 1e-12

    def test_diagonal_stable(self):
        Y = build_Y(IntervalMatrix.from_floats([[-1.0, 0.0], [0.0, -3.0]]))
        assert Y[0, 0].contains(1.0) and Y[1, 1].contains(1.0)
        assert abs(Y[0, 1].midpoint()) < 1e-12

    def test_spiral_block_identity(self):
        # Normal matrix: unitary eigenvectors, so Y is (up to floating error)
        # the identity and A = Dg^T Y + Y Dg = 2a Y is negative definite.
        a, b = -1.5, 1.0
        Y = build_Y(IntervalMatrix.from_floats([[a, -b], [b, a]]))
        assert Y[0, 0].midpoint() == pytest.approx(1.0, abs=1e-12)
        assert Y[1, 1].midpoint() == pytest.approx(1.0, abs=1e-12)
        assert abs(Y[0, 1].midpoint()) < 1e-12
        Ymat = np.array(Y.midpoint())
        Dg = np.array([[a, -b], [b, a]])
        A = Dg.T @ Ymat + Ymat @ Dg
        assert np.all(np.linalg.eigvalsh(A) < 0)

    def test_near_imaginary_axis_rejected(self):
        with pytest.raises(NearImaginaryAxis):
            build_Y(IntervalMatrix.from_floats([[0.0, -1.0], [1.0, 0.0]]))

    def test_mixed_signs_orientation(self):
        Y = build_Y(IntervalMatrix.from_floats([[-1.0, 0.0], [0.0, 2.0]]))
        assert Y[0, 0].contains(1.0)
        assert Y[1, 1].contains(-1.0)


class TestEvalL:
    def test_at_center_degenerate(self):
        Y = IntervalMatrix.from_floats([[1.0]])
        x_star = IntervalVector.from_floats([1.0])
        L = eval_L(Y, x_star, x_star)
        assert L.contains(0.0)
        assert L.width() == 0.0

    def test_identity_is_squared_distance(self):
        Y = IntervalMatrix.identity(2)
        x_star = IntervalVector.from_floats([0.0, 0.0])
        x = IntervalVector.from_floats([0.3, 0.4])
        L = eval_L(Y, x_star, x)
        assert L.contains(0.25)
        assert L.width() < 1e-15

    def test_paper_scale_entry_value(self):
        # Terminal enclosure from the scalar benchmark: L ~ 3.47e-21 < 1e-20.
        Y = IntervalMatrix.from_floats([[1.0]])
        x_star = IntervalVector([Interval(1.0)])
        x = IntervalVector([Interval(0.999999999941121, 0.999999999941125)])
        L = eval_L(Y, x_star, x)
        assert 3.0e-21 < L.lo < L.hi < 1e-20

    def test_uses_box_not_midpoint(self):
        Y = IntervalMatrix.from_floats([[1.0]])
        x_star = IntervalVector([Interval(0.99, 1.01)])
        x = IntervalVector([Interval(1.0)])
        L = eval_L(Y, x_star, x)
        assert L.contains(0.0) and L.hi >= 1e-4


class TestSublevelInclusion:
    def test_identity_ball(self):
        rec = sublevel_inside_box(Interval(1.0), Interval(0.1))
        assert rec.half_width >= 0.1
        assert rec.half_width < 0.1 + 1e-12

    def test_diag_one_four(self):
        # Y = diag(1, 4): lambda_min = 1, ellipse {x^2 + 4 y^2 <= 1} in box +-1.
        lam_min, _ = symmetric_eig_range(IntervalMatrix.from_floats([[1.0, 0.0], [0.0, 4.0]]))
        inv = Interval(1.0) / lam_min
        rec = sublevel_inside_box(inv, Interval(1.0))
        assert rec.half_width >= 1.0

    def test_randomized_rejection_sampling(self):
        rng = random.Random(100)
        for _ in range(20):
            a = rng.uniform(0.5, 3.0)
            b = rng.uniform(-0.4, 0.4)
            c = rng.uniform(0.5, 3.0)
            Y = np.array([[a, b], [b, c]])
            if np.min(np.linalg.eigvalsh(Y)) <= 1e-3:
                continue
            Ym = IntervalMatrix.from_floats(Y.tolist())
            lam_min, _ = symmetric_eig_range(Ym)
            eps = rng.uniform(0.1, 1.0)
            rec = sublevel_inside_box(Interval(1.0) / lam_min, Interval(eps))
            for _ in range(200):
                v = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2)])
                if v @ Y @ v <= eps**2:
                    assert np.max(np.abs(v)) <= rec.half_width + 1e-12


class TestVerifyDomain:
    def test_scalar_benchmark_constants(self):
        sys = square_system()
        eq = krawczyk_verify(sys, [1.0], 1e-3)
        Y = build_Y(IntervalMatrix.from_floats([[-2.0]]))
        cert = verify_domain(sys, eq, Y, 1e-10)
        assert cert.inv_lambda_min.contains(1.0)
        assert cert.inv_lambda_min.hi < 1.0 + 1e-9
        # A(x) = 2(2x - 4x^3) ~ -4 near x* = 1.
        assert cert.decay_min.lo > 3.9
        assert cert.decay_min.lo < 4.0
        assert cert.stable

    def test_spiral_constants(self):
        sys = spiral_system()
        eq = krawczyk_verify(sys, [0.0, 0.0, 1.0], 1e-3)
        dg = IntervalMatrix(
            [
                [sys.jac_normalized[i][j].eval(eq.box) for j in range(3)]
                for i in range(3)
            ]
        )
        Y = build_Y(dg)
        cert = verify_domain(sys, eq, Y, 1e-10)
        # A ~ diag-blocks {2a, 2a, 4c} = {-3, -3, -5}: decay_min ~ 3.
        assert 2.9 < cert.decay_min.lo <= 3.01
        assert cert.stable

    def test_too_large_epsilon_fails(self):
        sys = square_system()
        eq = krawczyk_verify(sys, [1.0], 1e-3)
        Y = build_Y(IntervalMatrix.from_floats([[-2.0]]))
        with pytest.raises(NotNegativeDefinite):
            verify_domain(sys, eq, Y, 0.9, subdivide_depth=0)

    def test_monotone_decay_with_epsilon(self):
        sys = square_system()
        eq = krawczyk_verify(sys, [1.0], 1e-3)
        Y = build_Y(IntervalMatrix.from_floats([[-2.0]]))
        decays = []
        for eps in (1e-2, 1e-4, 1e-8):
            cert = verify_domain(sys, eq, Y, eps)
            decays.append(cert.decay_min.lo)
        assert decays == sorted(decays)

    def test_gershgorin_certificate_matches_dense_eigensolver(self):
        sys = spiral_system()
        eq = krawczyk_verify(sys, [0.0, 0.0, 1.0], 1e-3)
        dg = IntervalMatrix(
            [
                [sys.jac_normalized[i][j].eval(eq.box) for j in range(3)]
                for i in range(3)
            ]
        )
        Y = build_Y(dg)
        cert = verify_domain(sys, eq, Y, 1e-8)
        # Floating eigenvalues of the midpoint A over the domain all lie
        # below -decay_min.
        x = np.array(cert.domain_box.midpoint())
        J = np.array(
            [[sys.jac_normalized[i][j].eval_float(x) for j in range(3)] for i in range(3)]
        )
        Ym = np.array(cert.Y.midpoint())
        A = J.T @ Ym + Ym @ J
        assert np.max(np.linalg.eigvalsh(A)) <= -cert.decay_min.lo + 1e-9

    def test_decrease_along_field_samples(self):
        # grad L . g(x) <= -decay_min |x - x*|^2 for sampled boxes in the domain.
        sys = square_system()
        eq = krawczyk_verify(sys, [1.0], 1e-3)
        Y = build_Y(IntervalMatrix.from_floats([[-2.0]]))
        cert = verify_domain(sys, eq, Y, 1e-4)
        rng = random.Random(4)
        for _ in range(50):
            lo = rng.uniform(cert.domain_box[0].lo, cert.domain_box[0].hi)
            x = IntervalVector([Interval(lo)])
            v = x - eq.box
            g = sys.normalized.eval(x)
            dL = Interval(2.0) * v[0] * Y[0, 0] * g[0]
            bound = -cert.decay_min * v.norm_sq()
            assert dL.lo <= bound.hi + 1e-18
