import math

import mpmath
import numpy as np
import pytest

from blowup.compactification import (
    CompactificationKind,
    build_normalized,
    raw_system,
)
from blowup.integrator import (
    AugmentedState,
    EnclosureFailure,
    IntegrationControls,
    a_priori_enclosure,
    integrate_until_entry,
)
from blowup.intervals import Interval, IntervalVector
from blowup.polynomials import Polynomial, PolyVectorField

POINCARE = CompactificationKind.POINCARE


def poly(nvars, terms):
    return Polynomial(nvars, {tuple(e): Interval(c) for e, c in terms.items()})


def state_from_floats(sys, xs, s=None, t=0.0):
    return AugmentedState(
        x=IntervalVector.from_floats(xs),
        s=None if s is None else Interval(s),
        t=Interval(t),
        tau=Interval(0.0),
    )


class TestAPrioriEnclosure:
    def test_zero_field(self):
        sys = raw_system(PolyVectorField([Polynomial.zero(1)]))
        box = IntervalVector.from_floats([1.0, 0.0])
        B = a_priori_enclosure(sys, box, 0.5)
        # x stays put; t advances by up to 0.5.
        assert B[0].contains(1.0) and B[0].width() < 1e-8
        assert B[1].contains(0.5)

    def test_square_growth(self):
        sys = raw_system(PolyVectorField([poly(1, {(2,): 1.0})]))
        box = IntervalVector.from_floats([1.0, 0.0])
        B = a_priori_enclosure(sys, box, 0.1)
        # Exact flow reaches 1/(1-0.1) ~ 1.111: enclosure must cover it.
        assert B[0].lo <= 1.0 and B[0].hi >= 1.0 / 0.9

    def test_huge_step_fails(self):
        sys = raw_system(PolyVectorField([poly(1, {(2,): 1.0})]))
        box = IntervalVector.from_floats([1.0, 0.0])
        with pytest.raises(EnclosureFailure):
            a_priori_enclosure(sys, box, 5.0)  # beyond the blow-up of x' = x^2


class TestLinearOracle:
    def test_exponential_decay(self):
        sys = raw_system(PolyVectorField([poly(1, {(1,): -1.0})]))
        x0 = state_from_floats(sys, [1.0])
        traj = integrate_until_entry(sys, x0, None, 1.0)
        assert traj.reason == "TauBudget"
        terminal = traj.terminal
        assert terminal.x[0].contains(math.exp(-1.0))
        assert terminal.x[0].width() < 1e-10
        # Identity time factor: t tracks tau.
        assert terminal.t.contains(1.0)

    def test_rotation_keeps_norm(self):
        # x' = -y, y' = x: rotation is the classic wrapping stress test.
        sys = raw_system(
            PolyVectorField([poly(2, {(0, 1): -1.0}), poly(2, {(1, 0): 1.0})])
        )
        x0 = state_from_floats(sys, [1.0, 0.0])
        traj = integrate_until_entry(sys, x0, None, 2.0 * math.pi)
        terminal = traj.terminal
        assert terminal.x[0].contains(1.0)
        assert terminal.x[1].contains(0.0)
        # QR wrapping control keeps the full-turn enclosure tight.
        assert terminal.x[0].width() < 1e-8
        assert terminal.x[1].width() < 1e-8

    def test_budget_zero(self):
        sys = raw_system(PolyVectorField([poly(1, {(1,): -1.0})]))
        x0 = state_from_floats(sys, [1.0])
        traj = integrate_until_entry(sys, x0, None, 0.0)
        assert traj.reason == "TauBudget"
        assert traj.terminal.x[0] == Interval(1.0)


def tau_of_x(x):
    """Inverse of the compactified scalar flow: tau(x) for x' = x^2 - x^4.

    Separation of variables gives tau = [-1/x + atanh(x)] - [same at x0].
    """
    x0 = mpmath.mpf(1) / mpmath.sqrt(17)
    return float((-1 / mpmath.mpf(x) + mpmath.atanh(mpmath.mpf(x))) - (-1 / x0 + mpmath.atanh(x0)))


def t_of_x(x):
    """Original time along the same trajectory: t = 4 - sqrt(1 - x^2)/x."""
    return float(4 - mpmath.sqrt(1 - mpmath.mpf(x) ** 2) / mpmath.mpf(x))


class TestCompactifiedScalarOracle:
    def setup_method(self):
        F = PolyVectorField([poly(1, {(2,): 1.0})])
        self.sys = build_normalized(F, POINCARE)
        y0 = IntervalVector.from_floats([0.25])
        x0, s0 = self.sys.initial_state(y0)
        self.x0 = AugmentedState(x=x0, s=s0, t=Interval(0.0), tau=Interval(0.0))

    def test_containment_at_step_checkpoints(self):
        traj = integrate_until_entry(
            self.sys, self.x0, None, 15.0, IntegrationControls(h_max=0.25)
        )
        assert traj.reason == "TauBudget"
        checked = 0
        for rec in traj.steps:
            xe = rec.tight.x[0]
            # tau(x) is increasing: the exact trajectory passes through the
            # x-enclosure within the step's tau window iff these overlap.
            assert tau_of_x(xe.lo) <= rec.tau.hi + 1e-9
            assert tau_of_x(xe.hi) >= rec.tau.lo - 1e-9
            # Same check for the accumulated original time.
            te = rec.tight.t
            assert t_of_x(xe.lo) <= te.hi + 1e-9
            assert t_of_x(xe.hi) >= te.lo - 1e-9
            checked += 1
        assert checked >= 50

    def test_terminal_near_boundary_matches_paper_scale(self):
        traj = integrate_until_entry(self.sys, self.x0, None, 15.0)
        xe = traj.terminal.x[0]
        assert xe.hi < 1.0
        assert xe.lo > 0.999999999
        # Reference enclosure at tau_N = 15 is ~ 1 - 5.888e-11 wide ~ 4e-15.
        assert xe.width() < 1e-12
        # t_N approaches the true blow-up time 4 from below.
        assert 3.999 < traj.terminal.t.lo < traj.terminal.t.hi < 4.0001

    def test_manifold_defect_contains_zero(self):
        traj = integrate_until_entry(self.sys, self.x0, None, 10.0)
        prev_width = 0.0
        for rec in traj.steps:
            s = rec.tight.s
            defect = s * s + rec.tight.x.norm_sq() - Interval(1.0)
            assert defect.contains(0.0)
            # Width growth stays below 1e-10 per step.
            assert defect.width() - prev_width < 1e-10
            prev_width = defect.width()

    def test_t_monotone_nondecreasing(self):
        traj = integrate_until_entry(self.sys, self.x0, None, 10.0)
        prev_lo = 0.0
        for rec in traj.steps:
            assert rec.tight.t.lo >= prev_lo - 1e-15
            prev_lo = rec.tight.t.lo

    def test_unit_ball_forward_invariant(self):
        traj = integrate_until_entry(self.sys, self.x0, None, 15.0)
        for rec in traj.steps:
            assert rec.tight.x.norm_sq().hi <= 1.0 + 1e-12

    def test_tolerance_refinement_nested(self):
        loose = integrate_until_entry(
            self.sys, self.x0, None, 5.0, IntegrationControls(tol=1e-10)
        )
        tight = integrate_until_entry(
            self.sys, self.x0, None, 5.0, IntegrationControls(tol=1e-15)
        )
        lo_x = loose.terminal.x[0]
        ti_x = tight.terminal.x[0]
        assert ti_x.width() <= lo_x.width() + 1e-15
        assert not lo_x.intersect(ti_x).is_empty
