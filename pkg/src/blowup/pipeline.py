"""End-to-end blow-up validation: the four-stage scenario and tail bounds.

A run proceeds through: compactification choice and construction; a cheap
nonrigorous simulation to find the escape direction; Krawczyk verification
of the critical point at infinity; validated integration into a Lyapunov
sublevel set; and the tail bound converting the Lyapunov level at entry
into an upper bound on the remaining original time.  Any stage failure
produces a Failed verdict with diagnostics; a BlowUpValidated verdict is
only ever assembled from verified sub-certificates, so false positives
cannot arise from heuristic stages.

The tail bounds follow the level-to-distance chain |x - x*|^2 <=
inv_lambda_min * L and the decay dL/dtau <= -decay_min |x - x*|^2.  The
substitution step needs the opposite-direction estimate |x - x*|^2 >=
L / lambda_max(Y), so the bound carries the factor lambda_max(Y) *
inv_lambda_min (= 1 for well-conditioned Y, as in every benchmark here);
dropping that factor as in the commonly quoted closed form is only valid
when Y has equal eigenvalue bounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .compactification import (
    CompactificationKind,
    CompactifiedSystem,
    NotApplicable,
    build_normalized,
    check_applicability,
)
from .equilibria import (
    EquilibriumEnclosure,
    EquilibriumError,
    find_boundary_equilibrium,
)
from .integrator import (
    AugmentedState,
    IntegrationControls,
    TrajectoryEnclosure,
    integrate_until_entry,
)
from .intervals import (
    Interval,
    IntervalMatrix,
    IntervalVector,
    add_up,
    rational_pow,
    sqrt_up,
)
from .lyapunov import (
    LyapunovCertificate,
    LyapunovError,
    build_Y,
    eval_L,
    verify_domain,
)
from .polynomials import Polynomial, PolyVectorField


class PipelineError(Exception):
    pass


class DegreeTooLow(PipelineError):
    """Tail bound diverges for linear fields (d <= 1)."""


class UnknownProblem(PipelineError):
    pass


class BadParams(PipelineError):
    pass


@dataclass(frozen=True)
class Controls:
    """User-facing knobs; defaults reproduce the benchmark runs."""

    tau_budget: float = 50.0
    order: int = 15
    tol: float = 1e-15
    epsilon: float | None = None  # fixed Lyapunov level; None = adaptive
    seed_direction: list[float] | None = None
    l_target: float = 1e-20  # nonrigorous L threshold picking tau_N
    h_max: float = 0.5


@dataclass(frozen=True)
class Problem:
    field: PolyVectorField
    y0: IntervalVector | None
    kind: str = "auto"  # auto | poincare | parabolic
    controls: Controls = field(default_factory=Controls)
    x0: IntervalVector | None = None  # initial point already compactified
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.y0 is None and self.x0 is None:
            raise ValueError("problem needs y0 (original) or x0 (compactified)")
        if self.y0 is not None and len(self.y0) != self.field.dim:
            raise ValueError("y0 dimension does not match the field")


@dataclass
class StageFailure:
    stage: str
    reason: str


@dataclass
class BlowUpCertificate:
    problem: Problem
    verdict: str  # BlowUpValidated | Failed
    kind: CompactificationKind | None = None
    failure: StageFailure | None = None
    equilibrium: EquilibriumEnclosure | None = None
    lyapunov: LyapunovCertificate | None = None
    trajectory: TrajectoryEnclosure | None = None
    tau_entry: Interval | None = None
    t_entry: Interval | None = None
    level_at_entry: Interval | None = None
    tail: Interval | None = None
    t_max: Interval | None = None
    timings: dict = field(default_factory=dict)

    @property
    def validated(self) -> bool:
        return self.verdict == "BlowUpValidated"


# ---------------------------------------------------------------------------
# Tail bounds


def _tail_common(level: Interval, inv_lambda_min: Interval, decay_min: Interval):
    if level.lo < 0.0:
        level = level.intersect(Interval(0.0, max(level.hi, 0.0)))
    if level.is_empty:
        level = Interval(0.0)
    if inv_lambda_min.lo <= 0.0 or decay_min.lo <= 0.0:
        raise PipelineError("tail bound needs positive certified constants")
    return level


def tail_bound_poincare(
    level: Interval,
    inv_lambda_min: Interval,
    decay_min: Interval,
    degree: int,
    lambda_max: Interval | None = None,
) -> Interval:
    """Upper bound on t_max - t_N under the Poincare compactification.

    2^((d-1)/2) c1^((d-1)/4) lambda_max(Y) (4/(d-1)) L^((d-1)/4) / decay,
    with c1 = inv_lambda_min.  Passing lambda_max=None substitutes the
    lower eigenvalue bound 1/c1 (valid only for equal-eigenvalue Y), which
    recovers the c1^((d-5)/4) closed form.
    """
    if degree <= 1:
        raise DegreeTooLow("tail bound is infinite for degree <= 1 fields")
    level = _tail_common(level, inv_lambda_min, decay_min)
    if lambda_max is None:
        lambda_max = Interval(1.0) / inv_lambda_min
    two_pow = rational_pow(Interval(2.0), degree - 1, 2)
    c1_pow = rational_pow(inv_lambda_min, degree - 1, 4)
    level_pow = rational_pow(level, degree - 1, 4)
    factor = Interval(4.0) / Interval(float(degree - 1))
    upper = (two_pow * c1_pow * lambda_max * factor * level_pow) / decay_min
    return Interval(0.0, upper.hi)


def tail_bound_parabolic(
    level: Interval,
    inv_lambda_min: Interval,
    decay_min: Interval,
    degree: int,
    lambda_max: Interval | None = None,
) -> Interval:
    """Upper bound on t_max - t_N under the parabolic compactification.

    2^d c1^((d-1)/2) lambda_max(Y) (2/(d-1)) L^((d-1)/2) / decay; the
    lambda_max handling matches the Poincare variant.
    """
    if degree <= 1:
        raise DegreeTooLow("tail bound is infinite for degree <= 1 fields")
    level = _tail_common(level, inv_lambda_min, decay_min)
    if lambda_max is None:
        lambda_max = Interval(1.0) / inv_lambda_min
    two_pow = rational_pow(Interval(2.0), degree, 1)
    c1_pow = rational_pow(inv_lambda_min, degree - 1, 2)
    level_pow = rational_pow(level, degree - 1, 2)
    factor = Interval(2.0) / Interval(float(degree - 1))
    upper = (two_pow * c1_pow * lambda_max * factor * level_pow) / decay_min
    return Interval(0.0, upper.hi)


# ---------------------------------------------------------------------------
# Nonrigorous scouting (direction seeds and tau_N selection)


def _rk4_scout(
    sys: CompactifiedSystem,
    x0: np.ndarray,
    tau_budget: float,
    h: float = 0.01,
):
    """Plain RK4 on the normalized field; returns the sampled path."""
    f = sys.normalized.eval_float

    def rhs(x):
        return np.array(f(x))

    path = [x0.copy()]
    x = x0.copy()
    steps = int(tau_budget / h)
    for _ in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            break
        path.append(x.copy())
    return np.array(path), h


def _choose_tau_entry(
    path: np.ndarray,
    h: float,
    x_star: np.ndarray,
    Y: np.ndarray,
    l_target: float,
    tau_budget: float,
) -> float:
    """First sampled tau where the approximate Lyapunov level dips below
    the target (plus margin), capped by the budget."""
    for idx in range(len(path)):
        v = path[idx] - x_star
        if float(v @ Y @ v) < l_target:
            return min(max((idx + 2) * h, 10 * h), tau_budget)
    return tau_budget


# ---------------------------------------------------------------------------
# Built-in benchmark problems


def _poly(nvars, terms):
    return Polynomial(nvars, {tuple(e): Interval(c) for e, c in terms.items()})


def _heat_field(n: int, power: int) -> PolyVectorField:
    """Finite-difference semi-discretized u_t = u_xx + u^power on (0,1).

    Grid spacing 1/n, homogeneous Dirichlet boundary (y_0 = y_n = 0),
    interior unknowns y_1..y_{n-1}.
    """
    m = n - 1
    comps = []
    for k in range(m):
        terms: dict = {}
        e = [0] * m
        e[k] = power
        terms[tuple(e)] = Interval(1.0)
        for j, w in ((k - 1, 1.0), (k, -2.0), (k + 1, 1.0)):
            if 0 <= j < m:
                e = [0] * m
                e[j] = 1
                key = tuple(e)
                c = Interval(w * n * n)
                terms[key] = terms[key] + c if key in terms else c
        comps.append(Polynomial(m, terms))
    return PolyVectorField(comps)


def builtin_problem(name: str, params: dict | None = None) -> Problem:
    """The six benchmark systems, with their reference parameters."""
    params = dict(params or {})

    def take(key, default):
        return params.pop(key, default)

    if name == "ex1":
        a = float(take("a", 0.25))
        if a <= 0.0:
            raise BadParams("ex1 requires a > 0")
        prob = Problem(
            field=PolyVectorField([_poly(1, {(2,): 1.0})]),
            y0=IntervalVector.from_floats([a]),
            kind=str(take("kind", "auto")),
            controls=Controls(tau_budget=float(take("tau_budget", 20.0))),
            name="ex1",
            params={"a": a},
        )
    elif name == "ex2":
        prob = Problem(
            field=PolyVectorField(
                [
                    _poly(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}),
                    _poly(2, {(1, 1): 5.0, (0, 0): -5.0}),
                ]
            ),
            y0=IntervalVector.from_floats([1.0, 1.0]),
            kind=str(take("kind", "auto")),
            controls=Controls(tau_budget=float(take("tau_budget", 10.0))),
            name="ex2",
        )
    elif name == "ex3":
        a = float(take("a", -1.5))
        b = float(take("b", 1.0))
        c = float(take("c", -1.25))
        if a == 0.0 or b == 0.0 or c == 0.0:
            raise BadParams("ex3 requires nonzero a, b, c")
        prob = Problem(
            field=PolyVectorField(
                [
                    _poly(3, {(1, 0, 1): a - c, (0, 1, 1): -b}),
                    _poly(3, {(1, 0, 1): b, (0, 1, 1): a - c}),
                    _poly(3, {(0, 0, 2): -c}),
                ]
            ),
            y0=IntervalVector.from_floats([0.1, 0.1, 0.1]),
            kind=str(take("kind", "auto")),
            controls=Controls(tau_budget=float(take("tau_budget", 25.0))),
            name="ex3",
            params={"a": a, "b": b, "c": c},
        )
    elif name == "riccati":
        # dy/dt = y^2 + t autonomized with y2 = t.
        prob = Problem(
            field=PolyVectorField(
                [_poly(2, {(2, 0): 1.0, (0, 1): 1.0}), _poly(2, {(0, 0): 1.0})]
            ),
            y0=IntervalVector.from_floats([0.5, 0.0]),
            kind=str(take("kind", "auto")),
            controls=Controls(tau_budget=float(take("tau_budget", 10.0))),
            name="riccati",
        )
    elif name in ("heat3", "heat2"):
        n = int(take("n", 4))
        if n < 2:
            raise BadParams("heat problems require n >= 2")
        power = 3 if name == "heat3" else 2
        budget = float(take("tau_budget", 35.0 if power == 3 else 20.0))
        prob = Problem(
            field=_heat_field(n, power),
            y0=IntervalVector.from_floats([10.0] * (n - 1)),
            kind=str(take("kind", "auto")),
            controls=Controls(tau_budget=budget),
            name=name,
            params={"n": n},
        )
    else:
        raise UnknownProblem(f"unknown builtin problem {name!r}")
    if params:
        raise BadParams(f"unrecognized parameters for {name}: {sorted(params)}")
    return prob


# ---------------------------------------------------------------------------
# The validation pipeline


def _resolve_kind(problem: Problem) -> tuple[CompactificationKind, str | None]:
    if problem.kind == "poincare":
        rep = check_applicability(problem.field, CompactificationKind.POINCARE)
        if not rep.ok:
            return CompactificationKind.POINCARE, rep.message
        return CompactificationKind.POINCARE, None
    if problem.kind == "parabolic":
        return CompactificationKind.PARABOLIC, None
    if problem.kind != "auto":
        raise PipelineError(f"unknown compactification kind {problem.kind!r}")
    rep = check_applicability(problem.field, CompactificationKind.POINCARE)
    if rep.ok:
        return CompactificationKind.POINCARE, None
    return CompactificationKind.PARABOLIC, None


def _initial_state(sys: CompactifiedSystem, problem: Problem) -> AugmentedState:
    if problem.x0 is not None:
        x0 = problem.x0
        s0 = sys.aux_from_x(x0)
    else:
        x0, s0 = sys.initial_state(problem.y0)
    if x0.norm_sq().hi >= 1.0:
        raise PipelineError("initial point is not strictly inside the unit ball")
    return AugmentedState(x=x0, s=s0, t=Interval(0.0), tau=Interval(0.0))


def _dg_over_box(sys: CompactifiedSystem, box: IntervalVector) -> IntervalMatrix:
    m = sys.dim
    return IntervalMatrix(
        [[sys.jac_normalized[i][j].eval(box) for j in range(m)] for i in range(m)]
    )


def validate_blowup(problem: Problem) -> BlowUpCertificate:
    """Run the full scenario; never raises for mathematical failures."""
    cert = BlowUpCertificate(problem=problem, verdict="Failed")
    controls = problem.controls
    timings = cert.timings
    t_start = time.perf_counter()

    def fail(stage: str, reason: str) -> BlowUpCertificate:
        cert.failure = StageFailure(stage=stage, reason=reason)
        timings["total"] = time.perf_counter() - t_start
        return cert

    # Stage 1: compactification.
    try:
        kind, not_applicable = _resolve_kind(problem)
        cert.kind = kind
        if not_applicable is not None:
            return fail("Applicability", not_applicable)
        sys = build_normalized(problem.field, kind)
    except NotApplicable as exc:
        return fail("Applicability", str(exc))
    except PipelineError as exc:
        return fail("Applicability", str(exc))
    if sys.degree <= 1:
        return fail(
            "Applicability",
            "degree <= 1: possible grow-up; blow-up not certified",
        )
    timings["build"] = time.perf_counter() - t_start

    # Stage 2a: initial state and nonrigorous scouting.
    try:
        state0 = _initial_state(sys, problem)
    except Exception as exc:
        return fail("Initialization", str(exc))
    x0_mid = np.array(state0.x.midpoint())
    t_scout = time.perf_counter()
    path, h_scout = _rk4_scout(sys, x0_mid, controls.tau_budget)
    endpoint = path[-1]
    if controls.seed_direction is not None:
        direction = np.asarray(controls.seed_direction, dtype=float)
    else:
        nrm = np.linalg.norm(endpoint)
        if nrm == 0.0:
            return fail("Seeding", "simulated trajectory stalled at the origin")
        direction = endpoint / nrm
    timings["scout"] = time.perf_counter() - t_scout

    # Stage 2b: verified critical point at infinity.
    t_eq = time.perf_counter()
    try:
        equilibrium = find_boundary_equilibrium(sys, direction)
    except EquilibriumError as exc:
        return fail("Equilibrium", str(exc))
    cert.equilibrium = equilibrium
    if not equilibrium.on_boundary:
        return fail(
            "Equilibrium",
            "verified zero not certified on the sphere: "
            "possible bounded equilibrium (grow-up, not blow-up)",
        )
    timings["equilibrium"] = time.perf_counter() - t_eq

    # Stage 2c: quadratic form for the Lyapunov function.
    try:
        Y = build_Y(_dg_over_box(sys, equilibrium.box))
    except LyapunovError as exc:
        return fail("LyapunovConstruction", str(exc))

    x_star = np.array(equilibrium.midpoint())
    Y_mid = np.array(Y.midpoint())

    int_controls = IntegrationControls(
        order=controls.order, tol=controls.tol, h_max=controls.h_max
    )

    # Stages 3-4: integrate, certify the domain, bound the tail.
    t_int = time.perf_counter()
    if controls.epsilon is not None:
        # Fixed-level mode: certify the domain first, then integrate until
        # the trajectory enters the sublevel set.
        try:
            lyap = verify_domain(sys, equilibrium, Y, controls.epsilon)
        except LyapunovError as exc:
            return fail("LyapunovDomain", str(exc))
        cert.lyapunov = lyap
        traj = integrate_until_entry(
            sys, state0, lyap, controls.tau_budget, int_controls
        )
        cert.trajectory = traj
        if traj.reason != "EnteredN":
            return fail(
                "Integration",
                f"no certified entry into the sublevel set ({traj.reason}: {traj.detail})",
            )
        level = eval_L(lyap.Y, equilibrium.box, traj.terminal.x)
    else:
        # Adaptive mode: integrate to a scouted tau_N, then choose epsilon
        # just above the achieved level; enlarge the budget on domain failure.
        tau_entry_target = _choose_tau_entry(
            path, h_scout, x_star, Y_mid, controls.l_target, controls.tau_budget
        )
        lyap = None
        traj = None
        level = None
        budget = tau_entry_target
        for _ in range(3):
            traj = integrate_until_entry(sys, state0, None, budget, int_controls)
            cert.trajectory = traj
            if traj.reason == "StepFailure":
                return fail("Integration", f"step failure: {traj.detail}")
            level = eval_L(Y, equilibrium.box, traj.terminal.x)
            if level.hi <= 0.0:
                eps = Interval(1e-150)
            else:
                eps = Interval(sqrt_up(add_up(level.hi, 0.01 * level.hi)))
            try:
                lyap = verify_domain(sys, equilibrium, Y, eps)
                break
            except LyapunovError as exc:
                lyap = None
                last_err = str(exc)
                if budget >= controls.tau_budget:
                    return fail("LyapunovDomain", last_err)
                budget = min(budget * 1.5, controls.tau_budget)
        if lyap is None:
            return fail("LyapunovDomain", "no certified Lyapunov domain")
        cert.lyapunov = lyap
    timings["integration"] = time.perf_counter() - t_int

    # Entry must be rigorous: L(x(tau_N)) < epsilon^2.
    eps_sq = (lyap.epsilon * lyap.epsilon).lo
    if not (level.hi < eps_sq):
        return fail(
            "Integration",
            f"terminal level {level.hi} not strictly below epsilon^2 {eps_sq}",
        )
    cert.level_at_entry = level
    cert.tau_entry = traj.terminal.tau
    cert.t_entry = traj.terminal.t

    # Tail bound and assembly.
    try:
        if kind is CompactificationKind.POINCARE:
            tail = tail_bound_poincare(
                level,
                lyap.inv_lambda_min,
                lyap.decay_min,
                sys.degree,
                lyap.lambda_max,
            )
        else:
            tail = tail_bound_parabolic(
                level,
                lyap.inv_lambda_min,
                lyap.decay_min,
                sys.degree,
                lyap.lambda_max,
            )
    except (DegreeTooLow, PipelineError) as exc:
        return fail("TailBound", f"possible grow-up - blow-up not certified: {exc}")

    cert.tail = tail
    cert.t_max = Interval(cert.t_entry.lo, add_up(cert.t_entry.hi, tail.hi))
    cert.verdict = "BlowUpValidated"
    timings["total"] = time.perf_counter() - t_start
    return cert
