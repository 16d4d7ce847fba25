"""Outward-rounded interval arithmetic: scalars, vectors, matrices.

Every operation is inclusion-isotonic: the exact real result set is
contained in the returned interval.  Endpoint rounding uses error-free
transforms (TwoSum / Dekker products) to detect when a binary64 operation
was exact; only inexact endpoints are nudged one ulp outward.  No FPU
rounding-mode switching, no global state: values are immutable and all
operations are pure, so everything here is safe to share across threads.
"""

from __future__ import annotations

import math
import sys as _sys
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

_INF = math.inf
_MAX = _sys.float_info.max
_SPLITTER = 134217729.0  # 2**27 + 1, for Dekker splitting
# Outside these magnitudes the Dekker error term itself may over/underflow,
# so exactness detection is skipped and we widen unconditionally.
_DEKKER_HI = 1e292
_DEKKER_LO = 1e-292


class IntervalError(Exception):
    """Base class for interval arithmetic failures."""


class EmptyIntervalError(IntervalError):
    """Arithmetic attempted on the empty interval."""


class DivisionByZeroInterval(IntervalError):
    """Divisor interval contains zero."""


class EntirelyNegative(IntervalError):
    """sqrt_clamped received an interval with hi < 0."""


class DomainError(IntervalError):
    """Operand outside the mathematical domain of the operation."""


class DimensionMismatch(IntervalError):
    """Vector/matrix dimensions do not agree."""


# ---------------------------------------------------------------------------
# Directed scalar endpoint arithmetic.
#
# Each helper returns a binary64 bound on the exact real result, rounding
# down (toward -inf) or up (toward +inf) only when the IEEE round-to-nearest
# result is provably or possibly inexact.


def _sum_err(a: float, b: float, s: float) -> float:
    """Exact rounding error of s = fl(a + b) (TwoSum); requires s finite."""
    bv = s - a
    av = s - bv
    return (a - av) + (b - bv)


def _prod_err(a: float, b: float, p: float) -> float:
    """Exact rounding error of p = fl(a * b) (Dekker); caller guards range."""
    a1 = a * _SPLITTER
    ah = a1 - (a1 - a)
    al = a - ah
    b1 = b * _SPLITTER
    bh = b1 - (b1 - b)
    bl = b - bh
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add_down(a: float, b: float) -> float:
    s = a + b
    if s == _INF:
        return _MAX
    if s == -_INF:
        return -_INF
    if _sum_err(a, b, s) < 0.0:
        return math.nextafter(s, -_INF)
    return s


def add_up(a: float, b: float) -> float:
    s = a + b
    if s == _INF:
        return _INF
    if s == -_INF:
        return -_MAX
    if _sum_err(a, b, s) > 0.0:
        return math.nextafter(s, _INF)
    return s


def sub_down(a: float, b: float) -> float:
    return add_down(a, -b)


def sub_up(a: float, b: float) -> float:
    return add_up(a, -b)


def _mul_nearest_guarded(a: float, b: float) -> tuple[float, int]:
    """fl(a*b) and the sign of its error (0 exact, ±1, or 2 = unknown)."""
    p = a * b
    if math.isnan(p):
        # Operands are never NaN here, so this is 0 * inf: exactly zero.
        return 0.0, 0
    if p == 0.0:
        if a == 0.0 or b == 0.0:
            return 0.0, 0
        # Underflowed to zero: the true product is nonzero with known sign.
        return 0.0, 1 if (a > 0.0) == (b > 0.0) else -1
    ap = abs(p)
    if p == _INF or p == -_INF or ap < _DEKKER_LO or abs(a) > _DEKKER_HI or abs(b) > _DEKKER_HI:
        return p, 2
    err = _prod_err(a, b, p)
    if err == 0.0:
        return p, 0
    return p, 1 if err > 0.0 else -1


def mul_down(a: float, b: float) -> float:
    p, errsign = _mul_nearest_guarded(a, b)
    if p == _INF:
        return _MAX
    if p == -_INF:
        return -_INF
    if errsign < 0 or errsign == 2:
        return math.nextafter(p, -_INF)
    return p


def mul_up(a: float, b: float) -> float:
    p, errsign = _mul_nearest_guarded(a, b)
    if p == _INF:
        return _INF
    if p == -_INF:
        return -_MAX
    if errsign > 0 or errsign == 2:
        return math.nextafter(p, _INF)
    return p


def _div_exact(a: float, b: float, q: float) -> bool:
    """True iff q*b == a exactly, i.e. the division was exact."""
    p, errsign = _mul_nearest_guarded(q, b)
    return errsign == 0 and p == a


def div_down(a: float, b: float) -> float:
    q = a / b
    if q == _INF:
        return _MAX
    if q == -_INF:
        return -_INF
    if _div_exact(a, b, q):
        return q
    return math.nextafter(q, -_INF)


def div_up(a: float, b: float) -> float:
    q = a / b
    if q == _INF:
        return _INF
    if q == -_INF:
        return -_MAX
    if _div_exact(a, b, q):
        return q
    return math.nextafter(q, _INF)


def sqrt_down(a: float) -> float:
    if a < 0.0:
        raise DomainError(f"sqrt of negative number {a}")
    s = math.sqrt(a)
    p, errsign = _mul_nearest_guarded(s, s)
    if errsign == 0 and p == a:
        return s
    return math.nextafter(s, -_INF)


def sqrt_up(a: float) -> float:
    if a < 0.0:
        raise DomainError(f"sqrt of negative number {a}")
    s = math.sqrt(a)
    if s == _INF:
        return _INF
    p, errsign = _mul_nearest_guarded(s, s)
    if errsign == 0 and p == a:
        return s
    return math.nextafter(s, _INF)


def mul_bounds(alo: float, ahi: float, blo: float, bhi: float) -> tuple[float, float]:
    """Bounds of {a*b : a in [alo,ahi], b in [blo,bhi]}, rounded outward."""
    # Endpoint candidates; the min/max of the four exact products are attained
    # at corner pairs, so it suffices to round the extreme corners outward.
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    # 0 * inf corners contribute exactly 0 to the product set.
    if math.isnan(p1):
        p1 = 0.0
    if math.isnan(p2):
        p2 = 0.0
    if math.isnan(p3):
        p3 = 0.0
    if math.isnan(p4):
        p4 = 0.0
    lo_c, lo_a, lo_b = p1, alo, blo
    if p2 < lo_c:
        lo_c, lo_a, lo_b = p2, alo, bhi
    if p3 < lo_c:
        lo_c, lo_a, lo_b = p3, ahi, blo
    if p4 < lo_c:
        lo_c, lo_a, lo_b = p4, ahi, bhi
    hi_c, hi_a, hi_b = p1, alo, blo
    if p2 > hi_c:
        hi_c, hi_a, hi_b = p2, alo, bhi
    if p3 > hi_c:
        hi_c, hi_a, hi_b = p3, ahi, blo
    if p4 > hi_c:
        hi_c, hi_a, hi_b = p4, ahi, bhi
    return mul_down(lo_a, lo_b), mul_up(hi_a, hi_b)


# ---------------------------------------------------------------------------
# Scalar intervals


class Interval:
    """Closed real interval [lo, hi] with outward-rounded operations.

    The empty interval is a distinct tagged state (`Interval.EMPTY`), never
    encoded through NaN endpoints.  Instances are immutable.
    """

    __slots__ = ("lo", "hi", "_empty")

    EMPTY: "Interval"

    def __init__(self, lo: float, hi: float | None = None):
        if hi is None:
            hi = lo
        lo = float(lo)
        hi = float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("NaN interval endpoint")
        if lo > hi:
            raise ValueError(f"invalid interval endpoints [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "_empty", False)

    def __setattr__(self, name, value):
        raise AttributeError("Interval is immutable")

    @classmethod
    def _make_empty(cls) -> "Interval":
        obj = object.__new__(cls)
        object.__setattr__(obj, "lo", _INF)
        object.__setattr__(obj, "hi", -_INF)
        object.__setattr__(obj, "_empty", True)
        return obj

    @classmethod
    def point(cls, v: float) -> "Interval":
        return cls(v, v)

    @classmethod
    def from_decimal(cls, text: str) -> "Interval":
        """Tightest interval containing the exact decimal literal `text`."""
        exact = Fraction(text)
        v = float(exact)
        fv = Fraction(v)
        if fv == exact:
            return cls(v, v)
        if fv < exact:
            return cls(v, math.nextafter(v, _INF))
        return cls(math.nextafter(v, -_INF), v)

    # -- state ------------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self._empty

    def _require_nonempty(self):
        if self._empty:
            raise EmptyIntervalError("operation on empty interval")

    def is_point(self) -> bool:
        return not self._empty and self.lo == self.hi

    def width(self) -> float:
        if self._empty:
            return 0.0
        return sub_up(self.hi, self.lo)

    def midpoint(self) -> float:
        """A point guaranteed to lie inside the interval."""
        self._require_nonempty()
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = self.lo + 0.5 * (self.hi - self.lo)
        if m < self.lo:
            m = self.lo
        if m > self.hi:
            m = self.hi
        return m

    def radius(self) -> float:
        """Upper bound on distance from midpoint() to either endpoint."""
        self._require_nonempty()
        m = self.midpoint()
        return max(sub_up(m, self.lo), sub_up(self.hi, m))

    def mag(self) -> float:
        """max{|x| : x in interval}."""
        self._require_nonempty()
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> float:
        """min{|x| : x in interval}."""
        self._require_nonempty()
        if self.lo > 0.0:
            return self.lo
        if self.hi < 0.0:
            return -self.hi
        return 0.0

    # -- set operations -----------------------------------------------------

    def hull(self, other: "Interval") -> "Interval":
        if self._empty:
            return other
        if other._empty:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def intersect(self, other: "Interval") -> "Interval":
        if self._empty or other._empty:
            return Interval.EMPTY
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return Interval.EMPTY
        return Interval(lo, hi)

    def contains(self, value) -> bool:
        if self._empty:
            return False
        if isinstance(value, Interval):
            if value._empty:
                return True
            return self.lo <= value.lo and value.hi <= self.hi
        return self.lo <= value <= self.hi

    def interior_contains(self, other: "Interval") -> bool:
        if self._empty:
            return False
        if other._empty:
            return True
        return self.lo < other.lo and other.hi < self.hi

    # -- arithmetic ---------------------------------------------------------

    @staticmethod
    def _coerce(v) -> "Interval":
        if isinstance(v, Interval):
            return v
        if isinstance(v, (int, float)):
            return Interval(float(v), float(v))
        return NotImplemented  # type: ignore[return-value]

    def __add__(self, other) -> "Interval":
        other = Interval._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        self._require_nonempty()
        other._require_nonempty()
        return Interval(add_down(self.lo, other.lo), add_up(self.hi, other.hi))

    __radd__ = __add__

    def __sub__(self, other) -> "Interval":
        other = Interval._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        self._require_nonempty()
        other._require_nonempty()
        return Interval(sub_down(self.lo, other.hi), sub_up(self.hi, other.lo))

    def __rsub__(self, other) -> "Interval":
        return Interval._coerce(other).__sub__(self)

    def __neg__(self) -> "Interval":
        self._require_nonempty()
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other) -> "Interval":
        other = Interval._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        self._require_nonempty()
        other._require_nonempty()
        lo, hi = mul_bounds(self.lo, self.hi, other.lo, other.hi)
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        other = Interval._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        self._require_nonempty()
        other._require_nonempty()
        if other.lo <= 0.0 <= other.hi:
            raise DivisionByZeroInterval(f"division by {other}")
        candidates_lo = min(
            div_down(self.lo, other.lo),
            div_down(self.lo, other.hi),
            div_down(self.hi, other.lo),
            div_down(self.hi, other.hi),
        )
        candidates_hi = max(
            div_up(self.lo, other.lo),
            div_up(self.lo, other.hi),
            div_up(self.hi, other.lo),
            div_up(self.hi, other.hi),
        )
        return Interval(candidates_lo, candidates_hi)

    def __rtruediv__(self, other) -> "Interval":
        return Interval._coerce(other).__truediv__(self)

    def __pow__(self, n: int) -> "Interval":
        return int_pow(self, n)

    def abs(self) -> "Interval":
        self._require_nonempty()
        return Interval(self.mig(), self.mag())

    # -- comparison / hashing -------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, Interval):
            return NotImplemented
        if self._empty or other._empty:
            return self._empty and other._empty
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self) -> int:
        return hash((self.lo, self.hi, self._empty))

    def __repr__(self) -> str:
        if self._empty:
            return "Interval.EMPTY"
        return f"[{self.lo!r}, {self.hi!r}]"


Interval.EMPTY = Interval._make_empty()

ZERO = Interval(0.0, 0.0)
ONE = Interval(1.0, 1.0)


def sqrt_clamped(a: Interval) -> Interval:
    """Enclosure of sqrt(a ∩ [0, inf)); rejects entirely negative input."""
    a._require_nonempty()
    if a.hi < 0.0:
        raise EntirelyNegative(f"sqrt of entirely negative interval {a}")
    lo = max(a.lo, 0.0)
    return Interval(sqrt_down(lo), sqrt_up(a.hi))


def _pow_down(x: float, n: int) -> float:
    """Lower bound of x**n for x >= 0, n >= 1."""
    r = x
    for _ in range(n - 1):
        r = mul_down(r, x)
    return r


def _pow_up(x: float, n: int) -> float:
    r = x
    for _ in range(n - 1):
        r = mul_up(r, x)
    return r


def int_pow(a: Interval, n: int) -> Interval:
    """Tight enclosure of {x**n : x in a}; even powers use |a| directly."""
    a._require_nonempty()
    if n < 0:
        raise DomainError("int_pow exponent must be nonnegative")
    if n == 0:
        return ONE
    if n == 1:
        return a
    if n % 2 == 0:
        b = a.abs()
        return Interval(_pow_down(b.lo, n), _pow_up(b.hi, n))
    # Odd power: monotone.  x**n for negative x computed through |x|.
    if a.lo >= 0.0:
        lo = _pow_down(a.lo, n)
    else:
        lo = -_pow_up(-a.lo, n)
    if a.hi >= 0.0:
        hi = _pow_up(a.hi, n)
    else:
        hi = -_pow_down(-a.hi, n)
    return Interval(lo, hi)


def _root_down(x: float, q: int) -> float:
    """Lower bound of x**(1/q) for x >= 0 (verified by powering back)."""
    if x == 0.0:
        return 0.0
    r = x ** (1.0 / q)
    # Nudge down until r**q <= x is certain.
    for _ in range(8):
        if _pow_up(r, q) <= x:
            return r
        r = math.nextafter(r, -_INF)
    return 0.0 if r < 0.0 else r


def _root_up(x: float, q: int) -> float:
    if x == 0.0:
        return 0.0
    r = x ** (1.0 / q)
    for _ in range(8):
        if _pow_down(r, q) >= x:
            return r
        r = math.nextafter(r, _INF)
    return _INF


def rational_pow(a: Interval, p: int, q: int) -> Interval:
    """Enclosure of a**(p/q) on nonnegative intervals, outward rounded."""
    a._require_nonempty()
    if q <= 0:
        raise DomainError("rational_pow requires positive root index q")
    if a.lo < 0.0:
        raise DomainError(f"rational_pow base {a} not within [0, inf)")
    if p < 0 and a.lo <= 0.0:
        raise DomainError("negative exponent requires 0 not in base")
    root = Interval(_root_down(a.lo, q), _root_up(a.hi, q))
    if p >= 0:
        return int_pow(root, p)
    return ONE / int_pow(root, -p)


# ---------------------------------------------------------------------------
# Vectors and matrices


class IntervalVector:
    """Fixed-length vector of intervals (a box in R^m)."""

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[Interval]):
        object.__setattr__(self, "entries", tuple(entries))
        for e in self.entries:
            if not isinstance(e, Interval):
                raise TypeError("IntervalVector entries must be Interval")

    def __setattr__(self, name, value):
        raise AttributeError("IntervalVector is immutable")

    @classmethod
    def from_floats(cls, values: Sequence[float]) -> "IntervalVector":
        return cls(Interval(float(v), float(v)) for v in values)

    @classmethod
    def box(cls, center: Sequence[float], radius: float) -> "IntervalVector":
        return cls(
            Interval(sub_down(float(c), radius), add_up(float(c), radius))
            for c in center
        )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.entries)

    def __getitem__(self, i: int) -> Interval:
        return self.entries[i]

    def _check_dim(self, other: "IntervalVector"):
        if len(self) != len(other):
            raise DimensionMismatch(f"vector lengths {len(self)} vs {len(other)}")

    def __add__(self, other: "IntervalVector") -> "IntervalVector":
        self._check_dim(other)
        return IntervalVector(a + b for a, b in zip(self.entries, other.entries))

    def __sub__(self, other: "IntervalVector") -> "IntervalVector":
        self._check_dim(other)
        return IntervalVector(a - b for a, b in zip(self.entries, other.entries))

    def __neg__(self) -> "IntervalVector":
        return IntervalVector(-a for a in self.entries)

    def scale(self, c) -> "IntervalVector":
        ci = Interval._coerce(c)
        return IntervalVector(a * ci for a in self.entries)

    def dot(self, other: "IntervalVector") -> Interval:
        self._check_dim(other)
        acc = ZERO
        for a, b in zip(self.entries, other.entries):
            acc = acc + a * b
        return acc

    def norm_sq(self) -> Interval:
        acc = ZERO
        for a in self.entries:
            acc = acc + int_pow(a, 2)
        return acc

    def hull(self, other: "IntervalVector") -> "IntervalVector":
        self._check_dim(other)
        return IntervalVector(a.hull(b) for a, b in zip(self.entries, other.entries))

    def intersect(self, other: "IntervalVector") -> "IntervalVector":
        self._check_dim(other)
        return IntervalVector(a.intersect(b) for a, b in zip(self.entries, other.entries))

    def contains(self, other: "IntervalVector") -> bool:
        self._check_dim(other)
        return all(a.contains(b) for a, b in zip(self.entries, other.entries))

    def interior_contains(self, other: "IntervalVector") -> bool:
        self._check_dim(other)
        return all(a.interior_contains(b) for a, b in zip(self.entries, other.entries))

    def midpoint(self) -> list[float]:
        return [a.midpoint() for a in self.entries]

    def max_width(self) -> float:
        return max((a.width() for a in self.entries), default=0.0)

    def __repr__(self) -> str:
        return "IntervalVector(" + ", ".join(repr(e) for e in self.entries) + ")"


class IntervalMatrix:
    """Rectangular grid of intervals."""

    __slots__ = ("rows",)

    def __init__(self, rows: Iterable[Iterable[Interval]]):
        object.__setattr__(self, "rows", tuple(tuple(r) for r in rows))
        ncols = {len(r) for r in self.rows}
        if len(ncols) > 1:
            raise DimensionMismatch("ragged matrix rows")

    def __setattr__(self, name, value):
        raise AttributeError("IntervalMatrix is immutable")

    @classmethod
    def from_floats(cls, array: Sequence[Sequence[float]]) -> "IntervalMatrix":
        return cls([[Interval(float(v), float(v)) for v in row] for row in array])

    @classmethod
    def identity(cls, n: int) -> "IntervalMatrix":
        return cls(
            [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
        )

    @property
    def shape(self) -> tuple[int, int]:
        if not self.rows:
            return (0, 0)
        return (len(self.rows), len(self.rows[0]))

    def __getitem__(self, ij: tuple[int, int]) -> Interval:
        return self.rows[ij[0]][ij[1]]

    def row(self, i: int) -> IntervalVector:
        return IntervalVector(self.rows[i])

    def transpose(self) -> "IntervalMatrix":
        n, m = self.shape
        return IntervalMatrix([[self.rows[i][j] for i in range(n)] for j in range(m)])

    def __add__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        if self.shape != other.shape:
            raise DimensionMismatch("matrix shapes differ")
        return IntervalMatrix(
            [
                [a + b for a, b in zip(r1, r2)]
                for r1, r2 in zip(self.rows, other.rows)
            ]
        )

    def __sub__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        if self.shape != other.shape:
            raise DimensionMismatch("matrix shapes differ")
        return IntervalMatrix(
            [
                [a - b for a, b in zip(r1, r2)]
                for r1, r2 in zip(self.rows, other.rows)
            ]
        )

    def matvec(self, v: IntervalVector) -> IntervalVector:
        n, m = self.shape
        if m != len(v):
            raise DimensionMismatch("matvec dimension mismatch")
        out = []
        for i in range(n):
            acc = ZERO
            for j in range(m):
                acc = acc + self.rows[i][j] * v[j]
            out.append(acc)
        return IntervalVector(out)

    def matmul(self, other: "IntervalMatrix") -> "IntervalMatrix":
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise DimensionMismatch("matmul dimension mismatch")
        out = []
        for i in range(n):
            row = []
            for j in range(m):
                acc = ZERO
                for r in range(k):
                    acc = acc + self.rows[i][r] * other.rows[r][j]
                row.append(acc)
            out.append(row)
        return IntervalMatrix(out)

    def midpoint(self) -> list[list[float]]:
        return [[e.midpoint() for e in row] for row in self.rows]

    def __repr__(self) -> str:
        return "IntervalMatrix(" + "; ".join(
            ", ".join(repr(e) for e in row) for row in self.rows
        ) + ")"


def gershgorin_bounds(M: IntervalMatrix, symmetric: bool = False) -> list[Interval]:
    """Real spans of the Gershgorin disks of every point matrix in M.

    For symmetric matrices the union of the returned intervals contains all
    eigenvalues.  For general matrices each eigenvalue's real part lies in
    one of the returned intervals (the disks live in the complex plane).
    """
    n, m = M.shape
    if n != m:
        raise DimensionMismatch("gershgorin_bounds requires a square matrix")
    disks = []
    for i in range(n):
        r = 0.0
        for j in range(m):
            if j != i:
                r = add_up(r, M.rows[i][j].mag())
        c = M.rows[i][i]
        disks.append(Interval(sub_down(c.lo, r), add_up(c.hi, r)))
    return disks
