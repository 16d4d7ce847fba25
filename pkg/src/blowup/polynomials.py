"""Sparse multivariate polynomials and polynomial vector fields.

Coefficients are held as intervals even when exactly representable, so the
soundness chain starts at problem construction: decimal literals from
problem files are enclosed, never rounded.  Terms are kept in canonical
merged form (one term per exponent tuple), ordered graded-lexicographically
for display and equality testing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .intervals import (
    DimensionMismatch,
    Interval,
    IntervalVector,
    ONE,
    ZERO,
    int_pow,
)


@dataclass(frozen=True)
class Monomial:
    """A single term: coeff * prod(x_i ** exponents[i])."""

    coeff: Interval
    exponents: tuple[int, ...]

    def degree(self) -> int:
        return sum(self.exponents)


def _grlex_key(exps: tuple[int, ...]):
    return (sum(exps), tuple(-e for e in exps))


class Polynomial:
    """Sparse polynomial in `nvars` variables with interval coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], Interval] | None = None):
        merged: dict[tuple[int, ...], Interval] = {}
        if terms:
            for exps, coeff in terms.items():
                exps = tuple(int(e) for e in exps)
                if len(exps) != nvars:
                    raise DimensionMismatch(
                        f"exponent tuple {exps} does not match nvars={nvars}"
                    )
                if any(e < 0 for e in exps):
                    raise ValueError("negative exponent in monomial")
                if exps in merged:
                    coeff = merged[exps] + coeff
                if coeff.is_empty:
                    raise ValueError("empty coefficient interval")
                merged[exps] = coeff
        merged = {
            e: c for e, c in merged.items() if not (c.lo == 0.0 and c.hi == 0.0)
        }
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "terms", merged)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c) -> "Polynomial":
        ci = c if isinstance(c, Interval) else Interval(float(c))
        return cls(nvars, {tuple([0] * nvars): ci})

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Polynomial":
        exps = [0] * nvars
        exps[i] = 1
        return cls(nvars, {tuple(exps): ONE})

    @classmethod
    def from_monomials(cls, nvars: int, monomials: Iterable[Monomial]) -> "Polynomial":
        terms: dict[tuple[int, ...], Interval] = {}
        for m in monomials:
            if m.exponents in terms:
                terms[m.exponents] = terms[m.exponents] + m.coeff
            else:
                terms[m.exponents] = m.coeff
        return cls(nvars, terms)

    # -- structure ------------------------------------------------------------

    def monomials(self) -> list[Monomial]:
        return [
            Monomial(self.terms[e], e)
            for e in sorted(self.terms, key=_grlex_key)
        ]

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- algebra ---------------------------------------------------------------

    def _check(self, other: "Polynomial"):
        if self.nvars != other.nvars:
            raise DimensionMismatch("polynomials over different variable sets")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms[e] + c if e in terms else c
        return Polynomial(self.nvars, terms)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        terms: dict[tuple[int, ...], Interval] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                c = c1 * c2
                terms[e] = terms[e] + c if e in terms else c
        return Polynomial(self.nvars, terms)

    def scale(self, c) -> "Polynomial":
        ci = c if isinstance(c, Interval) else Interval(float(c))
        return Polynomial(self.nvars, {e: co * ci for e, co in self.terms.items()})

    def pow(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative polynomial power")
        result = Polynomial.constant(self.nvars, 1.0)
        for _ in range(n):
            result = result * self
        return result

    def partial(self, var: int) -> "Polynomial":
        """Exact symbolic partial derivative with respect to variable `var`."""
        terms: dict[tuple[int, ...], Interval] = {}
        for e, c in self.terms.items():
            k = e[var]
            if k == 0:
                continue
            ne = list(e)
            ne[var] = k - 1
            nc = c * Interval(float(k))
            ne_t = tuple(ne)
            terms[ne_t] = terms[ne_t] + nc if ne_t in terms else nc
        return Polynomial(self.nvars, terms)

    def embed(self, new_nvars: int, var_map: Sequence[int] | None = None) -> "Polynomial":
        """Lift into a larger variable set; var i becomes var_map[i]."""
        if var_map is None:
            var_map = list(range(self.nvars))
        terms: dict[tuple[int, ...], Interval] = {}
        for e, c in self.terms.items():
            ne = [0] * new_nvars
            for i, k in enumerate(e):
                ne[var_map[i]] = k
            terms[tuple(ne)] = c
        return Polynomial(new_nvars, terms)

    def substitute(self, mapping: Sequence["Polynomial"]) -> "Polynomial":
        """Exact symbolic composition: x_i -> mapping[i]."""
        if len(mapping) != self.nvars:
            raise DimensionMismatch("substitution must map every variable")
        out_vars = mapping[0].nvars if mapping else self.nvars
        result = Polynomial.zero(out_vars)
        for e, c in self.terms.items():
            term = Polynomial.constant(out_vars, c)
            for i, k in enumerate(e):
                if k:
                    term = term * mapping[i].pow(k)
            result = result + term
        return result

    # -- evaluation --------------------------------------------------------------

    def eval(self, x: IntervalVector) -> Interval:
        """Rigorous enclosure of the range over the box `x` (Horner form)."""
        if len(x) != self.nvars:
            raise DimensionMismatch(
                f"point has {len(x)} coordinates, polynomial has {self.nvars}"
            )
        items = sorted(self.terms.items(), key=lambda t: _grlex_key(t[0]))
        return _horner_eval(items, 0, self.nvars, x)

    def eval_float(self, x: np.ndarray) -> float:
        """Fast nonrigorous midpoint evaluation (seeding / simulation only)."""
        total = 0.0
        for e, c in self.terms.items():
            t = c.midpoint()
            for i, k in enumerate(e):
                if k:
                    t *= x[i] ** k
            total += t
        return total

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m in self.monomials():
            factors = [f"{m.coeff!r}"]
            for i, k in enumerate(m.exponents):
                if k == 1:
                    factors.append(f"x{i}")
                elif k > 1:
                    factors.append(f"x{i}^{k}")
            parts.append("*".join(factors))
        return " + ".join(parts)


def _horner_eval(
    items: list[tuple[tuple[int, ...], Interval]],
    var: int,
    nvars: int,
    x: IntervalVector,
) -> Interval:
    """Recursive Horner evaluation grouped by the exponent of `var`."""
    if not items:
        return ZERO
    if var == nvars:
        acc = ZERO
        for _, c in items:
            acc = acc + c
        return acc
    groups: dict[int, list[tuple[tuple[int, ...], Interval]]] = {}
    for e, c in items:
        groups.setdefault(e[var], []).append((e, c))
    degrees = sorted(groups, reverse=True)
    acc = _horner_eval(groups[degrees[0]], var + 1, nvars, x)
    prev = degrees[0]
    for d in degrees[1:]:
        acc = acc * int_pow(x[var], prev - d) + _horner_eval(groups[d], var + 1, nvars, x)
        prev = d
    if prev > 0:
        acc = acc * int_pow(x[var], prev)
    return acc


class PolyVectorField:
    """Square polynomial map F: R^m -> R^m given componentwise."""

    __slots__ = ("dim", "components", "_float_cache")

    def __init__(self, components: Sequence[Polynomial]):
        components = tuple(components)
        if not components:
            raise ValueError("vector field needs at least one component")
        nvars = components[0].nvars
        for p in components:
            if p.nvars != nvars:
                raise DimensionMismatch("components over different variable sets")
        if len(components) != nvars:
            raise DimensionMismatch(
                f"{len(components)} components over {nvars} variables (must be square)"
            )
        object.__setattr__(self, "dim", nvars)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "_float_cache", None)

    def __setattr__(self, name, value):
        raise AttributeError("PolyVectorField is immutable")

    def degree(self) -> int:
        return max(p.degree() for p in self.components)

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.components)

    def eval(self, x: IntervalVector) -> IntervalVector:
        return IntervalVector(p.eval(x) for p in self.components)

    def _float_eval_data(self):
        cache = self._float_cache
        if cache is None:
            cache = []
            for p in self.components:
                if p.terms:
                    exps = np.array(list(p.terms.keys()), dtype=np.int64)
                    coeffs = np.array([c.midpoint() for c in p.terms.values()])
                else:
                    exps = np.zeros((0, self.dim), dtype=np.int64)
                    coeffs = np.zeros(0)
                cache.append((exps, coeffs))
            object.__setattr__(self, "_float_cache", cache)
        return cache

    def eval_float(self, x: np.ndarray) -> np.ndarray:
        """Vectorized nonrigorous evaluation at a point (simulation only)."""
        out = np.empty(len(self.components))
        for i, (exps, coeffs) in enumerate(self._float_eval_data()):
            if len(coeffs) == 0:
                out[i] = 0.0
            else:
                out[i] = coeffs @ np.prod(x[None, :] ** exps, axis=1)
        return out

    def jacobian(self) -> list[list[Polynomial]]:
        """Exact symbolic Jacobian: entry (i, j) is dF_i/dx_j."""
        return [
            [p.partial(j) for j in range(self.dim)]
            for p in self.components
        ]

    def homogeneous_parts(self) -> list["PolyVectorField"]:
        """Split F = p_0 + ... + p_d by total degree; zero parts included."""
        d = self.degree()
        parts = []
        for j in range(d + 1):
            comps = []
            for p in self.components:
                terms = {e: c for e, c in p.terms.items() if sum(e) == j}
                comps.append(Polynomial(self.dim, terms))
            parts.append(PolyVectorField(comps))
        return parts

    def substitute(self, mapping: Sequence[Polynomial]) -> "PolyVectorField":
        return PolyVectorField([p.substitute(mapping) for p in self.components])

    def __repr__(self) -> str:
        return "PolyVectorField(" + "; ".join(repr(p) for p in self.components) + ")"


def compose_scale(
    field: PolyVectorField,
    substitutions: Sequence[Polynomial],
    multiplier: Polynomial | None = None,
) -> PolyVectorField:
    """Exact symbolic composition with an optional polynomial premultiplier.

    Builds multiplier * F(substitutions), the operation used to assemble the
    scaled fields of the compactified systems.
    """
    composed = field.substitute(substitutions)
    if multiplier is None:
        return composed
    return PolyVectorField([multiplier * p for p in composed.components])


def taylor_recurrence_step(
    field: PolyVectorField, coeffs: list[IntervalVector], k: int
) -> IntervalVector:
    """Next Taylor coefficient of x' = F(x) from coefficients 0..k.

    Returns coefficient k+1 = [F(x(s))]_k / (k+1), where [.]_k extracts the
    k-th coefficient of the truncated power-series composition.
    """
    if len(coeffs) < k + 1:
        raise ValueError("need coefficients 0..k")
    n = field.dim
    # Per-variable series, orders 0..k.
    series = [[coeffs[j][i] for j in range(k + 1)] for i in range(n)]
    out = []
    divisor = Interval(float(k + 1))
    for p in field.components:
        acc = ZERO
        for e, c in p.terms.items():
            prod = _series_monomial_coeff(series, e, k)
            if prod is not None:
                acc = acc + c * prod
        out.append(acc / divisor)
    return IntervalVector(out)


def _series_monomial_coeff(
    series: list[list[Interval]], exps: tuple[int, ...], k: int
) -> Interval | None:
    """k-th power series coefficient of prod_i x_i(s)**exps[i]."""
    factors = []
    for i, e in enumerate(exps):
        factors.extend([series[i]] * e)
    if not factors:
        return None if k > 0 else ONE
    cur = factors[0][: k + 1]
    for f in factors[1:]:
        nxt = []
        for order in range(k + 1):
            acc = ZERO
            for r in range(order + 1):
                if r < len(cur) and order - r <= k:
                    acc = acc + cur[r] * f[order - r]
            nxt.append(acc)
        cur = nxt
    return cur[k]
