"""Multivariate polynomials with exact rational coefficients.

The whole symbolic pipeline (substitution, quantifier elimination, validity)
runs on these; no floating point anywhere.
"""
from __future__ import annotations

from fractions import Fraction
from math import gcd


# A monomial is a tuple of (variable, exponent) pairs, sorted by variable,
# with all exponents > 0.  The empty tuple is the constant monomial.
Monomial = tuple

ONE_MONO: Monomial = ()


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


def _mono_deg(m: Monomial, var: str) -> int:
    for v, e in m:
        if v == var:
            return e
    return 0


class Poly:
    """Immutable sparse polynomial: dict monomial -> nonzero Fraction."""

    __slots__ = ("coeffs", "_hash")

    def __init__(self, coeffs=None):
        cleaned = {}
        if coeffs:
            for m, c in coeffs.items():
                c = Fraction(c)
                if c:
                    cleaned[m] = c
        self.coeffs = cleaned
        self._hash = None

    # -- constructors -------------------------------------------------
    @staticmethod
    def const(c) -> "Poly":
        c = Fraction(c)
        return Poly({ONE_MONO: c}) if c else Poly()

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly({((name, 1),): Fraction(1)})

    # -- basic queries ------------------------------------------------
    def is_zero(self) -> bool:
        return not self.coeffs

    def is_const(self) -> bool:
        return not self.coeffs or (len(self.coeffs) == 1 and ONE_MONO in self.coeffs)

    def const_value(self) -> Fraction:
        if not self.is_const():
            raise ValueError("not a constant polynomial")
        return self.coeffs.get(ONE_MONO, Fraction(0))

    def variables(self) -> set:
        vs = set()
        for m in self.coeffs:
            for v, _ in m:
                vs.add(v)
        return vs

    def degree(self, var: str) -> int:
        return max((_mono_deg(m, var) for m in self.coeffs), default=0)

    def total_degree(self) -> int:
        return max((sum(e for _, e in m) for m in self.coeffs), default=0)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other: "Poly") -> "Poly":
        d = dict(self.coeffs)
        for m, c in other.coeffs.items():
            d[m] = d.get(m, Fraction(0)) + c
        return Poly(d)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other: "Poly") -> "Poly":
        d = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                m = _mono_mul(m1, m2)
                d[m] = d.get(m, Fraction(0)) + c1 * c2
        return Poly(d)

    def scale(self, c) -> "Poly":
        c = Fraction(c)
        if not c:
            return Poly()
        return Poly({m: q * c for m, q in self.coeffs.items()})

    def pow(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative power")
        result = Poly.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.coeffs == other.coeffs

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.coeffs.items()))
        return self._hash

    # -- structure ------------------------------------------------------
    def coeffs_in(self, var: str) -> list:
        """Coefficients [c0, c1, ..., cd] of this polynomial viewed as
        univariate in `var` (each ci a Poly over the other variables)."""
        d = self.degree(var)
        out = [dict() for _ in range(d + 1)]
        for m, c in self.coeffs.items():
            e = _mono_deg(m, var)
            rest = tuple((v, k) for v, k in m if v != var)
            out[e][rest] = out[e].get(rest, Fraction(0)) + c
        return [Poly(x) for x in out]

    @staticmethod
    def from_coeffs_in(var: str, coeffs) -> "Poly":
        acc = Poly()
        xp = Poly.const(1)
        x = Poly.var(var)
        for c in coeffs:
            acc = acc + c * xp
            xp = xp * x
        return acc

    def derivative(self, var: str) -> "Poly":
        d = {}
        for m, c in self.coeffs.items():
            e = _mono_deg(m, var)
            if e == 0:
                continue
            rest = [(v, k) for v, k in m if v != var]
            if e > 1:
                rest.append((var, e - 1))
            mono = tuple(sorted(rest))
            d[mono] = d.get(mono, Fraction(0)) + c * e
        return Poly(d)

    def subst(self, assignment: dict) -> "Poly":
        """Simultaneous substitution of variables by polynomials."""
        acc = Poly()
        for m, c in self.coeffs.items():
            term = Poly.const(c)
            for v, e in m:
                rep = assignment.get(v)
                term = term * (rep.pow(e) if rep is not None else Poly({((v, e),): Fraction(1)}))
            acc = acc + term
        return acc

    def eval(self, state: dict) -> Fraction:
        total = Fraction(0)
        for m, c in self.coeffs.items():
            val = c
            for v, e in m:
                val *= Fraction(state[v]) ** e
            total += val
        return total

    # -- normalization ----------------------------------------------------
    def primitive(self):
        """Return (p, s) with p integer-coefficient, content 1, leading
        coefficient (in monomial sort order) positive, and self == s * p
        for a positive rational s -- or negative s when the sign had to flip.
        """
        if not self.coeffs:
            return self, Fraction(1)
        num = 0
        den = 1
        for c in self.coeffs.values():
            num = gcd(num, c.numerator)
            den = den * c.denominator // gcd(den, c.denominator)
        scale = Fraction(num, den) if num else Fraction(1)
        lead = self.coeffs[max(self.coeffs)]
        if lead < 0:
            scale = -scale
        return self.scale(1 / scale), scale

    def __repr__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for m in sorted(self.coeffs, reverse=True):
            c = self.coeffs[m]
            mono = "*".join(f"{v}^{e}" if e > 1 else v for v, e in m)
            if mono:
                parts.append(f"{c}*{mono}" if c != 1 else mono)
            else:
                parts.append(str(c))
        return " + ".join(parts)
