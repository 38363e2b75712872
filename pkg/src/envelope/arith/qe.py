"""Quantifier elimination over the reals.

Variables occurring linearly are eliminated by substituting symbolic root
test points (classic Loos-Weispfenning elimination, which coincides with
Fourier-Motzkin on linear constraint systems); variables of degree two by
virtual substitution of quadratic root expressions with square roots and
infinitesimals.  Degree three or more raises :class:`DegreeTooHigh` so the
caller can route the problem to an external backend.
"""
from __future__ import annotations

import time
from fractions import Fraction

from ..poly import Poly
from ..syntax import (
    FALSE, TRUE, And, Box, Cmp, Diamond, Exists, FalseF, Forall, Formula,
    Not, Or, TrueF, conj, disj, formula_vars,
)
from .simplify import REL_MIRROR, atom, cmp_poly, nnf, simplify


class QEError(Exception):
    pass


class DegreeTooHigh(QEError):
    """The eliminated variable occurs with degree > 2."""


class Timeout(QEError):
    pass


class Deadline:
    def __init__(self, timeout_ms=None):
        self.t0 = time.monotonic()
        self.timeout_ms = timeout_ms

    def check(self):
        if self.timeout_ms is not None:
            if (time.monotonic() - self.t0) * 1000.0 > self.timeout_ms:
                raise Timeout(f"exceeded {self.timeout_ms} ms")


_NO_DEADLINE = Deadline()


# ---------------------------------------------------------------------------
# Virtual test points
# ---------------------------------------------------------------------------

class _MinusInf:
    pass


MINUS_INF = _MinusInf()


class _Root:
    """x = num/den (den != 0 guarded by the caller)."""

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly):
        self.num = num
        self.den = den


class _SqrtRoot:
    """x = (u + v*sqrt(rad))/den  (den != 0, rad >= 0 guarded)."""

    __slots__ = ("u", "v", "rad", "den")

    def __init__(self, u: Poly, v: Poly, rad: Poly, den: Poly):
        self.u = u
        self.v = v
        self.rad = rad
        self.den = den


class _Eps:
    """base + infinitesimal."""

    __slots__ = ("base",)

    def __init__(self, base):
        self.base = base


# ---------------------------------------------------------------------------
# Substitution of a virtual point into a single atom
# ---------------------------------------------------------------------------

def _subst_minus_inf(coeffs: list, rel: str) -> Formula:
    if rel == "=":
        return conj(*[atom(c, "=") for c in coeffs])
    if rel == "!=":
        return disj(*[atom(c, "!=") for c in coeffs])
    if rel in (">=", "<="):
        strict = ">" if rel == ">=" else "<"
        return disj(_subst_minus_inf(coeffs, strict), _subst_minus_inf(coeffs, "="))
    # strict > / <
    d = len(coeffs) - 1
    if d == 0:
        return atom(coeffs[0], rel)
    lead = coeffs[d]
    # sign at -inf is sign(lead) * (-1)^d
    eff = lead if d % 2 == 0 else -lead
    return disj(
        atom(eff, rel),
        conj(atom(lead, "="), _subst_minus_inf(coeffs[:-1], rel)),
    )


def _subst_root(coeffs: list, rel: str, num: Poly, den: Poly) -> Formula:
    d = len(coeffs) - 1
    big = Poly()
    npow = Poly.const(1)
    dpows = [Poly.const(1)]
    for _ in range(d):
        dpows.append(dpows[-1] * den)
    for i, c in enumerate(coeffs):
        big = big + c * npow * dpows[d - i]
        npow = npow * num
    if rel in ("=", "!=") or d % 2 == 0:
        return atom(big, rel)
    if den.is_const():
        return atom(big, rel if den.const_value() > 0 else REL_MIRROR[rel])
    return disj(
        conj(atom(den, ">"), atom(big, rel)),
        conj(atom(den, "<"), atom(big, REL_MIRROR[rel])),
    )


def _sqrt_gt(a: Poly, b: Poly, rad: Poly) -> Formula:
    """a + b*sqrt(rad) > 0 given rad >= 0."""
    a2b2r = a * a - b * b * rad
    return disj(
        conj(atom(a, ">"), disj(atom(b, ">="), atom(a2b2r, ">"))),
        conj(atom(b, ">"), atom(a, "<="), atom(-a2b2r, ">")),
    )


def _sqrt_eq(a: Poly, b: Poly, rad: Poly) -> Formula:
    return conj(atom(a * a - b * b * rad, "="), atom(a * b, "<="))


def _sqrt_rel(a: Poly, b: Poly, rad: Poly, rel: str) -> Formula:
    if rel == ">":
        return _sqrt_gt(a, b, rad)
    if rel == "<":
        return _sqrt_gt(-a, -b, rad)
    if rel == "=":
        return _sqrt_eq(a, b, rad)
    if rel == "!=":
        return disj(_sqrt_gt(a, b, rad), _sqrt_gt(-a, -b, rad))
    if rel == ">=":
        return disj(_sqrt_gt(a, b, rad), _sqrt_eq(a, b, rad))
    if rel == "<=":
        return disj(_sqrt_gt(-a, -b, rad), _sqrt_eq(a, b, rad))
    raise ValueError(rel)


def _subst_sqrt(coeffs: list, rel: str, pt: _SqrtRoot) -> Formula:
    d = len(coeffs) - 1
    dpows = [Poly.const(1)]
    for _ in range(d):
        dpows.append(dpows[-1] * pt.den)
    # (u + v sqrt(r))^i as (A_i, B_i)
    A, B = Poly.const(1), Poly()
    bigA, bigB = Poly(), Poly()
    for i, c in enumerate(coeffs):
        bigA = bigA + c * A * dpows[d - i]
        bigB = bigB + c * B * dpows[d - i]
        A, B = A * pt.u + B * pt.v * pt.rad, A * pt.v + B * pt.u
    if rel in ("=", "!=") or d % 2 == 0:
        return _sqrt_rel(bigA, bigB, pt.rad, rel)
    if pt.den.is_const():
        r = rel if pt.den.const_value() > 0 else REL_MIRROR[rel]
        return _sqrt_rel(bigA, bigB, pt.rad, r)
    return disj(
        conj(atom(pt.den, ">"), _sqrt_rel(bigA, bigB, pt.rad, rel)),
        conj(atom(pt.den, "<"), _sqrt_rel(bigA, bigB, pt.rad, REL_MIRROR[rel])),
    )


def _derive(coeffs: list) -> list:
    return [c.scale(i + 1) for i, c in enumerate(coeffs[1:])]


def _subst_point(coeffs: list, rel: str, point) -> Formula:
    if isinstance(point, _MinusInf):
        return _subst_minus_inf(coeffs, rel)
    if isinstance(point, _Root):
        return _subst_root(coeffs, rel, point.num, point.den)
    if isinstance(point, _SqrtRoot):
        return _subst_sqrt(coeffs, rel, point)
    if isinstance(point, _Eps):
        return _subst_eps(coeffs, rel, point.base)
    raise TypeError(point)


def _subst_eps(coeffs: list, rel: str, base) -> Formula:
    if rel == "=":
        # zero in a right neighborhood => identically zero
        parts = []
        cur = coeffs
        while cur:
            parts.append(_subst_point(cur, "=", base))
            cur = _derive(cur)
        return conj(*parts)
    if rel == "!=":
        parts = []
        cur = coeffs
        while cur:
            parts.append(_subst_point(cur, "!=", base))
            cur = _derive(cur)
        return disj(*parts)
    if rel in (">=", "<="):
        strict = ">" if rel == ">=" else "<"
        return disj(_subst_eps(coeffs, strict, base), _subst_eps(coeffs, "=", base))
    # strict: sign of the first nonvanishing derivative
    parts = []
    zeros: list = []
    cur = coeffs
    while cur:
        parts.append(conj(*zeros, _subst_point(cur, rel, base)))
        zeros.append(_subst_point(cur, "=", base))
        cur = _derive(cur)
    return disj(*parts)


# ---------------------------------------------------------------------------
# Candidate test points for one variable
# ---------------------------------------------------------------------------

def _atom_coeffs(f: Cmp, var: str):
    p = cmp_poly(f)
    if p.degree(var) == 0:
        return None
    return p.coeffs_in(var), f.rel


def _collect_atoms(f: Formula, var: str, out: list):
    if isinstance(f, Cmp):
        got = _atom_coeffs(f, var)
        if got:
            out.append(got)
    elif isinstance(f, (And, Or)):
        _collect_atoms(f.left, var, out)
        _collect_atoms(f.right, var, out)
    elif isinstance(f, (TrueF, FalseF)):
        pass
    elif isinstance(f, (Exists, Forall)):
        if f.var != var:
            _collect_atoms(f.body, var, out)
    elif isinstance(f, (Not, Diamond, Box)):
        if var in formula_vars(f):
            raise QEError("cannot eliminate a variable occurring in a modal atom")
    else:
        raise TypeError(f"not in NNF: {f!r}")


def _known_sign(p: Poly, assume: tuple):
    """"+", "-" or None for the sign of p under the assumption atoms."""
    if p.is_const():
        v = p.const_value()
        return "+" if v > 0 else ("-" if v < 0 else "0")
    if isinstance(simplify(atom(p, ">"), assume), TrueF):
        return "+"
    if isinstance(simplify(atom(p, "<"), assume), TrueF):
        return "-"
    return None


def _candidates(atoms: list, var: str, assume: tuple = ()):
    """Guarded virtual points covering the lower endpoints of all maximal
    intervals of the solution set: -inf, atom roots, and infinitesimal
    shifts above roots of strict atoms.  When the assumption context pins a
    leading-coefficient sign, only the roots that can actually be lower
    endpoints for the atom's relation are generated."""
    points = [(TRUE, MINUS_INF)]
    seen = set()

    def add(guard, pt, want_eps, want_root=True):
        if want_root:
            points.append((guard, pt))
        if want_eps:
            points.append((guard, _Eps(pt)))

    for coeffs, rel in atoms:
        deg = len(coeffs) - 1
        if deg > 2:
            raise DegreeTooHigh(f"degree {deg} in {var}")
        strict = rel in ("<", ">", "!=")
        if deg >= 1:
            c1, c0 = coeffs[1], coeffs[0]
            lin_guard = TRUE
            if deg == 2:
                lin_guard = atom(coeffs[2], "=")
            if not c1.is_zero() and not isinstance(lin_guard, FalseF):
                guard = simplify(conj(lin_guard, atom(c1, "!=")), assume)
                if not isinstance(guard, FalseF):
                    key = ("lin", c1, c0)
                    if key not in seen:
                        seen.add(key)
                        sign = _known_sign(c1, assume) if deg == 1 else None
                        eff = rel if sign == "+" else (
                            {"<": ">", "<=": ">=", ">": "<", ">=": "<=",
                             "=": "=", "!=": "!="}[rel] if sign == "-" else None)
                        pt = _Root(-c0, c1)
                        if eff is None:
                            add(guard, pt, strict)
                        elif eff in (">", "!="):
                            add(guard, pt, True, want_root=False)
                        elif eff in (">=", "="):
                            add(guard, pt, False)
                        # eff "<" / "<=": upper endpoint only, no candidate
        if deg == 2:
            c2, c1, c0 = coeffs[2], coeffs[1], coeffs[0]
            disc = c1 * c1 - c0 * c2.scale(4)
            guard = simplify(conj(atom(c2, "!="), atom(disc, ">=")), assume)
            if isinstance(guard, FalseF):
                continue
            key = ("quad", c2, c1, c0)
            if key in seen:
                continue
            seen.add(key)
            sign = _known_sign(c2, assume)
            eff = rel if sign != "-" else REL_MIRROR_Q[rel]
            lo = _SqrtRoot(-c1, Poly.const(-1 if sign != "-" else 1), disc, c2.scale(2))
            hi = _SqrtRoot(-c1, Poly.const(1 if sign != "-" else -1), disc, c2.scale(2))
            if sign is None:
                for pt in (lo, hi):
                    add(guard, pt, strict)
                continue
            # upward parabola cases (after mirroring for downward)
            if eff == "<":
                add(guard, lo, True, want_root=False)
            elif eff == "<=":
                add(guard, lo, False)
            elif eff == ">":
                add(guard, hi, True, want_root=False)
            elif eff == ">=":
                add(guard, hi, False)
            elif eff == "=":
                add(guard, lo, False)
                add(guard, hi, False)
            else:  # "!="
                add(guard, lo, True, want_root=False)
                add(guard, hi, True, want_root=False)
    return points


REL_MIRROR_Q = {"<": ">", "<=": ">=", "=": "=", "!=": "!=", ">=": "<=", ">": "<"}


def _subst_formula(f: Formula, var: str, point) -> Formula:
    if isinstance(f, Cmp):
        got = _atom_coeffs(f, var)
        if not got:
            return f
        coeffs, rel = got
        return _subst_point(coeffs, rel, point)
    if isinstance(f, (And, Or)):
        return type(f)(_subst_formula(f.left, var, point), _subst_formula(f.right, var, point))
    if isinstance(f, (TrueF, FalseF, Not, Diamond, Box)):
        return f
    if isinstance(f, (Exists, Forall)):
        if f.var == var:
            return f
        return type(f)(f.var, _subst_formula(f.body, var, point))
    raise TypeError(f"not in NNF: {f!r}")


# ---------------------------------------------------------------------------
# Elimination
# ---------------------------------------------------------------------------

def _exists_core(var: str, f: Formula, deadline: Deadline, assume: tuple = ()) -> Formula:
    deadline.check()
    atoms: list = []
    _collect_atoms(f, var, atoms)
    if not atoms:
        return f
    parts = []
    for guard, point in _candidates(atoms, var, assume):
        deadline.check()
        guard = simplify(guard, assume)
        if isinstance(guard, FalseF):
            continue
        parts.append(simplify(conj(guard, _subst_formula(f, var, point)), assume))
    return simplify(disj(*parts), assume)


def _exists(var: str, f: Formula, deadline: Deadline, assume: tuple = (),
            split_budget: int = 3) -> Formula:
    """Eliminate exists var from quantifier-free NNF f, with miniscoping
    and budgeted distribution over disjunctions."""
    deadline.check()
    if var not in formula_vars(f):
        return f
    if isinstance(f, Or):
        return simplify(disj(_exists(var, f.left, deadline, assume, split_budget),
                             _exists(var, f.right, deadline, assume, split_budget)), assume)
    if isinstance(f, And):
        items: list = []
        _stack = [f]
        while _stack:
            g = _stack.pop()
            if isinstance(g, And):
                _stack.append(g.left)
                _stack.append(g.right)
            else:
                items.append(g)
        with_var = [g for g in items if var in formula_vars(g)]
        without = [g for g in items if var not in formula_vars(g)]
        if without:
            inner = _exists(var, conj(*with_var), deadline, assume, split_budget)
            return simplify(conj(conj(*without), inner), assume)
        if split_budget > 0:
            # distribute the quantifier over one disjunctive child so each
            # branch offers fewer test-point candidates
            for i, g in enumerate(items):
                if isinstance(g, Or):
                    rest = items[:i] + items[i + 1:]
                    return simplify(disj(
                        _exists(var, conj(g.left, *rest), deadline, assume,
                                split_budget - 1),
                        _exists(var, conj(g.right, *rest), deadline, assume,
                                split_budget - 1),
                    ), assume)
        return _exists_core(var, f, deadline, assume)
    return _exists_core(var, f, deadline, assume)


def eliminate_exists(var: str, f: Formula, deadline: Deadline = _NO_DEADLINE,
                     assume: tuple = ()) -> Formula:
    """Eliminate an existential quantifier from a quantifier-free formula."""
    return _exists(var, nnf(f), deadline, assume)


class _Approx:
    """Tracks whether any approximation step weakened the result."""

    def __init__(self):
        self.exact = True


def _qe(f: Formula, deadline: Deadline, approx, tracker: _Approx,
        assume: tuple = ()) -> Formula:
    """Eliminate all quantifiers in f (NNF).  approx is None (fail hard) or
    "under" (the result may be strictly stronger than f but must imply it).
    """
    deadline.check()
    if isinstance(f, (TrueF, FalseF, Cmp, Not, Diamond, Box)):
        return f
    if isinstance(f, (And, Or)):
        return type(f)(
            _qe(f.left, deadline, approx, tracker, assume),
            _qe(f.right, deadline, approx, tracker, assume),
        )
    if isinstance(f, Exists):
        body = _qe(f.body, deadline, approx, tracker, assume)
        try:
            return _exists(f.var, body, deadline, assume)
        except DegreeTooHigh:
            if approx != "under":
                raise
            tracker.exact = False
            return _exists_under(f.var, body, deadline)
    if isinstance(f, Forall):
        body = _qe(f.body, deadline, approx, tracker, assume)
        neg = nnf(Not(body))
        try:
            return simplify(nnf(Not(_exists(f.var, neg, deadline, assume))), assume)
        except DegreeTooHigh:
            if approx != "under":
                raise
            tracker.exact = False
            return simplify(nnf(Not(_exists_over(f.var, neg, deadline))), assume)
    raise TypeError(f"unexpected formula in qe: {f!r}")


_SAMPLE_VALUES = tuple(
    Fraction(n, d) for n in range(-4, 5) for d in (1, 2)
)


def _exists_under(var: str, f: Formula, deadline: Deadline) -> Formula:
    """Sound under-approximation of exists var f by sampling values."""
    from ..syntax import Const, formula_subst
    parts = []
    for v in _SAMPLE_VALUES:
        deadline.check()
        parts.append(formula_subst(f, {var: Const(v)}))
    return simplify(disj(*parts))


def _exists_over(var: str, f: Formula, deadline: Deadline) -> Formula:
    """Sound over-approximation: distribute the quantifier through
    conjunctions (exists x (A and B) implies exists x A and exists x B)."""
    deadline.check()
    if var not in formula_vars(f):
        return f
    if isinstance(f, (And, Or)):
        return type(f)(
            _exists_over(var, f.left, deadline),
            _exists_over(var, f.right, deadline),
        )
    try:
        return _exists(var, f, deadline)
    except DegreeTooHigh:
        # drop the constraint entirely: exists x A  implies  true
        return TRUE


def qe(f: Formula, deadline: Deadline = _NO_DEADLINE, approx=None,
       assume: tuple = ()):
    """Eliminate all quantifiers.  Returns (formula, exact).

    With approx=None the result is equivalent or DegreeTooHigh is raised.
    With approx="under" the result implies f (used for conservative
    winning-region computations) and `exact` reports whether any
    approximation was taken.
    """
    tracker = _Approx()
    out = simplify(_qe(nnf(f), deadline, approx, tracker, assume), assume)
    return out, tracker.exact
