"""Equivalence-preserving formula simplification.

Works on negation normal form with canonicalized polynomial atoms.  The
two load-bearing rewrites are exact interval reasoning among atoms sharing
the same nonconstant polynomial part (so ``x > 0 | x > 1`` collapses to
``x > 0``) and context propagation: each child of a junction may assume its
siblings' atoms (negated siblings inside a disjunction), which prunes
decided atoms at any depth.  Every rewrite preserves logical equivalence.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from ..poly import Poly
from ..syntax import (
    FALSE, TRUE, And, Box, Cmp, Const, Diamond, Exists, FalseF, Forall,
    Formula, Iff, Imp, Not, Or, TrueF, conj, disj, formula_vars, poly_term,
    term_poly,
)

REL_NEGATE = {"<": ">=", "<=": ">", "=": "!=", "!=": "=", ">=": "<", ">": "<="}
REL_MIRROR = {"<": ">", "<=": ">=", "=": "=", "!=": "!=", ">=": "<=", ">": "<"}


@lru_cache(maxsize=65536)
def cmp_poly(c: Cmp) -> Poly:
    return term_poly(c.left) - term_poly(c.right)


_atom_intern: dict = {}


def atom(p: Poly, rel: str) -> Formula:
    """Canonical comparison `p rel 0`; folds ground atoms to true/false and
    factors out common variable powers (sign-analyzed exactly), so e.g.
    ``B^2 * q < 0`` becomes ``B != 0 & q < 0``.  Results are interned so
    equal atoms share one object (cheap cache hits downstream)."""
    if p.is_const():
        return TRUE if _rel_holds(p.const_value(), rel) else FALSE
    q, scale = p.primitive()
    if scale < 0:
        rel = REL_MIRROR[rel]
    key = (q, rel)
    hit = _atom_intern.get(key)
    if hit is not None:
        return hit
    common = _common_factors(q)
    if common:
        out: Formula = _factored_atom(common, _divide_out(q, common), rel)
    else:
        out = Cmp(poly_term(q), rel, Const(Fraction(0)))
    if len(_atom_intern) < 200000:
        _atom_intern[key] = out
    return out


def _common_factors(p: Poly) -> dict:
    """var -> even exponent dividing every monomial of p (the sign-inert
    part; one odd power is left in place so linear atoms stay atoms)."""
    common = None
    for m in p.coeffs:
        d = dict(m)
        if common is None:
            common = d
        else:
            common = {v: min(e, d[v]) for v, e in common.items() if v in d}
        if not common:
            return {}
    return {v: e - (e % 2) for v, e in (common or {}).items() if e >= 2}


def _divide_out(p: Poly, factors: dict) -> Poly:
    out = {}
    for m, c in p.coeffs.items():
        mono = tuple(sorted(
            (v, e - factors.get(v, 0)) for v, e in m if e - factors.get(v, 0) > 0
        ))
        out[mono] = c
    return Poly(out)


def _plain_atom(p: Poly, rel: str) -> Formula:
    if p.is_const():
        return TRUE if _rel_holds(p.const_value(), rel) else FALSE
    q, scale = p.primitive()
    if scale < 0:
        rel = REL_MIRROR[rel]
    return Cmp(poly_term(q), rel, Const(Fraction(0)))


def _factored_atom(factors: dict, q: Poly, rel: str) -> Formula:
    """Sign analysis of (prod v^e) * q rel 0."""
    vs = sorted(factors)
    odds = [v for v in vs if factors[v] % 2 == 1]

    def var_atom(v, r):
        return Cmp(poly_term(Poly.var(v)), r, Const(Fraction(0)))

    if rel == "=":
        return disj(*[var_atom(v, "=") for v in vs], _plain_atom(q, "="))
    if rel == "!=":
        return conj(*[var_atom(v, "!=") for v in vs], _plain_atom(q, "!="))
    if rel in (">=", "<="):
        strict = ">" if rel == ">=" else "<"
        return disj(_factored_atom(factors, q, strict),
                    _factored_atom(factors, q, "="))
    # strict relation: every factor nonzero, signs multiply through odds
    evens_nonzero = [var_atom(v, "!=") for v in vs if factors[v] % 2 == 0]

    def signed(rest, r):
        if not rest:
            return _plain_atom(q, r)
        v = rest[0]
        return disj(
            conj(var_atom(v, ">"), signed(rest[1:], r)),
            conj(var_atom(v, "<"), signed(rest[1:], REL_MIRROR[r])),
        )

    return conj(*evens_nonzero, signed(odds, rel))


def _rel_holds(v: Fraction, rel: str) -> bool:
    return {
        "<": v < 0, "<=": v <= 0, "=": v == 0,
        "!=": v != 0, ">=": v >= 0, ">": v > 0,
    }[rel]


def nnf(f: Formula, negated: bool = False) -> Formula:
    """Negation normal form; `Imp`/`Iff` expanded, atoms canonicalized."""
    if isinstance(f, TrueF):
        return FALSE if negated else TRUE
    if isinstance(f, FalseF):
        return TRUE if negated else FALSE
    if isinstance(f, Cmp):
        rel = REL_NEGATE[f.rel] if negated else f.rel
        return atom(cmp_poly(f), rel)
    if isinstance(f, Not):
        return nnf(f.arg, not negated)
    if isinstance(f, And):
        l, r = nnf(f.left, negated), nnf(f.right, negated)
        return disj(l, r) if negated else conj(l, r)
    if isinstance(f, Or):
        l, r = nnf(f.left, negated), nnf(f.right, negated)
        return conj(l, r) if negated else disj(l, r)
    if isinstance(f, Imp):
        if negated:
            return conj(nnf(f.left), nnf(f.right, True))
        return disj(nnf(f.left, True), nnf(f.right))
    if isinstance(f, Iff):
        expanded = And(Imp(f.left, f.right), Imp(f.right, f.left))
        return nnf(expanded, negated)
    if isinstance(f, Exists):
        return (Forall if negated else Exists)(f.var, nnf(f.body, negated))
    if isinstance(f, Forall):
        return (Exists if negated else Forall)(f.var, nnf(f.body, negated))
    if isinstance(f, (Diamond, Box)):
        # modal atoms are opaque here
        return Not(f) if negated else f
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Interval reasoning over atoms sharing a nonconstant part
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _atom_parts(c: Cmp):
    """Split a canonical atom into (base poly, rel, bound) meaning
    `base rel bound`, with base primitive nonconstant."""
    p = cmp_poly(c)
    const = Fraction(p.coeffs.get((), Fraction(0)))
    noncon = p - Poly.const(const)
    base, scale = noncon.primitive()
    rel = c.rel
    if scale < 0:
        rel = REL_MIRROR[rel]
    bound = -const / scale
    return base, rel, bound


def _atom_of_parts(base: Poly, rel: str, bound: Fraction) -> Formula:
    return atom(base - Poly.const(bound), rel)


class _Interval:
    """Reals admitted by a conjunction of bound constraints on one value."""

    __slots__ = ("lo", "lo_strict", "hi", "hi_strict", "holes")

    def __init__(self):
        self.lo = None          # None = -inf
        self.lo_strict = False
        self.hi = None          # None = +inf
        self.hi_strict = False
        self.holes = set()      # finitely many removed points

    def add(self, rel: str, b: Fraction) -> bool:
        """Intersect with `value rel b`; False if provably empty."""
        if rel == "=":
            ok = self.contains(b)
            self.lo = self.hi = b
            self.lo_strict = self.hi_strict = False
            return ok
        if rel == "!=":
            self.holes.add(b)
        elif rel in ("<", "<="):
            s = rel == "<"
            if self.hi is None or b < self.hi or (b == self.hi and s):
                self.hi, self.hi_strict = b, s
        else:
            s = rel == ">"
            if self.lo is None or b > self.lo or (b == self.lo and s):
                self.lo, self.lo_strict = b, s
        return not self.empty()

    def contains(self, v: Fraction) -> bool:
        if v in self.holes:
            return False
        if self.lo is not None and (v < self.lo or (v == self.lo and self.lo_strict)):
            return False
        if self.hi is not None and (v > self.hi or (v == self.hi and self.hi_strict)):
            return False
        return True

    def empty(self) -> bool:
        if self.lo is not None and self.hi is not None:
            if self.lo > self.hi:
                return True
            if self.lo == self.hi:
                if self.lo_strict or self.hi_strict:
                    return True
                return self.lo in self.holes
        return False

    def atoms(self, base: Poly) -> list:
        """Minimal atom list describing this set."""
        out = []
        if (self.lo is not None and self.lo == self.hi
                and not self.lo_strict and not self.hi_strict):
            out.append(_atom_of_parts(base, "=", self.lo))
            return out
        if self.lo is not None:
            out.append(_atom_of_parts(base, ">" if self.lo_strict else ">=", self.lo))
        if self.hi is not None:
            out.append(_atom_of_parts(base, "<" if self.hi_strict else "<=", self.hi))
        for h in sorted(self.holes):
            if self._inside(h):
                out.append(_atom_of_parts(base, "!=", h))
        return out

    def _inside(self, v: Fraction) -> bool:
        if self.lo is not None and (v < self.lo or (v == self.lo and self.lo_strict)):
            return False
        if self.hi is not None and (v > self.hi or (v == self.hi and self.hi_strict)):
            return False
        return True


def _union_atoms(base: Poly, constraints: list):
    """Union of `value rel b` constraints; None means the whole line."""
    neqs = {b for rel, b in constraints if rel == "!="}
    if len(neqs) > 1:
        return None
    lo_best = None  # weakest lower ray: (bound, strict)
    hi_best = None
    points = set()
    for rel, b in constraints:
        if rel == "=":
            points.add(b)
        elif rel in (">", ">="):
            s = rel == ">"
            if lo_best is None or b < lo_best[0] or (b == lo_best[0] and not s):
                lo_best = (b, s)
        elif rel in ("<", "<="):
            s = rel == "<"
            if hi_best is None or b > hi_best[0] or (b == hi_best[0] and not s):
                hi_best = (b, s)
    if neqs:
        hole = next(iter(neqs))
        covered = hole in points
        if lo_best and (hole > lo_best[0] or (hole == lo_best[0] and not lo_best[1])):
            covered = True
        if hi_best and (hole < hi_best[0] or (hole == hi_best[0] and not hi_best[1])):
            covered = True
        if covered:
            return None
        return [_atom_of_parts(base, "!=", hole)]
    if lo_best and hi_best:
        lo_b, lo_s = lo_best
        hi_b, hi_s = hi_best
        if lo_b < hi_b or (lo_b == hi_b and not (lo_s and hi_s)):
            return None
        if lo_b == hi_b and lo_s and hi_s:
            if lo_b in points:
                return None
            return [_atom_of_parts(base, "!=", lo_b)]
    out = []
    for p in sorted(points):
        if lo_best and (p > lo_best[0] or (p == lo_best[0] and not lo_best[1])):
            continue
        if hi_best and (p < hi_best[0] or (p == hi_best[0] and not hi_best[1])):
            continue
        if lo_best and p == lo_best[0] and lo_best[1]:
            lo_best = (p, False)
            continue
        if hi_best and p == hi_best[0] and hi_best[1]:
            hi_best = (p, False)
            continue
        out.append(_atom_of_parts(base, "=", p))
    if lo_best:
        out.append(_atom_of_parts(base, ">" if lo_best[1] else ">=", lo_best[0]))
    if hi_best:
        out.append(_atom_of_parts(base, "<" if hi_best[1] else "<=", hi_best[0]))
    return out


def _implies_atom(a: Cmp, b: Cmp) -> bool:
    """Exact implication between two comparisons on the same base."""
    ba, ra, ca = _atom_parts(a)
    bb, rb, cb = _atom_parts(b)
    if ba != bb:
        return False
    if rb == "!=":
        return {
            "=": ca != cb, "<": ca <= cb, "<=": ca < cb,
            ">": ca >= cb, ">=": ca > cb, "!=": ca == cb,
        }[ra]
    if ra == "=":
        return _rel_holds(ca - cb, rb)
    if rb == "<":
        return (ra == "<" and ca <= cb) or (ra == "<=" and ca < cb)
    if rb == "<=":
        return (ra == "<" and ca <= cb) or (ra == "<=" and ca <= cb)
    if rb == ">":
        return (ra == ">" and ca >= cb) or (ra == ">=" and ca > cb)
    if rb == ">=":
        return (ra == ">" and ca >= cb) or (ra == ">=" and ca >= cb)
    return False


def _disjoint_atoms(a: Cmp, b: Cmp) -> bool:
    """Exact emptiness of the conjunction of two same-base comparisons."""
    ba, ra, ca = _atom_parts(a)
    bb, rb, cb = _atom_parts(b)
    if ba != bb:
        return False
    iv = _Interval()
    return not (iv.add(ra, ca) and iv.add(rb, cb))


# ---------------------------------------------------------------------------
# n-ary simplification core
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _key(f: Formula) -> str:
    from ..syntax import pretty
    return pretty(f)


def _flatten(kind, f: Formula, out: list):
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, kind):
            stack.append(g.right)
            stack.append(g.left)
        else:
            out.append(g)


def _negate_atom(c: Cmp) -> Cmp:
    return Cmp(c.left, REL_NEGATE[c.rel], c.right)


def _simp(f: Formula, ctx: tuple = ()) -> Formula:
    """Simplify under a context of atoms assumed true."""
    if isinstance(f, (TrueF, FalseF, Diamond, Box, Not)):
        return f
    if isinstance(f, Cmp):
        f = _divide_known_signs(f, ctx)
        if not isinstance(f, Cmp):
            return _simp(f, ctx)
        for s in ctx:
            if _implies_atom(s, f):
                return TRUE
            if _disjoint_atoms(s, f):
                return FALSE
        return f
    if isinstance(f, (Exists, Forall)):
        inner_ctx = tuple(s for s in ctx if f.var not in formula_vars(s))
        body = _simp(f.body, inner_ctx)
        if isinstance(body, (TrueF, FalseF)):
            return body
        if f.var not in formula_vars(body):
            return body
        return type(f)(f.var, body)
    if isinstance(f, And):
        items: list = []
        _flatten(And, f, items)
        return _simp_junction(items, True, ctx)
    if isinstance(f, Or):
        items = []
        _flatten(Or, f, items)
        return _simp_junction(items, False, ctx)
    raise TypeError(f"not in NNF: {f!r}")


def _ctx_var_sign(var: str, ctx: tuple):
    """The sign of `var` when the context pins it: ">", "<" or None."""
    probe_pos = Cmp(poly_term(Poly.var(var)), ">", Const(Fraction(0)))
    probe_neg = Cmp(poly_term(Poly.var(var)), "<", Const(Fraction(0)))
    for s in ctx:
        if _implies_atom(s, probe_pos):
            return ">"
        if _implies_atom(s, probe_neg):
            return "<"
    return None


def _divide_known_signs(c: Cmp, ctx: tuple) -> Formula:
    """Divide out variable factors whose sign the context knows."""
    if not ctx:
        return c
    p = cmp_poly(c)
    common = None
    for m in p.coeffs:
        d = dict(m)
        common = d if common is None else {
            v: min(e, d[v]) for v, e in common.items() if v in d}
        if not common:
            return c
    rel = c.rel
    reduced = p
    changed = False
    for v, e in sorted(common.items()):
        sign = _ctx_var_sign(v, ctx)
        if sign is None:
            continue
        reduced = _divide_out(reduced, {v: e})
        if sign == "<" and e % 2 == 1:
            rel = REL_MIRROR[rel]
        changed = True
    if not changed:
        return c
    return atom(reduced, rel)


def _simp_junction(items: list, is_and: bool, ctx: tuple) -> Formula:
    unit, absorb = (TRUE, FALSE) if is_and else (FALSE, TRUE)

    # dedupe first, so identical siblings cannot erase each other through
    # mutual context propagation
    seen = {}
    for it in items:
        seen.setdefault(_key(it), it)
    flat = list(seen.values())

    sibling_atoms = [x for x in flat if isinstance(x, Cmp)]
    out: list = []
    for it in flat:
        extra = tuple(
            s if is_and else _negate_atom(s)
            for s in sibling_atoms if s is not it
        )
        s = _simp(it, ctx + extra)
        if isinstance(s, type(absorb)):
            return absorb
        if isinstance(s, type(unit)):
            continue
        more: list = []
        _flatten(And if is_and else Or, s, more)
        out.extend(more)

    seen = {}
    for it in out:
        seen.setdefault(_key(it), it)
    flat = list(seen.values())

    # exact interval reasoning among atoms sharing a base polynomial
    atoms = [x for x in flat if isinstance(x, Cmp)]
    others = [x for x in flat if not isinstance(x, Cmp)]
    groups: dict = {}
    for a in atoms:
        base, rel, bound = _atom_parts(a)
        groups.setdefault(base, []).append((rel, bound))
    new_atoms: list = []
    for base, constraints in groups.items():
        if is_and:
            iv = _Interval()
            ok = True
            for rel, b in constraints:
                if not iv.add(rel, b):
                    ok = False
                    break
            if not ok:
                return absorb
            new_atoms.extend(iv.atoms(base))
        else:
            merged = _union_atoms(base, constraints)
            if merged is None:
                return absorb  # union is the whole line: TRUE inside an Or
            new_atoms.extend(merged)

    result = new_atoms + others
    result = _prune_subsumed(result, is_and)
    if not result:
        return unit
    result.sort(key=_key)
    builder = conj if is_and else disj
    return builder(*result)


def _literal_view(f: Formula, as_conj: bool):
    """f as a list of atom literals when it is a pure conjunction (or pure
    disjunction) of comparisons; None otherwise."""
    kind = And if as_conj else Or
    out: list = []
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, kind):
            stack.append(g.left)
            stack.append(g.right)
        elif isinstance(g, Cmp):
            out.append(g)
        else:
            return None
    return out


def _prune_subsumed(items: list, is_and: bool) -> list:
    """Drop children entailed by a sibling (in a disjunction, X dies when
    X -> Y for a sibling Y; dually in a conjunction), using the sound
    atom-wise rule on conjunction/disjunction views."""
    n = len(items)
    if n < 2 or n > 200:
        return items
    views = [_literal_view(f, as_conj=is_and is False) for f in items]

    def entails(i: int, j: int) -> bool:
        vi, vj = views[i], views[j]
        if vi is None or vj is None:
            return False
        if is_and:
            # drop X when sibling Y -> X:  Y=disj(ys) -> X=disj(xs)
            # iff every y implies some x
            return all(any(_implies_atom(y, x) for x in vi) for y in vj)
        # Or-context: drop X when X -> Y: every conjunct of Y is implied
        # by some conjunct of X
        return all(any(_implies_atom(x, y) for x in vi) for y in vj)

    dropped = [False] * n
    for i in range(n):
        if dropped[i]:
            continue
        for j in range(n):
            if i == j or dropped[j]:
                continue
            if entails(i, j):
                both = entails(j, i)
                if not both or j < i:
                    dropped[i] = True
                    break
    return [x for k, x in enumerate(items) if not dropped[k]]


def simplify(f: Formula, assume: tuple = ()) -> Formula:
    """Simplify to an equivalent formula (NNF, canonical atoms).

    `assume` is a tuple of atoms taken as given: the result is then only
    guaranteed equivalent in states satisfying them."""
    g = nnf(f)
    for _ in range(6):
        h = _simp(g, assume)
        if h == g:
            break
        g = h
    return g


def context_atoms(f: Formula) -> tuple:
    """Conjunct atoms of a formula, usable as a simplification context."""
    if f is None:
        return ()
    g = nnf(f)
    out: list = []

    def walk(x):
        if isinstance(x, And):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, Cmp):
            out.append(x)

    walk(g)
    return tuple(out)
