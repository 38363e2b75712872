"""AST, concrete syntax and labeling for hybrid games and their formulas.

Grammar (ASCII):
    games     g ::= x := e | x := * | x := @ | ?F | !F
                  | {x1'=e1, x2'=e2 & F}  (Angel ODE; `& F` optional, default true)
                  | {...}^d               (Demon ODE)
                  | g ; g | g ++ g | g ^^ g | g* | g#
    formulas  F ::= e (<|<=|=|>=|>|!=) e | true | false | !F | F & F | F | F
                  | F -> F | F <-> F | exists x F | forall x F | <g> F | [g] F
    terms     e ::= rational literals, variables, + - * / ^, parentheses

`++` is Angel's choice, `^^` Demon's; postfix `*` is Angel's loop, `#`
Demon's.  Division is only allowed by nonzero constants.  `skip` exists as
an AST node (empty game) but is rejected in user input.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Union

from .poly import Poly

END = "END"  # sentinel label for the special end subgame


class SyntaxError_(Exception):
    """Parse failure with position information."""

    def __init__(self, msg, line=None, col=None):
        if line is not None:
            msg = f"{msg} (line {line}, column {col})"
        super().__init__(msg)
        self.line = line
        self.col = col


def _cached_hash(cls):
    """Cache the recursive dataclass hash on first use (symbolic trees get
    hashed constantly by the memoization tables)."""
    orig = cls.__hash__

    def __hash__(self):
        try:
            return object.__getattribute__(self, "_hash_cache")
        except AttributeError:
            h = orig(self)
            object.__setattr__(self, "_hash_cache", h)
            return h

    cls.__hash__ = __hash__
    return cls


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

class Term:
    __slots__ = ()


@_cached_hash
@dataclass(frozen=True)
class Var(Term):
    name: str


@_cached_hash
@dataclass(frozen=True)
class Const(Term):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@_cached_hash
@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term


@_cached_hash
@dataclass(frozen=True)
class Sub(Term):
    left: Term
    right: Term


@_cached_hash
@dataclass(frozen=True)
class Mul(Term):
    left: Term
    right: Term


@_cached_hash
@dataclass(frozen=True)
class Div(Term):
    left: Term
    right: Term  # must be a nonzero constant


@_cached_hash
@dataclass(frozen=True)
class Neg(Term):
    arg: Term


@_cached_hash
@dataclass(frozen=True)
class Pow(Term):
    base: Term
    exp: int


@lru_cache(maxsize=None)
def term_poly(t: Term) -> Poly:
    """Convert a term to a polynomial (division only by nonzero constants)."""
    if isinstance(t, Var):
        return Poly.var(t.name)
    if isinstance(t, Const):
        return Poly.const(t.value)
    if isinstance(t, Add):
        return term_poly(t.left) + term_poly(t.right)
    if isinstance(t, Sub):
        return term_poly(t.left) - term_poly(t.right)
    if isinstance(t, Mul):
        return term_poly(t.left) * term_poly(t.right)
    if isinstance(t, Div):
        den = term_poly(t.right)
        if not den.is_const() or den.is_zero():
            raise ValueError("division only by nonzero constants")
        return term_poly(t.left).scale(1 / den.const_value())
    if isinstance(t, Neg):
        return -term_poly(t.arg)
    if isinstance(t, Pow):
        return term_poly(t.base).pow(t.exp)
    raise TypeError(f"not a term: {t!r}")


def poly_term(p: Poly) -> Term:
    """Deterministic term rendering of a polynomial."""
    if p.is_zero():
        return Const(Fraction(0))
    parts = []
    for m in sorted(p.coeffs, reverse=True):
        c = p.coeffs[m]
        factors = []
        for v, e in m:
            base = Var(v)
            factors.append(Pow(base, e) if e > 1 else base)
        mono: Optional[Term] = None
        for f in factors:
            mono = f if mono is None else Mul(mono, f)
        if mono is None:
            parts.append(Const(c))
        elif c == 1:
            parts.append(mono)
        elif c == -1:
            parts.append(Neg(mono))
        else:
            parts.append(Mul(Const(c), mono))
    # balanced fold keeps the tree depth logarithmic (deep chains make
    # recursive hashing/equality of the frozen dataclasses blow the stack)
    while len(parts) > 1:
        nxt = []
        for i in range(0, len(parts) - 1, 2):
            l, r = parts[i], parts[i + 1]
            if isinstance(r, Neg):
                nxt.append(Sub(l, r.arg))
            elif isinstance(r, Const) and r.value < 0:
                nxt.append(Sub(l, Const(-r.value)))
            elif isinstance(r, Mul) and isinstance(r.left, Const) and r.left.value < 0:
                nxt.append(Sub(l, Mul(Const(-r.left.value), r.right)))
            else:
                nxt.append(Add(l, r))
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------

class Formula:
    __slots__ = ()


@_cached_hash
@dataclass(frozen=True)
class TrueF(Formula):
    pass


@_cached_hash
@dataclass(frozen=True)
class FalseF(Formula):
    pass


RELATIONS = ("<", "<=", "=", ">=", ">", "!=")


@_cached_hash
@dataclass(frozen=True)
class Cmp(Formula):
    left: Term
    rel: str
    right: Term

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError(f"bad relation {self.rel}")


@_cached_hash
@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@_cached_hash
@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@_cached_hash
@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@_cached_hash
@dataclass(frozen=True)
class Imp(Formula):
    left: Formula
    right: Formula


@_cached_hash
@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@_cached_hash
@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@_cached_hash
@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@_cached_hash
@dataclass(frozen=True)
class Diamond(Formula):
    game: "Game"
    post: Formula


@_cached_hash
@dataclass(frozen=True)
class Box(Formula):
    game: "Game"
    post: Formula


TRUE = TrueF()
FALSE = FalseF()


def _balanced(cls, items: list) -> Formula:
    while len(items) > 1:
        nxt = [cls(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def conj(*fs: Formula) -> Formula:
    kept = []
    for f in fs:
        if isinstance(f, TrueF):
            continue
        if isinstance(f, FalseF):
            return FALSE
        kept.append(f)
    return _balanced(And, kept) if kept else TRUE


def disj(*fs: Formula) -> Formula:
    kept = []
    for f in fs:
        if isinstance(f, FalseF):
            continue
        if isinstance(f, TrueF):
            return TRUE
        kept.append(f)
    return _balanced(Or, kept) if kept else FALSE


def is_propositional(f: Formula) -> bool:
    """True iff f is in propositional real arithmetic: no modality, no
    quantifier.  Always recomputed from the structure."""
    if isinstance(f, (TrueF, FalseF, Cmp)):
        return True
    if isinstance(f, Not):
        return is_propositional(f.arg)
    if isinstance(f, (And, Or, Imp, Iff)):
        return is_propositional(f.left) and is_propositional(f.right)
    return False


def formula_vars(f: Formula) -> set:
    """Free variables of a formula (modal games contribute all their vars)."""
    if isinstance(f, (TrueF, FalseF)):
        return set()
    if isinstance(f, Cmp):
        return term_poly(f.left).variables() | term_poly(f.right).variables()
    if isinstance(f, Not):
        return formula_vars(f.arg)
    if isinstance(f, (And, Or, Imp, Iff)):
        return formula_vars(f.left) | formula_vars(f.right)
    if isinstance(f, (Exists, Forall)):
        return formula_vars(f.body) - {f.var}
    if isinstance(f, (Diamond, Box)):
        return game_vars(f.game) | formula_vars(f.post)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------

class Game:
    __slots__ = ()


def _lfield():
    return field(default=None, compare=False)


@_cached_hash
@dataclass(frozen=True)
class Assign(Game):
    var: str
    term: Term
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class AngelFree(Game):
    var: str
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class DemonFree(Game):
    var: str
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class AngelTest(Game):
    cond: Formula
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class DemonTest(Game):
    cond: Formula
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class Ode(Game):
    eqs: tuple  # tuple of (var, Term)
    domain: Formula
    owner: str  # "angel" or "demon"
    label: Optional[int] = _lfield()

    def __post_init__(self):
        lhs = [v for v, _ in self.eqs]
        if len(set(lhs)) != len(lhs):
            raise ValueError("duplicate ODE left-hand sides")
        if self.owner not in ("angel", "demon"):
            raise ValueError("owner must be angel or demon")


@_cached_hash
@dataclass(frozen=True)
class Seq(Game):
    left: Game
    right: Game
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class AngelChoice(Game):
    left: Game
    right: Game
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class DemonChoice(Game):
    left: Game
    right: Game
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class AngelLoop(Game):
    body: Game
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class DemonLoop(Game):
    body: Game
    label: Optional[int] = _lfield()


@_cached_hash
@dataclass(frozen=True)
class Skip(Game):
    label: Optional[int] = _lfield()


ATOMIC = (Assign, AngelFree, DemonFree, AngelTest, DemonTest, Ode, Skip)
COMPOSITE_BINARY = (Seq, AngelChoice, DemonChoice)
LOOPS = (AngelLoop, DemonLoop)


def children(g: Game) -> tuple:
    if isinstance(g, COMPOSITE_BINARY):
        return (g.left, g.right)
    if isinstance(g, LOOPS):
        return (g.body,)
    return ()


def with_children(g: Game, kids: tuple, label=None) -> Game:
    cls = type(g)
    if isinstance(g, COMPOSITE_BINARY):
        return cls(kids[0], kids[1], label=label)
    if isinstance(g, LOOPS):
        return cls(kids[0], label=label)
    raise TypeError("atomic game has no children")


def all_names(x) -> set:
    """Every variable name occurring in a formula or game, including bound
    ones; used when inventing fresh names."""
    if isinstance(x, (TrueF, FalseF)):
        return set()
    if isinstance(x, Cmp):
        return term_poly(x.left).variables() | term_poly(x.right).variables()
    if isinstance(x, Not):
        return all_names(x.arg)
    if isinstance(x, (And, Or, Imp, Iff)):
        return all_names(x.left) | all_names(x.right)
    if isinstance(x, (Exists, Forall)):
        return all_names(x.body) | {x.var}
    if isinstance(x, (Diamond, Box)):
        return all_names(x.game) | all_names(x.post)
    if isinstance(x, Game):
        vs = set()
        if isinstance(x, Assign):
            vs |= {x.var} | term_poly(x.term).variables()
        elif isinstance(x, (AngelFree, DemonFree)):
            vs |= {x.var}
        elif isinstance(x, (AngelTest, DemonTest)):
            vs |= all_names(x.cond)
        elif isinstance(x, Ode):
            for v, e in x.eqs:
                vs |= {v} | term_poly(e).variables()
            vs |= all_names(x.domain)
        for c in children(x):
            vs |= all_names(c)
        return vs
    raise TypeError(f"cannot collect names from {x!r}")


def game_vars(g: Game) -> set:
    vs = set()
    if isinstance(g, Assign):
        vs |= {g.var} | term_poly(g.term).variables()
    elif isinstance(g, (AngelFree, DemonFree)):
        vs |= {g.var}
    elif isinstance(g, (AngelTest, DemonTest)):
        vs |= formula_vars(g.cond)
    elif isinstance(g, Ode):
        for v, e in g.eqs:
            vs |= {v} | term_poly(e).variables()
        vs |= formula_vars(g.domain)
    for c in children(g):
        vs |= game_vars(c)
    return vs


def bound_vars(g: Game) -> set:
    """Variables a game can write."""
    vs = set()
    if isinstance(g, Assign):
        vs.add(g.var)
    elif isinstance(g, (AngelFree, DemonFree)):
        vs.add(g.var)
    elif isinstance(g, Ode):
        vs |= {v for v, _ in g.eqs}
    for c in children(g):
        vs |= bound_vars(c)
    return vs


# ---------------------------------------------------------------------------
# Labeling
# ---------------------------------------------------------------------------

def label(g: Game) -> Game:
    """Assign unique labels by preorder traversal, root = 1.

    Idempotent up to stripping: relabeling an already-labeled game yields
    the same labels, since only the shape matters.
    """
    counter = [0]

    def walk(node: Game) -> Game:
        counter[0] += 1
        n = counter[0]
        kids = children(node)
        if not kids:
            return _relabel_atomic(node, n)
        return with_children(node, tuple(walk(k) for k in kids), label=n)

    return walk(g)


def _relabel_atomic(node: Game, n) -> Game:
    cls = type(node)
    if isinstance(node, Assign):
        return cls(node.var, node.term, label=n)
    if isinstance(node, (AngelFree, DemonFree)):
        return cls(node.var, label=n)
    if isinstance(node, (AngelTest, DemonTest)):
        return cls(node.cond, label=n)
    if isinstance(node, Ode):
        return cls(node.eqs, node.domain, node.owner, label=n)
    if isinstance(node, Skip):
        return cls(label=n)
    raise TypeError(node)


def relabel_fresh(g: Game, start: int) -> Game:
    """Relabel every node with fresh labels starting at `start` (preorder)."""
    counter = [start - 1]

    def walk(node):
        counter[0] += 1
        n = counter[0]
        kids = children(node)
        if not kids:
            return _relabel_atomic(node, n)
        return with_children(node, tuple(walk(k) for k in kids), label=n)

    return walk(g)


def nodes(g: Game) -> dict:
    """Map label -> subgame node for every node of a labeled game."""
    out = {}

    def walk(node):
        if node.label is None:
            raise ValueError("game is not labeled")
        if node.label in out:
            raise ValueError(f"duplicate label {node.label}")
        out[node.label] = node
        for k in children(node):
            walk(k)

    walk(g)
    return out


def max_label(g: Game) -> int:
    return max(nodes(g))


def find_node(g: Game, lab: int) -> Game:
    return nodes(g)[lab]


def strip_labels(g: Game) -> Game:
    kids = children(g)
    if not kids:
        return _relabel_atomic(g, None)
    return with_children(g, tuple(strip_labels(k) for k in kids), label=None)


# ---------------------------------------------------------------------------
# Substitution into formulas/terms
# ---------------------------------------------------------------------------

def term_subst(t: Term, assignment: dict) -> Term:
    return poly_term(term_poly(t).subst({v: term_poly(e) for v, e in assignment.items()}))


def formula_subst(f: Formula, assignment: dict) -> Formula:
    """Simultaneous capture-avoiding substitution var -> Term in a formula.

    Quantified variables shadow; substituting inside modalities is not
    supported (the callers only substitute into first-order formulas).
    """
    if not assignment:
        return f
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Cmp):
        return Cmp(term_subst(f.left, assignment), f.rel, term_subst(f.right, assignment))
    if isinstance(f, Not):
        return Not(formula_subst(f.arg, assignment))
    if isinstance(f, (And, Or, Imp, Iff)):
        return type(f)(formula_subst(f.left, assignment), formula_subst(f.right, assignment))
    if isinstance(f, (Exists, Forall)):
        inner = {v: e for v, e in assignment.items() if v != f.var}
        for e in inner.values():
            if f.var in term_poly(e).variables():
                raise ValueError(f"substitution would capture {f.var}")
        return type(f)(f.var, formula_subst(f.body, inner))
    if isinstance(f, (Diamond, Box)):
        raise ValueError("substitution into modal formulas is not supported")
    raise TypeError(f"not a formula: {f!r}")


def substitute(f: Formula, var: str, term: Term) -> Formula:
    """Replace every free occurrence of `var` in `f` by `term`."""
    return formula_subst(f, {var: term})


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

def _pretty_term(t: Term, prec=0) -> str:
    # precedence: add/sub 1, mul/div 2, neg 3, pow 4, atom 5
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        v = t.value
        if v.denominator == 1:
            s = str(v.numerator)
        else:
            s = f"{v.numerator}/{v.denominator}"
        if v < 0:
            return s if prec <= 1 else f"({s})"
        return s
    if isinstance(t, Add):
        s = f"{_pretty_term(t.left, 1)} + {_pretty_term(t.right, 2)}"
        return s if prec <= 1 else f"({s})"
    if isinstance(t, Sub):
        s = f"{_pretty_term(t.left, 1)} - {_pretty_term(t.right, 2)}"
        return s if prec <= 1 else f"({s})"
    if isinstance(t, Mul):
        s = f"{_pretty_term(t.left, 2)} * {_pretty_term(t.right, 3)}"
        return s if prec <= 2 else f"({s})"
    if isinstance(t, Div):
        s = f"{_pretty_term(t.left, 2)} / {_pretty_term(t.right, 4)}"
        return s if prec <= 2 else f"({s})"
    if isinstance(t, Neg):
        s = f"-{_pretty_term(t.arg, 3)}"
        return s if prec <= 3 else f"({s})"
    if isinstance(t, Pow):
        return f"{_pretty_term(t.base, 5)}^{t.exp}"
    raise TypeError(t)


def _pretty_formula(f: Formula, prec=0) -> str:
    # precedence: iff 1, imp 2, or 3, and 4, not/quant 5, atom 6
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Cmp):
        return f"{_pretty_term(f.left, 1)} {f.rel} {_pretty_term(f.right, 1)}"
    if isinstance(f, Iff):
        s = f"{_pretty_formula(f.left, 2)} <-> {_pretty_formula(f.right, 1)}"
        return s if prec <= 1 else f"({s})"
    if isinstance(f, Imp):
        s = f"{_pretty_formula(f.left, 3)} -> {_pretty_formula(f.right, 2)}"
        return s if prec <= 2 else f"({s})"
    if isinstance(f, Or):
        s = f"{_pretty_formula(f.left, 3)} | {_pretty_formula(f.right, 4)}"
        return s if prec <= 3 else f"({s})"
    if isinstance(f, And):
        s = f"{_pretty_formula(f.left, 4)} & {_pretty_formula(f.right, 5)}"
        return s if prec <= 4 else f"({s})"
    if isinstance(f, Not):
        return f"!{_pretty_formula(f.arg, 6)}"
    if isinstance(f, Exists):
        s = f"exists {f.var} {_pretty_formula(f.body, 5)}"
        return s if prec <= 5 else f"({s})"
    if isinstance(f, Forall):
        s = f"forall {f.var} {_pretty_formula(f.body, 5)}"
        return s if prec <= 5 else f"({s})"
    if isinstance(f, Diamond):
        return f"<{pretty(f.game)}> {_pretty_formula(f.post, 6)}"
    if isinstance(f, Box):
        return f"[{pretty(f.game)}] {_pretty_formula(f.post, 6)}"
    raise TypeError(f)


def _pretty_game(g: Game, prec=0, annotate=False) -> str:
    # precedence: choice 1, seq 2, loop-postfix 3, atom 4
    def ann(s, node, need=4):
        if annotate and node.label is not None:
            return f"({s})[{node.label}]"
        return s

    def wrap(s):
        # atoms that end in a term/formula must be parenthesized under a
        # loop postfix so the `*`/`#` is not consumed by the term parser
        return f"({s})" if prec >= 4 else s

    if isinstance(g, Assign):
        return ann(wrap(f"{g.var} := {_pretty_term(g.term, 1)}"), g)
    if isinstance(g, AngelFree):
        return ann(wrap(f"{g.var} := *"), g)
    if isinstance(g, DemonFree):
        return ann(wrap(f"{g.var} := @"), g)
    if isinstance(g, AngelTest):
        return ann(wrap(f"?{_pretty_formula(g.cond, 6)}"), g)
    if isinstance(g, DemonTest):
        return ann(wrap(f"!{_pretty_formula(g.cond, 6)}"), g)
    if isinstance(g, Ode):
        eqs = ", ".join(f"{v}' = {_pretty_term(e, 1)}" for v, e in g.eqs)
        dom = "" if isinstance(g.domain, TrueF) else f" & {_pretty_formula(g.domain, 5)}"
        s = f"{{{eqs}{dom}}}"
        if g.owner == "demon":
            s += "^d"
        return ann(s, g)
    if isinstance(g, Skip):
        return ann("skip", g)
    if isinstance(g, Seq):
        s = f"{_pretty_game(g.left, 2, annotate)} ; {_pretty_game(g.right, 3, annotate)}"
        if annotate and g.label is not None:
            return f"({s})[{g.label}]"
        return s if prec <= 2 else f"({s})"
    if isinstance(g, AngelChoice):
        s = f"{_pretty_game(g.left, 2, annotate)} ++ {_pretty_game(g.right, 2, annotate)}"
        if annotate and g.label is not None:
            return f"({s})[{g.label}]"
        return s if prec <= 1 else f"({s})"
    if isinstance(g, DemonChoice):
        s = f"{_pretty_game(g.left, 2, annotate)} ^^ {_pretty_game(g.right, 2, annotate)}"
        if annotate and g.label is not None:
            return f"({s})[{g.label}]"
        return s if prec <= 1 else f"({s})"
    if isinstance(g, AngelLoop):
        s = f"{_pretty_game(g.body, 4, annotate)}*"
        if annotate and g.label is not None:
            return f"({s})[{g.label}]"
        return s
    if isinstance(g, DemonLoop):
        s = f"{_pretty_game(g.body, 4, annotate)}#"
        if annotate and g.label is not None:
            return f"({s})[{g.label}]"
        return s
    raise TypeError(g)


def pretty(x, annotate=False) -> str:
    if isinstance(x, Game):
        return _pretty_game(x, annotate=annotate)
    if isinstance(x, Formula):
        return _pretty_formula(x)
    if isinstance(x, Term):
        return _pretty_term(x)
    raise TypeError(f"cannot pretty-print {x!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TWO_CHAR = ("++", "^^", "^d", ":=", "<=", ">=", "!=", "->", "&&", "||")
_THREE_CHAR = ("<->",)
_ONE_CHAR = "+-*/^(){}[]<>=?!;,&|'#@."

RESERVED = {"true", "false", "exists", "forall", "skip", "mode"}


def _tokenize(text: str):
    tokens = []
    i = 0
    line = 1
    col = 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i)
            if end < 0:
                raise SyntaxError_("unterminated comment", line, col)
            skipped = text[i:end + 2]
            line += skipped.count("\n")
            i = end + 2
            continue
        three = text[i:i + 3]
        if three in _THREE_CHAR:
            tokens.append((three, line, col))
            i += 3
            col += 3
            continue
        two = text[i:i + 2]
        if two in _TWO_CHAR:
            tokens.append((two, line, col))
            i += 2
            col += 2
            continue
        if ch.isdigit():
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            tokens.append((("num", text[i:j]), line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word == "exists" or word == "forall":
                tokens.append((word, line, col))
            else:
                tokens.append((("id", word), line, col))
            col += j - i
            i = j
            continue
        if ch == "\\":
            # accept \exists and \forall
            for kw in ("exists", "forall"):
                if text.startswith("\\" + kw, i):
                    tokens.append((kw, line, col))
                    i += len(kw) + 1
                    col += len(kw) + 1
                    break
            else:
                raise SyntaxError_(f"unexpected character {ch!r}", line, col)
            continue
        if ch in _ONE_CHAR:
            tokens.append((ch, line, col))
            i += 1
            col += 1
            continue
        raise SyntaxError_(f"unexpected character {ch!r}", line, col)
    tokens.append(("eof", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos][0]

    def here(self):
        _, line, col = self.toks[self.pos]
        return line, col

    def next(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok[0]

    def expect(self, tok):
        got = self.peek()
        if got != tok:
            line, col = self.here()
            raise SyntaxError_(f"expected {tok!r}, found {self._show(got)}", line, col)
        return self.next()

    @staticmethod
    def _show(tok):
        if isinstance(tok, tuple):
            return repr(tok[1])
        return repr(tok)

    def error(self, msg):
        line, col = self.here()
        raise SyntaxError_(msg, line, col)

    # -- terms ---------------------------------------------------------
    def term(self) -> Term:
        t = self.term_mul()
        while self.peek() in ("+", "-"):
            op = self.next()
            rhs = self.term_mul()
            t = Add(t, rhs) if op == "+" else Sub(t, rhs)
        return t

    def term_mul(self) -> Term:
        t = self.term_unary()
        while self.peek() in ("*", "/"):
            op = self.next()
            rhs = self.term_unary()
            if op == "*":
                t = Mul(t, rhs)
            else:
                t = Div(t, rhs)
        return t

    def term_unary(self) -> Term:
        if self.peek() == "-":
            self.next()
            return Neg(self.term_unary())
        return self.term_pow()

    def term_pow(self) -> Term:
        base = self.term_atom()
        if self.peek() == "^":
            self.next()
            tok = self.peek()
            if isinstance(tok, tuple) and tok[0] == "num" and "." not in tok[1]:
                self.next()
                return Pow(base, int(tok[1]))
            self.error("integer exponent expected")
        return base

    def term_atom(self) -> Term:
        tok = self.peek()
        if tok == "(":
            self.next()
            t = self.term()
            self.expect(")")
            return t
        if isinstance(tok, tuple) and tok[0] == "num":
            self.next()
            text = tok[1]
            if "." in text:
                whole, frac = text.split(".", 1)
                if not frac or "." in frac:
                    self.error(f"bad number {text!r}")
                val = Fraction(int(whole or "0")) + Fraction(int(frac), 10 ** len(frac))
            else:
                val = Fraction(int(text))
            return Const(val)
        if isinstance(tok, tuple) and tok[0] == "id":
            name = tok[1]
            if name in RESERVED:
                self.error(f"reserved word {name!r} used as variable")
            self.next()
            return Var(name)
        self.error("term expected")

    # -- formulas --------------------------------------------------------
    def formula(self) -> Formula:
        f = self.formula_imp()
        while self.peek() == "<->":
            self.next()
            f = Iff(f, self.formula_imp())
        return f

    def formula_imp(self) -> Formula:
        f = self.formula_or()
        if self.peek() == "->":
            self.next()
            return Imp(f, self.formula_imp())
        return f

    def formula_or(self) -> Formula:
        f = self.formula_and()
        while self.peek() in ("|", "||"):
            self.next()
            f = Or(f, self.formula_and())
        return f

    def formula_and(self) -> Formula:
        f = self.formula_unary()
        while self.peek() in ("&", "&&"):
            self.next()
            f = And(f, self.formula_unary())
        return f

    def formula_unary(self) -> Formula:
        tok = self.peek()
        if tok == "!":
            self.next()
            return Not(self.formula_unary())
        if tok in ("exists", "forall"):
            self.next()
            vtok = self.peek()
            if not (isinstance(vtok, tuple) and vtok[0] == "id"):
                self.error("quantified variable expected")
            if vtok[1] in RESERVED:
                self.error(f"reserved word {vtok[1]!r} used as variable")
            self.next()
            body = self.formula_unary()
            return (Exists if tok == "exists" else Forall)(vtok[1], body)
        if tok == "<":
            self.next()
            g = self.game()
            self.expect(">")
            return Diamond(g, self.formula_unary())
        if tok == "[":
            self.next()
            g = self.game()
            self.expect("]")
            return Box(g, self.formula_unary())
        return self.formula_atom()

    def formula_atom(self) -> Formula:
        tok = self.peek()
        if isinstance(tok, tuple) and tok[0] == "id" and tok[1] in ("true", "false"):
            self.next()
            return TRUE if tok[1] == "true" else FALSE
        if tok == "(":
            # could be parenthesized formula or a term in a comparison
            save = self.pos
            try:
                self.next()
                f = self.formula()
                self.expect(")")
                if self.peek() in ("<", "<=", "=", ">=", ">", "!="):
                    raise SyntaxError_("comparison", *self.here())
                return f
            except SyntaxError_:
                self.pos = save
        left = self.term()
        rel = self.peek()
        if rel not in ("<", "<=", "=", ">=", ">", "!="):
            self.error("comparison operator expected")
        self.next()
        right = self.term()
        return Cmp(left, rel, right)

    # -- games ---------------------------------------------------------
    def game(self) -> Game:
        g = self.game_seq()
        while self.peek() in ("++", "^^"):
            op = self.next()
            rhs = self.game_seq()
            g = AngelChoice(g, rhs) if op == "++" else DemonChoice(g, rhs)
        return g

    def game_seq(self) -> Game:
        g = self.game_postfix()
        while self.peek() == ";":
            self.next()
            g = Seq(g, self.game_postfix())
        return g

    def game_postfix(self) -> Game:
        g = self.game_atom()
        while self.peek() in ("*", "#"):
            op = self.next()
            g = AngelLoop(g) if op == "*" else DemonLoop(g)
        return g

    def game_atom(self) -> Game:
        tok = self.peek()
        if tok == "(":
            self.next()
            g = self.game()
            self.expect(")")
            return g
        if tok == "?":
            self.next()
            return AngelTest(self.formula_unary())
        if tok == "!":
            self.next()
            return DemonTest(self.formula_unary())
        if tok == "{":
            return self.ode()
        if isinstance(tok, tuple) and tok[0] == "id":
            name = tok[1]
            if name == "skip":
                self.error("skip is internal and not accepted in input")
            if name in RESERVED:
                self.error(f"reserved word {name!r} used as variable")
            self.next()
            self.expect(":=")
            nxt = self.peek()
            if nxt == "*":
                self.next()
                return AngelFree(name)
            if nxt == "@":
                self.next()
                return DemonFree(name)
            return Assign(name, self.term())
        self.error("game expected")

    def ode(self) -> Game:
        self.expect("{")
        eqs = []
        while True:
            vtok = self.peek()
            if not (isinstance(vtok, tuple) and vtok[0] == "id"):
                self.error("ODE variable expected")
            if vtok[1] in RESERVED:
                self.error(f"reserved word {vtok[1]!r} used as variable")
            self.next()
            self.expect("'")
            self.expect("=")
            rhs = self.term()
            eqs.append((vtok[1], rhs))
            if self.peek() == ",":
                self.next()
                continue
            break
        domain: Formula = TRUE
        if self.peek() == "&":
            self.next()
            domain = self.formula()
        self.expect("}")
        owner = "angel"
        if self.peek() == "^d":
            self.next()
            owner = "demon"
        return Ode(tuple(eqs), domain, owner)


def parse_game(text: str) -> Game:
    p = _Parser(text)
    g = p.game()
    p.expect("eof")
    return g


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.formula()
    p.expect("eof")
    return f


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    p.expect("eof")
    return t


def fresh_var(base: str, taken) -> str:
    """A variable name based on `base` not occurring in `taken`."""
    if base not in taken and base not in RESERVED:
        return base
    i = 1
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"
