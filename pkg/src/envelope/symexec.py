"""Backward symbolic execution of loop-free games to propositional real
arithmetic: the reduction laws for every game construct plus exact
closed-form ODE solving for nilpotent linear systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .poly import Poly
from .syntax import (
    AngelChoice, AngelFree, AngelLoop, AngelTest, Assign, Box, Cmp, Const,
    DemonChoice, DemonFree, DemonLoop, DemonTest, Diamond, Exists, Forall,
    Formula, Game, Imp, Ode, Seq, Skip, TrueF, TRUE, Var, all_names, conj,
    disj, formula_subst, formula_vars, fresh_var, game_vars,
    is_propositional, poly_term, term_poly,
)
from .arith.qe import Deadline, DegreeTooHigh, _NO_DEADLINE, qe
from .arith.simplify import simplify


class UnsolvableODE(Exception):
    """The vector field is not nilpotent-linear with polynomial solution."""


class LoopPresent(Exception):
    """simpl is only defined on loop-free games."""


_ODE_SERIES_CAP = 25


def ode_solution(eqs, time_var: str) -> dict:
    """Exact polynomial solution of x' = f(x) by Lie-derivative series.

    Returns {var: Poly in the ODE variables and time_var}.  Terminates only
    when the derivative tower is nilpotent (each variable's chain of
    derivatives eventually vanishes); otherwise raises UnsolvableODE.
    """
    field = {v: term_poly(e) for v, e in eqs}

    def lie(p: Poly) -> Poly:
        out = Poly()
        for v, rhs in field.items():
            out = out + p.derivative(v) * rhs
        return out

    sols = {}
    t = Poly.var(time_var)
    for v in field:
        acc = Poly.var(v)
        deriv = field[v]
        k = 1
        fact = 1
        while not deriv.is_zero():
            if k > _ODE_SERIES_CAP:
                raise UnsolvableODE(
                    f"no polynomial closed form for {v}' (series does not terminate)")
            acc = acc + deriv.scale(Fraction(1, fact)) * t.pow(k)
            deriv = lie(deriv)
            k += 1
            fact *= k
        sols[v] = acc
    return sols


def _solution_subst(f: Formula, sols: dict) -> Formula:
    assignment = {v: poly_term(p) for v, p in sols.items()}
    return formula_subst(f, assignment)


def solve_ode(ode: Ode, post: Formula, mode: str, taken=None) -> Formula:
    """Reduce a modal formula over a single ODE to a quantified formula.

    mode "dia": Angel wins; mode "box": Demon wins.  The player owning the
    ODE picks its duration (an existential quantifier for the winner's own
    ODE, universal for the opponent's); the domain constraint must hold
    along the whole trajectory, expressed as a universally quantified
    premise over intermediate times.
    """
    taken = set(taken or ()) | all_names(post) | {v for v, _ in ode.eqs}
    for _, e in ode.eqs:
        taken |= term_poly(e).variables()
    taken |= all_names(ode.domain)
    tv = fresh_var("t", taken)
    sv = fresh_var("s", taken | {tv})

    sols = ode_solution(ode.eqs, tv)
    post_t = _solution_subst(post, sols)
    t_ge_0 = Cmp(Var(tv), ">=", Const(Fraction(0)))

    if isinstance(ode.domain, TrueF):
        premise: Formula = TRUE
    else:
        sols_s = {v: p.subst({tv: Poly.var(sv)}) for v, p in sols.items()}
        dom_s = _solution_subst(ode.domain, sols_s)
        rng = conj(Cmp(Var(sv), ">=", Const(Fraction(0))),
                   Cmp(Var(sv), "<=", Var(tv)))
        premise = Forall(sv, Imp(rng, dom_s))

    winner_picks = (ode.owner == "angel") == (mode == "dia")
    if winner_picks:
        return Exists(tv, conj(t_ge_0, premise, post_t))
    return Forall(tv, Imp(conj(t_ge_0, premise), post_t))


@dataclass
class SimplResult:
    formula: Formula
    exact: bool


def wp(game: Game, post: Formula, mode: str) -> Formula:
    """Modal reduction of a loop-free game to a first-order formula."""
    if isinstance(game, Skip):
        return post
    if isinstance(game, Assign):
        return formula_subst(post, {game.var: game.term})
    if isinstance(game, AngelFree):
        return Exists(game.var, post) if mode == "dia" else Forall(game.var, post)
    if isinstance(game, DemonFree):
        return Forall(game.var, post) if mode == "dia" else Exists(game.var, post)
    if isinstance(game, AngelTest):
        return conj(game.cond, post) if mode == "dia" else Imp(game.cond, post)
    if isinstance(game, DemonTest):
        return Imp(game.cond, post) if mode == "dia" else conj(game.cond, post)
    if isinstance(game, Ode):
        return solve_ode(game, post, mode)
    if isinstance(game, Seq):
        return wp(game.left, wp(game.right, post, mode), mode)
    if isinstance(game, AngelChoice):
        l, r = wp(game.left, post, mode), wp(game.right, post, mode)
        return disj(l, r) if mode == "dia" else conj(l, r)
    if isinstance(game, DemonChoice):
        l, r = wp(game.left, post, mode), wp(game.right, post, mode)
        return conj(l, r) if mode == "dia" else disj(l, r)
    if isinstance(game, (AngelLoop, DemonLoop)):
        raise LoopPresent("simpl is only defined for loop-free games")
    raise TypeError(f"not a game: {game!r}")


_simpl_cache: dict = {}


def simpl(f: Formula, deadline: Deadline = _NO_DEADLINE, approx=True,
          assume: tuple = ()) -> SimplResult:
    """Reduce a modal formula over loop-free games to propositional real
    arithmetic.  The result implies the input; `exact` is True when every
    step was an equivalence (i.e. quantifier elimination never had to fall
    back to a conservative weakening).  `assume` atoms are taken as given
    throughout (the result is equivalent under them)."""
    key = (f, approx, assume)
    hit = _simpl_cache.get(key)
    if hit is not None:
        return SimplResult(hit.formula, hit.exact)
    first_order = _lower(f)
    out, exact = qe(first_order, deadline, approx="under" if approx else None,
                    assume=assume)
    out = simplify(out, assume)
    if not is_propositional(out):
        raise DegreeTooHigh("reduction left a non-propositional residue")
    result = SimplResult(out, exact)
    if len(_simpl_cache) < 4096:
        _simpl_cache[key] = result
    return result


def _lower(f: Formula) -> Formula:
    """Expand modalities over loop-free games into first-order formulas."""
    if isinstance(f, Diamond):
        return wp(f.game, _lower(f.post), "dia")
    if isinstance(f, Box):
        return wp(f.game, _lower(f.post), "box")
    if isinstance(f, (Exists, Forall)):
        return type(f)(f.var, _lower(f.body))
    from .syntax import And, FalseF, Iff, Not, Or
    if isinstance(f, (And, Or, Imp, Iff)):
        return type(f)(_lower(f.left), _lower(f.right))
    if isinstance(f, Not):
        return Not(_lower(f.arg))
    return f
