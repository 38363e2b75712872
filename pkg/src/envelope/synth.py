"""Inductive subvalue map synthesis: backward symbolic execution with
invariant generation by game rewriting.

Loops are handled by lazily generating invariant candidates from a fixed
library of rewrites (symbolic iteration count, bounded unrolling, extremal
assignment, one-shot ODE adversarialization, unbounded-time rewrite of
time-triggered loops), each checked retrospectively before acceptance.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Iterator, Optional

from .arith.qe import Deadline, DegreeTooHigh, QEError
from .arith.simplify import context_atoms, simplify
from .arith.validity import DEFAULT_CONFIG, ValidityConfig, Verdict, is_valid
from .structure import successor
from .subvalue import (
    REFINEMENT_PROVENANCE, SubvalueMap, _own_loop_obligation, check_inductive,
)
from .symexec import LoopPresent, SimplResult, UnsolvableODE, simpl, wp
from .syntax import (
    END, Add, AngelChoice, AngelFree, AngelLoop, AngelTest, Assign, Box,
    Cmp, Const, DemonChoice, DemonFree, DemonLoop, DemonTest, Diamond,
    FalseF, Formula, Game, Imp, Mul, Not, Ode, Seq, Skip, TRUE, TrueF, Var,
    all_names, children, conj, disj, fresh_var, is_propositional, label as
    label_game, max_label, nodes, pretty, term_poly, with_children,
)
from .poly import Poly


class SynthesisFailed(Exception):
    def __init__(self, label, tried):
        self.label = label
        self.tried = tried
        names = ", ".join(tried) if tried else "none applicable"
        super().__init__(
            f"no invariant candidate passed at loop node {label} "
            f"(exhausted: {names})")


@dataclass
class SynthConfig:
    assumptions: Optional[Formula] = None
    validity: ValidityConfig = dfield(default_factory=ValidityConfig)
    inv_budget: int = 8       # max candidates tried per loop
    unroll_depth: int = 3

    @property
    def assume(self) -> tuple:
        return context_atoms(self.assumptions)


@dataclass
class InvariantCandidate:
    formula: Formula
    provenance: str


def _modal(mode: str):
    return Diamond if mode == "dia" else Box


def _seq_items(g: Game, out: list):
    if isinstance(g, Seq):
        _seq_items(g.left, out)
        _seq_items(g.right, out)
    else:
        out.append(g)


def _seqn(items) -> Game:
    acc = None
    for g in items:
        acc = g if acc is None else Seq(acc, g)
    return acc if acc is not None else Skip()


def _has_loop(g: Game) -> bool:
    if isinstance(g, (AngelLoop, DemonLoop)):
        return True
    return any(_has_loop(k) for k in children(g))


# ---------------------------------------------------------------------------
# Rewrites
# ---------------------------------------------------------------------------

def _free_count_shape(loop: Game):
    """Loop body of the form x := x + e with e free of x: the loop is
    emulated by choosing the iteration count n up front (fractional counts
    under-shoot, which is the conservative direction for the goals this
    heuristic is used on)."""
    body = loop.body
    if not isinstance(body, Assign):
        return None
    p = term_poly(body.term)
    e = p - Poly.var(body.var)
    if e.degree(body.var) != 0 or e.is_zero():
        return None
    return body.var, e


def _free_count_rewrite(loop: Game, taken) -> Optional[Game]:
    shape = _free_count_shape(loop)
    if shape is None:
        return None
    var, e = shape
    n = fresh_var("n", taken)
    own_free = AngelFree if isinstance(loop, AngelLoop) else DemonFree
    own_test = AngelTest if isinstance(loop, AngelLoop) else DemonTest
    from .syntax import poly_term
    increment = poly_term(Poly.var(var) + e * Poly.var(n))
    return _seqn([
        own_free(n),
        own_test(Cmp(Var(n), ">=", Const(0))),
        Assign(var, increment),
    ])


def _one_shot_rewrite(loop: Game, taken) -> Optional[Game]:
    """An owner loop whose body ends with an owner ODE is emulated by one
    iteration with the ODE handed to the opponent for an unbounded time,
    followed by an owner test of the original domain constraint."""
    items: list = []
    _seq_items(loop.body, items)
    last = items[-1]
    owner = "angel" if isinstance(loop, AngelLoop) else "demon"
    if not (isinstance(last, Ode) and last.owner == owner):
        return None
    if any(_has_loop(it) for it in items[:-1]):
        return None
    flipped = Ode(last.eqs, TRUE, "demon" if owner == "angel" else "angel")
    own_test = AngelTest if owner == "angel" else DemonTest
    guard = [] if isinstance(last.domain, TrueF) else [own_test(last.domain)]
    return _seqn(items[:-1] + [flipped] + guard)


def _find_one_shot_loop(g: Game):
    """The game itself if it is one-shot-rewritable, else the first inner
    loop (preorder) that is."""
    if isinstance(g, (AngelLoop, DemonLoop)) and _one_shot_rewrite(g, set()) is not None:
        return g
    for k in children(g):
        got = _find_one_shot_loop(k)
        if got is not None:
            return got
    return None


def _loop_free_body(body: Game, taken) -> Optional[Game]:
    """Rewrite inner loops away (symbolic-count emulation, then one-shot);
    None when some inner loop has no applicable rewrite."""
    if isinstance(body, (AngelLoop, DemonLoop)):
        rw = _free_count_rewrite(body, taken)
        if rw is None:
            rw = _one_shot_rewrite(body, taken)
        if rw is None:
            return None
        return rw if not _has_loop(rw) else None
    kids = children(body)
    if not kids:
        return body
    new = []
    for k in kids:
        k2 = _loop_free_body(k, taken)
        if k2 is None:
            return None
        new.append(k2)
    return with_children(body, tuple(new))


def _drop_ode_domain(body: Game) -> Optional[Game]:
    """Unbounded-time rewrite: drop the domain constraint of the trailing
    ODE (time-triggered loops keep running past their latency bound)."""
    items: list = []
    _seq_items(body, items)
    last = items[-1]
    if not isinstance(last, Ode) or isinstance(last.domain, TrueF):
        return None
    return _seqn(items[:-1] + [Ode(last.eqs, TRUE, last.owner)])


def _extremal_rewrites(body: Game):
    """Replace a guarded free assignment by assignments to the extremal
    values named in its guard; yields (rewritten body, side) pairs where
    side is "own"/"opp" relative to the assignment's owner."""
    items: list = []
    _seq_items(body, items)
    for i in range(len(items) - 1):
        free, test = items[i], items[i + 1]
        if isinstance(free, AngelFree) and isinstance(test, AngelTest):
            owner = "angel"
        elif isinstance(free, DemonFree) and isinstance(test, DemonTest):
            owner = "demon"
        else:
            continue
        for bound in _guard_bounds(test.cond, free.var):
            rewritten = _seqn(items[:i] + [Assign(free.var, bound)] + items[i + 2:])
            yield rewritten, owner


def _guard_bounds(cond: Formula, var: str):
    """Extremal value terms for `var` from the linear atoms of a guard."""
    from .syntax import And as AndF, poly_term
    out = []

    def scan(f):
        if isinstance(f, AndF):
            scan(f.left)
            scan(f.right)
            return
        if isinstance(f, Cmp):
            p = term_poly(f.left) - term_poly(f.right)
            if p.degree(var) != 1:
                return
            coeffs = p.coeffs_in(var)
            c1 = coeffs[1]
            if not c1.is_const():
                return
            bound = coeffs[0].scale(-1 / c1.const_value())
            out.append(poly_term(bound))

    scan(cond)
    uniq = []
    for b in out:
        if b not in uniq:
            uniq.append(b)
    return uniq


# ---------------------------------------------------------------------------
# Invariant candidate stream
# ---------------------------------------------------------------------------

def _prune_region(f: Formula, max_var_degree: int = 2, max_atoms: int = 16) -> Formula:
    """Drop disjuncts that would defeat downstream quantifier elimination
    (atoms of degree > 2 in some variable, or oversized conjunctions).
    Sound for invariant *candidates*: they are guesses whose acceptance is
    re-checked, and a smaller guess only narrows the envelope."""
    from .arith.simplify import cmp_poly

    def atom_ok(c) -> bool:
        p = cmp_poly(c)
        return all(p.degree(v) <= max_var_degree for v in p.variables())

    def stats(g, acc):
        if isinstance(g, Cmp):
            acc[0] += 1
            acc[1] = acc[1] and atom_ok(g)
        else:
            for kid in (getattr(g, "left", None), getattr(g, "right", None),
                        getattr(g, "arg", None), getattr(g, "body", None)):
                if kid is not None and isinstance(kid, Formula):
                    stats(kid, acc)

    disjuncts: list = []
    _flatten_or(f, disjuncts)
    kept = []
    for d in disjuncts:
        acc = [0, True]
        stats(d, acc)
        if acc[1] and acc[0] <= max_atoms:
            kept.append(d)
    if not kept or len(kept) == len(disjuncts):
        return f
    return disj(*kept)


def _flatten_or(f: Formula, out: list):
    from .syntax import Or
    if isinstance(f, Or):
        _flatten_or(f.left, out)
        _flatten_or(f.right, out)
    else:
        out.append(f)


def gen_inv(f: Formula, config: SynthConfig = None) -> Iterator[InvariantCandidate]:
    """Lazily yield invariant candidates for a modal loop formula
    (<loop> goal or [loop] goal), in a fixed deterministic order: symbolic
    iteration count, bounded unrolling, extremal assignment, adversarial
    one-shot, unbounded-time one-shot.  Candidates whose reduction fails,
    that duplicate an earlier candidate, or that are empty regions are
    skipped."""
    config = config or SynthConfig()
    if isinstance(f, Diamond):
        mode = "dia"
    elif isinstance(f, Box):
        mode = "box"
    else:
        raise TypeError("gen_inv expects a modal formula")
    loop = f.game
    if not isinstance(loop, (AngelLoop, DemonLoop)):
        raise TypeError("gen_inv expects a loop game")
    goal = f.post
    player = "angel" if mode == "dia" else "demon"
    own = (player == "angel") == isinstance(loop, AngelLoop)
    taken = all_names(loop) | all_names(goal)
    deadline = config.validity.deadline()
    seen: set = set()

    def emit(formula, provenance):
        formula = simplify(_prune_region(formula), config.assume)
        key = pretty(formula)
        if key in seen:
            return None
        seen.add(key)
        if isinstance(simplify(formula), FalseF):
            return None
        empty = is_valid(Imp(formula, FalseF()), config.assumptions,
                         config.validity)
        if empty.is_valid:
            return None
        return InvariantCandidate(formula, provenance)

    assume = config.assume

    def reduce(game, post):
        try:
            return simpl(_modal(mode)(game, post), deadline, assume=assume).formula
        except (UnsolvableODE, LoopPresent, QEError, RecursionError):
            return None

    # 1. symbolic iteration count
    rw = _free_count_rewrite(loop, taken)
    if rw is not None:
        red = reduce(rw, goal)
        if red is not None:
            cand = emit(red, "free-count")
            if cand:
                yield cand

    # 2. bounded unrolling, cumulative in the iteration count
    beta = _loop_free_body(loop.body, taken)
    if beta is not None:
        combine = disj if own else conj
        w = goal
        for k in range(1, config.unroll_depth + 1):
            step = reduce(beta, w)
            if step is None:
                break
            w = simplify(_prune_region(combine(goal, step)), assume)
            cand = emit(w, "unroll")
            if cand:
                yield cand

    # 3. extremal assignment (then one unrolling of the rewritten body)
    for rewritten, assign_owner in _extremal_rewrites(loop.body):
        beta = _loop_free_body(rewritten, taken)
        if beta is None:
            continue
        red = reduce(beta, goal)
        if red is None:
            continue
        side = "extremal-own" if assign_owner == player else "extremal-opp"
        cand = emit(simplify((disj if own else conj)(goal, red), assume), side)
        if cand:
            yield cand

    # 4. adversarial one-shot (owner loop ending in the owner's ODE)
    target = _find_one_shot_loop(loop)
    if target is not None:
        rw = _one_shot_rewrite(target, taken)
        red = reduce(rw, goal) if rw is not None else None
        if red is not None:
            cand = emit(red, "adversarial-one-shot")
            if cand:
                yield cand

    # 5. unbounded-time rewrite of a time-triggered body
    beta = _loop_free_body(loop.body, taken)
    if beta is not None:
        dropped = _drop_ode_domain(beta)
        if dropped is not None:
            red = reduce(dropped, goal)
            if red is not None:
                cand = emit(red, "cesar-one-shot")
                if cand:
                    yield cand


# ---------------------------------------------------------------------------
# Algorithm: recursive subvalue map computation
# ---------------------------------------------------------------------------

def _synth(game: Game, goal: Formula, mode: str, config: SynthConfig):
    """Returns (entries, provenance) for the labeled subtree `game`; entries
    covers every label of `game` plus END -> goal."""
    player = "angel" if mode == "dia" else "demon"
    lab = game.label
    deadline = config.validity.deadline()

    if not children(game):
        red = simpl(_modal(mode)(game, goal), deadline, assume=config.assume)
        return {lab: red.formula, END: goal}, {}

    if isinstance(game, (AngelChoice, DemonChoice)):
        own = isinstance(game, AngelChoice) == (player == "angel")
        s1, p1 = _synth(game.left, goal, mode, config)
        s2, p2 = _synth(game.right, goal, mode, config)
        combine = disj if own else conj
        entries = {**s1, **s2,
                   lab: simplify(combine(s1[game.left.label], s2[game.right.label]),
                                 config.assume),
                   END: goal}
        return entries, {**p1, **p2}

    if isinstance(game, Seq):
        s1, p1 = _synth(game.right, goal, mode, config)
        s2, p2 = _synth(game.left, s1[game.right.label], mode, config)
        entries = {**s1, **s2, lab: s2[game.left.label], END: goal}
        return entries, {**p1, **p2}

    if isinstance(game, (AngelLoop, DemonLoop)):
        own = isinstance(game, AngelLoop) == (player == "angel")
        tried = []
        budget = config.inv_budget
        for cand in gen_inv(_modal(mode)(game, goal), config):
            if budget <= 0:
                break
            budget -= 1
            tried.append(cand.provenance)
            inv = cand.formula
            if own:
                body_goal = simplify(disj(inv, goal), config.assume)
            else:
                body_goal = inv
            try:
                s_body, p_body = _synth(game.body, body_goal, mode, config)
            except SynthesisFailed:
                continue
            prov = {**p_body, lab: cand.provenance}
            if own:
                entries = {**s_body, lab: inv, END: goal}
                smap = SubvalueMap(player, game, entries, goal, prov)
                verdict, _ = _own_loop_obligation(
                    game, smap, goal, config.assumptions, config.validity)
            else:
                verdict = is_valid(
                    Imp(inv, conj(s_body[game.body.label], goal)),
                    config.assumptions, config.validity)
            if verdict.is_valid:
                return {**s_body, lab: inv, END: goal}, prov
        raise SynthesisFailed(lab, tried)

    raise TypeError(f"not a game: {game!r}")


def synth_diamond(game: Game, goal: Formula,
                  config: SynthConfig = None) -> SubvalueMap:
    """An inductive Angelic subvalue map for `game` compatible with `goal`
    (all entries propositional)."""
    config = config or SynthConfig()
    if game.label is None:
        game = label_game(game)
    goal = simplify(goal, config.assume)
    entries, prov = _synth(game, goal, "dia", config)
    return SubvalueMap("angel", game, entries, goal, prov)


def synth_box(game: Game, goal: Formula,
              config: SynthConfig = None) -> SubvalueMap:
    """The Demonic mirror of synth_diamond."""
    config = config or SynthConfig()
    if game.label is None:
        game = label_game(game)
    goal = simplify(goal, config.assume)
    entries, prov = _synth(game, goal, "box", config)
    return SubvalueMap("demon", game, entries, goal, prov)


def optimality_crosscheck(S_dia: SubvalueMap, S_box: SubvalueMap,
                          assumptions: Optional[Formula] = None,
                          config: ValidityConfig = DEFAULT_CONFIG) -> dict:
    """Per-label verdicts of S_box(b) | S_dia(b); all-valid certifies both
    maps optimal (each state is winnable by one of the players)."""
    if pretty(S_dia.game) != pretty(S_box.game):
        raise ValueError("cross-check requires maps over the same game")
    out = {}
    for lab in sorted(S_dia.entries, key=str):
        if lab == END:
            continue
        out[lab] = is_valid(disj(S_box(lab), S_dia(lab)), assumptions, config)
    return out
