"""Subvalue maps: policy interpretation, game projections, runtime-monitor
construction and the inductive-condition checker.

A subvalue map assigns every subgame label (plus END) a formula bounding
the owner's winning region for the rest of the game from that subgame.
`check_inductive` emits one proof obligation per local condition; an
inductive map induces a policy that never strands its player.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field as dfield
from typing import Optional

from .arith.qe import Deadline, DegreeTooHigh, QEError, _NO_DEADLINE
from .arith.simplify import context_atoms, simplify
from .arith.validity import (
    DEFAULT_CONFIG, State, ValidityConfig, Verdict, eval_formula, is_valid,
)
from .structure import successor, suffix
from .symexec import LoopPresent, SimplResult, UnsolvableODE, simpl
from .syntax import (
    END, AngelChoice, AngelFree, AngelLoop, AngelTest, Assign, Box, Cmp,
    DemonChoice, DemonFree, DemonLoop, DemonTest, Diamond, Exists, FalseF,
    Formula, Game, Imp, Ode, Seq, Skip, TrueF, children, conj, disj,
    is_propositional, label as label_game, max_label, nodes, parse_formula,
    parse_game, pretty, with_children, _relabel_atomic,
)


class CoverageError(Exception):
    """The map is missing an entry for some subgame."""


@dataclass
class SubvalueMap:
    owner: str                   # "angel" or "demon"
    game: Game                   # labeled
    entries: dict                # label | END -> Formula
    goal: Formula
    provenance: dict = dfield(default_factory=dict)  # label -> rewrite name

    def __post_init__(self):
        if self.owner not in ("angel", "demon"):
            raise ValueError("owner must be angel or demon")
        if END not in self.entries:
            raise CoverageError("END entry is required")
        missing = set(nodes(self.game)) - set(self.entries)
        if missing:
            raise CoverageError(f"missing entries for labels {sorted(missing)}")

    def __call__(self, lab) -> Formula:
        return self.entries[lab]

    def mod_end(self, f: Formula) -> "SubvalueMap":
        entries = dict(self.entries)
        entries[END] = f
        return SubvalueMap(self.owner, self.game, entries, self.goal,
                           self.provenance)

    def is_propositional(self) -> bool:
        return all(is_propositional(f) for f in self.entries.values())

    # -- serialization (stable bytes given identical input) -------------
    def to_json(self) -> str:
        payload = {
            "owner": self.owner,
            "goal": pretty(self.goal),
            "entries": {
                ("END" if k == END else str(k)): pretty(v)
                for k, v in self.entries.items()
            },
            "game": pretty(self.game, annotate=True),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str, owner: Optional[str] = None) -> "SubvalueMap":
        payload = json.loads(text)
        game_text = re.sub(r"\[\d+\]", "", payload["game"])
        game = label_game(parse_game(game_text))
        entries = {}
        for k, v in payload["entries"].items():
            key = END if k == "END" else int(k)
            entries[key] = parse_formula(v)
        return SubvalueMap(
            owner or payload["owner"], game, entries,
            parse_formula(payload["goal"]),
        )


def mod_end(S: SubvalueMap, f: Formula) -> SubvalueMap:
    return S.mod_end(f)


# ---------------------------------------------------------------------------
# Policy interpretation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChoiceActions:
    """Allowed branch tokens at a choice node."""
    allowed: frozenset  # subset of {"left", "right"}


@dataclass(frozen=True)
class LoopActions:
    allowed: frozenset  # subset of {"go", "stop"}


@dataclass(frozen=True)
class FreeActions:
    """Free assignment: any value whose resulting state satisfies guard."""
    var: str
    guard: Formula

    def permits(self, state: State, value) -> bool:
        s = dict(state)
        s[self.var] = value
        return eval_formula(self.guard, s)


@dataclass(frozen=True)
class OdeActions:
    """ODE durations t with the inside guard holding along [0, t] and the
    exit guard at t."""
    inside: Formula
    exit: Formula
    node: Ode


def _own(owner: str):
    if owner == "angel":
        return AngelChoice, AngelLoop, AngelFree, "angel"
    return DemonChoice, DemonLoop, DemonFree, "demon"


def policy_actions(S: SubvalueMap, lab: int, state: State, game: Game):
    """The set of acceptable control actions of the map's owner at the
    decision node `lab` in `state` (Def. of the policy interpretation)."""
    node = nodes(game)[lab]
    OwnChoice, OwnLoop, OwnFree, own_side = _own(S.owner)
    if isinstance(node, OwnChoice):
        allowed = set()
        if eval_formula(S(node.left.label), state):
            allowed.add("left")
        if eval_formula(S(node.right.label), state):
            allowed.add("right")
        return ChoiceActions(frozenset(allowed))
    if isinstance(node, OwnLoop):
        allowed = set()
        if eval_formula(S(node.body.label), state):
            allowed.add("go")
        succ = successor(lab, game)
        if eval_formula(S(succ), state):
            allowed.add("stop")
        return LoopActions(frozenset(allowed))
    if isinstance(node, OwnFree):
        succ = successor(lab, game)
        return FreeActions(node.var, S(succ))
    if isinstance(node, Ode) and node.owner == own_side:
        succ = successor(lab, game)
        return OdeActions(S(lab), S(succ), node)
    raise ValueError(f"label {lab} is not a decision node of the {S.owner}")


# ---------------------------------------------------------------------------
# Projections and monitor
# ---------------------------------------------------------------------------

def _seqn(*games) -> Game:
    acc = None
    for g in games:
        acc = g if acc is None else Seq(acc, g)
    return acc


def fill_labels(g: Game, start: int) -> Game:
    """Assign fresh labels (from `start`) to unlabeled nodes, preserving
    existing labels."""
    counter = [start - 1]

    def walk(node):
        lab = node.label
        if lab is None:
            counter[0] += 1
            lab = counter[0]
        kids = children(node)
        if not kids:
            return _relabel_atomic(node, lab)
        return with_children(node, tuple(walk(k) for k in kids), label=lab)

    return walk(g)


def _keep(node: Game, lab) -> Game:
    """An atomic clone of `node` carrying label `lab`."""
    return _relabel_atomic(node, lab)


def exist_projection(game: Game, S: SubvalueMap, end: Optional[Formula] = None) -> Game:
    """The game won exactly when the owner can win while staying inside the
    policy of S: every owner decision is guarded by an owner test of the
    corresponding subvalue."""
    end = S(END) if end is None else end
    out = _eproj(game, S, end)
    return fill_labels(out, max_label(game) + 1)


def _eproj(g: Game, S: SubvalueMap, end: Formula) -> Game:
    angelic = S.owner == "angel"
    OwnTest = AngelTest if angelic else DemonTest
    OwnChoice = AngelChoice if angelic else DemonChoice
    OwnLoop = AngelLoop if angelic else DemonLoop
    OwnFree = AngelFree if angelic else DemonFree

    if isinstance(g, OwnFree):
        return Seq(_keep(g, g.label), OwnTest(end))
    if isinstance(g, Ode) and g.owner == S.owner:
        return Seq(_keep(g, g.label), OwnTest(end))
    if isinstance(g, OwnChoice):
        return type(g)(
            Seq(OwnTest(S(g.left.label)), _eproj(g.left, S, end)),
            Seq(OwnTest(S(g.right.label)), _eproj(g.right, S, end)),
            label=g.label,
        )
    if isinstance(g, OwnLoop):
        inner = type(g)(
            Seq(OwnTest(S(g.body.label)), _eproj(g.body, S, S(g.label))),
            label=g.label,
        )
        return Seq(inner, OwnTest(end))
    if isinstance(g, Seq):
        return Seq(
            _eproj(g.left, S, S(g.right.label)),
            _eproj(g.right, S, end),
            label=g.label,
        )
    if isinstance(g, (AngelChoice, DemonChoice)):  # opponent's choice
        return type(g)(_eproj(g.left, S, end), _eproj(g.right, S, end), label=g.label)
    if isinstance(g, (AngelLoop, DemonLoop)):  # opponent's loop
        return type(g)(_eproj(g.body, S, S(g.label)), label=g.label)
    return _keep(g, g.label)


def univ_projection(game: Game, S: SubvalueMap, end: Optional[Formula] = None) -> Game:
    """The game won exactly when *all* plays within the policy of S win:
    the owner's decisions are handed to the opponent, restricted by
    opponent-side tests of the subvalues."""
    end = S(END) if end is None else end
    out = _uproj(game, S, end)
    return fill_labels(out, max_label(game) + 1)


def _uproj(g: Game, S: SubvalueMap, end: Formula) -> Game:
    angelic = S.owner == "angel"
    OwnChoice = AngelChoice if angelic else DemonChoice
    OwnLoop = AngelLoop if angelic else DemonLoop
    OwnFree = AngelFree if angelic else DemonFree
    OppTest = DemonTest if angelic else AngelTest
    OppChoice = DemonChoice if angelic else AngelChoice
    OppLoop = DemonLoop if angelic else AngelLoop
    OppFree = DemonFree if angelic else AngelFree
    opp_side = "demon" if angelic else "angel"

    if isinstance(g, OwnFree):
        return Seq(OppFree(g.var, label=g.label), OppTest(end))
    if isinstance(g, Ode) and g.owner == S.owner:
        flipped = Ode(g.eqs, g.domain, opp_side, label=g.label)
        return Seq(flipped, OppTest(end))
    if isinstance(g, OwnChoice):
        return OppChoice(
            Seq(OppTest(S(g.left.label)), _uproj(g.left, S, end)),
            Seq(OppTest(S(g.right.label)), _uproj(g.right, S, end)),
            label=g.label,
        )
    if isinstance(g, OwnLoop):
        inner = OppLoop(
            Seq(OppTest(S(g.body.label)), _uproj(g.body, S, S(g.label))),
            label=g.label,
        )
        return Seq(inner, OppTest(end))
    if isinstance(g, Seq):
        return Seq(
            _uproj(g.left, S, S(g.right.label)),
            _uproj(g.right, S, end),
            label=g.label,
        )
    if isinstance(g, (AngelChoice, DemonChoice)):  # opponent's choice
        return type(g)(_uproj(g.left, S, end), _uproj(g.right, S, end), label=g.label)
    if isinstance(g, (AngelLoop, DemonLoop)):
        return type(g)(_uproj(g.body, S, S(g.label)), label=g.label)
    return _keep(g, g.label)


def monitor_game(game: Game, S: SubvalueMap, end: Optional[Formula] = None,
                 reduce_ode_tests: bool = True) -> Game:
    """The monitored game: the universal projection augmented with owner
    feasibility tests, modeling an untrusted controller forced to stay
    inside the envelope by a runtime monitor."""
    end = S(END) if end is None else end
    out = _monitor(game, S, end, reduce_ode_tests)
    return fill_labels(out, max_label(game) + 1)


def _monitor(g: Game, S: SubvalueMap, end: Formula, reduce_ode: bool) -> Game:
    angelic = S.owner == "angel"
    OwnTest = AngelTest if angelic else DemonTest
    OwnChoice = AngelChoice if angelic else DemonChoice
    OwnLoop = AngelLoop if angelic else DemonLoop
    OwnFree = AngelFree if angelic else DemonFree
    OppTest = DemonTest if angelic else AngelTest
    OppChoice = DemonChoice if angelic else AngelChoice
    OppLoop = DemonLoop if angelic else AngelLoop
    OppFree = DemonFree if angelic else AngelFree
    opp_side = "demon" if angelic else "angel"
    modal = Diamond if angelic else Box

    if isinstance(g, OwnFree):
        return _seqn(OwnTest(Exists(g.var, end)),
                     OppFree(g.var, label=g.label),
                     OppTest(end))
    if isinstance(g, Ode) and g.owner == S.owner:
        feas: Formula = modal(g, end)
        if reduce_ode:
            try:
                feas = simpl(feas).formula
            except (UnsolvableODE, LoopPresent, QEError):
                pass
        flipped = Ode(g.eqs, g.domain, opp_side, label=g.label)
        return _seqn(OwnTest(feas), flipped, OppTest(end))
    if isinstance(g, OwnChoice):
        return Seq(
            OwnTest(disj(S(g.left.label), S(g.right.label))),
            OppChoice(
                Seq(OppTest(S(g.left.label)), _monitor(g.left, S, end, reduce_ode)),
                Seq(OppTest(S(g.right.label)), _monitor(g.right, S, end, reduce_ode)),
                label=g.label,
            ),
        )
    if isinstance(g, OwnLoop):
        inner = OppLoop(
            _seqn(
                OppTest(S(g.body.label)),
                _monitor(g.body, S, S(g.label), reduce_ode),
                OwnTest(S(g.label)),
            ),
            label=g.label,
        )
        return _seqn(OwnTest(S(g.label)), inner, OppTest(end))
    if isinstance(g, Seq):
        return Seq(
            _monitor(g.left, S, S(g.right.label), reduce_ode),
            _monitor(g.right, S, end, reduce_ode),
            label=g.label,
        )
    if isinstance(g, (AngelChoice, DemonChoice)):
        return type(g)(
            _monitor(g.left, S, end, reduce_ode),
            _monitor(g.right, S, end, reduce_ode),
            label=g.label,
        )
    if isinstance(g, (AngelLoop, DemonLoop)):
        return type(g)(_monitor(g.body, S, S(g.label), reduce_ode), label=g.label)
    return _keep(g, g.label)


# ---------------------------------------------------------------------------
# Model predictive map
# ---------------------------------------------------------------------------

def mpc_map(game: Game, goal: Formula, owner: str = "angel") -> SubvalueMap:
    """Each subgame mapped to the modal winning region of its game suffix:
    the maximally permissive map, with modal (not propositional) entries."""
    modal = Diamond if owner == "angel" else Box
    entries = {END: goal}
    for lab in nodes(game):
        entries[lab] = modal(suffix(lab, game), goal)
    return SubvalueMap(owner, game, entries, goal)


# ---------------------------------------------------------------------------
# Inductive conditions (one obligation per local clause)
# ---------------------------------------------------------------------------

@dataclass
class Obligation:
    oid: str
    description: str
    formula: Optional[Formula]
    verdict: Verdict


@dataclass
class ObligationReport:
    obligations: list

    @property
    def overall(self) -> str:
        if any(o.verdict.is_invalid for o in self.obligations):
            return "fail"
        if any(o.verdict.is_unknown for o in self.obligations):
            return "inconclusive"
        return "pass"

    @property
    def passed(self) -> bool:
        return self.overall == "pass"

    def failures(self) -> list:
        return [o for o in self.obligations if not o.verdict.is_valid]

    def summary(self) -> str:
        lines = [f"{o.verdict.status:<8} {o.oid}: {o.description}"
                 for o in self.obligations]
        lines.append(f"overall: {self.overall}")
        return "\n".join(lines)


# the rewrite provenances whose loop obligations are discharged by the
# refinement argument instead of bounded unrolling
REFINEMENT_PROVENANCE = ("unroll", "free-count", "adversarial-one-shot",
                         "cesar-one-shot", "extremal")


def check_inductive(game: Game, S: SubvalueMap, goal: Formula,
                    assumptions: Optional[Formula] = None,
                    config: ValidityConfig = DEFAULT_CONFIG) -> ObligationReport:
    """Check the local inductive conditions of S against `game`, one
    obligation per clause plus the goal-compatibility obligation.

    Unknown verdicts make the overall report inconclusive, never a pass.
    """
    obs: list = []
    angelic = S.owner == "angel"

    def check(f: Formula, oid: str, desc: str):
        v = is_valid(f, assumptions, config)
        obs.append(Obligation(oid, desc, f, v))

    def walk(node: Game, end: Formula):
        lab = node.label
        kids = children(node)
        if not kids:
            _atomic_obligation(node, S, end, assumptions, config, obs)
            return
        if isinstance(node, (AngelChoice, DemonChoice)):
            l, r = node.left.label, node.right.label
            own = isinstance(node, AngelChoice) == angelic
            combine = disj if own else conj
            opname = "|" if own else "&"
            check(Imp(S(lab), combine(S(l), S(r))),
                  f"node {lab} ({'choice' if own else 'opponent choice'})",
                  f"S({lab}) -> S({l}) {opname} S({r})")
            walk(node.left, end)
            walk(node.right, end)
            return
        if isinstance(node, Seq):
            l = node.left.label
            check(Imp(S(lab), S(l)), f"node {lab} (seq)", f"S({lab}) -> S({l})")
            walk(node.left, S(node.right.label))
            walk(node.right, end)
            return
        own_loop = isinstance(node, AngelLoop) == angelic
        if own_loop:
            v, desc = _own_loop_obligation(node, S, end, assumptions, config)
            obs.append(Obligation(
                f"node {lab} (own loop)",
                desc, None, v))
        else:
            b = node.body.label
            check(Imp(S(lab), conj(S(b), end)),
                  f"node {lab} (opponent loop)",
                  f"S({lab}) -> S({b}) & S(end)")
        walk(node.body, S(lab))

    walk(S.game if game is None else game, S(END))
    check(Imp(S(END), goal), "end", "S(end) -> goal")
    return ObligationReport(obs)


def _atomic_obligation(node: Game, S: SubvalueMap, end: Formula,
                       assumptions, config, obs: list):
    lab = node.label
    modal = Diamond if S.owner == "angel" else Box
    mop = "<.>" if S.owner == "angel" else "[.]"
    desc = f"S({lab}) -> {mop}{pretty(node)} S(end)"
    try:
        red = simpl(modal(node, end), Deadline(config.timeout_ms),
                    assume=context_atoms(assumptions))
    except (UnsolvableODE, LoopPresent, QEError) as e:
        obs.append(Obligation(f"node {lab} (atomic)", desc, None,
                              Verdict.unknown(f"reduction failed: {e}")))
        return
    v = is_valid(Imp(S(lab), red.formula), assumptions, config)
    if not red.exact and not v.is_valid:
        v = Verdict.unknown("conservative reduction could not discharge the "
                            "obligation")
    obs.append(Obligation(f"node {lab} (atomic)", desc,
                          Imp(S(lab), red.formula), v))


def _own_loop_obligation(node: Game, S: SubvalueMap, end: Formula,
                         assumptions, config) -> tuple:
    """Discharge S(a) -> <proj(loop)> end (or its box dual), in order:
    refinement shortcut by provenance, bounded unrolling of the projected
    loop (with an exact-fixpoint refutation), else Unknown."""
    lab = node.label
    angelic = S.owner == "angel"
    mop = "<.>" if angelic else "[.]"
    desc = f"S({lab}) -> {mop}projection({lab}) S(end)"

    prov = S.provenance.get(lab)
    if prov in REFINEMENT_PROVENANCE:
        # The discharge rests on the rewrite being a refinement; the grid
        # search is only a cheap tripwire against blatantly wrong guesses.
        from .arith.validity import falsify_on_grid
        sanity_f = Imp(conj(assumptions or TrueF(), S(lab)),
                       disj(S(node.body.label), end))
        witness = falsify_on_grid(sanity_f, cap=4000)
        if witness is None:
            return Verdict.valid(), desc + f" [refinement discharge: {prov}]"
        return (Verdict.unknown("refinement provenance but the exit sanity "
                                "check found a counterexample"), desc)

    # bounded unrolling of (?S(g) ; proj(body))* ; ?end
    modal = Diamond if angelic else Box
    OwnTest = AngelTest if angelic else DemonTest
    proj_body = exist_projection(node.body, S, S(lab))
    step_game = Seq(OwnTest(S(node.body.label)), proj_body)
    deadline = Deadline(config.timeout_ms)
    assume = context_atoms(assumptions)
    v_prev = simplify(end, assume)
    exact = True
    try:
        for _ in range(3):
            step = simpl(modal(step_game, v_prev), deadline, assume=assume)
            exact = exact and step.exact
            v_next = simplify(disj(end, step.formula), assume)
            verdict = is_valid(Imp(S(lab), v_next), assumptions, config)
            if verdict.is_valid:
                return Verdict.valid(), desc + " [bounded unrolling]"
            if exact and is_valid(Imp(v_next, v_prev), assumptions, config).is_valid:
                # fixpoint: the unrolled region is the exact winning region
                final = is_valid(Imp(S(lab), v_next), assumptions, config)
                if final.is_invalid:
                    return final, desc + " [exact fixpoint refutation]"
                return final, desc
            v_prev = v_next
    except (UnsolvableODE, LoopPresent, QEError) as e:
        return Verdict.unknown(f"projection reduction failed: {e}"), desc
    return (Verdict.unknown("bounded unrolling did not converge within 3 "
                            "iterations"), desc)
