"""Validity checking for propositional real arithmetic.

The pipeline is: cheap rational grid falsification first, then universal
closure + quantifier elimination, then (optionally) a one-shot external
SMT backend.  `Unknown` is the honest answer whenever neither route
decides; soundness-critical callers treat it as failure.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..syntax import (
    And, Box, Cmp, Diamond, Exists, FalseF, Forall, Formula, Iff, Imp, Not,
    Or, TrueF, Imp as _Imp, formula_vars, term_poly,
)
from .qe import Deadline, DegreeTooHigh, QEError, Timeout, qe
from .simplify import simplify

State = dict  # variable name -> Fraction


class UnboundVariable(KeyError):
    pass


def eval_term(t, state: State) -> Fraction:
    p = term_poly(t)
    missing = p.variables() - set(state)
    if missing:
        raise UnboundVariable(f"unbound variables {sorted(missing)}")
    return p.eval(state)


def eval_formula(f: Formula, state: State) -> bool:
    """Exact evaluation of a propositional real arithmetic formula."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Cmp):
        v = eval_term(f.left, state) - eval_term(f.right, state)
        return {
            "<": v < 0, "<=": v <= 0, "=": v == 0,
            "!=": v != 0, ">=": v >= 0, ">": v > 0,
        }[f.rel]
    if isinstance(f, Not):
        return not eval_formula(f.arg, state)
    if isinstance(f, And):
        return eval_formula(f.left, state) and eval_formula(f.right, state)
    if isinstance(f, Or):
        return eval_formula(f.left, state) or eval_formula(f.right, state)
    if isinstance(f, Imp):
        return (not eval_formula(f.left, state)) or eval_formula(f.right, state)
    if isinstance(f, Iff):
        return eval_formula(f.left, state) == eval_formula(f.right, state)
    if isinstance(f, (Exists, Forall, Diamond, Box)):
        raise ValueError("eval is defined on propositional real arithmetic only")
    raise TypeError(f"not a formula: {f!r}")


@dataclass(frozen=True)
class Verdict:
    status: str  # "valid" | "invalid" | "unknown"
    witness: Optional[State] = None
    reason: Optional[str] = None

    @staticmethod
    def valid() -> "Verdict":
        return Verdict("valid")

    @staticmethod
    def invalid(witness: State) -> "Verdict":
        return Verdict("invalid", witness=witness)

    @staticmethod
    def unknown(reason: str) -> "Verdict":
        return Verdict("unknown", reason=reason)

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"

    @property
    def is_invalid(self) -> bool:
        return self.status == "invalid"

    @property
    def is_unknown(self) -> bool:
        return self.status == "unknown"

    def __str__(self):
        if self.is_invalid:
            w = ", ".join(f"{k}={v}" for k, v in sorted(self.witness.items()))
            return f"invalid ({w})"
        if self.is_unknown:
            return f"unknown ({self.reason})"
        return "valid"


@dataclass
class ValidityConfig:
    timeout_ms: Optional[int] = None
    external_cmd: Optional[str] = None
    grid_cap: int = 20000

    def deadline(self) -> Deadline:
        return Deadline(self.timeout_ms)


DEFAULT_CONFIG = ValidityConfig()

# Falsification grid: numerators -10..10, denominators 1, 2, 4, ordered so
# small simple values are tried first.
_GRID_VALUES = sorted(
    {Fraction(n, d) for n in range(-10, 11) for d in (1, 2, 4)},
    key=lambda v: (abs(v), v < 0, v.denominator),
)


def falsify_on_grid(f: Formula, cap: int = 20000, deadline=None) -> Optional[State]:
    """Search the rational grid for a state falsifying f (deterministic)."""
    fvars = sorted(formula_vars(f))
    if not fvars:
        return None if eval_formula(f, {}) else {}
    total = len(_GRID_VALUES) ** len(fvars)
    if total <= cap:
        combos = itertools.product(_GRID_VALUES, repeat=len(fvars))
    else:
        rng = random.Random(0)
        combos = (
            tuple(rng.choice(_GRID_VALUES) for _ in fvars) for _ in range(cap)
        )
    for i, combo in enumerate(combos):
        if deadline is not None and i % 256 == 0:
            deadline.check()
        state = dict(zip(fvars, combo))
        if not eval_formula(f, state):
            return state
    return None


def is_valid(f: Formula, assumptions: Optional[Formula] = None,
             config: ValidityConfig = DEFAULT_CONFIG) -> Verdict:
    """Decide validity of a propositional real arithmetic formula, possibly
    under assumption formula `assumptions` (checked as assumptions -> f)."""
    goal = _Imp(assumptions, f) if assumptions is not None else f
    deadline = config.deadline()
    goal_s = simplify(goal)
    if isinstance(goal_s, TrueF):
        return Verdict.valid()
    if isinstance(goal_s, FalseF):
        return Verdict.invalid({v: Fraction(0) for v in sorted(formula_vars(goal))})
    try:
        witness = falsify_on_grid(goal_s, config.grid_cap, deadline)
    except Timeout:
        return Verdict.unknown("timeout during grid falsification")
    if witness is not None:
        full = {v: Fraction(0) for v in formula_vars(goal)}
        full.update(witness)
        return Verdict.invalid(full)
    try:
        result = _close_universally(goal_s, deadline)
        if isinstance(result, TrueF):
            return Verdict.valid()
        if isinstance(result, FalseF):
            return Verdict.unknown("refuted by quantifier elimination, "
                                   "but no rational witness was found")
        return Verdict.unknown("quantifier elimination left a residue")
    except Timeout:
        return Verdict.unknown("timeout during quantifier elimination")
    except DegreeTooHigh as e:
        if config.external_cmd:
            return external_validity(goal_s, config.external_cmd, config.timeout_ms)
        return Verdict.unknown(f"degree too high for builtin QE: {e}")
    except QEError as e:
        return Verdict.unknown(str(e))


def _atom_stats(f: Formula, stats: dict):
    if isinstance(f, Cmp):
        p = term_poly(f.left) - term_poly(f.right)
        for v in p.variables():
            d, n = stats.get(v, (0, 0))
            stats[v] = (max(d, p.degree(v)), n + 1)
    elif isinstance(f, (And, Or, Imp, Iff)):
        _atom_stats(f.left, stats)
        _atom_stats(f.right, stats)
    elif isinstance(f, Not):
        _atom_stats(f.arg, stats)
    elif isinstance(f, (Exists, Forall)):
        _atom_stats(f.body, stats)


def _close_universally(f: Formula, deadline) -> Formula:
    """Universal closure eliminated one variable at a time, cheapest first
    (lowest degree, then fewest occurrences)."""
    g = qe(f, deadline)[0]  # clear any embedded quantifiers first
    while True:
        fvars = formula_vars(g)
        if not fvars:
            return g
        stats: dict = {}
        _atom_stats(g, stats)
        v = min(fvars, key=lambda x: (stats.get(x, (0, 0)), x))
        g = qe(Forall(v, g), deadline)[0]
        if isinstance(g, (TrueF, FalseF)):
            return g


def equivalent(f: Formula, g: Formula, assumptions=None,
               config: ValidityConfig = DEFAULT_CONFIG) -> Verdict:
    """Logical equivalence, checked one implication at a time."""
    fwd = is_valid(Imp(f, g), assumptions, config)
    if not fwd.is_valid:
        return fwd
    return is_valid(Imp(g, f), assumptions, config)


# ---------------------------------------------------------------------------
# External backend (one-shot subprocess speaking SMT-LIB 2)
# ---------------------------------------------------------------------------

def _smt_term(t) -> str:
    from ..syntax import Add, Const, Div, Mul, Neg, Pow, Sub, Var
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        v = t.value
        if v.denominator == 1:
            return str(v) if v >= 0 else f"(- {-v})"
        s = f"(/ {abs(v.numerator)} {v.denominator})"
        return s if v >= 0 else f"(- {s})"
    if isinstance(t, Add):
        return f"(+ {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Sub):
        return f"(- {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Mul):
        return f"(* {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Div):
        return f"(/ {_smt_term(t.left)} {_smt_term(t.right)})"
    if isinstance(t, Neg):
        return f"(- {_smt_term(t.arg)})"
    if isinstance(t, Pow):
        inner = _smt_term(t.base)
        if t.exp == 0:
            return "1"
        return "(* " + " ".join([inner] * t.exp) + ")" if t.exp > 1 else inner
    raise TypeError(t)


def smt_formula(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Cmp):
        rel = {"=": "=", "!=": "distinct"}.get(f.rel, f.rel)
        return f"({rel} {_smt_term(f.left)} {_smt_term(f.right)})"
    if isinstance(f, Not):
        return f"(not {smt_formula(f.arg)})"
    if isinstance(f, And):
        return f"(and {smt_formula(f.left)} {smt_formula(f.right)})"
    if isinstance(f, Or):
        return f"(or {smt_formula(f.left)} {smt_formula(f.right)})"
    if isinstance(f, Imp):
        return f"(=> {smt_formula(f.left)} {smt_formula(f.right)})"
    if isinstance(f, Iff):
        return f"(= {smt_formula(f.left)} {smt_formula(f.right)})"
    if isinstance(f, Exists):
        return f"(exists (({f.var} Real)) {smt_formula(f.body)})"
    if isinstance(f, Forall):
        return f"(forall (({f.var} Real)) {smt_formula(f.body)})"
    raise ValueError("modal formulas cannot be sent to the backend")


def smt_script(f: Formula) -> str:
    lines = ["(set-logic NRA)"]
    for v in sorted(formula_vars(f)):
        lines.append(f"(declare-const {v} Real)")
    lines.append(f"(assert (not {smt_formula(f)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def _parse_model(text: str) -> State:
    import re
    out = {}
    for m in re.finditer(
        r"\(define-fun\s+(\w+)\s*\(\)\s*Real\s+(.*?)\)\s*(?=\(define-fun|\)\s*$|$)",
        text, re.S,
    ):
        name, val = m.group(1), m.group(2).strip()
        try:
            out[name] = _parse_smt_value(val)
        except ValueError:
            continue
    return out


def _parse_smt_value(text: str) -> Fraction:
    text = text.strip()
    if text.startswith("(-"):
        return -_parse_smt_value(text[2:-1])
    if text.startswith("(/"):
        inner = text[2:-1].split()
        return Fraction(_parse_smt_value(inner[0]), _parse_smt_value(inner[1]))
    return Fraction(text)


def external_validity(f: Formula, command: str, timeout_ms=None) -> Verdict:
    """Ask a one-shot external solver about validity of f."""
    import shlex
    import subprocess
    try:
        proc = subprocess.run(
            shlex.split(command),
            input=smt_script(f).encode(),
            capture_output=True,
            timeout=(timeout_ms / 1000.0) if timeout_ms else 60.0,
        )
    except subprocess.TimeoutExpired:
        return Verdict.unknown("external backend timed out")
    except OSError as e:
        return Verdict.unknown(f"external backend failed to run: {e}")
    reply = proc.stdout.decode(errors="replace").strip()
    first = reply.split()[0] if reply.split() else ""
    if first == "unsat":
        return Verdict.valid()
    if first == "sat":
        model = _parse_model(reply)
        fvars = formula_vars(f)
        if fvars <= set(model):
            state = {v: model[v] for v in fvars}
            try:
                if not eval_formula(f, state):
                    return Verdict.invalid(state)
            except ValueError:
                pass
        witness = falsify_on_grid(f)
        if witness is not None:
            return Verdict.invalid(witness)
        return Verdict.unknown("backend reported sat but no checkable witness")
    return Verdict.unknown(f"unrecognized backend reply: {reply[:80]!r}")
