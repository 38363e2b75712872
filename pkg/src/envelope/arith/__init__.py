"""Exact-rational symbolic arithmetic: evaluation, substitution, quantifier
elimination, simplification and validity checking."""

from .simplify import nnf, simplify
from .qe import DegreeTooHigh, qe, eliminate_exists
from .validity import (
    State, Verdict, ValidityConfig, eval_formula, eval_term, is_valid,
    external_validity,
)

__all__ = [
    "DegreeTooHigh", "State", "ValidityConfig", "Verdict",
    "eliminate_exists", "eval_formula", "eval_term", "external_validity",
    "is_valid", "nnf", "qe", "simplify",
]
