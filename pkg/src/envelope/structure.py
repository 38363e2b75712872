"""Brzozowski-style game decompositions: suffix, prefix and successor.

All three operate on labeled games; the label identifies *which occurrence*
of a subgame is meant.
"""
from __future__ import annotations

from .syntax import (
    END, AngelChoice, AngelLoop, DemonChoice, DemonLoop, Game, Seq, Skip,
    _relabel_atomic, children, max_label, with_children,
)


class UnknownLabel(Exception):
    pass


def _contains(g: Game, lab) -> bool:
    if g.label == lab:
        return True
    return any(_contains(k, lab) for k in children(g))


def _check(g: Game, lab):
    if lab != END and not _contains(g, lab):
        raise UnknownLabel(f"label {lab} does not occur in the game")


def suffix(lab, g: Game) -> Game:
    """The game capturing everything playable after any occurrence of the
    subgame labeled `lab`.  Returned games reuse original labels where
    subgames are preserved; duplicated loop copies are relabeled fresh."""
    _check(g, lab)
    out = _suffix(lab, g)
    return _dedup_labels(out, g)


def _suffix(lab, g: Game) -> Game:
    if g.label == lab:
        return g
    if isinstance(g, (AngelLoop, DemonLoop)):
        return Seq(_suffix(lab, g.body), g)
    if isinstance(g, (AngelChoice, DemonChoice)):
        if _contains(g.left, lab):
            return _suffix(lab, g.left)
        return _suffix(lab, g.right)
    if isinstance(g, Seq):
        if _contains(g.left, lab):
            return Seq(_suffix(lab, g.left), g.right)
        return _suffix(lab, g.right)
    raise UnknownLabel(f"label {lab} does not occur in the game")


def prefix(lab, g: Game) -> Game:
    """The game capturing everything playable before any occurrence of the
    subgame labeled `lab`.  `lab` may be END, in which case the whole game
    is the prefix."""
    _check(g, lab)
    out = _prefix(lab, g)
    return _dedup_labels(out, g)


def _prefix(lab, g: Game) -> Game:
    if lab == END:
        return g
    if g.label == lab:
        if isinstance(g, (AngelLoop, DemonLoop)):
            return g
        return Skip()
    if isinstance(g, (AngelLoop, DemonLoop)):
        return Seq(g, _prefix(lab, g.body))
    if isinstance(g, (AngelChoice, DemonChoice)):
        if _contains(g.left, lab):
            return _prefix(lab, g.left)
        return _prefix(lab, g.right)
    if isinstance(g, Seq):
        if _contains(g.left, lab):
            return _prefix(lab, g.left)
        return Seq(g.left, _prefix(lab, g.right))
    raise UnknownLabel(f"label {lab} does not occur in the game")


def successor(lab, g: Game):
    """The next subgame to start once the subgame labeled `lab` ends; END
    when `lab` is the root."""
    _check(g, lab)
    return _successor(lab, g)


def _successor(lab, g: Game):
    if g.label == lab:
        return END
    if isinstance(g, Seq):
        if _contains(g.left, lab):
            s = _successor(lab, g.left)
            return g.right.label if s == END else s
        return _successor(lab, g.right)
    if isinstance(g, (AngelLoop, DemonLoop)):
        s = _successor(lab, g.body)
        return g.label if s == END else s
    if isinstance(g, (AngelChoice, DemonChoice)):
        if _contains(g.left, lab):
            return _successor(lab, g.left)
        return _successor(lab, g.right)
    raise UnknownLabel(f"label {lab} does not occur in the game")


def _dedup_labels(out: Game, original: Game) -> Game:
    """Suffix/prefix constructions can mention a loop twice (once expanded,
    once as the loop itself).  Keep the first occurrence of each original
    label, relabel later duplicates (and fresh nodes) past the original
    maximum."""
    seen = set()
    counter = [max_label(original)]

    def walk(node: Game) -> Game:
        lab = node.label
        if lab is None or lab in seen:
            counter[0] += 1
            lab = counter[0]
        seen.add(lab)
        kids = children(node)
        if not kids:
            return _relabel_atomic(node, lab)
        return with_children(node, tuple(walk(k) for k in kids), label=lab)

    return walk(out)
