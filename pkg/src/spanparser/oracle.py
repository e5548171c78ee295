"""Static and dynamic oracles for the structure/label system.

The dynamic oracle only needs the smallest reachable gold bracket that
encompasses the top stack span.  `OracleState` keeps that bracket as a
cursor into the gold tree and moves it lazily along parent links, so a full
parse costs amortized constant time per step.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional

from .transition import (
    COMBINE,
    NOLABEL,
    SHIFT,
    Action,
    Combine,
    Configuration,
    Label,
    NoLabel,
    Shift,
    apply,
    is_final,
    legal_actions,
)
from .treebank import Bracket, Token, Tree, check_nesting, span_chains


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# static oracle


def static_oracle(gold: Tree) -> list:
    """Action sequence rebuilding `gold`, combining as early as possible."""

    def lab(node):
        return Label(node.chain) if isinstance(node, Tree) else NoLabel

    def build(node):
        # actions creating node's span, up to but excluding its label action
        if isinstance(node, Token):
            return [Shift]
        first, rest = node.children[0], node.children[1:]
        out = build(first)
        if not rest:
            return out
        out.append(lab(first))
        for m, child in enumerate(rest):
            out += build(child)
            out.append(lab(child))
            out.append(Combine)
            if m < len(rest) - 1:
                out.append(NoLabel)
        return out

    return build(gold) + [lab(gold)]


# ---------------------------------------------------------------------------
# gold index


class GoldTreeIndex:
    """Gold brackets with parent links.

    Brackets sharing a span form a chain (outermost first); the parent of
    an inner chain element is the next outer one.
    """

    def __init__(self, chains: Mapping[tuple, tuple], n: int):
        self.n = n
        self.span_index: Dict[tuple, tuple] = {tuple(s): tuple(c) for s, c in chains.items()}
        if (0, n) not in self.span_index:
            raise OracleError(f"gold tree has no root bracket (0, {n})")
        check_nesting(self.span_index)

        # smallest strictly enclosing gold span for each gold span
        self.span_parent: Dict[tuple, Optional[tuple]] = {}
        stack: List[tuple] = []
        for span in sorted(self.span_index, key=lambda s: (s[0], -s[1])):
            while stack and stack[-1][1] <= span[0]:
                stack.pop()
            self.span_parent[span] = stack[-1] if stack else None
            stack.append(span)

        self.left_index: Dict[int, List[tuple]] = {}
        for span in sorted(self.span_index, key=lambda s: (s[0], s[1])):
            self.left_index.setdefault(span[0], []).append(span)

        self.brackets: List[Bracket] = []
        self.parent: Dict[Bracket, Optional[Bracket]] = {}
        for span in sorted(self.span_index, key=lambda s: (s[1] - s[0], s[0])):
            chain = self.span_index[span]
            outer = self.span_parent[span]
            above = Bracket(self.span_index[outer][-1], *outer) if outer else None
            for k, label in enumerate(chain):
                b = Bracket(label, *span)
                self.parent[b] = Bracket(chain[k - 1], *span) if k else above
        # innermost first
        self.brackets = sorted(self.parent, key=lambda b: (b.j - b.i, b.i, -self._depth(b)))
        self.gold = frozenset(self.parent)

    def _depth(self, b):
        d = 0
        while self.parent[b] is not None:
            b = self.parent[b]
            d += 1
        return d

    @classmethod
    def from_tree(cls, tree: Tree) -> "GoldTreeIndex":
        return cls(span_chains(tree), tree.span[1])

    def innermost(self, span) -> Bracket:
        return Bracket(self.span_index[span][-1], *span)


def build_index(gold: Iterable[Bracket], n: int, chains: Mapping = None) -> GoldTreeIndex:
    """Index a gold bracket set.  `chains` fixes the order of labels sharing
    a span; otherwise they are sorted."""
    grouped: Dict[tuple, list] = {}
    for b in gold:
        grouped.setdefault((b.i, b.j), []).append(b.label)
    if chains is None:
        chains = {s: tuple(sorted(ls)) for s, ls in grouped.items()}
    else:
        for s, ls in grouped.items():
            if set(chains[s]) != set(ls):
                raise OracleError(f"chain order for {s} does not match the bracket set")
    return GoldTreeIndex(chains, n)


# ---------------------------------------------------------------------------
# reachability (definitional, linear in the number of gold brackets)


def _encompassed(i, j, p, q, strict):
    return p <= i and j <= q and not (strict and (p, q) == (i, j))


def left(c: Configuration, idx: GoldTreeIndex) -> frozenset:
    if c.top is None:
        return frozenset()
    i, j = c.top
    below = set(c.sigma[:-1])
    strict = c.z % 2 == 0
    return frozenset(
        b
        for b in idx.gold
        if _encompassed(i, j, b.i, b.j, strict) and b.i in below
    )


def right(c: Configuration, idx: GoldTreeIndex) -> frozenset:
    if c.top is None:
        return frozenset()
    j = c.top[1]
    return frozenset(b for b in idx.gold if b.i >= j)


def reach(c: Configuration, idx: GoldTreeIndex) -> frozenset:
    if c.z == 0:
        return idx.gold
    return left(c, idx) | right(c, idx)


def t_star(c: Configuration, idx: GoldTreeIndex) -> frozenset:
    return c.t | reach(c, idx)


def next_bracket_naive(c: Configuration, idx: GoldTreeIndex) -> Bracket:
    cands = left(c, idx)
    if not cands:
        raise OracleError("no reachable bracket encompasses the top span")
    span = min(((b.i, b.j) for b in cands), key=lambda s: s[1] - s[0])
    return idx.innermost(span)


# ---------------------------------------------------------------------------
# incremental next(c)


class OracleState:
    """Per-trajectory cursor on next(c).

    Feed every applied action through `step` (or `advance`).  `traversals`
    counts parent links followed, the amortization witness.
    """

    def __init__(self, index: GoldTreeIndex):
        self.index = index
        self.cursor: Optional[tuple] = None
        self.traversals = 0
        self.steps = 0
        self._popped = set()
        self._jump: Dict[tuple, tuple] = {}

    def copy(self) -> "OracleState":
        other = OracleState.__new__(OracleState)
        other.index = self.index
        other.cursor = self.cursor
        other.traversals = self.traversals
        other.steps = self.steps
        other._popped = set(self._popped)
        other._jump = dict(self._jump)
        return other

    def _valid(self, span, c):
        p, q = span
        i, j = c.top
        if p > i or q < j or p in self._popped:
            return False
        return not (c.z % 2 == 0 and (p, q) == (i, j))

    def _retrace(self, c):
        visited = []
        span = self.cursor
        while not self._valid(span, c):
            visited.append(span)
            span = self._jump.get(span) or self.index.span_parent[span]
            self.traversals += 1
            if span is None:
                raise OracleError("cursor ran past the root bracket")
        # everything passed over is permanently unreachable
        for dead in visited:
            self._jump[dead] = span
        self.cursor = span

    def advance(self, c: Configuration, a: Action, new: Configuration) -> None:
        self.steps += 1
        if is_final(new):
            self.cursor = None
            return
        if a.kind == SHIFT:
            starts = self.index.left_index.get(c.sigma[-1])
            if starts:
                self.cursor = starts[0]
                return
        elif a.kind == COMBINE:
            self._popped.add(c.sigma[-2])
        self._retrace(new)

    def step(self, c: Configuration, a: Action) -> Configuration:
        new = apply(c, a)
        self.advance(c, a, new)
        return new


def next_bracket(state: OracleState, c: Configuration) -> Bracket:
    if state.cursor is None:
        raise OracleError("no reachable bracket encompasses the top span")
    return state.index.innermost(state.cursor)


# ---------------------------------------------------------------------------
# dynamic oracle


def dyna_structural(c: Configuration, state: OracleState) -> frozenset:
    if c.z % 2:
        raise OracleError("structural oracle queried at an odd step")
    if c.z == 0:
        return frozenset({Shift})
    i, j = c.top
    nb = next_bracket(state, c)
    p, q = nb.i, nb.j
    assert not (p == i and q == j), "next bracket cannot equal the top span at an even step"
    if p == i and q > j:
        out = {Shift}
    elif p < i and q == j:
        out = {Combine}
    elif p < i and q > j:
        out = {Shift, Combine}
    else:
        raise OracleError(f"next bracket {nb} does not encompass top span {(i, j)}")
    legal = legal_actions(c)
    return frozenset(a for a in out if a.kind in legal)


def dyna_label(c: Configuration, idx: GoldTreeIndex, fallback_chain=None) -> Action:
    if c.z % 2 == 0:
        raise OracleError("label oracle queried at an even step")
    chain = idx.span_index.get(c.top)
    if chain:
        return Label(chain)
    if NOLABEL in legal_actions(c):
        return NoLabel
    # forced root label with no gold root: only possible for malformed gold
    if fallback_chain is None:
        raise OracleError(f"gold has no bracket over the root span {c.top}")
    return Label(fallback_chain)


def dyna(c: Configuration, state: OracleState, fallback_chain=None) -> frozenset:
    if c.z % 2 == 0:
        return dyna_structural(c, state)
    return frozenset({dyna_label(c, state.index, fallback_chain)})
