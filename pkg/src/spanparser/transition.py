"""The structure/label transition system.

A configuration is ``<z, sigma, t>``: a step counter, a strictly increasing
list of word boundaries starting at 0 (consecutive pairs are the stack
spans), and the set of labeled brackets built so far.  Even steps take a
structural action (shift / combine), odd steps a label action (label-X /
nolabel).  Every sentence of n words is parsed in exactly 4n - 2 steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from .treebank import Bracket, brackets_to_tree, join_chain, split_chain

SHIFT = "shift"
COMBINE = "combine"
LABEL = "label"
NOLABEL = "nolabel"


class TransitionError(ValueError):
    pass


class Action(NamedTuple):
    kind: str
    chain: tuple = ()

    def __str__(self):
        if self.kind == LABEL:
            return "LABEL " + join_chain(self.chain)
        return {SHIFT: "SH", COMBINE: "COMB", NOLABEL: "NOLABEL"}[self.kind]

    @property
    def structural(self) -> bool:
        return self.kind in (SHIFT, COMBINE)


def Label(*chain: str) -> Action:
    if len(chain) == 1 and not isinstance(chain[0], str):
        chain = tuple(chain[0])
    if not chain:
        raise TransitionError("label action needs a nonempty chain")
    return Action(LABEL, tuple(chain))


Shift = Action(SHIFT)
Combine = Action(COMBINE)
NoLabel = Action(NOLABEL)


def parse_action(text: str) -> Action:
    text = text.strip()
    if text == "SH":
        return Shift
    if text == "COMB":
        return Combine
    if text == "NOLABEL":
        return NoLabel
    if text.startswith("LABEL "):
        return Label(split_chain(text[6:].strip()))
    raise TransitionError(f"unknown action {text!r}")


def format_trace(actions: Sequence[Action]) -> str:
    return "\n".join(str(a) for a in actions)


def parse_trace(text: str) -> list:
    return [parse_action(line) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class Configuration:
    z: int
    sigma: tuple
    t: frozenset
    n: int
    # ((i, j), chain) in the order label actions were taken
    label_order: tuple = ()

    @property
    def top(self):
        """Top stack span (i, j), or None on the empty stack."""
        if len(self.sigma) < 2:
            return None
        return self.sigma[-2], self.sigma[-1]

    @property
    def final(self) -> bool:
        return is_final(self)

    def chains(self) -> dict:
        return dict(self.label_order)


def initial(n: int) -> Configuration:
    if n < 1:
        raise TransitionError("sentence must have at least one word")
    return Configuration(0, (0,), frozenset(), n)


def is_final(c: Configuration) -> bool:
    return c.z == 4 * c.n - 2


def legal_actions(c: Configuration) -> set:
    """Kinds of actions allowed in `c`."""
    if is_final(c):
        raise TransitionError("no actions are legal in a final configuration")
    if c.z % 2 == 0:
        kinds = set()
        if c.sigma[-1] < c.n:
            kinds.add(SHIFT)
        if len(c.sigma) >= 3:
            kinds.add(COMBINE)
        return kinds
    # nolabel is illegal at the last step: the root span must get a label
    if c.z < 4 * c.n - 3:
        return {LABEL, NOLABEL}
    return {LABEL}


def apply(c: Configuration, a: Action) -> Configuration:
    if a.kind not in legal_actions(c):
        raise TransitionError(f"illegal action {a} at step {c.z} with stack {list(c.sigma)}")
    if a.kind == SHIFT:
        return Configuration(c.z + 1, c.sigma + (c.sigma[-1] + 1,), c.t, c.n, c.label_order)
    if a.kind == COMBINE:
        return Configuration(c.z + 1, c.sigma[:-2] + c.sigma[-1:], c.t, c.n, c.label_order)
    if a.kind == NOLABEL:
        return Configuration(c.z + 1, c.sigma, c.t, c.n, c.label_order)
    if not a.chain:
        raise TransitionError("label action needs a nonempty chain")
    i, j = c.top
    assert all(span != (i, j) for span, _ in c.label_order), "span labeled twice"
    t = c.t | {Bracket(x, i, j) for x in a.chain}
    return Configuration(c.z + 1, c.sigma, t, c.n, c.label_order + (((i, j), a.chain),))


def replay(n: int, actions: Sequence[Action]) -> Configuration:
    c = initial(n)
    for a in actions:
        c = apply(c, a)
    return c


def to_tree(c: Configuration, tokens):
    if not is_final(c):
        raise TransitionError("configuration is not final")
    return brackets_to_tree(c.chains(), tokens)


class ActionScorer(Protocol):
    """Scores the two structural actions (shift, combine) and the L + 1 label
    actions (index 0 is nolabel, then the inventory in id order)."""

    inventory: object

    def score_structural(self, enc, c: Configuration) -> np.ndarray: ...

    def score_label(self, enc, c: Configuration) -> np.ndarray: ...


def choose_structural(scores, c: Configuration) -> Action:
    legal = legal_actions(c)
    masked = np.array(
        [scores[0] if SHIFT in legal else -np.inf, scores[1] if COMBINE in legal else -np.inf]
    )
    # argmax keeps the first maximum: shift wins ties
    return Shift if int(np.argmax(masked)) == 0 else Combine


def choose_label(scores, c: Configuration, inventory) -> Action:
    scores = np.array(scores, dtype=float)
    if NOLABEL not in legal_actions(c):
        scores[0] = -np.inf
    k = int(np.argmax(scores))
    return NoLabel if k == 0 else Label(split_chain(inventory.labels[k - 1]))


def decode(tokens, scorer: ActionScorer, enc):
    """Greedy decoding; returns (tree, actions)."""
    c = initial(len(tokens))
    actions = []
    while not is_final(c):
        if c.z % 2 == 0:
            a = choose_structural(scorer.score_structural(enc, c), c)
        else:
            a = choose_label(scorer.score_label(enc, c), c, scorer.inventory)
        actions.append(a)
        c = apply(c, a)
    return to_tree(c, tokens), actions
