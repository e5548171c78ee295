"""Random treebanks for fixtures and toy-scale training runs."""

from __future__ import annotations

import random

from .treebank import Token, Tree, collapse_unaries, make_tree

WORDS = {
    "DT": ["the", "a", "every", "this"],
    "JJ": ["big", "old", "red", "quiet", "happy"],
    "NN": ["dog", "cat", "fish", "house", "idea", "park", "man"],
    "NNS": ["dogs", "cats", "ideas", "people"],
    "NNP": ["Kim", "Paris", "Lee"],
    "PRP": ["I", "she", "they", "we"],
    "VBZ": ["sees", "likes", "wants", "gives"],
    "VBD": ["saw", "liked", "said", "gave"],
    "VB": ["eat", "take", "go", "see"],
    "MD": ["can", "will", "do"],
    "IN": ["in", "on", "with", "that"],
    "RB": ["not", "quickly", "often"],
    ".": ["."],
}


def _tok(rng, tag):
    return Token(rng.choice(WORDS[tag]), tag)


class _Grammar:
    """A small recursive grammar over PTB-like categories."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def np(self, depth):
        r = self.rng.random()
        if r < 0.2:
            kids = [_tok(self.rng, "PRP")]
        elif r < 0.3:
            kids = [_tok(self.rng, "NNP"), _tok(self.rng, "NNP")][: self.rng.randint(1, 2)]
        else:
            kids = [_tok(self.rng, "DT")]
            kids += [_tok(self.rng, "JJ") for _ in range(self.rng.choice([0, 0, 1, 2]))]
            kids.append(_tok(self.rng, self.rng.choice(["NN", "NNS"])))
            if depth > 0 and self.rng.random() < 0.25:
                return Tree("NP", (Tree("NP", tuple(kids)), self.pp(depth - 1)))
        return Tree("NP", tuple(kids))

    def pp(self, depth):
        return Tree("PP", (_tok(self.rng, "IN"), self.np(depth)))

    def vp(self, depth):
        rng = self.rng
        if depth > 0 and rng.random() < 0.15:
            return Tree("VP", (_tok(rng, "MD"), self.vp(depth - 1)))
        kids = [_tok(rng, rng.choice(["VBZ", "VBD", "VB"]))]
        if rng.random() < 0.7:
            kids.append(self.np(depth - 1))
        if depth > 0 and rng.random() < 0.25:
            kids.append(self.pp(depth - 1))
        if depth > 1 and rng.random() < 0.15:
            kids.append(Tree("SBAR", (_tok(rng, "IN"), self.s(depth - 2))))
        elif depth > 1 and rng.random() < 0.1:
            # nonfinite complement: a unary S over VP
            kids.append(Tree("S", (self.vp(depth - 2),)))
        return Tree("VP", tuple(kids))

    def s(self, depth):
        kids = [self.np(depth - 1), self.vp(depth - 1)]
        if self.rng.random() < 0.1:
            kids.insert(1, Tree("ADVP", (_tok(self.rng, "RB"),)))
        return Tree("S", tuple(kids))

    def sentence(self, depth):
        rng = self.rng
        r = rng.random()
        if r < 0.08:
            root = self.np(depth)
        elif r < 0.15:
            root = Tree("S", (self.vp(depth),))
        else:
            root = self.s(depth)
            if rng.random() < 0.3:
                root = Tree("S", root.children + (_tok(rng, "."),))
        return root


def random_treebank(count: int, seed: int = 0, max_len: int = 30, depth: int = 4) -> list:
    """`count` unary-collapsed trees from a PTB-flavored random grammar."""
    rng = random.Random(seed)
    g = _Grammar(rng)
    out = []
    while len(out) < count:
        raw = g.sentence(rng.randint(1, depth))
        tree = collapse_unaries(make_tree(raw.label, raw.children))
        if len(tree) <= max_len:
            out.append(tree)
    return out


def toy_corpus(count: int, seed: int = 0, max_len: int = 8) -> list:
    """Sentences over three nonterminals (S, NP, VP) whose bracketing is
    recoverable from the tag sequence."""
    rng = random.Random(seed)

    def np_():
        r = rng.random()
        if r < 0.3:
            return Tree("NP", (_tok(rng, "PRP"),))
        kids = [_tok(rng, "DT")]
        if r > 0.7:
            kids.append(_tok(rng, "JJ"))
        kids.append(_tok(rng, "NN"))
        return Tree("NP", tuple(kids))

    def vp_(verb):
        kids = [_tok(rng, verb)]
        for _ in range(rng.choice([0, 1, 1, 2])):
            kids.append(np_())
        return Tree("VP", tuple(kids))

    out = []
    while len(out) < count:
        if rng.random() < 0.2:
            raw = Tree("S", (vp_("VB"),))
        else:
            raw = Tree("S", (np_(), vp_("VBZ")))
        tree = collapse_unaries(make_tree(raw.label, raw.children))
        if len(tree) <= max_len:
            out.append(tree)
    return out
