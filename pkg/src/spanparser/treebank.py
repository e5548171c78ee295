"""Bracketed constituency trees: reading, normalization, unary collapsing,
conversion to and from labeled bracket sets, and the label inventory."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

CHAIN_SEP = "-"


class TreebankError(ValueError):
    """Malformed bracketed input or an unusable tree."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class CrossingBracketsError(TreebankError):
    pass


@dataclass(frozen=True)
class Token:
    word: str
    tag: str
    extras: tuple = ()

    def __post_init__(self):
        if not self.word or not self.tag:
            raise TreebankError(f"token needs a word and a tag: {self.word!r}/{self.tag!r}")


@dataclass(frozen=True)
class Tree:
    """An n-ary nonterminal node.  Children are subtrees or Tokens; a Token
    child plays the role of a preterminal (its tag is the POS label)."""

    label: str
    children: tuple
    span: tuple = field(default=(0, 0))

    @property
    def chain(self) -> tuple:
        return split_chain(self.label)

    def leaves(self) -> list:
        out = []
        for child in self.children:
            if isinstance(child, Token):
                out.append(child)
            else:
                out.extend(child.leaves())
        return out

    def subtrees(self):
        """Nonterminal nodes in post-order (children left to right, then self)."""
        for child in self.children:
            if isinstance(child, Tree):
                yield from child.subtrees()
        yield self

    def __len__(self):
        return self.span[1] - self.span[0]

    def __str__(self):
        return write_tree(self)


Node = Union[Tree, Token]


class Bracket(NamedTuple):
    label: str
    i: int
    j: int


BracketSet = frozenset


def split_chain(label: str) -> tuple:
    # punctuation-like labels ("-LRB-") are atomic
    if label.startswith(CHAIN_SEP):
        return (label,)
    return tuple(label.split(CHAIN_SEP))


def join_chain(chain: Sequence[str]) -> str:
    return CHAIN_SEP.join(chain)


def make_tree(label: str, children: Sequence[Node], start: int = 0) -> Tree:
    """Build a tree, recomputing spans of every subtree from `start`."""
    if not children:
        raise TreebankError(f"node {label!r} has no children")
    built = []
    pos = start
    for child in children:
        if isinstance(child, Token):
            built.append(child)
            pos += 1
        else:
            sub = make_tree(child.label, child.children, pos)
            built.append(sub)
            pos = sub.span[1]
    return Tree(label, tuple(built), (start, pos))


# ---------------------------------------------------------------------------
# reading / writing

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text):
    line_starts = [0]
    for m in re.finditer("\n", text):
        line_starts.append(m.end())
    line = 0
    for m in _TOKEN_RE.finditer(text):
        while line + 1 < len(line_starts) and line_starts[line + 1] <= m.start():
            line += 1
        yield m.group(), line + 1, m.start() - line_starts[line] + 1


def read_trees(text: str) -> list:
    """Parse one or more bracketed trees from `text`.

    Nodes whose only child is a bare word become preterminals (Tokens).  An
    unlabeled outer wrapper such as ``( (S ...))`` is read with label ``""``.
    """
    tokens = list(_tokenize(text))
    pos = 0
    trees = []

    def parse_node():
        nonlocal pos
        tok, line, col = tokens[pos]
        assert tok == "("
        pos += 1
        if pos >= len(tokens):
            raise TreebankError("unbalanced parentheses: unexpected end of input", line, col)
        label = ""
        if tokens[pos][0] not in "()":
            label = tokens[pos][0]
            pos += 1
        children = []
        words = []
        while True:
            if pos >= len(tokens):
                raise TreebankError("unbalanced parentheses: missing ')'", line, col)
            tok, tline, tcol = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                children.append(parse_node())
            else:
                words.append((tok, tline, tcol))
                pos += 1
        if not children and not words:
            raise TreebankError("empty tree", line, col)
        if words:
            if children or len(words) > 1 or not label:
                raise TreebankError("bare words must appear alone under a POS tag", *words[0][1:])
            return Token(words[0][0], label)
        return Tree(label, tuple(children))

    while pos < len(tokens):
        tok, line, col = tokens[pos]
        if tok != "(":
            raise TreebankError(f"unexpected {tok!r} outside a tree", line, col)
        node = parse_node()
        if isinstance(node, Token):
            raise TreebankError("a tree must have a nonterminal root", line, col)
        trees.append(make_tree(node.label, node.children))
    return trees


def read_treebank(path) -> list:
    with open(path, encoding="utf-8") as f:
        return read_trees(f.read())


def _write(node: Node, expand: bool) -> str:
    if isinstance(node, Token):
        return f"({node.tag} {node.word})"
    inner = " ".join(_write(c, expand) for c in node.children)
    chain = node.chain if expand else (node.label,)
    out = f"({chain[-1]} {inner})"
    for label in reversed(chain[:-1]):
        out = f"({label} {out})"
    return out


def write_tree(tree: Tree, expand_chains: bool = True) -> str:
    """Single-line bracketed form.  Chain labels are expanded into unary
    nodes; pass ``expand_chains=False`` for raw trees whose labels carry
    function tags."""
    return _write(tree, expand_chains)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationRules:
    null_tag: str = "-NONE-"
    root_labels: tuple = ("TOP", "ROOT", "")
    strip_function_tags: bool = True


def strip_function_tag(label: str) -> str:
    if label.startswith("-"):
        return label
    return re.split(r"[-=]", label, maxsplit=1)[0] or label


def normalize(tree: Tree, rules: NormalizationRules = NormalizationRules()) -> Tree:
    """Drop empty elements, strip function annotations and the root wrapper."""

    def clean(node):
        if isinstance(node, Token):
            return None if node.tag == rules.null_tag else node
        kids = [k for k in (clean(c) for c in node.children) if k is not None]
        if not kids:
            return None
        label = strip_function_tag(node.label) if rules.strip_function_tags else node.label
        return Tree(label, tuple(kids))

    out = clean(tree)
    if out is None:
        raise TreebankError("tree is empty after normalization")
    while (
        out.label in rules.root_labels
        and len(out.children) == 1
        and isinstance(out.children[0], Tree)
    ):
        out = out.children[0]
    if out.label == "":
        raise TreebankError("unlabeled root node")
    return make_tree(out.label, out.children)


def collapse_unaries(tree: Tree) -> Tree:
    """Merge each maximal nonterminal unary chain into one node labeled
    top-down with '-' (``(S (VP ...))`` becomes ``S-VP``)."""

    def collapse(node):
        if isinstance(node, Token):
            return node
        labels = [node.label]
        while len(node.children) == 1 and isinstance(node.children[0], Tree):
            node = node.children[0]
            labels.append(node.label)
        return Tree(join_chain(labels), tuple(collapse(c) for c in node.children))

    out = collapse(tree)
    return make_tree(out.label, out.children, tree.span[0])


def expand_unaries(tree: Tree) -> Tree:
    """Inverse of collapse_unaries."""

    def expand(node):
        if isinstance(node, Token):
            return node
        chain = node.chain
        out = Tree(chain[-1], tuple(expand(c) for c in node.children))
        for label in reversed(chain[:-1]):
            out = Tree(label, (out,))
        return out

    out = expand(tree)
    return make_tree(out.label, out.children, tree.span[0])


def prepare(tree: Tree, rules: NormalizationRules = NormalizationRules()) -> Tree:
    return collapse_unaries(normalize(tree, rules))


# ---------------------------------------------------------------------------
# brackets


def tree_to_brackets(tree: Tree) -> frozenset:
    out = set()
    for node in tree.subtrees():
        i, j = node.span
        for label in node.chain:
            out.add(Bracket(label, i, j))
    return frozenset(out)


def span_chains(tree: Tree) -> dict:
    """(i, j) -> ordered label chain, outermost first."""
    return {node.span: node.chain for node in tree.subtrees()}


def check_nesting(spans: Iterable[tuple]) -> None:
    spans = sorted(set(spans), key=lambda s: (s[0], -s[1]))
    open_ = []
    for i, j in spans:
        while open_ and open_[-1][1] <= i:
            open_.pop()
        if open_ and j > open_[-1][1]:
            raise CrossingBracketsError(f"crossing brackets {open_[-1]} and {(i, j)}")
        open_.append((i, j))


def brackets_to_tree(
    brackets: Union[Iterable[Bracket], Mapping[tuple, Sequence[str]]],
    tokens: Sequence[Token],
) -> Tree:
    """Rebuild the n-ary tree from labeled spans.

    `brackets` is either a bracket set or a mapping span -> ordered chain
    (outermost first).  A plain bracket set loses the order of labels sharing
    one span; those are then ordered alphabetically.
    """
    n = len(tokens)
    if isinstance(brackets, Mapping):
        chains = {tuple(s): tuple(c) for s, c in brackets.items()}
    else:
        grouped = {}
        for b in brackets:
            grouped.setdefault((b.i, b.j), set()).add(b.label)
        chains = {s: tuple(sorted(ls)) for s, ls in grouped.items()}
    if (0, n) not in chains:
        raise TreebankError(f"no bracket covers the whole sentence (0, {n})")
    for i, j in chains:
        if not 0 <= i < j <= n:
            raise TreebankError(f"bracket span {(i, j)} outside sentence of length {n}")
    check_nesting(chains)

    order = sorted(chains, key=lambda s: (s[0], -s[1]))
    pos = 0

    def build(k):
        # consumes order[k] and every span nested inside it
        nonlocal pos
        i, j = order[k]
        k += 1
        kids = []
        while pos < j:
            if k < len(order) and order[k][0] == pos:
                sub, k = build(k)
                kids.append(sub)
            else:
                kids.append(tokens[pos])
                pos += 1
        return Tree(join_chain(chains[(i, j)]), tuple(kids)), k

    root, _ = build(0)
    return make_tree(root.label, root.children)


# ---------------------------------------------------------------------------
# label inventory


class LabelInventory:
    """Dense ids for label actions (single nonterminals and unary chains)."""

    def __init__(self, labels: Iterable[str]):
        self.labels = []
        self.index = {}
        for label in labels:
            if label not in self.index:
                self.index[label] = len(self.labels)
                self.labels.append(label)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self.index

    def __eq__(self, other):
        return isinstance(other, LabelInventory) and self.labels == other.labels

    def __repr__(self):
        return f"LabelInventory({self.labels!r})"

    def chains(self) -> list:
        return [split_chain(label) for label in self.labels]


def build_label_inventory(corpus: Sequence[Tree]) -> LabelInventory:
    if not corpus:
        raise TreebankError("cannot build a label inventory from an empty corpus")
    return LabelInventory(node.label for tree in corpus for node in tree.subtrees())


# ---------------------------------------------------------------------------
# tagged sentences


def parse_tagged_line(line: str, lineno: int = None) -> list:
    """``word_TAG word_TAG ...``; the last underscore separates the tag."""
    out = []
    for item in line.split():
        word, sep, tag = item.rpartition("_")
        if not sep or not word or not tag:
            raise TreebankError(f"malformed token {item!r}, expected word_TAG", lineno, 1)
        out.append(Token(word, tag))
    return out


def format_tagged(tokens: Sequence[Token]) -> str:
    return " ".join(f"{t.word}_{t.tag}" for t in tokens)
