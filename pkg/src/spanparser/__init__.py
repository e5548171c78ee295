"""Span-based transition constituency parsing with a structure/label
system, static and dynamic oracles, and a BiLSTM span encoder."""

from .metrics import F1Report, corpus_parseval, parseval
from .oracle import GoldTreeIndex, OracleState, dyna, static_oracle
from .transition import Combine, Label, NoLabel, Shift, apply, decode, initial, replay
from .treebank import Bracket, Token, Tree, prepare, read_trees, tree_to_brackets, write_tree

__version__ = "0.1.0"

__all__ = [
    "Bracket",
    "Combine",
    "F1Report",
    "GoldTreeIndex",
    "Label",
    "NoLabel",
    "OracleState",
    "Shift",
    "Token",
    "Tree",
    "apply",
    "corpus_parseval",
    "decode",
    "dyna",
    "initial",
    "parseval",
    "prepare",
    "read_trees",
    "replay",
    "static_oracle",
    "tree_to_brackets",
    "write_tree",
]
