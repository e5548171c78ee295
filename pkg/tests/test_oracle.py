import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanparser.oracle import (
    GoldTreeIndex,
    OracleError,
    OracleState,
    build_index,
    dyna,
    dyna_label,
    dyna_structural,
    left,
    next_bracket,
    next_bracket_naive,
    reach,
    right,
    static_oracle,
    t_star,
)
from spanparser.synthetic import random_treebank
from spanparser.transition import (
    Combine,
    Label,
    NoLabel,
    Shift,
    apply,
    initial,
    is_final,
    legal_actions,
    parse_trace,
    replay,
)
from spanparser.treebank import Bracket, CrossingBracketsError, read_trees
from spanparser.verify import all_actions

from conftest import EXAMPLE_GOLD

EXAMPLE_STATIC = """SH
LABEL NP
SH
NOLABEL
SH
NOLABEL
COMB
NOLABEL
SH
NOLABEL
SH
LABEL NP
COMB
LABEL S-VP
COMB
LABEL VP
COMB
LABEL S"""

B = Bracket


def run(tree, trace):
    idx = GoldTreeIndex.from_tree(tree)
    c, state = initial(len(tree)), OracleState(idx)
    for a in parse_trace(trace):
        c = state.step(c, a)
    return c, state, idx


def test_static_oracle_example(example):
    assert static_oracle(example) == parse_trace(EXAMPLE_STATIC)


def test_static_oracle_single_leaf():
    (t,) = read_trees("(NP (NN fish))")
    assert static_oracle(t) == [Shift, Label("NP")]


def test_index_parents(example):
    idx = build_index(EXAMPLE_GOLD, 5, span_chains_of(example))
    assert idx.parent[B("NP", 4, 5)] == B("VP", 3, 5)
    assert idx.parent[B("VP", 3, 5)] == B("S", 3, 5)
    assert idx.parent[B("S", 3, 5)] == B("VP", 1, 5)
    assert idx.parent[B("VP", 1, 5)] == B("S", 0, 5)
    assert idx.parent[B("S", 0, 5)] is None
    assert idx.brackets[0].j - idx.brackets[0].i == 1
    assert idx.left_index[3] == [(3, 5)]


def span_chains_of(tree):
    from spanparser.treebank import span_chains

    return span_chains(tree)


def test_index_single_bracket():
    idx = build_index({B("NP", 0, 1)}, 1)
    assert idx.parent[B("NP", 0, 1)] is None


def test_index_crossing():
    with pytest.raises(CrossingBracketsError):
        build_index({B("A", 0, 2), B("B", 1, 3), B("R", 0, 3)}, 3)


def test_index_needs_root():
    with pytest.raises(OracleError):
        build_index({B("A", 0, 1)}, 2)


def test_reach_after_early_combine(example):
    c, state, idx = run(example, "SH\nLABEL NP\nSH\nNOLABEL\nSH\nNOLABEL\nSH\nNOLABEL\nCOMB\nNOLABEL")
    assert (c.z, c.sigma, c.t) == (10, (0, 1, 2, 4), {B("NP", 0, 1)})
    assert reach(c, idx) == {B("S", 0, 5), B("VP", 1, 5), B("NP", 4, 5)}
    assert t_star(c, idx) == {B("NP", 0, 1), B("S", 0, 5), B("VP", 1, 5), B("NP", 4, 5)}


def test_reach_initial_and_goal(example):
    idx = GoldTreeIndex.from_tree(example)
    assert reach(initial(5), idx) == EXAMPLE_GOLD
    assert t_star(initial(5), idx) == EXAMPLE_GOLD
    goal = replay(5, static_oracle(example))
    assert reach(goal, idx) == set()
    assert t_star(goal, idx) == goal.t == EXAMPLE_GOLD


def test_left_and_right(example):
    c, state, idx = run(example, "SH\nLABEL NP")
    assert left(c, idx) == {B("S", 0, 5)}
    assert right(c, idx) == {B("VP", 1, 5), B("S", 3, 5), B("VP", 3, 5), B("NP", 4, 5)}
    assert next_bracket(state, c) == B("S", 0, 5)


TRACE_A = "SH\nLABEL NP\nSH\nNOLABEL\nSH\nNOLABEL"
TRACE_B = TRACE_A + "\nCOMB\nLABEL VP"
TRACE_C = TRACE_A + "\nSH\nNOLABEL\nCOMB\nNOLABEL"
TRACE_D = TRACE_C + "\nSH\nLABEL NP"


@pytest.mark.parametrize(
    "trace, sigma, expected",
    [
        (TRACE_A, (0, 1, 2, 3), {Shift, Combine}),
        (TRACE_B, (0, 1, 3), {Shift}),
        (TRACE_C, (0, 1, 2, 4), {Shift, Combine}),
        (TRACE_D, (0, 1, 2, 4, 5), {Combine}),
    ],
)
def test_dyna_structural_rows(example, trace, sigma, expected):
    c, state, idx = run(example, trace)
    assert c.sigma == sigma
    assert next_bracket(state, c) == B("VP", 1, 5)
    assert next_bracket_naive(c, idx) == B("VP", 1, 5)
    assert dyna_structural(c, state) == expected


def test_row_with_wrong_label(example):
    c, _, _ = run(example, TRACE_B)
    assert B("VP", 1, 3) in c.t


def test_dyna_initial(example):
    state = OracleState(GoldTreeIndex.from_tree(example))
    assert dyna(initial(5), state) == {Shift}


@pytest.mark.parametrize(
    "trace, expected",
    [
        ("SH\nLABEL NP\nSH\nNOLABEL\nSH\nNOLABEL\nCOMB\nNOLABEL\nSH\nNOLABEL\nSH", Label("NP")),
        ("SH\nLABEL NP\nSH\nNOLABEL\nSH\nNOLABEL\nCOMB\nNOLABEL\nSH\nNOLABEL\nSH\nLABEL NP\nCOMB",
         Label("S", "VP")),
        ("SH\nLABEL NP\nSH\nNOLABEL\nSH", NoLabel),
    ],
)
def test_dyna_label(example, trace, expected):
    c, state, idx = run(example, trace)
    assert dyna_label(c, idx) == expected


def test_static_path_cursor(example):
    idx = GoldTreeIndex.from_tree(example)
    c, state = initial(5), OracleState(idx)
    for a in static_oracle(example):
        if c.z:
            assert next_bracket(state, c) == next_bracket_naive(c, idx)
        assert a in dyna(c, state)
        c = state.step(c, a)
    assert state.traversals <= len(EXAMPLE_GOLD) + 18


def test_next_bracket_errors_when_done(example):
    c, state, idx = run(example, EXAMPLE_STATIC)
    with pytest.raises(OracleError):
        next_bracket(state, c)
    with pytest.raises(OracleError):
        next_bracket_naive(c, idx)


def test_structural_oracle_rejects_odd_step(example):
    c, state, _ = run(example, "SH")
    with pytest.raises(OracleError):
        dyna_structural(c, state)


# -- random trajectories ------------------------------------------------------

TREES = random_treebank(200, seed=7, max_len=12)


@settings(max_examples=150, deadline=None)
@given(k=st.integers(0, len(TREES) - 1), seed=st.integers(0, 10**6), p=st.floats(0, 1))
def test_cursor_and_reach_along_noisy_rollouts(k, seed, p):
    tree = TREES[k]
    rng = random.Random(seed)
    idx = GoldTreeIndex.from_tree(tree)
    chains = [node.chain for node in tree.subtrees()] + [("X",)]
    c, state = initial(len(tree)), OracleState(idx)
    while not is_final(c):
        r = reach(c, idx)
        assert not (r & c.t)
        if c.z:
            assert next_bracket(state, c) == next_bracket_naive(c, idx)
        d = dyna(c, state)
        assert d and all(a.kind in legal_actions(c) for a in d)
        a = rng.choice(all_actions(c, chains)) if rng.random() < p else sorted(d)[0]
        c2 = state.step(c, a)
        if a.structural:
            # structural part of the reach preservation property
            assert (reach(c2, idx) == r) == (a in d)
            assert reach(c2, idx) <= r
        c = c2
    assert state.traversals <= len(idx.gold) + 4 * len(tree) - 2


@settings(max_examples=100, deadline=None)
@given(k=st.integers(0, len(TREES) - 1), seed=st.integers(0, 10**6))
def test_dyna_rollout_from_random_prefix_reaches_t_star(k, seed):
    tree = TREES[k]
    rng = random.Random(seed)
    idx = GoldTreeIndex.from_tree(tree)
    chains = [node.chain for node in tree.subtrees()] + [("X",)]
    c, state = initial(len(tree)), OracleState(idx)
    stop = rng.randrange(4 * len(tree) - 1)
    while c.z < stop:
        c = state.step(c, rng.choice(all_actions(c, chains)))
    target = t_star(c, idx)
    while not is_final(c):
        c = state.step(c, sorted(dyna(c, state))[-1])
    assert c.t == target


def test_label_actions_can_shrink_reach_without_leaving_dyna(example):
    """Reach preservation holds for structural actions only: a correct label
    moves gold brackets from reach into t, while a wrong label on a span
    that is not gold leaves reach untouched.  t* is what both preserve."""
    c, state, idx = run(example, "SH")
    assert dyna(c, state) == {Label("NP")}
    r = reach(c, idx)
    good = apply(c, Label("NP"))
    assert reach(good, idx) < r
    assert t_star(good, idx) == t_star(c, idx)

    c, state, idx = run(example, "SH\nLABEL NP\nSH")
    assert dyna(c, state) == {NoLabel}
    wrong = apply(c, Label("VP"))
    assert reach(wrong, idx) == reach(c, idx)
    assert t_star(wrong, idx) != t_star(c, idx)
